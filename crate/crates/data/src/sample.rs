//! Loading one timestamped place: image, point cloud and pose.

use std::fs;
use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};
use triplace_core::{Error, Result, Tensor};

use crate::layout::{cloud_path, image_path, DatasetManifest, MODULE};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub timestamp_ns: u64,
    /// `[H, W, 3]`, values in `[0, 1]`.
    pub image: Tensor<f32>,
    /// `[N, 3]`, meters.
    pub cloud: Tensor<f32>,
    pub pose: [f64; 3],
}

/// Parse KITTI-style `float32 x, y, z, intensity` records, dropping the
/// intensity channel.
pub fn decode_cloud(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    if bytes.is_empty() {
        return Err(Error::format(MODULE, format!("{}: empty point cloud", path.display())));
    }
    if bytes.len() % 16 != 0 {
        return Err(Error::format(
            MODULE,
            format!("{}: {} bytes is not a multiple of 16", path.display(), bytes.len()),
        ));
    }
    let mut xyz = Vec::with_capacity(bytes.len() / 16 * 3);
    for rec in bytes.chunks_exact(16) {
        for c in rec[..12].chunks_exact(4) {
            xyz.push(f32::from_le_bytes(c.try_into().expect("4 bytes")));
        }
    }
    let t = Tensor::new(vec![bytes.len() / 16, 3], xyz)?;
    if !t.is_finite() {
        return Err(Error::format(MODULE, format!("{}: non-finite coordinate", path.display())));
    }
    Ok(t)
}

pub fn encode_cloud(points: &[[f32; 4]]) -> Vec<u8> {
    points.iter().flat_map(|p| p.iter().flat_map(|v| v.to_le_bytes())).collect()
}

pub fn read_cloud(path: &Path) -> Result<Tensor<f32>> {
    decode_cloud(&fs::read(path).map_err(|e| Error::io(MODULE, path, e))?, path)
}

pub fn write_cloud(path: &Path, points: &[[f32; 4]]) -> Result<()> {
    fs::write(path, encode_cloud(points)).map_err(|e| Error::io(MODULE, path, e))
}

pub fn read_image(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(MODULE, path, e))?;
    let img = image::load_from_memory(&bytes)
        .map_err(|e| Error::format(MODULE, format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect();
    Tensor::new(vec![h as usize, w as usize, 3], data)
}

/// Quantize `[H, W, 3]` values in `[0, 1]` to 8-bit RGB and write a PNG.
pub fn write_image(path: &Path, img: &Tensor<f32>) -> Result<()> {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let raw: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_raw(w as u32, h as u32, raw)
        .ok_or_else(|| Error::contract(MODULE, "image buffer size mismatch"))?;
    buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(MODULE, path, io),
        other => Error::format(MODULE, format!("{}: {other}", path.display())),
    })
}

pub fn load_sample(manifest: &DatasetManifest, id: u64) -> Result<Sample> {
    let pose = manifest
        .poses
        .get(&id)
        .ok_or_else(|| Error::contract(MODULE, format!("sample {id} is not in the manifest")))?;
    Ok(Sample {
        id,
        timestamp_ns: pose.timestamp_ns,
        image: read_image(&image_path(&manifest.root, id))?,
        cloud: read_cloud(&cloud_path(&manifest.root, id))?,
        pose: pose.position,
    })
}
