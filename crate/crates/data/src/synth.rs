//! Seeded synthetic scenes for desk-scale experiments.
//!
//! Each scene is a 40 m arena of axis-aligned colored boxes on a ground
//! plane, placed 200 m from its neighbors. A LiDAR sweep is ray-cast once
//! from the scene station; every visit observes those surface points in
//! its own sensor frame with independent noise, and renders a pinhole
//! image of the boxes along its heading. A reverse revisit looks the other
//! way, so its cloud is the original rotated 180° about z (plus the small
//! pose offset and noise) while its image shows the opposite side.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use triplace_core::{Error, Result, Tensor};

use crate::layout::{
    cloud_path, format_manifest, format_poses, image_path, DatasetManifest, PoseRecord, Split, MODULE,
};
use crate::sample::{write_cloud, write_image};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RevisitMode {
    Same,
    Reverse,
}

impl FromStr for RevisitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same" => Ok(RevisitMode::Same),
            "reverse" => Ok(RevisitMode::Reverse),
            other => Err(Error::contract(MODULE, format!("unknown revisit mode `{other}` (expected same or reverse)"))),
        }
    }
}

impl fmt::Display for RevisitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RevisitMode::Same => "same",
            RevisitMode::Reverse => "reverse",
        })
    }
}

pub const SCENE_SPACING: f64 = 200.0;
pub const ARENA_HALF: f64 = 20.0;
pub const LIDAR_HEIGHT: f64 = 1.8;
pub const CAMERA_HEIGHT: f64 = 1.5;
pub const POINT_NOISE: f64 = 0.02;
pub const PIXEL_NOISE: f64 = 0.02;
/// Visit positions lie within this distance of the station on each axis.
pub const VISIT_OFFSET: f64 = 1.0;
const IMAGE_WIDTH: usize = 320;
const IMAGE_HEIGHT: usize = 96;
const BEAMS: usize = 16;
const AZIMUTH_STEPS: usize = 900;
const MAX_RANGE: f64 = 80.0;
const GROUND_COLOR: [f64; 3] = [0.45, 0.43, 0.40];
const SKY_COLOR: [f64; 3] = [0.70, 0.80, 0.95];

#[derive(Clone, Debug)]
struct Box3 {
    min: [f64; 3],
    max: [f64; 3],
    color: [f64; 3],
    reflectance: f64,
}

#[derive(Clone, Debug)]
struct Scene {
    origin: [f64; 3],
    boxes: Vec<Box3>,
}

enum Surface {
    Ground,
    /// Box index and hit axis (0 = x face, 1 = y face, 2 = top).
    Box(usize, usize),
}

/// Nearest intersection of `o + t d` with the scene, `t > 0`.
fn cast(scene: &Scene, o: [f64; 3], d: [f64; 3]) -> Option<(f64, Surface)> {
    let mut best: Option<(f64, Surface)> = None;
    if d[2] < -1e-12 {
        let t = -o[2] / d[2];
        if t > 0.0 {
            best = Some((t, Surface::Ground));
        }
    }
    for (bi, b) in scene.boxes.iter().enumerate() {
        let (mut t0, mut t1, mut axis) = (f64::NEG_INFINITY, f64::INFINITY, 0);
        let mut miss = false;
        for a in 0..3 {
            if d[a].abs() < 1e-12 {
                if o[a] < b.min[a] || o[a] > b.max[a] {
                    miss = true;
                    break;
                }
                continue;
            }
            let (mut ta, mut tb) = ((b.min[a] - o[a]) / d[a], (b.max[a] - o[a]) / d[a]);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            if ta > t0 {
                t0 = ta;
                axis = a;
            }
            t1 = t1.min(tb);
        }
        if miss || t0 > t1 || t0 <= 0.0 {
            continue;
        }
        if best.as_ref().is_none_or(|(t, _)| t0 < *t) {
            best = Some((t0, Surface::Box(bi, axis)));
        }
    }
    best
}

fn generate_scene(index: usize, rng: &mut ChaCha8Rng) -> Scene {
    let origin = [index as f64 * SCENE_SPACING, 0.0, 0.0];
    let n_boxes = rng.random_range(6..=10);
    let mut boxes = Vec::with_capacity(n_boxes);
    while boxes.len() < n_boxes {
        let cx: f64 = rng.random_range(-ARENA_HALF..ARENA_HALF);
        let cy: f64 = rng.random_range(-ARENA_HALF..ARENA_HALF);
        let hx: f64 = rng.random_range(0.5..3.0);
        let hy: f64 = rng.random_range(0.5..3.0);
        let h: f64 = rng.random_range(1.0..8.0);
        // Keep a clearing around the station for the visit offsets.
        let clear = VISIT_OFFSET * 2.0 + 2.0;
        if cx.abs() - hx < clear && cy.abs() - hy < clear {
            continue;
        }
        let color = [
            rng.random_range(0.1..0.95),
            rng.random_range(0.1..0.95),
            rng.random_range(0.1..0.95),
        ];
        boxes.push(Box3 {
            min: [origin[0] + cx - hx, origin[1] + cy - hy, 0.0],
            max: [origin[0] + cx + hx, origin[1] + cy + hy, h],
            color,
            reflectance: rng.random_range(0.2..1.0),
        });
    }
    Scene { origin, boxes }
}

/// World-frame surface points `(x, y, z, reflectance)` seen from the station.
fn lidar_sweep(scene: &Scene) -> Vec<[f64; 4]> {
    let o = [scene.origin[0], scene.origin[1], LIDAR_HEIGHT];
    let mut pts = Vec::new();
    for beam in 0..BEAMS {
        let elev = (-15.0 + 30.0 * beam as f64 / (BEAMS - 1) as f64).to_radians();
        for step in 0..AZIMUTH_STEPS {
            let az = std::f64::consts::TAU * step as f64 / AZIMUTH_STEPS as f64;
            let d = [elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin()];
            if let Some((t, s)) = cast(scene, o, d) {
                if t <= MAX_RANGE {
                    let refl = match s {
                        Surface::Ground => 0.3,
                        Surface::Box(i, _) => scene.boxes[i].reflectance,
                    };
                    pts.push([o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2], refl]);
                }
            }
        }
    }
    pts
}

fn render(scene: &Scene, pos: [f64; 3], yaw: f64, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let (w, h) = (IMAGE_WIDTH, IMAGE_HEIGHT);
    let f = (w as f64 / 2.0) / 45f64.to_radians().tan();
    let (c, s) = (yaw.cos(), yaw.sin());
    let o = [pos[0], pos[1], CAMERA_HEIGHT];
    let noise = Normal::new(0.0, PIXEL_NOISE).expect("finite std");
    let mut data = Vec::with_capacity(w * h * 3);
    for v in 0..h {
        for u in 0..w {
            let left = -(u as f64 + 0.5 - w as f64 / 2.0) / f;
            let up = -(v as f64 + 0.5 - h as f64 / 2.0) / f;
            let d = [c - s * left, s + c * left, up];
            let color = match cast(scene, o, d) {
                None => SKY_COLOR,
                Some((t, surf)) => {
                    let dist = t * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    let fade = (-dist / 60.0).exp();
                    let (base, shade) = match surf {
                        Surface::Ground => (GROUND_COLOR, 1.0),
                        Surface::Box(i, axis) => (scene.boxes[i].color, [1.0, 0.8, 0.6][axis]),
                    };
                    base.map(|b| b * shade * fade + SKY_COLOR[0] * 0.15 * (1.0 - fade))
                }
            };
            data.extend(color.iter().map(|&x| (x + noise.sample(rng)).clamp(0.0, 1.0) as f32));
        }
    }
    Tensor::new(vec![h, w, 3], data).expect("consistent shape")
}

fn observe(sweep: &[[f64; 4]], pos: [f64; 3], yaw: f64, rng: &mut ChaCha8Rng) -> Vec<[f32; 4]> {
    let noise = Normal::new(0.0, POINT_NOISE).expect("finite std");
    let (c, s) = (yaw.cos(), yaw.sin());
    sweep
        .iter()
        .map(|p| {
            let dx = p[0] - pos[0];
            let dy = p[1] - pos[1];
            let dz = p[2] - LIDAR_HEIGHT - pos[2];
            [
                (c * dx + s * dy + noise.sample(rng)) as f32,
                (-s * dx + c * dy + noise.sample(rng)) as f32,
                (dz + noise.sample(rng)) as f32,
                p[3] as f32,
            ]
        })
        .collect()
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(MODULE, path, e))
}

/// Write `n_scenes` scenes with two visits each. Visit 0 of scene `s`
/// (id `s`) is the database pass, visit 1 (id `n_scenes + s`) the query
/// pass, so an id-sorted pose file lists all database samples first.
pub fn synth_generate(out_dir: &Path, n_scenes: usize, mode: RevisitMode, seed: u64) -> Result<DatasetManifest> {
    if n_scenes < 2 {
        return Err(Error::contract(MODULE, format!("need at least 2 scenes, got {n_scenes}")));
    }
    create_dir(&out_dir.join("images"))?;
    create_dir(&out_dir.join("clouds"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(2 * n_scenes);
    let mut poses = BTreeMap::new();
    for s in 0..n_scenes {
        let scene = generate_scene(s, &mut rng);
        let sweep = lidar_sweep(&scene);
        for visit in 0..2u64 {
            let id = (visit as usize * n_scenes + s) as u64;
            let pos = [
                scene.origin[0] + rng.random_range(-VISIT_OFFSET..VISIT_OFFSET),
                scene.origin[1] + rng.random_range(-VISIT_OFFSET..VISIT_OFFSET),
                0.0,
            ];
            let yaw = if visit == 1 && mode == RevisitMode::Reverse {
                std::f64::consts::PI
            } else {
                0.0
            };
            let image = render(&scene, pos, yaw, &mut rng);
            let cloud = observe(&sweep, pos, yaw, &mut rng);
            write_image(&image_path(out_dir, id), &image)?;
            write_cloud(&cloud_path(out_dir, id), &cloud)?;
            poses.insert(
                id,
                PoseRecord {
                    timestamp_ns: 1_000_000_000 + id * 100_000_000,
                    position: pos,
                },
            );
            entries.push((id, if visit == 0 { Split::Db } else { Split::Query }));
        }
    }
    let write = |name: &str, text: String| {
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(MODULE, &p, e))
    };
    write("poses.txt", format_poses(&poses))?;
    entries.sort();
    write("manifest.txt", format_manifest(&entries))?;
    DatasetManifest::open(out_dir)
}
