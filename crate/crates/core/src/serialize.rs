//! Binary model (`FLM1`) and descriptor (`FLD1`) files. All integers and
//! floats are little-endian; momentum buffers are not stored.

use std::fs;
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::params::ParameterTable;
use crate::tensor::Tensor;

const MODEL_MAGIC: &[u8; 4] = b"FLM1";
const DESC_MAGIC: &[u8; 4] = b"FLD1";

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    module: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.module,
                format!("truncated while reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format(self.module, "size overflow"))?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn encode_model(params: &ParameterTable<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + params.num_scalars() * 4);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (path, p) in params.iter() {
        let bytes = path.as_bytes();
        ensure!(bytes.len() <= u16::MAX as usize, "diffcore", "parameter path too long: {path}");
        out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(bytes);
        let shape = p.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_model(buf: &[u8]) -> Result<ParameterTable<f32>> {
    let mut r = Reader {
        buf,
        pos: 0,
        module: "diffcore",
    };
    ensure_magic(r.take(4, "magic")?, MODEL_MAGIC, "diffcore")?;
    let count = r.u32("parameter count")?;
    let mut table = ParameterTable::new();
    for _ in 0..count {
        let len = r.u16("path length")? as usize;
        let path = std::str::from_utf8(r.take(len, "path")?)
            .map_err(|_| Error::format("diffcore", "parameter path is not UTF-8"))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::format("diffcore", format!("shape {shape:?} of `{path}` overflows")))?;
        let data = r.f32s(n, "parameter values")?;
        let value = Tensor::new(shape, data).map_err(|e| Error::format("diffcore", format!("`{path}`: {e}")))?;
        table
            .insert(path, value)
            .map_err(|e| Error::format("diffcore", e.to_string()))?;
    }
    ensure_consumed(&r)?;
    Ok(table)
}

fn ensure_magic(got: &[u8], want: &[u8; 4], module: &'static str) -> Result<()> {
    if got != want {
        return Err(Error::format(
            module,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(want)
            ),
        ));
    }
    Ok(())
}

fn ensure_consumed(r: &Reader) -> Result<()> {
    if r.pos != r.buf.len() {
        return Err(Error::format(r.module, format!("{} trailing bytes", r.buf.len() - r.pos)));
    }
    Ok(())
}

pub fn save_model(params: &ParameterTable<f32>, path: &Path) -> Result<()> {
    fs::write(path, encode_model(params)?).map_err(|e| Error::io("diffcore", path, e))
}

pub fn load_model(path: &Path) -> Result<ParameterTable<f32>> {
    decode_model(&fs::read(path).map_err(|e| Error::io("diffcore", path, e))?)
}

/// `count x dim` descriptor matrix.
pub fn encode_descriptors(rows: &[Tensor<f32>], dim: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + rows.len() * dim * 4);
    out.extend_from_slice(DESC_MAGIC);
    out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for (i, r) in rows.iter().enumerate() {
        ensure!(r.len() == dim, "aggregation", "descriptor {i} has {} values, expected {dim}", r.len());
        for &v in r.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Returns `(dim, rows)`.
pub fn decode_descriptors(buf: &[u8]) -> Result<(usize, Vec<Tensor<f32>>)> {
    let mut r = Reader {
        buf,
        pos: 0,
        module: "aggregation",
    };
    ensure_magic(r.take(4, "magic")?, DESC_MAGIC, "aggregation")?;
    let count = r.u32("descriptor count")? as usize;
    let dim = r.u32("descriptor dim")? as usize;
    if dim == 0 {
        return Err(Error::format("aggregation", "descriptor dim is zero"));
    }
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        rows.push(Tensor::from_vec(r.f32s(dim, "descriptor values")?));
    }
    ensure_consumed(&r)?;
    Ok((dim, rows))
}

pub fn save_descriptors(rows: &[Tensor<f32>], dim: usize, path: &Path) -> Result<()> {
    fs::write(path, encode_descriptors(rows, dim)?).map_err(|e| Error::io("aggregation", path, e))
}

pub fn load_descriptors(path: &Path) -> Result<(usize, Vec<Tensor<f32>>)> {
    decode_descriptors(&fs::read(path).map_err(|e| Error::io("aggregation", path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_roundtrip_is_bitwise() {
        let mut p = ParameterTable::new();
        p.insert("a.weight", Tensor::new(vec![2, 3], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5, 1e-30, 7.0]).unwrap())
            .unwrap();
        p.insert("a.bn.running_mean", Tensor::from_vec(vec![0.25f32])).unwrap();
        let bytes = encode_model(&p).unwrap();
        assert_eq!(&bytes[..4], b"FLM1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        let back = decode_model(&bytes).unwrap();
        assert!(back.bitwise_eq(&p));
        assert!(!back.param("a.bn.running_mean").unwrap().trainable);
        assert_eq!(encode_model(&back).unwrap(), bytes);
    }

    #[test]
    fn model_rejects_corruption() {
        let mut p = ParameterTable::new();
        p.insert("w", Tensor::from_vec(vec![1.0f32, 2.0])).unwrap();
        let bytes = encode_model(&p).unwrap();
        assert!(decode_model(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::Format { .. })));
        let mut long = bytes;
        long.push(0);
        assert!(decode_model(&long).is_err());
    }

    #[test]
    fn descriptor_layout() {
        let rows = vec![Tensor::from_vec(vec![1.0f32, 2.0]), Tensor::from_vec(vec![3.0, 4.0])];
        let bytes = encode_descriptors(&rows, 2).unwrap();
        assert_eq!(bytes.len(), 12 + 16);
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        let (dim, back) = decode_descriptors(&bytes).unwrap();
        assert_eq!(dim, 2);
        assert_eq!(back, rows);
        assert!(encode_descriptors(&rows, 3).is_err());
    }
}
