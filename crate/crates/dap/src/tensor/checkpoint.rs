//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!   magic `DAPCKPT1` (8 bytes)
//!   u32 entry count, then per entry:
//!     u16 name length, UTF-8 name, u8 rank, u32 per dimension, f64 payload
//!   u32 meta count, then per pair:
//!     u16 key length, UTF-8 key, u16 value length, UTF-8 value

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::{ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"DAPCKPT1";

pub fn save_checkpoint(
    params: &ParamStore,
    meta: &BTreeMap<String, String>,
    path: &Path,
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.push(t.shape().len() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in t.data().iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    for (k, v) in meta {
        buf.extend_from_slice(&(k.len() as u16).to_le_bytes());
        buf.extend_from_slice(k.as_bytes());
        buf.extend_from_slice(&(v.len() as u16).to_le_bytes());
        buf.extend_from_slice(v.as_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&buf)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!("{}: truncated checkpoint", self.path)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Format(format!("{}: invalid UTF-8 in checkpoint", self.path)))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, BTreeMap<String, String>)> {
    let buf = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        path: path.display().to_string(),
    };
    if r.take(8)? != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad checkpoint magic",
            path.display()
        )));
    }
    let n_entries = r.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..n_entries {
        let name_len = r.u16()? as usize;
        let name = r.string(name_len)?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.insert(&name, Tensor::param(&shape, data));
    }
    let n_meta = r.u32()?;
    let mut meta = BTreeMap::new();
    for _ in 0..n_meta {
        let kl = r.u16()? as usize;
        let k = r.string(kl)?;
        let vl = r.u16()? as usize;
        let v = r.string(vl)?;
        meta.insert(k, v);
    }
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut params = ParamStore::new();
        params.insert("layer.w", Tensor::param(&[2, 3], vec![1.5, -2.25, 0.0, 1e-300, f64::MAX, -0.1]));
        params.insert("layer.b", Tensor::param(&[3], vec![0.1, 0.2, 0.3]));
        let mut meta = BTreeMap::new();
        meta.insert("kind".to_string(), "test".to_string());
        save_checkpoint(&params, &meta, &path).unwrap();

        let (loaded, meta2) = load_checkpoint(&path).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(loaded.len(), params.len());
        for (name, t) in params.iter() {
            let l = loaded.get(name);
            assert_eq!(l.shape(), t.shape());
            // bitwise comparison
            let a: Vec<u64> = t.data().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = l.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn corrupt_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOTCKPT1\x00\x00\x00\x00").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ckpt");
        let mut params = ParamStore::new();
        params.insert("w", Tensor::param(&[4], vec![1.0; 4]));
        save_checkpoint(&params, &BTreeMap::new(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }
}
