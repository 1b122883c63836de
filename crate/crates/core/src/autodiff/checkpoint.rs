//! Parameter files: `EIIETNSR` magic, `u32` version, `u32` tensor count,
//! then per tensor a `u32`-prefixed UTF-8 name, `u32` rank, `u64` dims and
//! little-endian `f64` values. Layer metadata lives in a JSON manifest next
//! to the binary file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::graph::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"EIIETNSR";
const VERSION: u32 = 1;

pub fn write_params<W: Write>(mut w: W, params: &ParamSet) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("file truncated".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_params<R: Read>(mut r: R) -> Result<ParamSet> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a parameter file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(truncated)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(truncated)?;
            data.push(f64::from_le_bytes(b));
        }
        params
            .add(name, Tensor::new(shape, data)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    Ok(params)
}

/// Location of the JSON manifest belonging to a parameter file.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_checkpoint<M: Serialize>(path: &Path, params: &ParamSet, manifest: &M) -> Result<()> {
    write_params(BufWriter::new(File::create(path)?), params)?;
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(manifest_path(path), json)?;
    Ok(())
}

pub fn load_checkpoint<M: DeserializeOwned>(path: &Path) -> Result<(ParamSet, M)> {
    let params = read_params(BufReader::new(File::open(path)?))?;
    let manifest = serde_json::from_str(&std::fs::read_to_string(manifest_path(path))?)?;
    Ok((params, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut p = ParamSet::new();
        p.add("conv/w", Tensor::new(vec![2, 1, 3], vec![0.1, -2.5, 1e-300, f64::MAX, -0.0, 3.0]).unwrap())
            .unwrap();
        p.add("bias", Tensor::scalar(0.0)).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        let back = read_params(buf.as_slice()).unwrap();
        assert_eq!(back, p);
        assert!(back.tensors()[0].data()[4].is_sign_negative());
    }

    #[test]
    fn truncated_and_foreign_files_rejected() {
        let mut p = ParamSet::new();
        p.add("w", Tensor::zeros(&[4])).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        assert!(matches!(read_params(&buf[..buf.len() - 3]), Err(Error::Checkpoint(_))));
        assert!(matches!(read_params(&b"NOTATENSORFILE"[..]), Err(Error::Checkpoint(_))));
    }
}
