//! Binary parameter snapshots.
//!
//! Layout (all integers little-endian u32, values little-endian f32):
//!
//! ```text
//! magic "VARC" | version | tensor_count
//! per tensor: name_len | name (utf8) | ndim | dims... | values...
//! ```
//!
//! Values are stored in 32-bit; the in-memory model computes in 64-bit, so a
//! save/load round trip quantizes. Loading checks every name and shape
//! against the receiving model and rejects mismatches.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::ParamTensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"VARC";
const VERSION: u32 = 1;

pub fn save_params(path: &Path, params: &[&ParamTensor]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        let name = p.name().as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let shape = p.value().shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in p.value().iter() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a snapshot into an existing parameter set. The file must contain
/// exactly the same tensors (same names, same shapes, same order).
pub fn load_params(path: &Path, params: &mut [&mut ParamTensor]) -> Result<()> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{} is not a parameter snapshot (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    if count != params.len() {
        return Err(Error::Format(format!(
            "snapshot holds {count} tensors, model expects {}",
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("tensor name is not utf-8".into()))?;
        if name != p.name() {
            return Err(Error::Format(format!(
                "tensor name mismatch: file has {name}, model expects {}",
                p.name()
            )));
        }
        let ndim = read_u32(&mut r)? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u32(&mut r)? as usize);
        }
        if dims != p.value().shape() {
            return Err(Error::Format(format!(
                "shape mismatch for {name}: file {dims:?}, model {:?}",
                p.value().shape()
            )));
        }
        let n: usize = dims.iter().product();
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf)?;
        let values = p.value_mut().as_slice_mut().expect("standard layout");
        for (i, chunk) in buf.chunks_exact(4).enumerate() {
            values[i] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
