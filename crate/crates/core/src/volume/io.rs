//! RVOL volume files.
//!
//! Layout (all little-endian): magic `RVL1`, `nx ny nz` as u32, `sx sy sz` as
//! f32 millimetres, then `nx*ny*nz` f32 voxels in x-fastest order.

use std::fs;
use std::path::Path;

use super::Volume;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const RVOL_MAGIC: &[u8; 4] = b"RVL1";
const HEADER_LEN: usize = 4 + 3 * 4 + 3 * 4;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take4(&mut self, field: &'static str) -> Result<[u8; 4]> {
        let chunk = self.bytes.get(self.pos..self.pos + 4).ok_or(Error::Truncated {
            field,
            offset: self.pos,
        })?;
        self.pos += 4;
        Ok(chunk.try_into().expect("4-byte slice"))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take4(field)?))
    }

    fn f32(&mut self, field: &'static str) -> Result<f32> {
        let offset = self.pos;
        let v = f32::from_le_bytes(self.take4(field)?);
        if !v.is_finite() {
            return Err(Error::NonFinite { field, offset });
        }
        Ok(v)
    }
}

/// Decodes an RVOL byte buffer.
pub fn read_volume<T: Real>(bytes: &[u8]) -> Result<Volume<T>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take4("magic")?;
    if &magic != RVOL_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(RVOL_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let dims = [r.u32("nx")?, r.u32("ny")?, r.u32("nz")?].map(|d| d as usize);
    let spacing = [r.f32("sx")?, r.f32("sy")?, r.f32("sz")?];
    if let Some(bad) = spacing.iter().position(|&s| s <= 0.0) {
        return Err(Error::invalid(
            ["sx", "sy", "sz"][bad],
            format!("spacing {} must be positive", spacing[bad]),
        ));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::invalid("dims", "voxel count overflows"))?;
    let needed = count
        .checked_mul(4)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::invalid("dims", "payload size overflows"))?;
    if bytes.len() < needed {
        let full = (bytes.len() - HEADER_LEN) / 4;
        return Err(Error::Truncated {
            field: "voxels",
            offset: HEADER_LEN + full * 4,
        });
    }
    if bytes.len() > needed {
        return Err(Error::invalid(
            "payload",
            format!("{} trailing bytes after voxel data", bytes.len() - needed),
        ));
    }
    let mut voxels = Vec::with_capacity(count);
    for _ in 0..count {
        voxels.push(T::lit(r.f32("voxels")? as f64));
    }
    Volume::new(dims, spacing.map(|s| T::lit(s as f64)), voxels)
}

/// Encodes a volume as RVOL bytes. Values are narrowed to f32.
pub fn write_volume<T: Real>(vol: &Volume<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * vol.voxels().len());
    out.extend_from_slice(RVOL_MAGIC);
    for d in vol.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in vol.spacing() {
        out.extend_from_slice(&(s.as_f64() as f32).to_le_bytes());
    }
    for v in vol.voxels() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn load_volume<T: Real>(path: impl AsRef<Path>) -> Result<Volume<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_volume(&bytes)
}

pub fn save_volume<T: Real>(vol: &Volume<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_volume(vol)).map_err(|e| Error::io(path, e))
}
