//! Three-channel square image built from the median projections.
//!
//! PTN1 files: magic `PTN1`, side `S` as u32, then `3*S*S` f32 values, all
//! little-endian, channel-major with each channel stored row by row.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::Image;

pub const PTN_MAGIC: &[u8; 4] = b"PTN1";
pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionTensor<T> {
    side: usize,
    data: Vec<T>,
}

impl<T: Real> ProjectionTensor<T> {
    pub fn new(side: usize, data: Vec<T>) -> Result<Self> {
        if side == 0 {
            return Err(Error::invalid("side", "must be positive"));
        }
        if data.len() != CHANNELS * side * side {
            return Err(Error::Shape(format!(
                "{} values for a {side}x{side}x3 tensor",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor", "non-finite value"));
        }
        Ok(Self { side, data })
    }

    pub fn filled(side: usize, value: T) -> Self {
        Self {
            side,
            data: vec![value; CHANNELS * side * side],
        }
    }

    pub fn from_channels(channels: [Image<T>; 3]) -> Result<Self> {
        let side = channels[0].side;
        if channels.iter().any(|c| c.side != side) {
            return Err(Error::Shape("channels differ in size".into()));
        }
        let data = channels.into_iter().flat_map(|c| c.data).collect();
        Self::new(side, data)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.side * self.side;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.side * self.side;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, u: usize, v: usize) -> T {
        self.data[c * self.side * self.side + u + self.side * v]
    }

    /// Applies `f` to every value, keeping the shape.
    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            side: self.side,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn from_raw(side: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), CHANNELS * side * side);
        Self { side, data }
    }

    pub fn cast<U: Real>(&self) -> ProjectionTensor<U> {
        ProjectionTensor {
            side: self.side,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

pub fn write_tensor<T: Real>(t: &ProjectionTensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.data.len());
    out.extend_from_slice(PTN_MAGIC);
    out.extend_from_slice(&(t.side as u32).to_le_bytes());
    for v in &t.data {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn read_tensor<T: Real>(bytes: &[u8]) -> Result<ProjectionTensor<T>> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            field: "magic",
            offset: 0,
        });
    }
    if &bytes[..4] != PTN_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(PTN_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    let side_bytes: [u8; 4] = bytes
        .get(4..8)
        .ok_or(Error::Truncated {
            field: "side",
            offset: 4,
        })?
        .try_into()
        .expect("4 bytes");
    let side = u32::from_le_bytes(side_bytes) as usize;
    let count = CHANNELS * side * side;
    let payload = &bytes[8..];
    if payload.len() < 4 * count {
        return Err(Error::Truncated {
            field: "values",
            offset: 8 + payload.len() / 4 * 4,
        });
    }
    if payload.len() > 4 * count {
        return Err(Error::invalid("payload", "trailing bytes after tensor data"));
    }
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(Error::NonFinite {
                field: "values",
                offset: 8 + 4 * i,
            });
        }
        data.push(T::lit(v as f64));
    }
    ProjectionTensor::new(side, data)
}

pub fn save_tensor<T: Real>(t: &ProjectionTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_tensor(t)).map_err(|e| Error::io(path, e))
}

pub fn load_tensor<T: Real>(path: impl AsRef<Path>) -> Result<ProjectionTensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_tensor(&bytes)
}

/// 8-bit grayscale rendering of one channel, min-max normalized.
pub fn channel_to_gray8<T: Real>(t: &ProjectionTensor<T>, c: usize) -> Vec<u8> {
    let ch = t.channel(c);
    let lo = ch.iter().copied().fold(T::infinity(), T::min);
    let hi = ch.iter().copied().fold(T::neg_infinity(), T::max);
    let range = hi - lo;
    ch.iter()
        .map(|&v| {
            if range > T::zero() {
                ((v - lo) / range * T::lit(255.0)).round().as_f64() as u8
            } else {
                0
            }
        })
        .collect()
}

/// Writes `<prefix>_c0.png`, `_c1.png` and `_c2.png`. Returns the paths.
pub fn export_png<T: Real>(t: &ProjectionTensor<T>, prefix: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let prefix = prefix.as_ref();
    let mut paths = Vec::with_capacity(CHANNELS);
    for c in 0..CHANNELS {
        let mut name = prefix.as_os_str().to_owned();
        name.push(format!("_c{c}.png"));
        let path = PathBuf::from(name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), t.side as u32, t.side as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let to_io = |e: png::EncodingError| Error::io(&path, std::io::Error::other(e.to_string()));
        let mut writer = enc.write_header().map_err(to_io)?;
        writer.write_image_data(&channel_to_gray8(t, c)).map_err(to_io)?;
        writer.finish().map_err(to_io)?;
        paths.push(path);
    }
    Ok(paths)
}
