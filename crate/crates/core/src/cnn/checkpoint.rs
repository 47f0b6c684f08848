//! NNC1 checkpoints.
//!
//! Little-endian layout: magic `NNC1`, format version (u32), input side and
//! channels (u32), conv count then `(out, kernel, stride, padding)` per layer,
//! pool count then 1-indexed pool positions, fc count then widths (all u32),
//! parameter count (u64), then every parameter as f64 in declaration order.

use std::path::Path;

use super::config::{ConvSpec, NetworkConfig};
use super::network::NetworkParams;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const NNC_MAGIC: &[u8; 4] = b"NNC1";
const VERSION: u32 = 1;

fn push_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn write_checkpoint<T: Real>(params: &NetworkParams<T>) -> Vec<u8> {
    let cfg = params.config();
    let mut out = NNC_MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    push_u32(&mut out, cfg.input_side);
    push_u32(&mut out, cfg.input_channels);
    push_u32(&mut out, cfg.conv.len());
    for c in &cfg.conv {
        for v in [c.out_channels, c.kernel, c.stride, c.padding] {
            push_u32(&mut out, v);
        }
    }
    push_u32(&mut out, cfg.pool_after.len());
    for &p in &cfg.pool_after {
        push_u32(&mut out, p);
    }
    push_u32(&mut out, cfg.fc.len());
    for &w in &cfg.fc {
        push_u32(&mut out, w);
    }
    out.extend_from_slice(&(params.parameter_count() as u64).to_le_bytes());
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N]> {
        let chunk = self.bytes.get(self.pos..self.pos + N).ok_or(Error::Truncated {
            field,
            offset: self.pos,
        })?;
        self.pos += N;
        Ok(chunk.try_into().expect("sized chunk"))
    }

    fn u32(&mut self, field: &'static str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(field)?) as usize)
    }

    fn list(&mut self, field: &'static str) -> Result<Vec<usize>> {
        let n = self.u32(field)?;
        if n > 64 {
            return Err(Error::invalid(field, format!("implausible length {n}")));
        }
        (0..n).map(|_| self.u32(field)).collect()
    }
}

pub fn read_checkpoint<T: Real>(bytes: &[u8]) -> Result<NetworkParams<T>> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = c.take("magic")?;
    if &magic != NNC_MAGIC {
        return Err(Error::BadMagic {
            expected: "NNC1".into(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = c.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::invalid(
            "version",
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let input_side = c.u32("input_side")?;
    let input_channels = c.u32("input_channels")?;
    let n_conv = c.u32("conv count")?;
    if n_conv > 64 {
        return Err(Error::invalid("conv count", format!("implausible length {n_conv}")));
    }
    let mut conv = Vec::with_capacity(n_conv);
    for _ in 0..n_conv {
        conv.push(ConvSpec {
            out_channels: c.u32("conv spec")?,
            kernel: c.u32("conv spec")?,
            stride: c.u32("conv spec")?,
            padding: c.u32("conv spec")?,
        });
    }
    let pool_after = c.list("pool_after")?;
    let fc = c.list("fc widths")?;
    let config = NetworkConfig {
        input_side,
        input_channels,
        conv,
        pool_after,
        fc,
    };
    config.validate()?;
    let count = u64::from_le_bytes(c.take("parameter count")?) as usize;
    let expected = NetworkParams::<T>::zeros(&config)?.parameter_count();
    if count != expected {
        return Err(Error::Shape(format!(
            "checkpoint holds {count} parameters, config needs {expected}"
        )));
    }
    let start = c.pos;
    if bytes.len() - start < 8 * count {
        return Err(Error::Truncated {
            field: "parameters",
            offset: start + (bytes.len() - start) / 8 * 8,
        });
    }
    if bytes.len() - start > 8 * count {
        return Err(Error::invalid("payload", "trailing bytes after parameters"));
    }
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        let v = f64::from_le_bytes(c.take("parameters")?);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                field: "parameters",
                offset: start + 8 * i,
            });
        }
        values.push(T::lit(v));
    }
    NetworkParams::from_parts(config, &mut values.into_iter())
}

pub fn save_checkpoint<T: Real>(params: &NetworkParams<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<NetworkParams<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn roundtrip_and_corruption() {
        let cfg = NetworkConfig::with_widths(9, [2, 3, 2, 2, 2], [8, 4]);
        let p = NetworkParams::<f64>::he_init(&cfg, &mut seed::rng(2)).unwrap();
        let bytes = write_checkpoint(&p);
        assert_eq!(&bytes[..4], b"NNC1");
        let back: NetworkParams<f64> = read_checkpoint(&bytes).unwrap();
        assert_eq!(back, p);
        assert!(read_checkpoint::<f64>(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint::<f64>(&bad), Err(Error::BadMagic { .. })));
    }
}
