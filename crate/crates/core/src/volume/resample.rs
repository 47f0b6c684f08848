use super::Volume;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_SPACING_MM: f64 = 0.5;

/// Resamples to isotropic `target` mm spacing by trilinear interpolation.
///
/// Output voxel `i` along an axis samples source coordinate
/// `i * target / spacing`, clamped to the last source voxel.
pub fn resample_isotropic<T: Real>(vol: &Volume<T>, target: T) -> Result<Volume<T>> {
    if !(target > T::zero()) || !target.is_finite() {
        return Err(Error::invalid("target", format!("{target} must be positive")));
    }
    let dims = vol.dims();
    let spacing = vol.spacing();
    let mut out_dims = [0usize; 3];
    let mut scale = [T::zero(); 3];
    for a in 0..3 {
        let n = (T::from_usize_lossy(dims[a]) * spacing[a] / target).round().as_f64();
        out_dims[a] = (n as usize).max(1);
        scale[a] = target / spacing[a];
    }

    // per-axis (lower index, upper index, weight of upper)
    let taps = |a: usize| -> Vec<(usize, usize, T)> {
        let last = dims[a] - 1;
        (0..out_dims[a])
            .map(|i| {
                let u = (T::from_usize_lossy(i) * scale[a]).min(T::from_usize_lossy(last));
                let lo = u.floor().as_f64() as usize;
                let hi = (lo + 1).min(last);
                (lo, hi, u - T::from_usize_lossy(lo))
            })
            .collect()
    };
    let (tx, ty, tz) = (taps(0), taps(1), taps(2));
    let one = T::one();
    let lerp = |a: T, b: T, w: T| if w == T::zero() { a } else { a * (one - w) + b * w };

    Volume::from_fn(out_dims, [target; 3], |x, y, z| {
        let (x0, x1, wx) = tx[x];
        let (y0, y1, wy) = ty[y];
        let (z0, z1, wz) = tz[z];
        let plane = |zz| {
            let r0 = lerp(vol.get(x0, y0, zz), vol.get(x1, y0, zz), wx);
            let r1 = lerp(vol.get(x0, y1, zz), vol.get(x1, y1, zz), wx);
            lerp(r0, r1, wy)
        };
        lerp(plane(z0), plane(z1), wz)
    })
}

/// Maps a voxel index in a volume with `spacing` to the nearest voxel of its
/// isotropic resampling at `target` (clamped into `out_dims`).
pub fn map_index<T: Real>(idx: [usize; 3], spacing: [T; 3], target: T, out_dims: [usize; 3]) -> [usize; 3] {
    let mut out = [0usize; 3];
    for a in 0..3 {
        let v = (T::from_usize_lossy(idx[a]) * spacing[a] / target).round().as_f64() as usize;
        out[a] = v.min(out_dims[a] - 1);
    }
    out
}
