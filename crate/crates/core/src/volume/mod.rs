//! 3D volumes: storage, file I/O, isotropic resampling, patch extraction and
//! median intensity projection.

mod io;
mod projection;
mod resample;

pub use io::{load_volume, read_volume, save_volume, write_volume, RVOL_MAGIC};
pub use projection::{compose_tensor, median_projection, Axis, Image};
pub use resample::{map_index, resample_isotropic, DEFAULT_SPACING_MM};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A scalar field on a regular grid, stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: [usize; 3],
    spacing: [T; 3],
    voxels: Vec<T>,
}

impl<T: Real> Volume<T> {
    pub fn new(dims: [usize; 3], spacing: [T; 3], voxels: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid("dims", format!("{dims:?} has a zero extent")));
        }
        if spacing.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::invalid("spacing", format!("{spacing:?} must be positive")));
        }
        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::invalid("dims", "voxel count overflows"))?;
        if voxels.len() != count {
            return Err(Error::Shape(format!(
                "{} voxels for dims {dims:?} (expected {count})",
                voxels.len()
            )));
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("voxels", "non-finite intensity"));
        }
        Ok(Self { dims, spacing, voxels })
    }

    pub fn filled(dims: [usize; 3], spacing: [T; 3], value: T) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, vec![value; n])
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(dims: [usize; 3], spacing: [T; 3], mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        let mut voxels = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    voxels.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, voxels)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [T; 3] {
        self.spacing
    }

    pub fn voxels(&self) -> &[T] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<T> {
        self.voxels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.voxels[self.index(x, y, z)]
    }

    /// Edge length when all three dimensions agree.
    pub fn cubic_side(&self) -> Option<usize> {
        let [a, b, c] = self.dims;
        (a == b && b == c).then_some(a)
    }

    pub fn contains(&self, idx: [usize; 3]) -> bool {
        idx.iter().zip(self.dims).all(|(&i, d)| i < d)
    }

    pub fn min_intensity(&self) -> T {
        self.voxels.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_intensity(&self) -> T {
        self.voxels.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Clamps intensities to `[lo, hi]` and rescales them to `[0, 1]`.
    pub fn window(&self, lo: T, hi: T) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::invalid("window", "upper bound must exceed lower bound"));
        }
        let width = hi - lo;
        let voxels = self.voxels.iter().map(|&v| (v.max(lo).min(hi) - lo) / width).collect();
        Ok(Self {
            dims: self.dims,
            spacing: self.spacing,
            voxels,
        })
    }

    /// Swaps the x and y axes (and their spacings).
    pub fn transpose_xy(&self) -> Self {
        let [nx, ny, nz] = self.dims;
        let mut voxels = Vec::with_capacity(self.voxels.len());
        for z in 0..nz {
            for x in 0..nx {
                for y in 0..ny {
                    voxels.push(self.get(x, y, z));
                }
            }
        }
        Self {
            dims: [ny, nx, nz],
            spacing: [self.spacing[1], self.spacing[0], self.spacing[2]],
            voxels,
        }
    }

    pub fn cast<U: Real>(&self) -> Volume<U> {
        Volume {
            dims: self.dims,
            spacing: self.spacing.map(|s| U::lit(s.as_f64())),
            voxels: self.voxels.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Cubic `side³` patch centered at `center`. Voxels outside the volume
    /// take the volume's minimum intensity.
    pub fn extract_patch(&self, center: [usize; 3], side: usize) -> Result<Self> {
        if side < 3 || side.is_multiple_of(2) {
            return Err(Error::invalid("side", format!("{side} must be odd and >= 3")));
        }
        if !self.contains(center) {
            return Err(Error::invalid(
                "center",
                format!("{center:?} outside volume {:?}", self.dims),
            ));
        }
        let fill = self.min_intensity();
        let half = (side / 2) as isize;
        let origin = center.map(|c| c as isize - half);
        let inside = |v: isize, d: usize| v >= 0 && (v as usize) < d;
        Self::from_fn([side; 3], self.spacing, |x, y, z| {
            let (sx, sy, sz) = (origin[0] + x as isize, origin[1] + y as isize, origin[2] + z as isize);
            if inside(sx, self.dims[0]) && inside(sy, self.dims[1]) && inside(sz, self.dims[2]) {
                self.get(sx as usize, sy as usize, sz as usize)
            } else {
                fill
            }
        })
    }
}
