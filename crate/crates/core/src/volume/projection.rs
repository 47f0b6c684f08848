use super::Volume;
use crate::error::{Error, Result};
use crate::scalar::{median_in_place, Real};
use crate::tensor::ProjectionTensor;

/// Axis collapsed by a projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Square single-channel image. Pixel `(u, v)` lives at `u + side * v`, where
/// `u` runs along the first remaining volume axis and `v` along the second.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub side: usize,
    pub data: Vec<T>,
}

impl<T: Real> Image<T> {
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[u + self.side * v]
    }
}

/// Collapses a cubic patch along `axis` by the per-line median.
///
/// Collapsing x gives an image over (y, z), y gives (x, z), z gives (x, y).
pub fn median_projection<T: Real>(patch: &Volume<T>, axis: Axis) -> Result<Image<T>> {
    let side = patch
        .cubic_side()
        .ok_or_else(|| Error::Shape(format!("patch {:?} is not cubic", patch.dims())))?;
    let vox = patch.voxels();
    let (line_stride, u_stride, v_stride) = match axis {
        Axis::X => (1, side, side * side),
        Axis::Y => (side, 1, side * side),
        Axis::Z => (side * side, 1, side),
    };
    let mut line = vec![T::zero(); side];
    let mut data = Vec::with_capacity(side * side);
    for v in 0..side {
        for u in 0..side {
            let base = u * u_stride + v * v_stride;
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = vox[base + k * line_stride];
            }
            data.push(median_in_place(&mut line));
        }
    }
    Ok(Image { side, data })
}

/// Stacks the x, y and z median projections as the three channels.
pub fn compose_tensor<T: Real>(patch: &Volume<T>) -> Result<ProjectionTensor<T>> {
    let channels = [
        median_projection(patch, Axis::X)?,
        median_projection(patch, Axis::Y)?,
        median_projection(patch, Axis::Z)?,
    ];
    ProjectionTensor::from_channels(channels)
}
