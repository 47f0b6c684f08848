use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONV_LAYERS: usize = 5;
pub const FC_LAYERS: usize = 3;
pub const CLASSES: usize = 2;
/// 1-indexed convolution layers followed by 2x2/stride-2 max-pooling.
pub const POOL_AFTER: [usize; 3] = [1, 2, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub const fn same3x3(out_channels: usize) -> Self {
        Self {
            out_channels,
            kernel: 3,
            stride: 1,
            padding: 1,
        }
    }

    pub fn output_extent(&self, input: usize) -> Option<usize> {
        let padded = input + 2 * self.padding;
        (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
    }
}

/// Channels x height x width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_side: usize,
    pub input_channels: usize,
    pub conv: Vec<ConvSpec>,
    pub pool_after: Vec<usize>,
    /// Widths of the fully connected layers; the first is the feature size.
    pub fc: Vec<usize>,
}

impl NetworkConfig {
    /// Desk-scale network: channels (8, 16, 16, 16, 16), FC (64, 32, 2).
    pub fn desk(input_side: usize) -> Self {
        Self::with_widths(input_side, [8, 16, 16, 16, 16], [64, 32])
    }

    pub fn with_widths(input_side: usize, channels: [usize; 5], hidden: [usize; 2]) -> Self {
        Self {
            input_side,
            input_channels: 3,
            conv: channels.iter().map(|&c| ConvSpec::same3x3(c)).collect(),
            pool_after: POOL_AFTER.to_vec(),
            fc: vec![hidden[0], hidden[1], CLASSES],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.fc[0]
    }

    pub fn pools_after(&self, layer: usize) -> bool {
        self.pool_after.contains(&(layer + 1))
    }

    pub fn input_shape(&self) -> Shape {
        Shape {
            c: self.input_channels,
            h: self.input_side,
            w: self.input_side,
        }
    }

    /// Input shape of each conv layer, followed by the flattened shape fed to
    /// the first fully connected layer.
    pub fn conv_shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = vec![self.input_shape()];
        let mut cur = self.input_shape();
        for (l, spec) in self.conv.iter().enumerate() {
            let h = spec.output_extent(cur.h);
            let w = spec.output_extent(cur.w);
            let (Some(mut h), Some(mut w)) = (h, w) else {
                return Err(Error::invalid(
                    "network",
                    format!("conv layer {} kernel larger than its {}x{} input", l + 1, cur.h, cur.w),
                ));
            };
            if self.pools_after(l) {
                if h < 2 || w < 2 {
                    return Err(Error::invalid(
                        "network",
                        format!("pool after conv layer {} sees a {h}x{w} map", l + 1),
                    ));
                }
                h /= 2;
                w /= 2;
            }
            cur = Shape {
                c: spec.out_channels,
                h,
                w,
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv.len() != CONV_LAYERS {
            return Err(Error::invalid("network", format!("need {CONV_LAYERS} conv layers")));
        }
        if self.fc.len() != FC_LAYERS {
            return Err(Error::invalid("network", format!("need {FC_LAYERS} fc layers")));
        }
        if self.pool_after != POOL_AFTER {
            return Err(Error::invalid("network", "pooling must follow conv layers 1, 2 and 5"));
        }
        if self.fc[FC_LAYERS - 1] != CLASSES {
            return Err(Error::invalid("network", "final fc width must be 2"));
        }
        if self.input_side == 0 || self.input_channels == 0 {
            return Err(Error::invalid("network", "empty input"));
        }
        if self.fc.contains(&0) {
            return Err(Error::invalid("network", "zero-width fc layer"));
        }
        for s in &self.conv {
            if s.out_channels == 0 || s.kernel == 0 || s.stride == 0 {
                return Err(Error::invalid("network", format!("degenerate conv spec {s:?}")));
            }
        }
        self.conv_shapes().map(|_| ())
    }
}
