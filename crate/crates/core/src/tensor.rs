//! Dense runtime tensors of the view transformation. All row-major, `f32`.

use crate::digest::Fnv1a64;
use crate::error::KernelError;

/// Per-pixel depth distribution, shape `(N, D, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthScores {
    pub num_views: usize,
    pub depth_bins: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl DepthScores {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self, KernelError> {
        let [num_views, depth_bins, height, width] = shape;
        check_len("depth scores", shape.iter().product(), data.len())?;
        Ok(Self {
            num_views,
            depth_bins,
            height,
            width,
            data,
        })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::new(shape, vec![0.0; shape.iter().product()]).expect("length matches shape")
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.num_views, self.depth_bins, self.height, self.width]
    }

    /// Scores are usable as weights: finite and non-negative.
    pub fn check_weights(&self) -> Result<(), KernelError> {
        match self.data.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            Some(i) => Err(KernelError::Shape(format!(
                "depth score {} at {i} is not a finite non-negative weight",
                self.data[i]
            ))),
            None => Ok(()),
        }
    }

    /// True when every pixel's scores sum to 1 within `1e-4`.
    pub fn is_normalized(&self) -> bool {
        let hw = self.height * self.width;
        (0..self.num_views).all(|n| {
            (0..hw).all(|px| {
                let sum: f64 = (0..self.depth_bins)
                    .map(|d| self.data[(n * self.depth_bins + d) * hw + px] as f64)
                    .sum();
                (sum - 1.0).abs() <= 1e-4
            })
        })
    }
}

/// Image features, shape `(N, H, W, C)`, channels contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub num_views: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl ImageFeatures {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self, KernelError> {
        let [num_views, height, width, channels] = shape;
        check_len("image features", shape.iter().product(), data.len())?;
        Ok(Self {
            num_views,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.num_views, self.height, self.width, self.channels]
    }

    #[inline]
    pub fn row(&self, pixel: usize) -> &[f32] {
        &self.data[pixel * self.channels..(pixel + 1) * self.channels]
    }
}

/// Pooled output, shape `(nz, ny, nx, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevFeature {
    pub nz: usize,
    pub ny: usize,
    pub nx: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl BevFeature {
    /// Zeroed output for a grid of `(nx, ny, nz)` voxels.
    pub fn zeros(grid_dims: [usize; 3], channels: usize) -> Self {
        let [nx, ny, nz] = grid_dims;
        Self {
            nz,
            ny,
            nx,
            channels,
            data: vec![0.0; nx * ny * nz * channels],
        }
    }

    pub fn num_voxels(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn voxel(&self, v: usize) -> &[f32] {
        &self.data[v * self.channels..(v + 1) * self.channels]
    }
}

/// Digest of a tensor pair, used to confirm seeded inputs are reproduced.
pub fn input_digest(depth: &DepthScores, feat: &ImageFeatures) -> u64 {
    let mut h = Fnv1a64::new();
    h.write_f32s(&depth.data);
    h.write_f32s(&feat.data);
    h.finish()
}

fn check_len(what: &str, expected: usize, actual: usize) -> Result<(), KernelError> {
    if expected == actual {
        Ok(())
    } else {
        Err(KernelError::Shape(format!(
            "{what} hold {actual} values, shape needs {expected}"
        )))
    }
}
