//! Sweep configuration and its text form.
//!
//! Uses the scene-file grammar from `bevpool_core::config`. Top-level keys set
//! the run parameters; each `[cell]` block adds one ladder step, in order.
//!
//! ```text
//! kernels = bevpool bevpoolv2   # default: all four
//! repeats = 5
//! warmup = 2
//! views = 6
//! workers = 4                   # default: available parallelism
//!
//! [cell]
//! feat_h = 16
//! feat_w = 44
//! depth_bins = 59
//! channels = 64
//! grid = 128 128 1
//! ```
//!
//! With no `[cell]` block the default ladder is used. The seed is never read
//! from the file; it comes from the caller.

use std::fmt;

use bevpool_core::config::Document;
use bevpool_core::geometry::{FrustumSpec, VoxelGridSpec};
use bevpool_core::{ConfigError, KernelKind};

/// Pixels per feature cell for every ladder step.
pub const DOWNSAMPLE: usize = 16;
/// Ego-centered BEV extent in x and y, meters.
pub const GRID_EXTENT_XY: f64 = 102.4;
/// Height band `[-5, 3)` meters.
pub const GRID_Z: (f64, f64) = (-5.0, 3.0);

/// One step of the resolution ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShapeCell {
    pub feat_h: usize,
    pub feat_w: usize,
    pub depth_bins: usize,
    pub channels: usize,
    /// `(nx, ny, nz)`.
    pub grid_dims: [usize; 3],
}

impl ShapeCell {
    pub const fn new(feat_h: usize, feat_w: usize, depth_bins: usize, channels: usize, grid_dims: [usize; 3]) -> Self {
        Self {
            feat_h,
            feat_w,
            depth_bins,
            channels,
            grid_dims,
        }
    }

    /// Depth bins of 1 m starting at 1 m; feature cells of 16 px.
    pub fn frustum(&self) -> FrustumSpec {
        FrustumSpec {
            feat_h: self.feat_h,
            feat_w: self.feat_w,
            downsample: DOWNSAMPLE,
            depth_start: 1.0,
            depth_end: 1.0 + self.depth_bins as f64,
            depth_step: 1.0,
        }
    }

    /// Ego-centered grid spanning +-51.2 m and the `[-5, 3)` m height band.
    pub fn grid(&self) -> VoxelGridSpec {
        let [nx, ny, nz] = self.grid_dims;
        VoxelGridSpec::ego_centered(
            [
                GRID_EXTENT_XY / nx as f64,
                GRID_EXTENT_XY / ny as f64,
                (GRID_Z.1 - GRID_Z.0) / nz as f64,
            ],
            self.grid_dims,
            GRID_Z.0,
        )
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.feat_h * DOWNSAMPLE, self.feat_w * DOWNSAMPLE)
    }

    pub fn grid_label(&self) -> String {
        let [nx, ny, nz] = self.grid_dims;
        format!("{nx}x{ny}x{nz}")
    }
}

impl fmt::Display for ShapeCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.feat_h, self.feat_w)
    }
}

/// Feature grids of 256x704, 384x1056, 512x1408 and 640x1760 images at
/// 16x downsampling, with 59 depth bins and 64 channels.
pub fn default_ladder() -> Vec<ShapeCell> {
    [(16, 44), (24, 66), (32, 88), (40, 110)]
        .into_iter()
        .map(|(h, w)| ShapeCell::new(h, w, 59, 64, [128, 128, 1]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub kernels: Vec<KernelKind>,
    pub ladder: Vec<ShapeCell>,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
    pub views: usize,
    /// Kernel worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BenchConfigError {
    #[error("repeats must be at least 3 (got {0})")]
    TooFewRepeats(usize),
    #[error("warmup must be at least 1 (got {0})")]
    NoWarmup(usize),
    #[error("ladder is empty")]
    EmptyLadder,
    #[error("no kernels selected")]
    NoKernels,
    #[error("views must be at least 1")]
    NoViews,
    #[error("workers must be at least 1")]
    NoWorkers,
    #[error("ladder cell {0} has a zero dimension")]
    EmptyCell(usize),
    #[error("unknown kernel in config: {0}")]
    UnknownKernel(String),
    #[error(transparent)]
    Syntax(#[from] ConfigError),
}

impl BenchConfig {
    /// Every kernel over the default ladder, 6 views, 5 repeats after 2 warmups.
    pub fn default_with_seed(seed: u64) -> Self {
        Self {
            kernels: KernelKind::ALL.to_vec(),
            ladder: default_ladder(),
            repeats: 5,
            warmup: 2,
            seed,
            views: 6,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<(), BenchConfigError> {
        if self.repeats < 3 {
            return Err(BenchConfigError::TooFewRepeats(self.repeats));
        }
        if self.warmup < 1 {
            return Err(BenchConfigError::NoWarmup(self.warmup));
        }
        if self.ladder.is_empty() {
            return Err(BenchConfigError::EmptyLadder);
        }
        if self.kernels.is_empty() {
            return Err(BenchConfigError::NoKernels);
        }
        if self.views == 0 {
            return Err(BenchConfigError::NoViews);
        }
        if self.workers == Some(0) {
            return Err(BenchConfigError::NoWorkers);
        }
        if let Some(i) = self.ladder.iter().position(|c| {
            c.feat_h == 0 || c.feat_w == 0 || c.depth_bins == 0 || c.channels == 0 || c.grid_dims.contains(&0)
        }) {
            return Err(BenchConfigError::EmptyCell(i));
        }
        Ok(())
    }

    pub fn parse(text: &str, seed: u64) -> Result<Self, BenchConfigError> {
        let doc = Document::parse(text)?;
        let defaults = Self::default_with_seed(seed);
        let top = doc.top_level();
        top.expect_keys(&["kernels", "repeats", "warmup", "views", "workers"])?;
        let kernels = match top.entry("kernels") {
            Some(_) => top
                .get_list::<String>("kernels")?
                .iter()
                .map(|k| k.parse().map_err(|_| BenchConfigError::UnknownKernel(k.clone())))
                .collect::<Result<Vec<KernelKind>, _>>()?,
            None => defaults.kernels,
        };
        let workers = match top.entry("workers") {
            Some(_) => Some(top.get("workers")?),
            None => None,
        };
        let mut ladder = Vec::new();
        for s in doc.sections_named("cell") {
            s.expect_keys(&["feat_h", "feat_w", "depth_bins", "channels", "grid"])?;
            ladder.push(ShapeCell {
                feat_h: s.get("feat_h")?,
                feat_w: s.get("feat_w")?,
                depth_bins: s.get_or("depth_bins", 59)?,
                channels: s.get_or("channels", 64)?,
                grid_dims: match s.entry("grid") {
                    Some(_) => s.get_array("grid")?,
                    None => [128, 128, 1],
                },
            });
        }
        if let Some(other) = doc.sections.iter().skip(1).find(|s| s.name != "cell") {
            return Err(ConfigError::Syntax {
                line: other.line,
                message: format!("unknown section [{}]", other.name),
            }
            .into());
        }
        let config = Self {
            kernels,
            ladder: if ladder.is_empty() { defaults.ladder } else { ladder },
            repeats: top.get_or("repeats", defaults.repeats)?,
            warmup: top.get_or("warmup", defaults.warmup)?,
            seed,
            views: top.get_or("views", defaults.views)?,
            workers,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ladder_shapes() {
        let ladder = default_ladder();
        let images: Vec<_> = ladder.iter().map(ShapeCell::image_size).collect();
        assert_eq!(images, [(256, 704), (384, 1056), (512, 1408), (640, 1760)]);
        assert!(ladder.iter().all(|c| c.frustum().depth_bins() == 59));
        assert_eq!(ladder[0].grid().lower, [-51.2, -51.2, -5.0]);
        BenchConfig::default_with_seed(1).validate().unwrap();
    }

    #[test]
    fn parses_overrides() {
        let text = "kernels = bevpool, bevpoolv2\nrepeats = 4\n\n[cell]\nfeat_h = 2\nfeat_w = 3\ndepth_bins = 4\nchannels = 5\ngrid = 8 8 1\n";
        let c = BenchConfig::parse(text, 9).unwrap();
        assert_eq!(c.kernels, [KernelKind::BevPool, KernelKind::BevPoolV2]);
        assert_eq!(c.repeats, 4);
        assert_eq!(c.warmup, 2);
        assert_eq!(c.seed, 9);
        assert_eq!(c.ladder, [ShapeCell::new(2, 3, 4, 5, [8, 8, 1])]);
        assert_eq!(BenchConfig::parse("", 1).unwrap().ladder, default_ladder());
    }

    #[test]
    fn rejects_bad_configs() {
        assert_eq!(BenchConfig::parse("repeats = 2", 0), Err(BenchConfigError::TooFewRepeats(2)));
        assert_eq!(BenchConfig::parse("warmup = 0", 0), Err(BenchConfigError::NoWarmup(0)));
        assert!(matches!(BenchConfig::parse("kernels = voxelpool", 0), Err(BenchConfigError::UnknownKernel(_))));
        assert!(matches!(BenchConfig::parse("seed = 3", 0), Err(BenchConfigError::Syntax(_))));
        assert!(matches!(BenchConfig::parse("[shape]\n", 0), Err(BenchConfigError::Syntax(_))));
    }
}
