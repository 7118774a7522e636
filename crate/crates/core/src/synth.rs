//! Seeded synthetic rigs, scenes and input tensors.
//!
//! All generators use ChaCha8 seeded from a `u64`, so equal seeds give
//! bit-identical output on every platform.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{CameraRig, CameraView, FrustumSpec, Mat3, VoxelGridSpec};
use crate::tensor::{DepthScores, ImageFeatures};

/// Focal length relative to image width, roughly a surround-view camera.
const FOCAL_PER_WIDTH: f64 = 0.79;
const MOUNT_HEIGHT: f64 = 1.5;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Camera-to-ego rotation for a camera yawed by `yaw` about ego z and pitched
/// down by `pitch`. Camera axes are x right, y down, z forward.
pub fn look_rotation(yaw: f64, pitch: f64) -> Mat3 {
    let forward = [pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), -pitch.sin()];
    let right = [yaw.sin(), -yaw.cos(), 0.0];
    let down = [
        forward[1] * right[2] - forward[2] * right[1],
        forward[2] * right[0] - forward[0] * right[2],
        forward[0] * right[1] - forward[1] * right[0],
    ];
    // Columns are the camera axes expressed in the ego frame.
    [
        [right[0], down[0], forward[0]],
        [right[1], down[1], forward[1]],
        [right[2], down[2], forward[2]],
    ]
}

/// `views` cameras spread evenly around the ego vehicle, slightly tilted
/// down, with intrinsics scaled to `image_size = (height, width)` pixels.
pub fn surround_rig(seed: u64, views: usize, image_size: (usize, usize)) -> CameraRig {
    let mut rng = rng(seed);
    let (img_h, img_w) = (image_size.0 as f64, image_size.1 as f64);
    let views = (0..views)
        .map(|i| {
            let yaw = 2.0 * PI * i as f64 / views as f64 + rng.gen_range(-0.05..0.05);
            let pitch = rng.gen_range(0.0..0.1);
            let radius = rng.gen_range(0.8..1.2);
            let focal = FOCAL_PER_WIDTH * img_w * rng.gen_range(0.95..1.05);
            CameraView {
                fx: focal,
                fy: focal,
                cx: img_w / 2.0 * rng.gen_range(0.98..1.02),
                cy: img_h / 2.0 * rng.gen_range(0.98..1.02),
                rot: look_rotation(yaw, pitch),
                trans: [
                    radius * yaw.cos(),
                    radius * yaw.sin(),
                    MOUNT_HEIGHT + rng.gen_range(-0.1..0.1),
                ],
            }
        })
        .collect();
    CameraRig::new(views).expect("generated views are valid")
}

/// Depth bins `1..60` m in 1 m steps: 59 bins.
pub fn default_frustum(feat_h: usize, feat_w: usize) -> FrustumSpec {
    FrustumSpec {
        feat_h,
        feat_w,
        downsample: 16,
        depth_start: 1.0,
        depth_end: 60.0,
        depth_step: 1.0,
    }
}

/// 128 x 128 x 1 grid of 0.8 m cells over +-51.2 m, z in `[-5, 3)`.
pub fn default_grid() -> VoxelGridSpec {
    VoxelGridSpec::ego_centered([0.8, 0.8, 8.0], [128, 128, 1], -5.0)
}

/// One fuzzed pooling problem: geometry plus seeded inputs.
#[derive(Debug, Clone)]
pub struct Instance {
    pub rig: CameraRig,
    pub frustum: FrustumSpec,
    pub grid: VoxelGridSpec,
    pub depth: DepthScores,
    pub feat: ImageFeatures,
}

/// Size limits for [`random_instance`].
#[derive(Debug, Clone, Copy)]
pub struct InstanceLimits {
    pub max_views: usize,
    pub max_depth_bins: usize,
    pub max_feat: usize,
    pub max_channels: usize,
    pub max_grid_xy: usize,
    pub max_grid_z: usize,
}

impl Default for InstanceLimits {
    fn default() -> Self {
        Self {
            max_views: 3,
            max_depth_bins: 8,
            max_feat: 16,
            max_channels: 8,
            max_grid_xy: 32,
            max_grid_z: 2,
        }
    }
}

/// Random rig, frustum and grid sized so that a good share of points lands in
/// the grid and a good share does not.
pub fn random_geometry(seed: u64, limits: &InstanceLimits) -> (CameraRig, FrustumSpec, VoxelGridSpec) {
    let mut rng = rng(seed);
    let views = rng.gen_range(1..=limits.max_views);
    let depth_bins = rng.gen_range(1..=limits.max_depth_bins);
    let feat_h = rng.gen_range(1..=limits.max_feat);
    let feat_w = rng.gen_range(1..=limits.max_feat);
    let downsample = rng.gen_range(1..=8);
    let depth_start: f64 = rng.gen_range(0.5..2.0);
    let depth_step: f64 = rng.gen_range(0.25..1.5);
    let frustum = FrustumSpec {
        feat_h,
        feat_w,
        downsample,
        depth_start,
        depth_end: depth_start + depth_bins as f64 * depth_step,
        depth_step,
    };
    let rig = surround_rig(rng.gen(), views, frustum.image_size());

    let reach = frustum.depth_end + 1.2;
    let nx = rng.gen_range(1..=limits.max_grid_xy);
    let ny = rng.gen_range(1..=limits.max_grid_xy);
    let nz = rng.gen_range(1..=limits.max_grid_z);
    let extent = 2.0 * reach * rng.gen_range(0.6..1.1);
    let grid = VoxelGridSpec::ego_centered(
        [extent / nx as f64, extent / ny as f64, 5.0 / nz as f64],
        [nx, ny, nz],
        -2.0,
    );
    (rig, frustum, grid)
}

pub fn random_instance(seed: u64, limits: &InstanceLimits) -> Instance {
    let (rig, frustum, grid) = random_geometry(seed, limits);
    let mut rng = rng(seed ^ 0x5eed_1a7e_0000_0001);
    let channels = rng.gen_range(1..=limits.max_channels);
    let (depth, feat) = random_inputs(
        rng.gen(),
        [rig.num_views(), frustum.depth_bins(), frustum.feat_h, frustum.feat_w],
        channels,
    );
    Instance {
        rig,
        frustum,
        grid,
        depth,
        feat,
    }
}

/// Uniform `[0, 1)` depth scores and features for shape `(N, D, H, W)` with
/// `channels` feature channels.
pub fn random_inputs(seed: u64, shape: [usize; 4], channels: usize) -> (DepthScores, ImageFeatures) {
    let mut rng = rng(seed);
    let [n, d, h, w] = shape;
    let depth = (0..n * d * h * w).map(|_| rng.gen::<f32>()).collect();
    let feat = (0..n * h * w * channels).map(|_| rng.gen::<f32>()).collect();
    (
        DepthScores::new(shape, depth).expect("length matches shape"),
        ImageFeatures::new([n, h, w, channels], feat).expect("length matches shape"),
    )
}
