use crate::error::KernelError;
use crate::geometry::{CameraRig, FrustumSpec, VoxelGridSpec, INVALID_VOXEL};
use crate::tensor::{BevFeature, DepthScores, ImageFeatures};

/// Dense reference pooling.
///
/// Walks every `(view, depth bin, row, column)`, recomputes the point's voxel
/// from the camera and grid directly, and accumulates in `f64`. No plan, no
/// sorting, no intervals: this is the ground truth the other kernels are
/// checked against.
pub fn pool_oracle(
    depth: &DepthScores,
    feat: &ImageFeatures,
    rig: &CameraRig,
    fspec: &FrustumSpec,
    grid: &VoxelGridSpec,
) -> Result<BevFeature, KernelError> {
    fspec
        .validate()
        .map_err(|e| KernelError::Shape(e.to_string()))?;
    grid.validate()
        .map_err(|e| KernelError::Shape(e.to_string()))?;
    let n = rig.num_views();
    let d = fspec.depth_bins();
    let (h, w) = (fspec.feat_h, fspec.feat_w);
    if depth.shape() != [n, d, h, w] {
        return Err(KernelError::Shape(format!(
            "depth scores {:?}, geometry implies {:?}",
            depth.shape(),
            [n, d, h, w]
        )));
    }
    if [feat.num_views, feat.height, feat.width] != [n, h, w] {
        return Err(KernelError::Shape(format!(
            "features {:?}, geometry implies {:?}",
            feat.shape(),
            [n, h, w]
        )));
    }

    let c = feat.channels;
    let mut acc = vec![0.0f64; grid.num_voxels() * c];
    for (view_idx, view) in rig.views().iter().enumerate() {
        for bin in 0..d {
            let z = fspec.depth_of_bin(bin);
            for row in 0..h {
                let v = fspec.cell_center(row);
                for col in 0..w {
                    let u = fspec.cell_center(col);
                    let voxel = grid.locate(view.unproject(u, v, z));
                    if voxel == INVALID_VOXEL {
                        continue;
                    }
                    let score = depth.data[((view_idx * d + bin) * h + row) * w + col] as f64;
                    let pixel = (view_idx * h + row) * w + col;
                    let dst = &mut acc[voxel as usize * c..(voxel as usize + 1) * c];
                    for (a, &x) in dst.iter_mut().zip(feat.row(pixel)) {
                        *a += score * x as f64;
                    }
                }
            }
        }
    }

    let mut out = BevFeature::zeros(grid.dims, c);
    for (o, a) in out.data.iter_mut().zip(acc) {
        *o = a as f32;
    }
    Ok(out)
}
