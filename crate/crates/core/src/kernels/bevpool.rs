use rayon::prelude::*;

use crate::error::KernelError;
use crate::kernels::{check_planned_shapes, for_each_interval, output_for};
use crate::plan::PoolingPlan;
use crate::tensor::{BevFeature, DepthScores, ImageFeatures};

pub fn pool_bevpool(
    depth: &DepthScores,
    feat: &ImageFeatures,
    plan: &PoolingPlan,
) -> Result<BevFeature, KernelError> {
    let mut out = output_for(plan, feat.channels);
    pool_bevpool_into(depth, feat, plan, &mut out)?;
    Ok(out)
}

/// Frustum-materializing pooling.
///
/// Builds the full `(N, D, H, W, C)` frustum feature first, then reduces each
/// interval over its materialized rows. The frustum buffer is the only
/// auxiliary allocation and is `N*D*H*W*C*4` bytes even when the plan is empty.
pub fn pool_bevpool_into(
    depth: &DepthScores,
    feat: &ImageFeatures,
    plan: &PoolingPlan,
    out: &mut BevFeature,
) -> Result<(), KernelError> {
    check_planned_shapes(depth, feat, plan, out)?;
    let channels = feat.channels;
    let len = depth
        .data
        .len()
        .checked_mul(channels)
        .ok_or(KernelError::Overflow)?;
    let mut frustum: Vec<f32> = Vec::new();
    frustum
        .try_reserve_exact(len)
        .map_err(|_| KernelError::Allocation {
            what: "frustum feature",
            bytes: (len as u64).saturating_mul(4),
        })?;

    // Written exactly once, straight into the reserved capacity.
    let hw = depth.height * depth.width;
    let dhw = depth.depth_bins * hw;
    if len > 0 {
        // One task per (view, depth bin) slab.
        frustum.spare_capacity_mut()[..len]
            .par_chunks_mut(hw * channels)
            .enumerate()
            .for_each(|(slab, rows)| {
                let view = slab / depth.depth_bins;
                let scores = &depth.data[slab * hw..(slab + 1) * hw];
                let feats = &feat.data[view * hw * channels..(view + 1) * hw * channels];
                for ((dst, src), &s) in rows
                    .chunks_exact_mut(channels)
                    .zip(feats.chunks_exact(channels))
                    .zip(scores)
                {
                    for (d, &x) in dst.iter_mut().zip(src) {
                        d.write(s * x);
                    }
                }
            });
    }
    // SAFETY: `len = N*D*H*W*C` and the slabs above cover it exactly: there are
    // N*D chunks of H*W*C elements, each filled row by row.
    unsafe { frustum.set_len(len) };
    debug_assert_eq!(frustum.len(), depth.num_views * dhw * channels);

    out.data.fill(0.0);
    let frustum = &frustum;
    for_each_interval(plan, channels, &mut out.data, &|positions, acc| {
        for i in positions {
            let r = plan.ranks_depth[i] as usize * channels;
            for (a, &x) in acc.iter_mut().zip(&frustum[r..r + channels]) {
                *a += x;
            }
        }
    });
    Ok(())
}
