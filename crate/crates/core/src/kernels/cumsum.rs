use rayon::prelude::*;

use crate::error::KernelError;
use crate::kernels::{check_planned_shapes, output_for, try_zeroed};
use crate::plan::PoolingPlan;
use crate::tensor::{BevFeature, DepthScores, ImageFeatures};

pub fn pool_cumsum(
    depth: &DepthScores,
    feat: &ImageFeatures,
    plan: &PoolingPlan,
) -> Result<BevFeature, KernelError> {
    let mut out = output_for(plan, feat.channels);
    pool_cumsum_into(depth, feat, plan, &mut out)?;
    Ok(out)
}

/// Prefix-sum pooling.
///
/// Materializes the `P x C` product matrix in plan order, takes an inclusive
/// prefix sum down the point axis, and recovers each voxel as the difference
/// of the prefix at its interval end and at the previous interval end.
///
/// The prefix buffer is `f64`: in `f32` the difference of two large prefixes
/// loses most of a small interval's value.
pub fn pool_cumsum_into(
    depth: &DepthScores,
    feat: &ImageFeatures,
    plan: &PoolingPlan,
    out: &mut BevFeature,
) -> Result<(), KernelError> {
    check_planned_shapes(depth, feat, plan, out)?;
    out.data.fill(0.0);
    let channels = feat.channels;
    let points = plan.num_points();
    if channels == 0 || points == 0 {
        return Ok(());
    }
    let len = points.checked_mul(channels).ok_or(KernelError::Overflow)?;

    let mut product: Vec<f32> = try_zeroed(len, "product matrix")?;
    product
        .par_chunks_mut(channels)
        .enumerate()
        .for_each(|(i, row)| {
            let s = depth.data[plan.ranks_depth[i] as usize];
            let f = plan.ranks_feat[i] as usize * channels;
            for (p, &x) in row.iter_mut().zip(&feat.data[f..f + channels]) {
                *p = s * x;
            }
        });

    let mut prefix: Vec<f64> = try_zeroed(len, "prefix sums")?;
    let mut running = vec![0.0f64; channels];
    for (dst, src) in prefix.chunks_exact_mut(channels).zip(product.chunks_exact(channels)) {
        for ((d, r), &x) in dst.iter_mut().zip(running.iter_mut()).zip(src) {
            *r += x as f64;
            *d = *r;
        }
    }

    for j in 0..plan.num_intervals() {
        let positions = plan.interval(j);
        let last = (positions.end - 1) * channels;
        let voxel = plan.ranks_bev[positions.start] as usize * channels;
        let row = &mut out.data[voxel..voxel + channels];
        if positions.start == 0 {
            for (o, &hi) in row.iter_mut().zip(&prefix[last..last + channels]) {
                *o = hi as f32;
            }
        } else {
            let before = (positions.start - 1) * channels;
            for ((o, &hi), &lo) in row
                .iter_mut()
                .zip(&prefix[last..last + channels])
                .zip(&prefix[before..before + channels])
            {
                *o = (hi - lo) as f32;
            }
        }
    }
    Ok(())
}
