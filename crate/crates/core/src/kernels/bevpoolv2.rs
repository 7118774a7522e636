use crate::error::KernelError;
use crate::kernels::{check_planned_shapes, for_each_interval, output_for};
use crate::plan::PoolingPlan;
use crate::tensor::{BevFeature, DepthScores, ImageFeatures};

pub fn pool_bevpoolv2(
    depth: &DepthScores,
    feat: &ImageFeatures,
    plan: &PoolingPlan,
) -> Result<BevFeature, KernelError> {
    let mut out = output_for(plan, feat.channels);
    pool_bevpoolv2_into(depth, feat, plan, &mut out)?;
    Ok(out)
}

/// Index-traced pooling into a caller-owned buffer.
///
/// Each interval gathers its depth scores and feature rows through
/// `ranks_depth` / `ranks_feat` and accumulates them, in plan order, straight
/// into its voxel row. Nothing is allocated on the heap.
pub fn pool_bevpoolv2_into(
    depth: &DepthScores,
    feat: &ImageFeatures,
    plan: &PoolingPlan,
    out: &mut BevFeature,
) -> Result<(), KernelError> {
    check_planned_shapes(depth, feat, plan, out)?;
    out.data.fill(0.0);
    let channels = feat.channels;
    let scores = &depth.data;
    let rows = &feat.data;
    for_each_interval(plan, channels, &mut out.data, &|positions, acc| {
        for i in positions {
            let s = scores[plan.ranks_depth[i] as usize];
            let f = plan.ranks_feat[i] as usize * channels;
            for (a, &x) in acc.iter_mut().zip(&rows[f..f + channels]) {
                *a += s * x;
            }
        }
    });
    Ok(())
}
