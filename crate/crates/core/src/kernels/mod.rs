//! Pooling kernels. Every kernel computes, for each voxel, the sum over the
//! frustum points inside it of `depth_score * feature_row`.
//!
//! - [`pool_oracle`]: dense triple loop with inline geometry, `f64` accumulation.
//! - [`pool_cumsum`]: sorted product matrix, prefix sum, boundary differences.
//! - [`pool_bevpool`]: materializes the whole frustum feature, then reduces
//!   intervals in parallel.
//! - [`pool_bevpoolv2`]: reduces intervals in parallel, gathering scores and
//!   feature rows through the plan's index trace. No frustum buffer.

mod bevpool;
mod bevpoolv2;
mod cumsum;
mod oracle;
mod working_set;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::KernelError;
use crate::plan::PoolingPlan;
use crate::tensor::{BevFeature, DepthScores, ImageFeatures};

pub use bevpool::{pool_bevpool, pool_bevpool_into};
pub use bevpoolv2::{pool_bevpoolv2, pool_bevpoolv2_into};
pub use cumsum::{pool_cumsum, pool_cumsum_into};
pub use oracle::pool_oracle;
pub use working_set::{estimate_working_set, ShapeSummary, WorkingSetModel};

/// Intervals handled by one task before splitting stops.
pub const MIN_INTERVALS_PER_TASK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelKind {
    Oracle,
    Cumsum,
    BevPool,
    BevPoolV2,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::Oracle,
        KernelKind::Cumsum,
        KernelKind::BevPool,
        KernelKind::BevPoolV2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Oracle => "oracle",
            KernelKind::Cumsum => "cumsum",
            KernelKind::BevPool => "bevpool",
            KernelKind::BevPoolV2 => "bevpoolv2",
        }
    }

    pub fn uses_plan(self) -> bool {
        !matches!(self, KernelKind::Oracle)
    }

    /// Runs a plan-driven kernel into `out`. Panics for [`KernelKind::Oracle`],
    /// which needs geometry instead of a plan.
    pub fn run_planned(
        self,
        depth: &DepthScores,
        feat: &ImageFeatures,
        plan: &PoolingPlan,
        out: &mut BevFeature,
    ) -> Result<(), KernelError> {
        match self {
            KernelKind::Cumsum => pool_cumsum_into(depth, feat, plan, out),
            KernelKind::BevPool => pool_bevpool_into(depth, feat, plan, out),
            KernelKind::BevPoolV2 => pool_bevpoolv2_into(depth, feat, plan, out),
            KernelKind::Oracle => panic!("the oracle kernel does not consume a plan"),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown kernel `{s}` (expected oracle, cumsum, bevpool or bevpoolv2)"))
    }
}

/// Checks that inputs, plan and output buffer agree on every dimension.
pub(crate) fn check_planned_shapes(
    depth: &DepthScores,
    feat: &ImageFeatures,
    plan: &PoolingPlan,
    out: &BevFeature,
) -> Result<(), KernelError> {
    let meta = &plan.meta;
    let planned = [
        meta.num_views as usize,
        meta.depth_bins as usize,
        meta.height as usize,
        meta.width as usize,
    ];
    if depth.shape() != planned {
        return Err(KernelError::PlanMismatch(format!(
            "depth scores {:?}, plan built for {:?}",
            depth.shape(),
            planned
        )));
    }
    let [n, _, h, w] = planned;
    if [feat.num_views, feat.height, feat.width] != [n, h, w] {
        return Err(KernelError::PlanMismatch(format!(
            "features {:?}, plan built for {:?}",
            feat.shape(),
            [n, h, w]
        )));
    }
    if meta.channels != 0 && meta.channels as usize != feat.channels {
        return Err(KernelError::PlanMismatch(format!(
            "features carry {} channels, plan expects {}",
            feat.channels, meta.channels
        )));
    }
    let grid = meta.grid_dims.map(|d| d as usize);
    if out.grid_dims() != grid || out.channels != feat.channels {
        return Err(KernelError::Shape(format!(
            "output {:?}x{}, expected {:?}x{}",
            out.grid_dims(),
            out.channels,
            grid,
            feat.channels
        )));
    }
    Ok(())
}

pub(crate) fn output_for(plan: &PoolingPlan, channels: usize) -> BevFeature {
    BevFeature::zeros(plan.meta.grid_dims.map(|d| d as usize), channels)
}

/// Calls `body(positions, voxel_row)` once per interval, splitting the
/// interval list recursively across the rayon pool.
///
/// Intervals are sorted by voxel and own distinct voxels, so every split point
/// also splits the output into two disjoint slices.
pub(crate) fn for_each_interval<F>(plan: &PoolingPlan, channels: usize, out: &mut [f32], body: &F)
where
    F: Fn(Range<usize>, &mut [f32]) + Sync,
{
    if channels == 0 {
        return;
    }
    split_intervals(plan, 0..plan.num_intervals(), out, 0, channels, body);
}

fn split_intervals<F>(
    plan: &PoolingPlan,
    intervals: Range<usize>,
    out: &mut [f32],
    base_voxel: usize,
    channels: usize,
    body: &F,
) where
    F: Fn(Range<usize>, &mut [f32]) + Sync,
{
    if intervals.len() <= MIN_INTERVALS_PER_TASK {
        for j in intervals {
            let positions = plan.interval(j);
            let v = plan.ranks_bev[positions.start] as usize - base_voxel;
            body(positions, &mut out[v * channels..(v + 1) * channels]);
        }
        return;
    }
    let mid = intervals.start + intervals.len() / 2;
    let split_voxel = plan.ranks_bev[plan.interval_starts[mid] as usize] as usize;
    let (left, right) = out.split_at_mut((split_voxel - base_voxel) * channels);
    rayon::join(
        || split_intervals(plan, intervals.start..mid, left, base_voxel, channels, body),
        || split_intervals(plan, mid..intervals.end, right, split_voxel, channels, body),
    );
}

/// Allocates a zeroed `f32` buffer, surfacing allocation failure as an error.
pub(crate) fn try_zeroed<T: Clone + Default>(len: usize, what: &'static str) -> Result<Vec<T>, KernelError> {
    let bytes = (len as u64).saturating_mul(std::mem::size_of::<T>() as u64);
    let mut buf = Vec::new();
    buf.try_reserve_exact(len)
        .map_err(|_| KernelError::Allocation { what, bytes })?;
    buf.resize(len, T::default());
    Ok(buf)
}
