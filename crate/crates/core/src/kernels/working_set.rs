//! Closed-form byte counts per kernel.

use crate::error::KernelError;
use crate::kernels::KernelKind;
use crate::plan::{PoolingPlan, HEADER_BYTES};

const F32: u64 = 4;
const F64: u64 = 8;

/// Every shape the byte model depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShapeSummary {
    pub num_views: u64,
    pub depth_bins: u64,
    pub height: u64,
    pub width: u64,
    pub channels: u64,
    /// Kept frustum points (P).
    pub points: u64,
    /// Occupied voxels (M).
    pub intervals: u64,
    pub grid_dims: [u64; 3],
}

impl ShapeSummary {
    pub fn from_plan(plan: &PoolingPlan, channels: usize) -> Self {
        let m = &plan.meta;
        Self {
            num_views: m.num_views.into(),
            depth_bins: m.depth_bins.into(),
            height: m.height.into(),
            width: m.width.into(),
            channels: channels as u64,
            points: plan.num_points() as u64,
            intervals: plan.num_intervals() as u64,
            grid_dims: m.grid_dims.map(u64::from),
        }
    }
}

/// Bytes a kernel touches, split by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct WorkingSetModel {
    pub inputs: u64,
    pub plan: u64,
    /// Kernel-private allocations.
    pub auxiliary: u64,
    pub output: u64,
}

impl WorkingSetModel {
    pub fn plan_plus_auxiliary(&self) -> u64 {
        self.plan + self.auxiliary
    }

    pub fn total(&self) -> u64 {
        self.inputs + self.plan + self.auxiliary + self.output
    }
}

fn mul(values: &[u64]) -> Result<u64, KernelError> {
    values
        .iter()
        .try_fold(1u64, |acc, &v| acc.checked_mul(v))
        .filter(|&v| v <= i64::MAX as u64)
        .ok_or(KernelError::Overflow)
}

fn add(values: &[u64]) -> Result<u64, KernelError> {
    values
        .iter()
        .try_fold(0u64, |acc, &v| acc.checked_add(v))
        .filter(|&v| v <= i64::MAX as u64)
        .ok_or(KernelError::Overflow)
}

pub fn estimate_working_set(kind: KernelKind, s: &ShapeSummary) -> Result<WorkingSetModel, KernelError> {
    let ShapeSummary {
        num_views: n,
        depth_bins: d,
        height: h,
        width: w,
        channels: c,
        points: p,
        intervals: m,
        grid_dims: [nx, ny, nz],
    } = *s;
    let inputs = add(&[mul(&[n, d, h, w, F32])?, mul(&[n, h, w, c, F32])?])?;
    let output = mul(&[nx, ny, nz, c, F32])?;
    let plan_bytes = add(&[mul(&[p, 12])?, mul(&[m, 8])?, HEADER_BYTES as u64])?;
    let (plan, auxiliary) = match kind {
        KernelKind::Oracle => (0, mul(&[nx, ny, nz, c, F64])?),
        // Product matrix in f32 plus the f64 prefix sums.
        KernelKind::Cumsum => (plan_bytes, add(&[mul(&[p, c, F32])?, mul(&[p, c, F64])?])?),
        KernelKind::BevPool => (plan_bytes, mul(&[n, d, h, w, c, F32])?),
        KernelKind::BevPoolV2 => (plan_bytes, 0),
    };
    Ok(WorkingSetModel {
        inputs,
        plan,
        auxiliary,
        output,
    })
}
