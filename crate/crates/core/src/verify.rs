//! Randomized equivalence suite: every plan-driven kernel against the dense
//! oracle, plus plan-invariant fuzzing.
//!
//! Case `i` of a run seeded with `s` uses seed `s + i`, so any failing case can
//! be replayed alone with `cases = 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{voxel_index_map, VoxelIndexMap, INVALID_VOXEL};
use crate::kernels::{for_each_interval, pool_oracle, KernelKind};
use crate::plan::{build_plan, deserialize_plan, serialize_plan, validate_plan, PoolingPlan};
use crate::synth::{random_instance, InstanceLimits};
use crate::tensor::{BevFeature, DepthScores, ImageFeatures};

/// Largest relative error tolerated against the oracle on non-zero entries.
pub const RELATIVE_TOLERANCE: f64 = 1e-5;
/// Largest magnitude tolerated where the oracle is exactly zero.
pub const ZERO_TOLERANCE: f64 = 1e-6;

/// A deliberately broken kernel, used to check that the suite catches bugs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Index-traced pooling that skips the last point of every interval.
    IntervalOffByOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorStats {
    /// Max `|k - o| / |o|` over entries where the oracle is non-zero.
    pub max_relative: f64,
    /// Max `|k|` over entries where the oracle is zero.
    pub max_abs_on_zero: f64,
}

impl ErrorStats {
    pub fn within_tolerance(&self) -> bool {
        self.max_relative <= RELATIVE_TOLERANCE && self.max_abs_on_zero <= ZERO_TOLERANCE
    }

    pub fn merge(self, other: ErrorStats) -> ErrorStats {
        ErrorStats {
            max_relative: self.max_relative.max(other.max_relative),
            max_abs_on_zero: self.max_abs_on_zero.max(other.max_abs_on_zero),
        }
    }
}

/// Elementwise error of `actual` against `expected`. Shapes must match.
pub fn compare(actual: &[f32], expected: &[f32]) -> ErrorStats {
    assert_eq!(actual.len(), expected.len(), "compared tensors differ in length");
    let mut stats = ErrorStats::default();
    for (&a, &e) in actual.iter().zip(expected) {
        let (a, e) = (a as f64, e as f64);
        let err = if e == 0.0 {
            stats.max_abs_on_zero = stats.max_abs_on_zero.max(a.abs());
            continue;
        } else {
            (a - e).abs() / e.abs()
        };
        // NaN must not compare as "small".
        stats.max_relative = if err.is_nan() { f64::INFINITY } else { stats.max_relative.max(err) };
    }
    stats
}

/// Positions of voxels the plan never touches whose output is not `+0.0`.
pub fn nonzero_outside_plan(plan: &PoolingPlan, out: &BevFeature) -> Option<usize> {
    let mut touched = vec![false; out.num_voxels()];
    for &v in &plan.ranks_bev {
        touched[v as usize] = true;
    }
    (0..out.num_voxels()).find(|&v| !touched[v] && out.voxel(v).iter().any(|x| x.to_bits() != 0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseFailure {
    pub seed: u64,
    pub check: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub cases: usize,
    pub worst: ErrorStats,
    pub failures: Vec<CaseFailure>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs `cases` seeded cases starting at `seed`.
pub fn run_suite(seed: u64, cases: usize, limits: &InstanceLimits, mutation: Mutation) -> VerifyReport {
    let mut report = VerifyReport {
        cases,
        ..Default::default()
    };
    for i in 0..cases {
        let case_seed = seed.wrapping_add(i as u64);
        match run_case(case_seed, limits, mutation) {
            Ok(stats) => report.worst = report.worst.merge(stats),
            Err(failure) => report.failures.push(failure),
        }
    }
    report
}

fn fail(seed: u64, check: impl Into<String>, detail: impl Into<String>) -> CaseFailure {
    CaseFailure {
        seed,
        check: check.into(),
        detail: detail.into(),
    }
}

/// One case: plan fuzz on a random index map, then the four-way kernel
/// comparison on a random scene.
pub fn run_case(seed: u64, limits: &InstanceLimits, mutation: Mutation) -> Result<ErrorStats, CaseFailure> {
    fuzz_plan(seed)?;

    let inst = random_instance(seed, limits);
    let vmap = voxel_index_map(&inst.rig, &inst.frustum, &inst.grid)
        .map_err(|e| fail(seed, "geometry", e.to_string()))?;
    let plan = build_plan(&vmap).map_err(|e| fail(seed, "build_plan", e.to_string()))?;
    if let Some(v) = validate_plan(&plan).first() {
        return Err(fail(seed, "scene plan invariants", v.to_string()));
    }
    let oracle = pool_oracle(&inst.depth, &inst.feat, &inst.rig, &inst.frustum, &inst.grid)
        .map_err(|e| fail(seed, "oracle", e.to_string()))?;
    if let Some(v) = nonzero_outside_plan(&plan, &oracle) {
        return Err(fail(seed, "oracle", format!("voxel {v} is outside the plan but non-zero")));
    }

    let mut worst = ErrorStats::default();
    for kind in [KernelKind::Cumsum, KernelKind::BevPool, KernelKind::BevPoolV2] {
        let out = if kind == KernelKind::BevPoolV2 && mutation == Mutation::IntervalOffByOne {
            off_by_one_pool(&inst.depth, &inst.feat, &plan)
        } else {
            let mut out = BevFeature::zeros(inst.grid.dims, inst.feat.channels);
            kind.run_planned(&inst.depth, &inst.feat, &plan, &mut out)
                .map_err(|e| fail(seed, kind.name(), e.to_string()))?;
            out
        };
        let stats = compare(&out.data, &oracle.data);
        if !stats.within_tolerance() {
            return Err(fail(
                seed,
                kind.name(),
                format!(
                    "max relative error {:.3e}, max |value| on zero entries {:.3e}",
                    stats.max_relative, stats.max_abs_on_zero
                ),
            ));
        }
        if let Some(v) = nonzero_outside_plan(&plan, &out) {
            return Err(fail(seed, kind.name(), format!("voxel {v} is outside the plan but non-zero")));
        }
        worst = worst.merge(stats);
    }
    Ok(worst)
}

/// Builds a plan from a random index map (with sentinels) and checks its
/// invariants and codec round trip.
fn fuzz_plan(seed: u64) -> Result<(), CaseFailure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let shape = [
        rng.gen_range(1..=3),
        rng.gen_range(1..=6),
        rng.gen_range(1..=6),
        rng.gen_range(1..=6),
    ];
    let grid = [rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=2)];
    let voxels: usize = grid.iter().product();
    let invalid_share: f64 = rng.gen_range(0.0..1.0);
    let indices = (0..shape.iter().product::<usize>())
        .map(|_| {
            if rng.gen_bool(invalid_share) {
                INVALID_VOXEL
            } else {
                rng.gen_range(0..voxels as u32)
            }
        })
        .collect();
    let vmap = VoxelIndexMap::from_raw(shape, grid, indices).map_err(|e| fail(seed, "plan fuzz", e.to_string()))?;
    let plan = build_plan(&vmap).map_err(|e| fail(seed, "plan fuzz", e.to_string()))?;
    if let Some(v) = validate_plan(&plan).first() {
        return Err(fail(seed, "plan fuzz invariants", v.to_string()));
    }
    if plan.num_points() != vmap.num_valid() {
        return Err(fail(seed, "plan fuzz", "kept point count differs from valid entries"));
    }
    match deserialize_plan(&serialize_plan(&plan)) {
        Ok(back) if back == plan => Ok(()),
        Ok(_) => Err(fail(seed, "plan codec", "round trip changed the plan")),
        Err(e) => Err(fail(seed, "plan codec", e.to_string())),
    }
}

fn off_by_one_pool(depth: &DepthScores, feat: &ImageFeatures, plan: &PoolingPlan) -> BevFeature {
    let c = feat.channels;
    let mut out = BevFeature::zeros(plan.meta.grid_dims.map(|d| d as usize), c);
    for_each_interval(plan, c, &mut out.data, &|positions, acc| {
        for i in positions.start..positions.end - 1 {
            let s = depth.data[plan.ranks_depth[i] as usize];
            let f = plan.ranks_feat[i] as usize * c;
            for (a, &x) in acc.iter_mut().zip(&feat.data[f..f + c]) {
                *a += s * x;
            }
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compare_flags_nan_and_zero_leaks() {
        let s = compare(&[1.0, f32::NAN], &[1.0, 2.0]);
        assert!(!s.within_tolerance());
        let s = compare(&[1.0, 1e-3], &[1.0, 0.0]);
        assert_eq!(s.max_abs_on_zero, 1e-3f32 as f64);
        assert!(!s.within_tolerance());
        assert!(compare(&[1.0, 0.0], &[1.0, 0.0]).within_tolerance());
    }

    #[test]
    fn small_suite_passes() {
        let report = run_suite(7, 10, &InstanceLimits::default(), Mutation::None);
        assert!(report.passed(), "{:?}", report.failures);
        assert!(report.worst.max_relative <= RELATIVE_TOLERANCE);
    }

    #[test]
    fn mutation_is_caught() {
        let report = run_suite(7, 10, &InstanceLimits::default(), Mutation::IntervalOffByOne);
        assert!(!report.passed());
        assert!(report.failures.iter().all(|f| f.check == "bevpoolv2"));
    }
}
