//! The precomputed pooling plan.
//!
//! A plan is everything about pooling that depends only on geometry: which
//! frustum points survive, which voxel each one lands in, and the runs of
//! points that share a voxel. Kernels that take a plan never look at camera
//! parameters again.

mod codec;

use std::fmt;

use rayon::prelude::*;

use crate::digest::Fnv1a64;
use crate::error::PlanError;
use crate::geometry::{VoxelIndexMap, INVALID_VOXEL};

pub use codec::{deserialize_plan, serialize_plan, FORMAT_VERSION, HEADER_BYTES, MAGIC};

/// Largest point count addressable by the 32-bit plan arrays.
pub const MAX_POINTS: usize = i32::MAX as usize;

/// Ordering of the flat voxel index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlatOrder {
    /// `(iz * ny + iy) * nx + ix`.
    ZYX,
}

impl FlatOrder {
    pub fn tag(self) -> u8 {
        match self {
            FlatOrder::ZYX => 0,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(FlatOrder::ZYX),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PlanMeta {
    pub num_views: u32,
    pub depth_bins: u32,
    pub height: u32,
    pub width: u32,
    /// Expected feature channels; 0 accepts any.
    pub channels: u32,
    pub grid_dims: [u32; 3],
    pub order: FlatOrder,
    pub digest: u64,
}

impl PlanMeta {
    pub fn num_frustum_points(&self) -> usize {
        self.num_views as usize * self.depth_bins as usize * self.height as usize * self.width as usize
    }

    pub fn num_pixels(&self) -> usize {
        self.num_views as usize * self.height as usize * self.width as usize
    }

    pub fn num_voxels(&self) -> usize {
        self.grid_dims.iter().map(|&d| d as usize).product()
    }
}

/// Sorted frustum-point trace with interval boundaries.
///
/// Position `i` says: multiply depth score `ranks_depth[i]` with feature row
/// `ranks_feat[i]` and add it to voxel `ranks_bev[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PoolingPlan {
    pub ranks_depth: Vec<u32>,
    pub ranks_feat: Vec<u32>,
    pub ranks_bev: Vec<u32>,
    pub interval_starts: Vec<u32>,
    pub interval_lengths: Vec<u32>,
    pub meta: PlanMeta,
}

impl PoolingPlan {
    /// Number of kept frustum points (P).
    pub fn num_points(&self) -> usize {
        self.ranks_bev.len()
    }

    /// Number of occupied voxels (M).
    pub fn num_intervals(&self) -> usize {
        self.interval_starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks_bev.is_empty()
    }

    /// Positions covered by interval `j`.
    #[inline]
    pub fn interval(&self, j: usize) -> std::ops::Range<usize> {
        let start = self.interval_starts[j] as usize;
        start..start + self.interval_lengths[j] as usize
    }

    /// Pins the channel count kernels must be called with.
    pub fn with_channels(mut self, channels: u32) -> Self {
        self.meta.channels = channels;
        self
    }

    /// FNV-1a over the five index arrays, in declaration order.
    pub fn content_digest(&self) -> u64 {
        let mut h = Fnv1a64::new();
        h.write_u32s(&self.ranks_depth);
        h.write_u32s(&self.ranks_feat);
        h.write_u32s(&self.ranks_bev);
        h.write_u32s(&self.interval_starts);
        h.write_u32s(&self.interval_lengths);
        h.finish()
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_plan(self)
    }
}

/// Filters out-of-grid points, sorts the rest by `(voxel, frustum index)` and
/// delimits the runs of equal voxel.
pub fn build_plan(vmap: &VoxelIndexMap) -> Result<PoolingPlan, PlanError> {
    let [n, d, h, w] = vmap.shape();
    let total = n * d * h * w;
    if total > MAX_POINTS {
        return Err(PlanError::TooManyPoints(total));
    }
    for &dim in &vmap.grid_dims {
        if dim > u32::MAX as usize {
            return Err(PlanError::Invalid(format!("grid dim {dim} exceeds 32 bits")));
        }
    }

    let mut keyed: Vec<(u32, u32)> = vmap
        .indices()
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v != INVALID_VOXEL)
        .map(|(i, &v)| (v, i as u32))
        .collect();
    // Frustum indices are unique, so an unstable sort on the pair is the
    // canonical stable order.
    keyed.par_sort_unstable();

    let hw = h * w;
    let dhw = d * hw;
    let mut ranks_depth = Vec::with_capacity(keyed.len());
    let mut ranks_feat = Vec::with_capacity(keyed.len());
    let mut ranks_bev = Vec::with_capacity(keyed.len());
    let mut interval_starts = Vec::new();
    let mut interval_lengths = Vec::new();
    for (pos, &(voxel, frustum)) in keyed.iter().enumerate() {
        let f = frustum as usize;
        let view = f / dhw;
        ranks_depth.push(frustum);
        ranks_feat.push((view * hw + f % hw) as u32);
        if ranks_bev.last() != Some(&voxel) {
            interval_starts.push(pos as u32);
            interval_lengths.push(0);
        }
        *interval_lengths.last_mut().expect("run opened above") += 1;
        ranks_bev.push(voxel);
    }

    let mut plan = PoolingPlan {
        ranks_depth,
        ranks_feat,
        ranks_bev,
        interval_starts,
        interval_lengths,
        meta: PlanMeta {
            num_views: n as u32,
            depth_bins: d as u32,
            height: h as u32,
            width: w as u32,
            channels: 0,
            grid_dims: vmap.grid_dims.map(|v| v as u32),
            order: FlatOrder::ZYX,
            digest: 0,
        },
    };
    plan.meta.digest = plan.content_digest();
    Ok(plan)
}

/// Which plan invariant a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invariant {
    ArrayLengths,
    BevNotSorted,
    Partition,
    EmptyInterval,
    MixedInterval,
    AdjacentIntervalsShareVoxel,
    DepthOutOfRange,
    FeatOutOfRange,
    BevOutOfRange,
    FeatDepthMismatch,
    SizeOverflow,
    StaleDigest,
}

impl Invariant {
    fn describe(self) -> &'static str {
        match self {
            Invariant::ArrayLengths => "array lengths disagree",
            Invariant::BevNotSorted => "ranks_bev not sorted",
            Invariant::Partition => "intervals do not partition points",
            Invariant::EmptyInterval => "empty interval",
            Invariant::MixedInterval => "interval spans several voxels",
            Invariant::AdjacentIntervalsShareVoxel => "adjacent intervals share a voxel",
            Invariant::DepthOutOfRange => "ranks_depth out of range",
            Invariant::FeatOutOfRange => "ranks_feat out of range",
            Invariant::BevOutOfRange => "ranks_bev out of range",
            Invariant::FeatDepthMismatch => "ranks_feat disagrees with ranks_depth",
            Invariant::SizeOverflow => "frustum too large for 32-bit indices",
            Invariant::StaleDigest => "digest does not match content",
        }
    }
}

/// A broken invariant and the first position where it shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub invariant: Invariant,
    pub position: usize,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @{}", self.invariant.describe(), self.position)
    }
}

/// Checks every plan invariant; an empty result means the plan is valid.
pub fn validate_plan(plan: &PoolingPlan) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut report = |invariant, position| out.push(Violation { invariant, position });

    let p = plan.ranks_bev.len();
    let m = plan.interval_starts.len();
    if plan.ranks_depth.len() != p || plan.ranks_feat.len() != p {
        report(Invariant::ArrayLengths, p.min(plan.ranks_depth.len()).min(plan.ranks_feat.len()));
        return out;
    }
    if plan.interval_lengths.len() != m {
        report(Invariant::ArrayLengths, m.min(plan.interval_lengths.len()));
        return out;
    }

    let meta = &plan.meta;
    let total = meta.num_frustum_points();
    if total > MAX_POINTS {
        report(Invariant::SizeOverflow, 0);
    }
    let pixels = meta.num_pixels();
    let voxels = meta.num_voxels();
    let hw = meta.height as usize * meta.width as usize;
    let dhw = meta.depth_bins as usize * hw;

    if let Some(i) = (1..p).find(|&i| plan.ranks_bev[i] < plan.ranks_bev[i - 1]) {
        report(Invariant::BevNotSorted, i);
    }
    if let Some(i) = plan.ranks_depth.iter().position(|&r| r as usize >= total) {
        report(Invariant::DepthOutOfRange, i);
    }
    if let Some(i) = plan.ranks_feat.iter().position(|&r| r as usize >= pixels) {
        report(Invariant::FeatOutOfRange, i);
    }
    if let Some(i) = plan.ranks_bev.iter().position(|&r| r as usize >= voxels) {
        report(Invariant::BevOutOfRange, i);
    }
    if dhw > 0 {
        let mismatch = plan.ranks_depth.iter().zip(&plan.ranks_feat).position(|(&rd, &rf)| {
            let rd = rd as usize;
            (rd / dhw) * hw + rd % hw != rf as usize
        });
        if let Some(i) = mismatch {
            report(Invariant::FeatDepthMismatch, i);
        }
    }

    // Partition: starts chain through lengths and cover [0, P) exactly.
    let mut next = 0usize;
    let mut partition_ok = true;
    for j in 0..m {
        if plan.interval_starts[j] as usize != next {
            report(Invariant::Partition, j);
            partition_ok = false;
            break;
        }
        if plan.interval_lengths[j] == 0 {
            report(Invariant::EmptyInterval, j);
        }
        next += plan.interval_lengths[j] as usize;
    }
    if partition_ok && next != p {
        report(Invariant::Partition, m);
        partition_ok = false;
    }

    if partition_ok {
        for j in 0..m {
            let range = plan.interval(j);
            let voxel = plan.ranks_bev[range.start.min(p.saturating_sub(1))];
            if let Some(off) = plan.ranks_bev[range.clone()].iter().position(|&v| v != voxel) {
                report(Invariant::MixedInterval, range.start + off);
                break;
            }
        }
        if let Some(j) = (1..m).find(|&j| {
            plan.ranks_bev[plan.interval_starts[j] as usize]
                == plan.ranks_bev[plan.interval_starts[j - 1] as usize]
        }) {
            report(Invariant::AdjacentIntervalsShareVoxel, j);
        }
    }

    if plan.content_digest() != meta.digest {
        report(Invariant::StaleDigest, 0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: u32 = INVALID_VOXEL;

    fn vmap(indices: Vec<u32>, voxels: usize) -> VoxelIndexMap {
        let len = indices.len();
        VoxelIndexMap::from_raw([1, 1, 1, len], [voxels, 1, 1], indices).unwrap()
    }

    fn messages(plan: &PoolingPlan) -> Vec<String> {
        validate_plan(plan).iter().map(|v| v.to_string()).collect()
    }

    #[test]
    fn filter_sort_and_delimit() {
        let plan = build_plan(&vmap(vec![X, 3, 1, 3], 4)).unwrap();
        assert_eq!(plan.ranks_bev, [1, 3, 3]);
        assert_eq!(plan.ranks_depth, [2, 1, 3]);
        assert_eq!(plan.ranks_feat, [2, 1, 3]);
        assert_eq!(plan.interval_starts, [0, 1]);
        assert_eq!(plan.interval_lengths, [1, 2]);
        assert!(validate_plan(&plan).is_empty());
    }

    #[test]
    fn all_invalid_is_empty_plan() {
        let plan = build_plan(&vmap(vec![X; 5], 4)).unwrap();
        assert!(plan.is_empty());
        assert_eq!(plan.num_intervals(), 0);
        assert!(validate_plan(&plan).is_empty());
    }

    #[test]
    fn single_voxel_single_run() {
        let plan = build_plan(&vmap(vec![2; 6], 4)).unwrap();
        assert_eq!(plan.interval_lengths, [6]);
        assert_eq!(plan.interval_starts, [0]);
        assert!(plan.ranks_bev.iter().all(|&v| v == 2));
    }

    #[test]
    fn feature_rank_drops_depth_axis() {
        // N=2, D=3, H=1, W=2: frustum index ((n*3+d)*1+0)*2+w.
        let mut idx = vec![X; 12];
        idx[5] = 0; // n=0, d=2, w=1
        idx[6] = 0; // n=1, d=0, w=0
        let v = VoxelIndexMap::from_raw([2, 3, 1, 2], [1, 1, 1], idx).unwrap();
        let plan = build_plan(&v).unwrap();
        assert_eq!(plan.ranks_depth, [5, 6]);
        assert_eq!(plan.ranks_feat, [1, 2]);
    }

    #[test]
    fn reports_unsorted_bev() {
        let mut plan = build_plan(&vmap(vec![3, 1], 4)).unwrap();
        plan.ranks_bev = vec![3, 1];
        plan.meta.digest = plan.content_digest();
        let msgs = messages(&plan);
        assert!(msgs.contains(&"ranks_bev not sorted @1".to_string()), "{msgs:?}");
    }

    #[test]
    fn reports_short_partition() {
        let mut plan = build_plan(&vmap(vec![1, 1, 2, 2], 4)).unwrap();
        plan.interval_lengths[1] -= 1;
        plan.meta.digest = plan.content_digest();
        let v = validate_plan(&plan);
        assert!(v.iter().any(|v| v.invariant == Invariant::Partition), "{v:?}");
    }

    #[test]
    fn reports_stale_digest_and_mixed_rank() {
        let mut plan = build_plan(&vmap(vec![1, 1, 2, 2], 4)).unwrap();
        plan.ranks_feat[0] = 3;
        let v = validate_plan(&plan);
        assert!(v.iter().any(|v| v.invariant == Invariant::FeatDepthMismatch));
        assert!(v.iter().any(|v| v.invariant == Invariant::StaleDigest));
    }

    #[test]
    fn reports_split_run() {
        let mut plan = build_plan(&vmap(vec![1, 1, 2], 4)).unwrap();
        plan.interval_starts = vec![0, 1, 2];
        plan.interval_lengths = vec![1, 1, 1];
        plan.meta.digest = plan.content_digest();
        let v = validate_plan(&plan);
        assert_eq!(v, [Violation { invariant: Invariant::AdjacentIntervalsShareVoxel, position: 1 }]);
    }
}
