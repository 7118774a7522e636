//! Timed kernel runs.
//!
//! A run builds the rig, plan and inputs once, outside the timed region, then
//! performs `warmup` untimed calls and `repeats` timed calls into a
//! preallocated output. The peak heap growth seen during each timed call is the
//! kernel's measured auxiliary allocation.

use std::time::Instant;

use bevpool_core::geometry::voxel_index_map;
use bevpool_core::kernels::{estimate_working_set, pool_oracle, KernelKind, ShapeSummary, WorkingSetModel};
use bevpool_core::plan::build_plan;
use bevpool_core::synth::{random_inputs, surround_rig};
use bevpool_core::tensor::{input_digest, BevFeature};

use crate::alloc::{self, PeakProbe};
use crate::config::{BenchConfig, ShapeCell};

/// Brackets the timed region. Implementations must not allocate.
pub trait Stopwatch {
    fn start(&mut self);
    /// Nanoseconds since the matching `start`.
    fn stop(&mut self) -> u64;
}

#[derive(Debug, Default)]
pub struct MonotonicClock {
    started: Option<Instant>,
}

impl Stopwatch for MonotonicClock {
    fn start(&mut self) {
        self.started = Some(Instant::now());
    }

    fn stop(&mut self) -> u64 {
        let started = self.started.take().expect("stop without start");
        started.elapsed().as_nanos().min(u64::MAX as u128) as u64
    }
}

/// Parameters shared by every cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSettings {
    pub views: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
    /// `None` uses the available parallelism.
    pub workers: Option<usize>,
}

impl From<&BenchConfig> for RunSettings {
    fn from(c: &BenchConfig) -> Self {
        Self {
            views: c.views,
            repeats: c.repeats,
            warmup: c.warmup,
            seed: c.seed,
            workers: c.workers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordStatus {
    Ok,
    Failed(String),
}

impl RecordStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RecordStatus::Ok)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub kernel: KernelKind,
    pub cell: ShapeCell,
    pub views: usize,
    /// Kept frustum points and occupied voxels of the plan.
    pub points: usize,
    pub intervals: usize,
    pub samples_ns: Vec<u64>,
    pub median_ns: u64,
    pub p10_ns: u64,
    pub p90_ns: u64,
    /// Largest heap growth during a timed call; `None` when the counting
    /// allocator is not installed.
    pub aux_bytes_measured: Option<u64>,
    /// Heap bytes still held after the warmup calls (lazily created worker
    /// state), reported apart from the per-call figure.
    pub worker_scratch_bytes: Option<u64>,
    pub model: Option<WorkingSetModel>,
    pub input_digest: u64,
    pub status: RecordStatus,
}

impl BenchRecord {
    fn failed(kernel: KernelKind, cell: ShapeCell, views: usize, reason: String) -> Self {
        Self {
            kernel,
            cell,
            views,
            points: 0,
            intervals: 0,
            samples_ns: Vec::new(),
            median_ns: 0,
            p10_ns: 0,
            p90_ns: 0,
            aux_bytes_measured: None,
            worker_scratch_bytes: None,
            model: None,
            input_digest: 0,
            status: RecordStatus::Failed(reason),
        }
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[u64], q: f64) -> u64 {
    assert!(!sorted.is_empty(), "percentile of no samples");
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Seed for the synthetic inputs of `cell`, shared by every kernel on it.
fn input_seed(seed: u64, cell: &ShapeCell) -> u64 {
    let mut h = bevpool_core::digest::Fnv1a64::new();
    h.write(&seed.to_le_bytes());
    for v in [cell.feat_h, cell.feat_w, cell.depth_bins, cell.channels] {
        h.write(&(v as u64).to_le_bytes());
    }
    h.finish()
}

pub fn run_benchmark(kind: KernelKind, cell: &ShapeCell, settings: &RunSettings) -> BenchRecord {
    run_benchmark_with(kind, cell, settings, &mut MonotonicClock::default())
}

pub fn run_benchmark_with(
    kind: KernelKind,
    cell: &ShapeCell,
    settings: &RunSettings,
    clock: &mut (dyn Stopwatch + Send),
) -> BenchRecord {
    let failed = |reason: String| BenchRecord::failed(kind, *cell, settings.views, reason);
    if settings.repeats == 0 {
        return failed("repeats must be positive".into());
    }

    // Offline part: geometry, plan, inputs.
    let frustum = cell.frustum();
    let grid = cell.grid();
    let rig = surround_rig(settings.seed, settings.views, cell.image_size());
    let plan = match voxel_index_map(&rig, &frustum, &grid)
        .map_err(|e| e.to_string())
        .and_then(|vmap| build_plan(&vmap).map_err(|e| e.to_string()))
    {
        Ok(plan) => plan.with_channels(cell.channels as u32),
        Err(e) => return failed(format!("plan build failed: {e}")),
    };
    let shape = [settings.views, cell.depth_bins, cell.feat_h, cell.feat_w];
    let (depth, feat) = random_inputs(input_seed(settings.seed, cell), shape, cell.channels);
    let digest = input_digest(&depth, &feat);
    let model = match estimate_working_set(kind, &ShapeSummary::from_plan(&plan, cell.channels)) {
        Ok(m) => m,
        Err(e) => return failed(format!("working-set model: {e}")),
    };
    let mut out = BevFeature::zeros(grid.dims, cell.channels);

    let workers = settings
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => return failed(format!("thread pool: {e}")),
    };

    let call = |out: &mut BevFeature| -> Result<(), String> {
        if kind == KernelKind::Oracle {
            *out = pool_oracle(&depth, &feat, &rig, &frustum, &grid).map_err(|e| e.to_string())?;
            Ok(())
        } else {
            kind.run_planned(&depth, &feat, &plan, out).map_err(|e| e.to_string())
        }
    };

    let measured = pool.install(|| -> Result<_, String> {
        let before_warmup = alloc::current_bytes();
        for _ in 0..settings.warmup {
            call(&mut out)?;
        }
        let scratch = alloc::current_bytes().saturating_sub(before_warmup);

        let mut samples = Vec::with_capacity(settings.repeats);
        let mut peak = 0usize;
        for _ in 0..settings.repeats {
            let probe = PeakProbe::start();
            clock.start();
            let result = call(&mut out);
            let ns = clock.stop();
            peak = peak.max(probe.peak_above_base());
            result?;
            samples.push(ns);
        }
        Ok((samples, peak, scratch))
    });

    let (samples, peak, scratch) = match measured {
        Ok(m) => m,
        Err(e) => return failed(e),
    };
    let mut sorted = samples.clone();
    sorted.sort_unstable();
    let counted = alloc::is_installed();
    BenchRecord {
        kernel: kind,
        cell: *cell,
        views: settings.views,
        points: plan.num_points(),
        intervals: plan.num_intervals(),
        median_ns: percentile(&sorted, 0.5),
        p10_ns: percentile(&sorted, 0.1),
        p90_ns: percentile(&sorted, 0.9),
        samples_ns: samples,
        aux_bytes_measured: counted.then_some(peak as u64),
        worker_scratch_bytes: counted.then_some(scratch as u64),
        model: Some(model),
        input_digest: digest,
        status: RecordStatus::Ok,
    }
}

/// One record per `(cell, kernel)`, cell-major in ladder order. Failures are
/// recorded and the sweep carries on.
pub fn sweep(config: &BenchConfig) -> Vec<BenchRecord> {
    sweep_with(config, |_| {})
}

/// [`sweep`] with a callback after each record, e.g. for progress output.
pub fn sweep_with(config: &BenchConfig, mut on_record: impl FnMut(&BenchRecord)) -> Vec<BenchRecord> {
    let settings = RunSettings::from(config);
    let mut records = Vec::with_capacity(config.ladder.len() * config.kernels.len());
    for cell in &config.ladder {
        for &kind in &config.kernels {
            let record = run_benchmark(kind, cell, &settings);
            on_record(&record);
            records.push(record);
        }
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let s = [10, 20, 30, 40, 50];
        assert_eq!(percentile(&s, 0.1), 10);
        assert_eq!(percentile(&s, 0.5), 30);
        assert_eq!(percentile(&s, 0.9), 50);
        assert_eq!(percentile(&[7], 0.1), 7);
        let s = [1, 2, 3, 4];
        assert_eq!(percentile(&s, 0.5), 2);
    }

    #[test]
    fn input_seed_depends_on_cell() {
        let a = ShapeCell::new(2, 3, 4, 5, [8, 8, 1]);
        let b = ShapeCell::new(2, 3, 4, 6, [8, 8, 1]);
        assert_ne!(input_seed(1, &a), input_seed(1, &b));
        assert_eq!(input_seed(1, &a), input_seed(1, &a));
    }
}
