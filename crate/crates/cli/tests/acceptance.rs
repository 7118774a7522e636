//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p bevpool-cli --test acceptance`.

use std::process::Command;
use std::time::{Duration, Instant};

use bevpool_bench::alloc::CountingAllocator;
use bevpool_bench::harness::sweep;
use bevpool_bench::{default_ladder, BenchConfig, BenchRecord, ShapeCell};
use bevpool_core::geometry::{voxel_index_map, VoxelIndexMap, INVALID_VOXEL};
use bevpool_core::kernels::{pool_oracle, KernelKind};
use bevpool_core::plan::{build_plan, deserialize_plan, serialize_plan, validate_plan, PoolingPlan};
use bevpool_core::synth::{random_inputs, random_instance, surround_rig, Instance, InstanceLimits};
use bevpool_core::tensor::{BevFeature, DepthScores, ImageFeatures};
use bevpool_core::verify::{compare, nonzero_outside_plan, RELATIVE_TOLERANCE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[global_allocator]
static ALLOCATOR: CountingAllocator = CountingAllocator::system();

const SEED: u64 = 7;

type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn plan_for(inst: &Instance) -> PoolingPlan {
    build_plan(&voxel_index_map(&inst.rig, &inst.frustum, &inst.grid).unwrap()).unwrap()
}

fn pool(kind: KernelKind, inst: &Instance, plan: &PoolingPlan, depth: &DepthScores, feat: &ImageFeatures) -> BevFeature {
    if kind == KernelKind::Oracle {
        return pool_oracle(depth, feat, &inst.rig, &inst.frustum, &inst.grid).unwrap();
    }
    let mut out = BevFeature::zeros(inst.grid.dims, feat.channels);
    kind.run_planned(depth, feat, plan, &mut out).unwrap();
    out
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap().install(f)
}

fn oracle_equivalence() -> Verdict {
    let limits = InstanceLimits::default();
    if limits.max_views > 3 || limits.max_depth_bins > 8 || limits.max_feat > 16 || limits.max_channels > 8 {
        return verdict(false, "fuzz limits exceed N<=3, D<=8, H,W<=16, C<=8");
    }
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_bevpool"))
        .args(["verify", "--seed", &SEED.to_string(), "--cases", "200"])
        .output()
        .expect("run bevpool verify");
    let elapsed = started.elapsed();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let max_rel = stdout
        .lines()
        .find_map(|l| l.strip_prefix("max relative error: "))
        .and_then(|v| v.trim().parse::<f64>().ok());
    let ok = out.status.success() && elapsed < Duration::from_secs(60) && max_rel.is_some_and(|e| e <= RELATIVE_TOLERANCE);
    verdict(
        ok,
        format!(
            "verify --cases 200: exit {:?}, max relative error {}, {:.2} s",
            out.status.code(),
            max_rel.map_or("?".into(), |e| format!("{e:.2e}")),
            elapsed.as_secs_f64()
        ),
    )
}

fn ladder_records() -> Vec<BenchRecord> {
    let config = BenchConfig {
        kernels: vec![KernelKind::BevPool, KernelKind::BevPoolV2],
        ..BenchConfig::default_with_seed(SEED)
    };
    sweep(&config)
}

fn pairs(records: &[BenchRecord]) -> Vec<(&BenchRecord, &BenchRecord)> {
    default_ladder()
        .iter()
        .map(|cell| {
            let find = |k| records.iter().find(|r| r.kernel == k && r.cell == *cell).unwrap();
            (find(KernelKind::BevPool), find(KernelKind::BevPoolV2))
        })
        .collect()
}

fn speedup_trend(records: &[BenchRecord]) -> Verdict {
    let pairs = pairs(records);
    if let Some((b, v)) = pairs.iter().find(|(b, v)| !b.status.is_ok() || !v.status.is_ok()) {
        return verdict(false, format!("failed cell: {:?} / {:?}", b.status, v.status));
    }
    let ratios: Vec<f64> = pairs.iter().map(|(b, v)| b.median_ns as f64 / v.median_ns as f64).collect();
    let every_step = pairs.iter().all(|(b, v)| v.median_ns <= b.median_ns);
    let (first, last) = (ratios[0], *ratios.last().unwrap());
    let large_enough = last >= 1.5;
    let trend = last >= first * 0.9;
    let text: Vec<String> = ratios.iter().map(|r| format!("{r:.2}x")).collect();
    verdict(
        every_step && large_enough && trend,
        format!(
            "bevpool/bevpoolv2 {} (v2 faster everywhere: {every_step}, largest >= 1.5x: {large_enough}, largest >= 0.9 * smallest: {trend})",
            text.join(" ")
        ),
    )
}

fn memory_model(records: &[BenchRecord]) -> Verdict {
    let pairs = pairs(records);
    let mut ratios = Vec::new();
    let mut problems = Vec::new();
    for (b, v) in &pairs {
        let (Some(bm), Some(vm)) = (b.model, v.model) else {
            return verdict(false, format!("no model for {}", b.cell));
        };
        ratios.push(vm.plan_plus_auxiliary() as f64 / bm.auxiliary as f64);
        let cell = b.cell;
        let frustum_bytes = (b.views * cell.depth_bins * cell.feat_h * cell.feat_w * cell.channels * 4) as u64;
        match v.aux_bytes_measured {
            Some(0) => {}
            other => problems.push(format!("{cell}: bevpoolv2 measured {other:?}")),
        }
        if !b.aux_bytes_measured.is_some_and(|m| m >= frustum_bytes) {
            problems.push(format!("{cell}: bevpool measured {:?} < {frustum_bytes}", b.aux_bytes_measured));
        }
    }
    let bounded = ratios.iter().all(|&r| r <= 0.10);
    let non_increasing = ratios.windows(2).all(|w| w[1] <= w[0]);
    let text: Vec<String> = ratios.iter().map(|r| format!("{:.2}%", r * 100.0)).collect();
    let scratch: Vec<String> = pairs
        .iter()
        .map(|(_, v)| v.worker_scratch_bytes.map_or("?".into(), |s| s.to_string()))
        .collect();
    verdict(
        bounded && non_increasing && problems.is_empty(),
        format!(
            "(plan+aux)/aux_bevpool {} (<=10%: {bounded}, non-increasing: {non_increasing}); measured v2 aux 0, bevpool >= NDHWC*4{}; v2 worker scratch {} B",
            text.join(" "),
            if problems.is_empty() { String::new() } else { format!(" VIOLATED: {}", problems.join("; ")) },
            scratch.join("/")
        ),
    )
}

fn random_vmap(rng: &mut ChaCha8Rng) -> VoxelIndexMap {
    let shape = [rng.gen_range(1..=3), rng.gen_range(1..=8), rng.gen_range(1..=16), rng.gen_range(1..=16)];
    let grid = [rng.gen_range(1..=16), rng.gen_range(1..=16), rng.gen_range(1..=2)];
    let voxels = (grid[0] * grid[1] * grid[2]) as u32;
    let indices = (0..shape.iter().product::<usize>())
        .map(|_| if rng.gen_bool(0.3) { INVALID_VOXEL } else { rng.gen_range(0..voxels) })
        .collect();
    VoxelIndexMap::from_raw(shape, grid, indices).unwrap()
}

fn offline_contract() -> Verdict {
    let cell = ShapeCell::new(16, 44, 59, 64, [128, 128, 1]);
    let build = || {
        let rig = surround_rig(SEED, 6, cell.image_size());
        build_plan(&voxel_index_map(&rig, &cell.frustum(), &cell.grid()).unwrap()).unwrap()
    };
    let reference = build();
    let digest = reference.meta.digest;
    let rebuilds_equal = (0..10).all(|_| build().meta.digest == digest);
    let workers_equal = [1, 4].iter().all(|&w| with_workers(w, build).meta.digest == digest);
    let content_ok = reference.content_digest() == digest && validate_plan(&reference).is_empty();

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut round_trips = 0;
    for _ in 0..100 {
        let plan = build_plan(&random_vmap(&mut rng)).unwrap().with_channels(rng.gen_range(1..=8));
        let bytes = serialize_plan(&plan);
        if deserialize_plan(&bytes).is_ok_and(|back| back == plan && serialize_plan(&back) == bytes) {
            round_trips += 1;
        }
    }
    verdict(
        rebuilds_equal && workers_equal && content_ok && round_trips == 100,
        format!(
            "digest {digest:016x}; 10 rebuilds equal: {rebuilds_equal}; workers 1/4 equal: {workers_equal}; codec round trips {round_trips}/100"
        ),
    )
}

fn determinism_and_safety() -> Verdict {
    let (inst, plan) = (0..)
        .map(|seed| {
            let inst = random_instance(SEED + seed, &InstanceLimits::default());
            let plan = plan_for(&inst);
            (inst, plan)
        })
        .find(|(_, plan)| plan.num_intervals() > 256)
        .unwrap();
    let v2 = |w| with_workers(w, || pool(KernelKind::BevPoolV2, &inst, &plan, &inst.depth, &inst.feat));
    let reference = v2(1);
    let bit_identical = (0..10).all(|_| v2(1).data == reference.data);
    let oracle = pool(KernelKind::Oracle, &inst, &plan, &inst.depth, &inst.feat);
    let multi = [2, 4].iter().all(|&w| compare(&v2(w).data, &oracle.data).within_tolerance());

    let mut absent_zero = true;
    for seed in 0..20 {
        let inst = random_instance(SEED.wrapping_mul(1000) + seed, &InstanceLimits::default());
        let plan = plan_for(&inst);
        for kind in KernelKind::ALL {
            absent_zero &= nonzero_outside_plan(&plan, &pool(kind, &inst, &plan, &inst.depth, &inst.feat)).is_none();
        }
    }
    verdict(
        bit_identical && multi && absent_zero,
        format!(
            "{} intervals; single-worker bit-identical x10: {bit_identical}; 2/4 workers within tolerance: {multi}; absent voxels zero (20 instances, all kernels): {absent_zero}",
            plan.num_intervals()
        ),
    )
}

fn blend(a: f32, x: &[f32], b: f32, y: &[f32]) -> Vec<f32> {
    x.iter().zip(y).map(|(&p, &q)| a * p + b * q).collect()
}

fn blend_exact(a: f32, x: &[f32], b: f32, y: &[f32]) -> Vec<f32> {
    x.iter().zip(y).map(|(&p, &q)| (a as f64 * p as f64 + b as f64 * q as f64) as f32).collect()
}

fn linearity() -> Verdict {
    let mut worst = [0.0f64; 4];
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x5eed);
    for case in 0..100u64 {
        let inst = random_instance(SEED.wrapping_mul(7919) + case, &InstanceLimits::default());
        let plan = plan_for(&inst);
        let (a, b) = (rng.gen_range(0.1f32..2.0), rng.gen_range(0.1f32..2.0));
        let (depth2, feat2) = random_inputs(case ^ 0xabc, inst.depth.shape(), inst.feat.channels);
        let feat_mix = ImageFeatures::new(inst.feat.shape(), blend(a, &inst.feat.data, b, &feat2.data)).unwrap();
        let depth_mix = DepthScores::new(inst.depth.shape(), blend(a, &inst.depth.data, b, &depth2.data)).unwrap();
        for (k, kind) in KernelKind::ALL.into_iter().enumerate() {
            let base = pool(kind, &inst, &plan, &inst.depth, &inst.feat);
            let by_feat = pool(kind, &inst, &plan, &inst.depth, &feat2);
            let by_depth = pool(kind, &inst, &plan, &depth2, &inst.feat);
            let lhs_f = pool(kind, &inst, &plan, &inst.depth, &feat_mix);
            let lhs_d = pool(kind, &inst, &plan, &depth_mix, &inst.feat);
            let ef = compare(&lhs_f.data, &blend_exact(a, &base.data, b, &by_feat.data));
            let ed = compare(&lhs_d.data, &blend_exact(a, &base.data, b, &by_depth.data));
            worst[k] = worst[k].max(ef.max_relative).max(ed.max_relative);
        }
    }
    let text: Vec<String> = KernelKind::ALL
        .iter()
        .zip(worst)
        .map(|(k, e)| format!("{k} {e:.2e}"))
        .collect();
    verdict(
        worst.iter().all(|&e| e <= RELATIVE_TOLERANCE),
        format!("100 instances per kernel, worst relative error: {}", text.join(", ")),
    )
}

fn main() {
    let records = ladder_records();
    let criteria: [(&str, Check); 6] = [
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("speedup direction and trend", Box::new(|| speedup_trend(&records))),
        ("memory model", Box::new(|| memory_model(&records))),
        ("offline precompute contract", Box::new(offline_contract)),
        ("determinism and safety", Box::new(determinism_and_safety)),
        ("linearity", Box::new(linearity)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.passed);
        println!("criterion {} {} {name}: {}", i + 1, if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} of 6 criteria passed", 6 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
