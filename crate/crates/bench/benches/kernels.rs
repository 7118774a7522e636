use bevpool_bench::ShapeCell;
use bevpool_core::geometry::voxel_index_map;
use bevpool_core::kernels::KernelKind;
use bevpool_core::plan::build_plan;
use bevpool_core::synth::{random_inputs, surround_rig};
use bevpool_core::tensor::BevFeature;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

const VIEWS: usize = 6;

fn planned_kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("pooling");
    group.sample_size(10);
    for cell in [ShapeCell::new(16, 44, 59, 64, [128, 128, 1]), ShapeCell::new(32, 88, 59, 64, [128, 128, 1])] {
        let (frustum, grid) = (cell.frustum(), cell.grid());
        let rig = surround_rig(0, VIEWS, cell.image_size());
        let plan = build_plan(&voxel_index_map(&rig, &frustum, &grid).unwrap())
            .unwrap()
            .with_channels(cell.channels as u32);
        let (depth, feat) = random_inputs(1, [VIEWS, cell.depth_bins, cell.feat_h, cell.feat_w], cell.channels);
        let mut out = BevFeature::zeros(grid.dims, cell.channels);
        group.throughput(Throughput::Elements(plan.num_points() as u64));
        for kind in [KernelKind::Cumsum, KernelKind::BevPool, KernelKind::BevPoolV2] {
            group.bench_with_input(BenchmarkId::new(kind.name(), cell), &plan, |b, plan| {
                b.iter(|| kind.run_planned(&depth, &feat, plan, &mut out).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, planned_kernels);
criterion_main!(benches);
