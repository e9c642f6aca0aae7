//! Transform vs. concatenation throughput. Run once with default features
//! and once with `--no-default-features` to compare the parallel and
//! sequential builds; benchmark ids carry the mode.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use elid_core::geometry::apply_transform;
use elid_core::merge::{build_map, concatenate};
use elid_core::par;
use elid_core::simulator::{ground_truth_transform, render_frame};

fn pipeline(c: &mut Criterion) {
    let n_max = 5;
    let scene = elid_core::bench::bench_scene(n_max, 16 * 1024);
    let clouds: Vec<_> = (0..n_max).map(|i| render_frame(&scene, i, 0.01, i as u64).unwrap()).collect();
    let transforms: Vec<_> = (1..n_max).map(|i| ground_truth_transform(&scene, 0, i).unwrap()).collect();
    let reference = &clouds[0];
    let others = &clouds[1..];

    let mut group = c.benchmark_group(format!("merge/{}", par::MODE));
    for n in 1..=n_max {
        group.throughput(Throughput::Elements((n * reference.len()) as u64));
        group.bench_with_input(BenchmarkId::new("transform", n), &n, |b, &n| {
            b.iter(|| {
                others[..n - 1]
                    .iter()
                    .zip(&transforms)
                    .map(|(c, t)| apply_transform(c, t))
                    .collect::<Vec<_>>()
            })
        });
        let moved: Vec<_> = others[..n - 1].iter().zip(&transforms).map(|(c, t)| apply_transform(c, t)).collect();
        group.bench_with_input(BenchmarkId::new("concat", n), &n, |b, _| b.iter(|| concatenate(&moved, reference)));
        group.bench_with_input(BenchmarkId::new("build_map", n), &n, |b, &n| {
            b.iter(|| build_map(&others[..n - 1], &transforms[..n - 1], reference).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = pipeline
}
criterion_main!(benches);
