use std::hint::black_box;

use confgames_core::*;
use criterion::{criterion_group, criterion_main, Criterion};

fn scenarios() -> Vec<(&'static str, ConfigGame, Vec<f64>)> {
    vec![
        (
            "pursuit_evasion",
            build_pursuit_evasion(&PursuitEvasionSpec::default()).unwrap(),
            vec![0.2, 1.2],
        ),
        ("general_sum", build_general_sum(&GeneralSumSpec::default()).unwrap(), vec![0.6, 1.2]),
    ]
}

fn stage_two(c: &mut Criterion) {
    let mut group = c.benchmark_group("stage_two");
    for (name, game, theta) in scenarios() {
        let grid = TimeGrid::new(game.horizon(), DEFAULT_STEPS).unwrap();
        group.bench_function(format!("{name}/solve"), |b| {
            b.iter(|| solve_stage_two(&game, black_box(&theta), &grid).unwrap())
        });
        group.bench_function(format!("{name}/value_and_gradient"), |b| {
            b.iter(|| value_and_gradient(&game, black_box(&theta), game.x0(), &grid).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = stage_two
}
criterion_main!(benches);
