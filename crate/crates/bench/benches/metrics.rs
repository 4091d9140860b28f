use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scenealign::metrics::{a2a_collision_count, kde_nll, min_ade_fde};
use scenealign::Trajectory;

fn instance(n: usize, k: usize, t: usize) -> (Vec<Trajectory>, Vec<Vec<Trajectory>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut traj = || {
        let pts: Vec<(f64, f64)> = (0..t).map(|_| (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))).collect();
        Trajectory::from_xy(&pts).unwrap()
    };
    let gt = (0..n).map(|_| traj()).collect();
    let preds = (0..k).map(|_| (0..n).map(|_| traj()).collect()).collect();
    (gt, preds)
}

fn metrics(c: &mut Criterion) {
    let (gt, preds) = instance(8, 20, 12);
    c.bench_function("min_ade_fde 8x20x12", |b| b.iter(|| min_ade_fde(&gt, &preds).unwrap()));
    c.bench_function("kde_nll 8x20x12", |b| b.iter(|| kde_nll(&gt, &preds).unwrap()));
    c.bench_function("a2a 8x20x12", |b| b.iter(|| a2a_collision_count(&preds, 0.2).unwrap()));
}

criterion_group!(benches, metrics);
criterion_main!(benches);
