use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triplace_core::pointops::{farthest_point_sample, knn, FpsStart};
use triplace_core::Tensor;

/// Integer coordinates from a small range, so equal distances are common.
fn lattice(rng: &mut ChaCha8Rng, n: usize, span: i32) -> Tensor<f32> {
    Tensor::new(vec![n, 3], (0..n * 3).map(|_| rng.random_range(0..span) as f32).collect()).unwrap()
}

fn sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2)).sum()
}

/// Recomputes every distance to the selected set from scratch at each step;
/// the farthest point wins, lowest index on ties.
fn fps_oracle(p: &Tensor<f32>, m: usize, start: usize) -> Vec<usize> {
    let mut out = vec![start];
    while out.len() < m {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..p.rows() {
            if out.contains(&i) {
                continue;
            }
            let d = out.iter().map(|&s| sq(p.row(i), p.row(s))).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, i));
            }
        }
        out.push(best.unwrap().1);
    }
    out
}

/// Full stable sort by distance; stability keeps the lower index first on ties.
fn knn_oracle(q: &Tensor<f32>, r: &Tensor<f32>, k: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..q.rows() {
        let mut idx: Vec<usize> = (0..r.rows()).collect();
        idx.sort_by(|&a, &b| sq(r.row(a), q.row(i)).total_cmp(&sq(r.row(b), q.row(i))));
        out.extend_from_slice(&idx[..k]);
    }
    out
}

#[test]
fn fps_matches_brute_force() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=256);
        let span = if seed % 2 == 0 { 4 } else { 1000 };
        let p = lattice(&mut rng, n, span);
        let m = rng.random_range(1..=n);
        let start = rng.random_range(0..n);
        assert_eq!(
            farthest_point_sample(&p, m, FpsStart::Index(start)).unwrap(),
            fps_oracle(&p, m, start),
            "seed {seed} n {n} m {m}"
        );
    }
}

#[test]
fn fps_seeded_start_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let p = lattice(&mut rng, 100, 5);
    let got = farthest_point_sample(&p, 20, FpsStart::Seeded(7)).unwrap();
    assert_eq!(got, fps_oracle(&p, 20, got[0]));
}

#[test]
fn knn_matches_brute_force() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.random_range(1..=256);
        let span = if seed % 2 == 0 { 3 } else { 1000 };
        let refs = lattice(&mut rng, n, span);
        let nq = rng.random_range(1..=32);
        let queries = lattice(&mut rng, nq, span);
        let k = rng.random_range(1..=n);
        assert_eq!(
            knn(&queries, &refs, k).unwrap(),
            knn_oracle(&queries, &refs, k),
            "seed {seed} n {n} k {k}"
        );
    }
}

#[test]
fn knn_ties_prefer_lower_index() {
    let refs = Tensor::new(vec![4, 3], vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let q = Tensor::new(vec![1, 3], vec![0.0, 0.0, 0.0]).unwrap();
    assert_eq!(knn(&q, &refs, 3).unwrap(), vec![3, 0, 1]);
}
