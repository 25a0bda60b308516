use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triplace_core::serialize::save_descriptors;
use triplace_core::Tensor;
use triplace_eval::*;

fn random_db(rng: &mut ChaCha8Rng, n: usize, levels: i32) -> DescriptorDb {
    // Coarse quantization makes exact distance ties common.
    let rows = (0..n)
        .map(|_| {
            let mut v = vec![0.0f32; DESCRIPTOR_DIM];
            for x in v.iter_mut().take(4) {
                *x = rng.random_range(0..levels) as f32 * 0.5;
            }
            Tensor::from_vec(v)
        })
        .collect();
    let mut ids: Vec<u64> = (0..n as u64 * 3).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let poses: Vec<PoseEntry> = ids[..n]
        .iter()
        .map(|&id| PoseEntry {
            id,
            position: [rng.random_range(0.0..30.0), rng.random_range(0.0..30.0), 0.0],
        })
        .collect();
    DescriptorDb::new(rows, &poses).unwrap()
}

fn brute_force(db: &DescriptorDb, q: &Tensor<f32>) -> (u64, f64) {
    let mut all: Vec<(f64, u64)> = db
        .rows
        .iter()
        .zip(&db.ids)
        .map(|(r, &id)| {
            let d: f64 = r
                .data()
                .iter()
                .zip(q.data())
                .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
                .sum();
            (d.sqrt(), id)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    (all[0].1, all[0].0)
}

#[test]
fn top1_matches_full_sort_on_random_instances() {
    for seed in 0..25u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=256);
        let db = random_db(&mut rng, n, 3);
        let queries = random_db(&mut rng, 20, 3);
        for q in &queries.rows {
            assert_eq!(query_nn(&db, q).unwrap(), brute_force(&db, q), "seed {seed}");
        }
    }
}

#[test]
fn fifty_row_database() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let db = random_db(&mut rng, 50, 1000);
    for q in &random_db(&mut rng, 10, 1000).rows {
        assert_eq!(query_nn(&db, q).unwrap(), brute_force(&db, q));
    }
    let (id, d) = query_nn(&db, &db.rows[7]).unwrap();
    assert_eq!(d, 0.0);
    assert_eq!(db.rows[db.ids.iter().position(|&i| i == id).unwrap()], db.rows[7]);
}

#[test]
fn empty_database_is_rejected() {
    let db = DescriptorDb::new(Vec::new(), &[]).unwrap();
    assert!(query_nn(&db, &Tensor::zeros(&[DESCRIPTOR_DIM])).is_err());
}

#[test]
fn descriptor_file_roundtrip_and_dim_check() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let db = random_db(&mut rng, 5, 1000);
    let path = dir.path().join("db.fld");
    save_descriptors(&db.rows, DESCRIPTOR_DIM, &path).unwrap();
    let poses: Vec<PoseEntry> = db
        .ids
        .iter()
        .zip(&db.positions)
        .map(|(&id, &position)| PoseEntry { id, position })
        .collect();
    let back = build_db(&path, &poses).unwrap();
    assert_eq!(back, db);
    assert_eq!(build_db(&path, &poses[..1]).unwrap_err().to_string().contains("5 descriptors but 1 poses"), true);

    let single = dir.path().join("one.fld");
    save_descriptors(&db.rows[..1], DESCRIPTOR_DIM, &single).unwrap();
    assert_eq!(build_db(&single, &poses[..1]).unwrap().len(), 1);

    let narrow = dir.path().join("narrow.fld");
    save_descriptors(&[Tensor::zeros(&[8])], 8, &narrow).unwrap();
    assert!(build_db(&narrow, &poses[..1]).is_err());
}

#[test]
fn self_retrieval_of_distinct_places_is_perfect() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 12;
    let mut rows = Vec::new();
    let mut poses = Vec::new();
    for i in 0..n {
        for v in 0..2 {
            let mut d = vec![0.0f32; DESCRIPTOR_DIM];
            d[i] = 1.0;
            d[DESCRIPTOR_DIM - 1] = 0.01 * v as f32;
            rows.push(Tensor::from_vec(d));
            poses.push(PoseEntry {
                id: (2 * i + v) as u64,
                position: [100.0 * i as f64 + rng.random_range(-1.0..1.0), 0.0, 0.0],
            });
        }
    }
    let db = DescriptorDb::new(rows, &poses).unwrap();
    let pr = pr_curve(&db, &db, 5.0, None).unwrap();
    assert_eq!(pr.max_f1, 1.0);
    assert_eq!(pr.recall_at_p100, 1.0);
}

#[test]
fn exported_csv_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let matches: Vec<TopOne> = (0..40)
        .map(|i| TopOne {
            distance: (i as f64 * 0.37).sin().abs() / 3.0,
            correct: i % 3 != 0,
        })
        .collect();
    let pr = pr_from_matches(&matches, None).unwrap();
    let (csv, json) = export_results(&pr, &dir.path().join("results")).unwrap();
    let rows = parse_csv(&std::fs::read_to_string(csv).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), pr.thresholds);
    assert_eq!(rows.iter().map(|r| r.1).collect::<Vec<_>>(), pr.precision);
    assert_eq!(rows.iter().map(|r| r.2).collect::<Vec<_>>(), pr.recall);
    let text = std::fs::read_to_string(json).unwrap();
    assert!(text.starts_with("{\"max_f1\":"));
    assert!(text.find("max_f1") < text.find("recall_at_p100"));
}

proptest! {
    #[test]
    fn curve_invariants(
        raw in prop::collection::vec((0u32..50, any::<bool>()), 1..60)
    ) {
        let matches: Vec<TopOne> = raw
            .iter()
            .map(|&(d, correct)| TopOne { distance: f64::from(d) / 10.0, correct })
            .collect();
        let pr = pr_from_matches(&matches, None).unwrap();
        for w in pr.recall.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        let mut best = 0.0f64;
        for (&p, &r) in pr.precision.iter().zip(&pr.recall) {
            prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
            if p + r > 0.0 {
                best = best.max(2.0 * p * r / (p + r));
            }
        }
        prop_assert_eq!(pr.max_f1, best);
        let expected = pr
            .thresholds
            .iter()
            .zip(&pr.precision)
            .zip(&pr.recall)
            .filter(|((_, &p), _)| p == 1.0)
            .max_by(|a, b| a.0 .0.total_cmp(b.0 .0))
            .map_or(0.0, |(_, &r)| r);
        prop_assert_eq!(pr.recall_at_p100, expected);
    }
}
