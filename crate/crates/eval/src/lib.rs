//! Retrieval evaluation: descriptor database, exhaustive top-1 search and
//! the precision-recall sweep over the top-1 distance threshold.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use triplace_core::serialize::load_descriptors;
use triplace_core::{Error, Result, Tensor};

const MODULE: &str = "evalkit";

/// Descriptor width of the three-branch global descriptor.
pub const DESCRIPTOR_DIM: usize = 768;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseEntry {
    pub id: u64,
    pub position: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorDb {
    pub ids: Vec<u64>,
    pub positions: Vec<[f64; 3]>,
    /// One row per id.
    pub rows: Vec<Tensor<f32>>,
}

impl DescriptorDb {
    pub fn new(rows: Vec<Tensor<f32>>, poses: &[PoseEntry]) -> Result<Self> {
        if rows.len() != poses.len() {
            return Err(Error::format(
                MODULE,
                format!("{} descriptors but {} poses", rows.len(), poses.len()),
            ));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != DESCRIPTOR_DIM) {
            return Err(Error::format(
                MODULE,
                format!("descriptor {i} has dim {}, expected {DESCRIPTOR_DIM}", r.len()),
            ));
        }
        Ok(DescriptorDb {
            ids: poses.iter().map(|p| p.id).collect(),
            positions: poses.iter().map(|p| p.position).collect(),
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Read an `FLD1` file and pair its rows with `poses` in order.
pub fn build_db(descriptor_file: &Path, poses: &[PoseEntry]) -> Result<DescriptorDb> {
    let (dim, rows) = load_descriptors(descriptor_file)?;
    if dim != DESCRIPTOR_DIM {
        return Err(Error::format(MODULE, format!("descriptor dim {dim} in header, expected {DESCRIPTOR_DIM}")));
    }
    DescriptorDb::new(rows, poses)
}

/// Parse `id timestamp_ns x y z` lines, preserving file order.
pub fn read_pose_entries(path: &Path) -> Result<Vec<PoseEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(MODULE, path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let bad = || Error::format(MODULE, format!("{}:{}: expected `id timestamp_ns x y z`", path.display(), n + 1));
        if toks.len() != 5 {
            return Err(bad());
        }
        let id = toks[0].parse().map_err(|_| bad())?;
        toks[1].parse::<u64>().map_err(|_| bad())?;
        let mut position = [0.0; 3];
        for (p, t) in position.iter_mut().zip(&toks[2..]) {
            *p = t.parse().map_err(|_| bad())?;
        }
        out.push(PoseEntry { id, position });
    }
    Ok(out)
}

fn sq_dist(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

fn pose_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Exhaustive Euclidean nearest row, skipping `exclude_id`; ties go to the
/// lowest id. Returns `(row index, distance)`.
pub fn query_nn_excluding(db: &DescriptorDb, q: &Tensor<f32>, exclude_id: Option<u64>) -> Result<(usize, f64)> {
    if q.len() != DESCRIPTOR_DIM {
        return Err(Error::contract(MODULE, format!("query has dim {}, expected {DESCRIPTOR_DIM}", q.len())));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in db.rows.iter().enumerate() {
        if Some(db.ids[i]) == exclude_id {
            continue;
        }
        let d = sq_dist(row, q);
        let better = match best {
            None => true,
            Some((j, bd)) => d < bd || (d == bd && db.ids[i] < db.ids[j]),
        };
        if better {
            best = Some((i, d));
        }
    }
    best.map(|(i, d)| (i, d.sqrt()))
        .ok_or_else(|| Error::contract(MODULE, "query against an empty database"))
}

/// `(best id, distance)`.
pub fn query_nn(db: &DescriptorDb, q: &Tensor<f32>) -> Result<(u64, f64)> {
    let (i, d) = query_nn_excluding(db, q, None)?;
    Ok((db.ids[i], d))
}

/// Top-1 result of a query that has at least one ground-truth loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopOne {
    pub distance: f64,
    pub correct: bool,
}

/// Top-1 matches for every query with a database pose within `d_pos`
/// (self-matches excluded); other queries are dropped.
pub fn top_one_matches(db: &DescriptorDb, queries: &DescriptorDb, d_pos: f64) -> Result<Vec<TopOne>> {
    let mut out = Vec::new();
    for (qi, q) in queries.rows.iter().enumerate() {
        let qid = queries.ids[qi];
        let qpos = &queries.positions[qi];
        let has_loop = db
            .ids
            .iter()
            .zip(&db.positions)
            .any(|(&id, p)| id != qid && pose_dist(p, qpos) <= d_pos);
        if !has_loop {
            continue;
        }
        let (bi, distance) = query_nn_excluding(db, q, Some(qid))?;
        out.push(TopOne {
            distance,
            correct: pose_dist(&db.positions[bi], qpos) <= d_pos,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrResult {
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub max_f1: f64,
    pub recall_at_p100: f64,
}

/// Sweep the acceptance threshold. Without explicit thresholds the sorted
/// distinct top-1 distances are used.
pub fn pr_from_matches(matches: &[TopOne], thresholds: Option<&[f64]>) -> Result<PrResult> {
    if matches.is_empty() {
        return Err(Error::contract(MODULE, "no query has a ground-truth loop"));
    }
    let thresholds: Vec<f64> = match thresholds {
        Some(t) => {
            if t.is_empty() {
                return Err(Error::contract(MODULE, "empty threshold list"));
            }
            t.to_vec()
        }
        None => {
            let mut t: Vec<f64> = matches.iter().map(|m| m.distance).collect();
            t.sort_by(f64::total_cmp);
            t.dedup();
            t
        }
    };
    let total = matches.len() as f64;
    let (mut precision, mut recall) = (Vec::new(), Vec::new());
    let (mut max_f1, mut recall_at_p100) = (0.0f64, 0.0f64);
    let mut best_tau = f64::NEG_INFINITY;
    for &tau in &thresholds {
        let accepted = matches.iter().filter(|m| m.distance <= tau).count();
        let tp = matches.iter().filter(|m| m.distance <= tau && m.correct).count();
        let p = if accepted == 0 { 1.0 } else { tp as f64 / accepted as f64 };
        let r = tp as f64 / total;
        if p + r > 0.0 {
            max_f1 = max_f1.max(2.0 * p * r / (p + r));
        }
        if p == 1.0 && tau >= best_tau {
            best_tau = tau;
            recall_at_p100 = r;
        }
        precision.push(p);
        recall.push(r);
    }
    Ok(PrResult {
        thresholds,
        precision,
        recall,
        max_f1,
        recall_at_p100,
    })
}

pub fn pr_curve(db: &DescriptorDb, queries: &DescriptorDb, d_pos: f64, thresholds: Option<&[f64]>) -> Result<PrResult> {
    pr_from_matches(&top_one_matches(db, queries, d_pos)?, thresholds)
}

#[derive(Serialize)]
struct Summary {
    max_f1: f64,
    recall_at_p100: f64,
}

pub fn format_csv(pr: &PrResult) -> String {
    let mut s = String::from("threshold,precision,recall\n");
    for i in 0..pr.thresholds.len() {
        let _ = writeln!(s, "{},{},{}", pr.thresholds[i], pr.precision[i], pr.recall[i]);
    }
    s
}

pub fn format_summary(pr: &PrResult) -> String {
    let summary = Summary {
        max_f1: pr.max_f1,
        recall_at_p100: pr.recall_at_p100,
    };
    serde_json::to_string(&summary).expect("plain struct serializes") + "\n"
}

/// Parse a CSV written by [`format_csv`] into `(threshold, precision, recall)`.
pub fn parse_csv(text: &str) -> Result<Vec<(f64, f64, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some("threshold,precision,recall") {
        return Err(Error::format(MODULE, "missing CSV header"));
    }
    lines
        .map(|l| {
            let v: Vec<f64> = l
                .split(',')
                .map(|t| t.parse().map_err(|_| Error::format(MODULE, format!("bad CSV line `{l}`"))))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::format(MODULE, format!("bad CSV line `{l}`")));
            }
            Ok((v[0], v[1], v[2]))
        })
        .collect()
}

/// Write `<out>.csv` and `<out>.json`. Returns both paths.
pub fn export_results(pr: &PrResult, out: &Path) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    if pr.thresholds.is_empty() {
        return Err(Error::contract(MODULE, "no thresholds to export"));
    }
    let csv = out.with_extension("csv");
    let json = out.with_extension("json");
    fs::write(&csv, format_csv(pr)).map_err(|e| Error::io(MODULE, &csv, e))?;
    fs::write(&json, format_summary(pr)).map_err(|e| Error::io(MODULE, &json, e))?;
    Ok((csv, json))
}
