use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use super::SimilarityMatrix;
use crate::error::{Error, Result};

/// Candidate generation policy recorded with every mining result.
pub const DIRECTION_POLICY: &str = "bidirectional-union-greedy";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub src: u64,
    pub tgt: u64,
    pub src_index: usize,
    pub tgt_index: usize,
    pub score: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiningResult {
    /// One-to-one, sorted by descending score.
    pub candidates: Vec<Candidate>,
    pub threshold: f64,
    pub policy: &'static str,
}

impl MiningResult {
    pub fn pairs(&self) -> Vec<(u64, u64)> {
        self.candidates.iter().map(|c| (c.src, c.tgt)).collect()
    }
}

/// Best target of every source and best source of every target, unioned,
/// filtered to `score >= threshold`, then made one-to-one greedily in
/// descending score (ties by source then target index).
pub fn mine_pairs(scores: &SimilarityMatrix, threshold: f64) -> MiningResult {
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    let mut push = |r: usize, c: usize| {
        let score = scores.get(r, c);
        if score.is_finite() && f64::from(score) >= threshold && seen.insert((r, c)) {
            pool.push(Candidate {
                src: scores.row_ids()[r],
                tgt: scores.col_ids()[c],
                src_index: r,
                tgt_index: c,
                score,
            });
        }
    };
    if scores.cols() > 0 {
        for r in 0..scores.rows() {
            push(r, scores.row_argmax(r));
        }
    }
    if scores.rows() > 0 {
        for c in 0..scores.cols() {
            push(scores.col_argmax(c), c);
        }
    }
    pool.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.src_index.cmp(&b.src_index))
            .then(a.tgt_index.cmp(&b.tgt_index))
    });
    let mut used_src = HashSet::new();
    let mut used_tgt = HashSet::new();
    let candidates = pool
        .into_iter()
        .filter(|c| {
            if used_src.contains(&c.src_index) || used_tgt.contains(&c.tgt_index) {
                return false;
            }
            used_src.insert(c.src_index);
            used_tgt.insert(c.tgt_index);
            true
        })
        .collect();
    MiningResult {
        candidates,
        threshold,
        policy: DIRECTION_POLICY,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn prf(hits: usize, predicted: usize, gold: usize) -> Prf {
    let precision = if predicted == 0 {
        0.0
    } else {
        hits as f64 / predicted as f64
    };
    let recall = hits as f64 / gold as f64;
    let f1 = if hits == 0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

/// Set-based precision, recall and F1 over exact pairs.
pub fn f1(predicted: &[(u64, u64)], gold: &[(u64, u64)]) -> Result<Prf> {
    let gold: HashSet<_> = gold.iter().copied().collect();
    if gold.is_empty() {
        return Err(Error::Config("F1 needs at least one gold pair".into()));
    }
    let predicted: HashSet<_> = predicted.iter().copied().collect();
    let hits = predicted.intersection(&gold).count();
    Ok(prf(hits, predicted.len(), gold.len()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub prf: Prf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub threshold: f64,
    pub best: Prf,
    /// One row per distinct accepted score, descending threshold.
    pub sweep: Vec<SweepRow>,
}

/// Picks the threshold maximizing F1 against `gold`. F1 only changes at
/// candidate scores, so those are the only thresholds tried; ties go to the
/// larger threshold. With no candidates the threshold is `+inf`.
pub fn calibrate_threshold(scores: &SimilarityMatrix, gold: &[(u64, u64)]) -> Result<Calibration> {
    let gold: HashSet<_> = gold.iter().copied().collect();
    if gold.is_empty() {
        return Err(Error::Config("calibration needs at least one gold pair".into()));
    }
    // Greedy assignment over a score-sorted list is prefix-stable, so the
    // result at any threshold is a prefix of the unthresholded result.
    let all = mine_pairs(scores, f64::NEG_INFINITY).candidates;
    let mut sweep: Vec<SweepRow> = Vec::new();
    let mut hits = 0;
    for (i, c) in all.iter().enumerate() {
        hits += usize::from(gold.contains(&(c.src, c.tgt)));
        let last_of_run = all.get(i + 1).is_none_or(|n| n.score != c.score);
        if last_of_run {
            sweep.push(SweepRow {
                threshold: f64::from(c.score),
                prf: prf(hits, i + 1, gold.len()),
            });
        }
    }
    let mut best: Option<SweepRow> = None;
    for row in &sweep {
        // sweep is in descending threshold, so strict improvement keeps the larger one on ties
        if best.is_none_or(|b| row.prf.f1 > b.prf.f1) {
            best = Some(*row);
        }
    }
    Ok(match best {
        Some(b) => Calibration {
            threshold: b.threshold,
            best: b.prf,
            sweep,
        },
        None => Calibration {
            threshold: f64::INFINITY,
            best: prf(0, 0, gold.len()),
            sweep,
        },
    })
}

/// Writes `score<TAB>src_id<TAB>tgt_id` lines.
pub fn write_candidates(path: impl AsRef<Path>, result: &MiningResult) -> Result<()> {
    let mut out = String::new();
    for c in &result.candidates {
        writeln!(out, "{}\t{}\t{}", c.score, c.src, c.tgt).expect("writing to a String cannot fail");
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes the calibration sweep as `threshold<TAB>precision<TAB>recall<TAB>f1`
/// with a header line.
pub fn write_sweep(path: impl AsRef<Path>, cal: &Calibration) -> Result<()> {
    let mut out = String::from("threshold\tprecision\trecall\tf1\n");
    for r in &cal.sweep {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.threshold as f32, r.prf.precision, r.prf.recall, r.prf.f1
        )
        .expect("writing to a String cannot fail");
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
