//! Cosine matching, k-nearest neighbours, ratio-margin scoring, mining,
//! threshold calibration and binarized matching.

mod binary;
mod mining;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectors::SentenceVectors;

pub use binary::{binarize, binary_similarity, BitVectors};
pub use mining::{
    calibrate_threshold, f1, mine_pairs, write_candidates, write_sweep, Calibration, Candidate, MiningResult, Prf,
    SweepRow, DIRECTION_POLICY,
};

/// Dense `rows x cols` score matrix with the ids of both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    row_ids: Vec<u64>,
    col_ids: Vec<u64>,
}

impl SimilarityMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>, row_ids: Vec<u64>, col_ids: Vec<u64>) -> Result<Self> {
        if data.len() != rows * cols || row_ids.len() != rows || col_ids.len() != cols {
            return Err(Error::shape(
                "similarity matrix",
                format!(
                    "{rows}x{cols} with {} values, {} row ids, {} col ids",
                    data.len(),
                    row_ids.len(),
                    col_ids.len()
                ),
            ));
        }
        Ok(Self {
            rows,
            cols,
            data,
            row_ids,
            col_ids,
        })
    }

    /// Matrix with positional ids `0..rows` and `0..cols`.
    pub fn from_data(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(rows, cols, data, (0..rows as u64).collect(), (0..cols as u64).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[u64] {
        &self.col_ids
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            data.extend((0..self.rows).map(|r| self.get(r, c)));
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
            row_ids: self.col_ids.clone(),
            col_ids: self.row_ids.clone(),
        }
    }

    /// Column of the largest entry in row `r`; ties go to the lowest column.
    pub fn row_argmax(&self, r: usize) -> usize {
        argmax(self.row(r))
    }

    /// Row of the largest entry in column `c`; ties go to the lowest row.
    pub fn col_argmax(&self, c: usize) -> usize {
        let mut best = 0;
        for r in 1..self.rows {
            if self.get(r, c) > self.get(best, c) {
                best = r;
            }
        }
        best
    }
}

fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn norms(v: &SentenceVectors) -> Result<Vec<f64>> {
    v.rows()
        .map(|(id, row)| {
            let n = row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
            if n > 0.0 {
                Ok(n)
            } else {
                Err(Error::ZeroNorm(id))
            }
        })
        .collect()
}

/// All-pairs cosine similarity. Accumulates in `f64`, stores `f32`; the
/// result does not depend on `threads`.
pub fn cosine_matrix(a: &SentenceVectors, b: &SentenceVectors, threads: usize) -> Result<SimilarityMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::shape(
            "cosine matrix",
            format!("dimensions {} and {}", a.dim(), b.dim()),
        ));
    }
    let na = norms(a)?;
    let nb = norms(b)?;
    let cols = b.len();
    let mut data = vec![0f32; a.len() * cols];
    if cols > 0 {
        crate::parallel::install(threads, || {
            data.par_chunks_mut(cols).enumerate().for_each(|(i, out)| {
                let x = a.row(i);
                for (j, slot) in out.iter_mut().enumerate() {
                    let y = b.row(j);
                    let dot: f64 = x.iter().zip(y).map(|(&p, &q)| f64::from(p) * f64::from(q)).sum();
                    *slot = (dot / (na[i] * nb[j])) as f32;
                }
            })
        })?;
    }
    SimilarityMatrix::new(a.len(), cols, data, a.ids().to_vec(), b.ids().to_vec())
}

/// Fraction of rows whose argmax column differs from `gold[row]`.
pub fn match_error(s: &SimilarityMatrix, gold: &[usize]) -> Result<f64> {
    if gold.len() != s.rows() {
        return Err(Error::shape(
            "match error",
            format!("{} gold entries for {} rows", gold.len(), s.rows()),
        ));
    }
    if s.rows() == 0 {
        return Err(Error::Config("match error needs at least one row".into()));
    }
    if let Some(&bad) = gold.iter().find(|&&g| g >= s.cols()) {
        return Err(Error::shape(
            "match error",
            format!("gold column {bad} out of range for {} columns", s.cols()),
        ));
    }
    let wrong = gold.iter().enumerate().filter(|&(r, &g)| s.row_argmax(r) != g).count();
    Ok(wrong as f64 / s.rows() as f64)
}

/// Column index of each row's gold partner, from `(row id, col id)` pairs.
/// Every row must appear exactly once.
pub fn gold_columns(s: &SimilarityMatrix, pairs: &[(u64, u64)]) -> Result<Vec<usize>> {
    let rows: std::collections::HashMap<u64, usize> = s.row_ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let cols: std::collections::HashMap<u64, usize> = s.col_ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut gold = vec![None; s.rows()];
    for (line, &(a, b)) in pairs.iter().enumerate() {
        let r = *rows.get(&a).ok_or(Error::UnknownId { id: a, line: line + 1 })?;
        let c = *cols.get(&b).ok_or(Error::UnknownId { id: b, line: line + 1 })?;
        if gold[r].replace(c).is_some() {
            return Err(Error::Config(format!("source id {a} has more than one gold partner")));
        }
    }
    gold.into_iter()
        .zip(s.row_ids())
        .map(|(g, &id)| g.ok_or_else(|| Error::Config(format!("source id {id} has no gold partner"))))
        .collect()
}

/// Source and target rows restricted to the gold pairs, aligned so that row
/// `i` of the source matches row `i` of the target.
pub fn aligned_match_error(
    src: &SentenceVectors,
    tgt: &SentenceVectors,
    gold: &[(u64, u64)],
    threads: usize,
) -> Result<f64> {
    let (a, b): (Vec<u64>, Vec<u64>) = gold.iter().copied().unzip();
    let s = cosine_matrix(&src.select(&a)?, &tgt.select(&b)?, threads)?;
    match_error(&s, &(0..gold.len()).collect::<Vec<_>>())
}

/// Top-`k` neighbours per row: indices and scores, best first, ties to the
/// lower index.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbors {
    pub k: usize,
    pub indices: Vec<usize>,
    pub scores: Vec<f32>,
}

impl Neighbors {
    pub fn indices_of(&self, r: usize) -> &[usize] {
        &self.indices[r * self.k..(r + 1) * self.k]
    }

    pub fn scores_of(&self, r: usize) -> &[f32] {
        &self.scores[r * self.k..(r + 1) * self.k]
    }
}

fn check_k(k: usize, searched: usize) -> Result<()> {
    if k == 0 || k > searched {
        return Err(Error::Config(format!(
            "k={k} is invalid for a neighbourhood over {searched} items"
        )));
    }
    Ok(())
}

fn top_k(row: &[f32], k: usize, idx: &mut Vec<usize>, sc: &mut Vec<f32>) {
    let start = idx.len();
    for (j, &v) in row.iter().enumerate() {
        let filled = idx.len() - start;
        if filled == k && v <= sc[idx.len() - 1] {
            continue;
        }
        // insertion point after every entry with score >= v keeps lower indices first on ties
        let mut pos = idx.len();
        while pos > start && sc[pos - 1] < v {
            pos -= 1;
        }
        idx.insert(pos, j);
        sc.insert(pos, v);
        if filled == k {
            idx.pop();
            sc.pop();
        }
    }
}

/// Exact top-`k` of every row.
pub fn knn(s: &SimilarityMatrix, k: usize) -> Result<Neighbors> {
    check_k(k, s.cols())?;
    let mut indices = Vec::with_capacity(s.rows() * k);
    let mut scores = Vec::with_capacity(s.rows() * k);
    for r in 0..s.rows() {
        top_k(s.row(r), k, &mut indices, &mut scores);
    }
    Ok(Neighbors { k, indices, scores })
}

/// Exact top-`k` of every column.
pub fn knn_columns(s: &SimilarityMatrix, k: usize) -> Result<Neighbors> {
    knn(&s.transpose(), k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginKind {
    Ratio,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarginConfig {
    pub k: usize,
    pub kind: MarginKind,
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self {
            k: 4,
            kind: MarginKind::Ratio,
        }
    }
}

/// Ratio-margin scores. Entries whose denominator is not positive are set
/// to `-inf` and listed in `flagged` as `(row, col)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginScores {
    pub scores: SimilarityMatrix,
    pub flagged: Vec<(usize, usize)>,
}

/// `score(x, y) = cos(x, y) / (Σ_{nn_k(x)} cos / 2k + Σ_{nn_k(y)} cos / 2k)`,
/// with each neighbourhood taken in the opposite corpus. The candidate may
/// be its own neighbour.
pub fn margin_score(s: &SimilarityMatrix, cfg: &MarginConfig) -> Result<MarginScores> {
    let MarginKind::Ratio = cfg.kind;
    let k = cfg.k;
    check_k(k, s.cols())?;
    check_k(k, s.rows())?;
    let mean = |n: &Neighbors, r: usize| n.scores_of(r).iter().map(|&v| f64::from(v)).sum::<f64>() / (2 * k) as f64;
    let fwd = knn(s, k)?;
    let bwd = knn_columns(s, k)?;
    let row_mean: Vec<f64> = (0..s.rows()).map(|r| mean(&fwd, r)).collect();
    let col_mean: Vec<f64> = (0..s.cols()).map(|c| mean(&bwd, c)).collect();
    let mut data = Vec::with_capacity(s.data().len());
    let mut flagged = Vec::new();
    for r in 0..s.rows() {
        for c in 0..s.cols() {
            let denom = row_mean[r] + col_mean[c];
            if denom > 0.0 {
                data.push((f64::from(s.get(r, c)) / denom) as f32);
            } else {
                data.push(f32::NEG_INFINITY);
                flagged.push((r, c));
            }
        }
    }
    Ok(MarginScores {
        scores: SimilarityMatrix::new(s.rows(), s.cols(), data, s.row_ids().to_vec(), s.col_ids().to_vec())?,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vectors(rows: &[&[f32]]) -> SentenceVectors {
        SentenceVectors::from_rows(
            rows[0].len(),
            rows.iter().enumerate().map(|(i, r)| (i as u64, r.to_vec())),
        )
        .unwrap()
    }

    #[test]
    fn cosine_basic_cases() {
        let a = vectors(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let s = cosine_matrix(&a, &a, 1).unwrap();
        assert_eq!(s.data(), &[1.0, 0.0, 0.0, 1.0]);
        let z = vectors(&[&[0.0, 0.0]]);
        assert!(matches!(cosine_matrix(&a, &z, 1), Err(Error::ZeroNorm(0))));
    }

    #[test]
    fn match_error_cases() {
        let s = SimilarityMatrix::from_data(4, 4, {
            let mut d = vec![0.0; 16];
            for i in 0..4 {
                d[i * 5] = 1.0;
            }
            d
        })
        .unwrap();
        assert_eq!(match_error(&s, &[0, 1, 2, 3]).unwrap(), 0.0);
        assert_eq!(match_error(&s, &[1, 0, 2, 3]).unwrap(), 0.5);
        assert!(match_error(&s, &[0, 1, 2, 4]).is_err());
    }

    #[test]
    fn argmax_ties_lowest_column() {
        let s = SimilarityMatrix::from_data(1, 3, vec![0.5, 0.7, 0.7]).unwrap();
        assert_eq!(s.row_argmax(0), 1);
        assert_eq!(match_error(&s, &[2]).unwrap(), 1.0);
    }

    #[test]
    fn knn_prefix_and_ties() {
        let s = SimilarityMatrix::from_data(1, 5, vec![0.9, 0.8, 0.7, 0.6, 0.5]).unwrap();
        let n = knn(&s, 3).unwrap();
        assert_eq!(n.indices_of(0), &[0, 1, 2]);
        let t = SimilarityMatrix::from_data(1, 4, vec![0.1, 0.3, 0.3, 0.3]).unwrap();
        assert_eq!(knn(&t, 2).unwrap().indices_of(0), &[1, 2]);
        assert!(knn(&t, 0).is_err());
        assert!(knn(&t, 5).is_err());
    }

    #[test]
    fn margin_uniform_neighbourhood_is_one() {
        let s = SimilarityMatrix::from_data(4, 4, vec![0.8; 16]).unwrap();
        let m = margin_score(&s, &MarginConfig::default()).unwrap();
        assert!(m.scores.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
        assert!(m.flagged.is_empty());
    }

    #[test]
    fn margin_negative_denominator_is_flagged() {
        let s = SimilarityMatrix::from_data(2, 2, vec![-0.5, -0.6, -0.7, -0.8]).unwrap();
        let m = margin_score(
            &s,
            &MarginConfig {
                k: 1,
                ..MarginConfig::default()
            },
        )
        .unwrap();
        assert_eq!(m.flagged.len(), 4);
        assert!(m.scores.data().iter().all(|v| *v == f32::NEG_INFINITY));
    }
}
