//! Brute-force references for the retrieval module, written as plainly as
//! possible and sharing no code with it.

use ctxlens::retrieval::{
    calibrate_threshold, cosine_matrix, knn, margin_score, mine_pairs, MarginConfig, SimilarityMatrix,
};
use ctxlens::vectors::SentenceVectors;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FLOAT_TOL: f64 = 1e-6;

/// A random retrieval instance: source and target vectors with some planted
/// translation pairs and the gold list naming them.
pub struct Instance {
    pub src: SentenceVectors,
    pub tgt: SentenceVectors,
    pub gold: Vec<(u64, u64)>,
}

pub fn instance(rng: &mut ChaCha8Rng, min_side: usize, max_side: usize) -> Instance {
    let n = rng.random_range(min_side..=max_side);
    let m = rng.random_range(min_side..=max_side);
    let dim = rng.random_range(2..=16);
    let noise = rng.random_range(0.05..1.5);
    // coarse coordinates now and then, so exact score ties occur
    let coarse = rng.random_bool(0.3);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f32> {
        loop {
            let v: Vec<f32> = (0..dim)
                .map(|_| {
                    if coarse {
                        rng.random_range(-2i32..=2) as f32
                    } else {
                        rng.random_range(-1.0f32..1.0)
                    }
                })
                .collect();
            if v.iter().any(|&x| x != 0.0) {
                return v;
            }
        }
    };
    let src_rows: Vec<Vec<f32>> = (0..n).map(|_| draw(rng)).collect();
    let mut tgt_rows: Vec<Vec<f32>> = (0..m).map(|_| draw(rng)).collect();
    let planted = rng.random_range(0..=n.min(m));
    let mut cols: Vec<usize> = (0..m).collect();
    cols.shuffle(rng);
    let mut gold = Vec::new();
    for (i, &j) in cols.iter().take(planted).enumerate() {
        let row: Vec<f32> = src_rows[i]
            .iter()
            .map(|&x| x + noise as f32 * rng.random_range(-1.0f32..1.0))
            .collect();
        if row.iter().any(|&x| x != 0.0) {
            tgt_rows[j] = row;
        }
        gold.push((src_id(i), tgt_id(j)));
    }
    if m > 1 && rng.random_bool(0.3) {
        // a duplicated target row forces ties between columns
        tgt_rows[m - 1] = tgt_rows[0].clone();
    }
    Instance {
        src: SentenceVectors::from_rows(dim, src_rows.into_iter().enumerate().map(|(i, r)| (src_id(i), r))).unwrap(),
        tgt: SentenceVectors::from_rows(dim, tgt_rows.into_iter().enumerate().map(|(j, r)| (tgt_id(j), r))).unwrap(),
        gold,
    }
}

fn src_id(i: usize) -> u64 {
    10 * i as u64 + 1
}

fn tgt_id(j: usize) -> u64 {
    10 * j as u64 + 2
}

pub fn naive_cosine(a: &SentenceVectors, b: &SentenceVectors) -> Vec<Vec<f64>> {
    let norm = |v: &[f32]| v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    (0..a.len())
        .map(|i| {
            (0..b.len())
                .map(|j| {
                    let (x, y) = (a.row(i), b.row(j));
                    let mut dot = 0.0;
                    for d in 0..x.len() {
                        dot += x[d] as f64 * y[d] as f64;
                    }
                    dot / (norm(x) * norm(y))
                })
                .collect()
        })
        .collect()
}

/// Indices of the `k` largest values, larger first, lower index first on ties.
pub fn naive_top_k(values: &[f32], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    order.truncate(k);
    order
}

fn column(s: &SimilarityMatrix, c: usize) -> Vec<f32> {
    (0..s.rows()).map(|r| s.get(r, c)).collect()
}

/// Ratio margin, `None` where the denominator is not positive.
pub fn naive_margin(s: &SimilarityMatrix, k: usize) -> Vec<Vec<Option<f64>>> {
    let mut out = Vec::new();
    for r in 0..s.rows() {
        let row = s.row(r);
        let row_part: f64 = naive_top_k(row, k).iter().map(|&j| row[j] as f64).sum::<f64>() / (2 * k) as f64;
        let mut line = Vec::new();
        for c in 0..s.cols() {
            let col = column(s, c);
            let col_part: f64 = naive_top_k(&col, k).iter().map(|&i| col[i] as f64).sum::<f64>() / (2 * k) as f64;
            let denom = row_part + col_part;
            line.push(if denom > 0.0 {
                Some(s.get(r, c) as f64 / denom)
            } else {
                None
            });
        }
        out.push(line);
    }
    out
}

/// `(src_index, tgt_index, score)` in acceptance order.
pub fn naive_mine(s: &SimilarityMatrix, threshold: f64) -> Vec<(usize, usize, f32)> {
    let mut pool: Vec<(usize, usize)> = Vec::new();
    for r in 0..s.rows() {
        let mut best = 0;
        for c in 1..s.cols() {
            if s.get(r, c) > s.get(r, best) {
                best = c;
            }
        }
        pool.push((r, best));
    }
    for c in 0..s.cols() {
        let mut best = 0;
        for r in 1..s.rows() {
            if s.get(r, c) > s.get(best, c) {
                best = r;
            }
        }
        if !pool.contains(&(best, c)) {
            pool.push((best, c));
        }
    }
    let mut pool: Vec<(usize, usize, f32)> = pool
        .into_iter()
        .map(|(r, c)| (r, c, s.get(r, c)))
        .filter(|&(_, _, v)| v.is_finite() && v as f64 >= threshold)
        .collect();
    pool.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_r = vec![false; s.rows()];
    let mut used_c = vec![false; s.cols()];
    let mut out = Vec::new();
    for (r, c, v) in pool {
        if !used_r[r] && !used_c[c] {
            used_r[r] = true;
            used_c[c] = true;
            out.push((r, c, v));
        }
    }
    out
}

pub fn naive_f1(pred: &[(u64, u64)], gold: &[(u64, u64)]) -> f64 {
    let hits = pred.iter().filter(|p| gold.contains(p)).count();
    if hits == 0 {
        return 0.0;
    }
    let p = hits as f64 / pred.len() as f64;
    let r = hits as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Tries every distinct finite score in the matrix as a threshold and keeps
/// the best F1, preferring the larger threshold on ties.
pub fn naive_calibrate(s: &SimilarityMatrix, gold: &[(u64, u64)]) -> (f64, f64) {
    let mut grid: Vec<f32> = s.data().iter().copied().filter(|v| v.is_finite()).collect();
    grid.sort_by(|a, b| b.partial_cmp(a).unwrap());
    grid.dedup();
    let mut best = (f64::INFINITY, -1.0);
    for tau in grid {
        let pred: Vec<(u64, u64)> = naive_mine(s, tau as f64)
            .into_iter()
            .map(|(r, c, _)| (s.row_ids()[r], s.col_ids()[c]))
            .collect();
        let f = naive_f1(&pred, gold);
        if f > best.1 {
            best = (tau as f64, f);
        }
    }
    best
}

fn quantized(s: &SimilarityMatrix, steps: f32) -> SimilarityMatrix {
    let data = s
        .data()
        .iter()
        .map(|&v| if v.is_finite() { (v * steps).round() / steps } else { v })
        .collect();
    SimilarityMatrix::new(s.rows(), s.cols(), data, s.row_ids().to_vec(), s.col_ids().to_vec()).unwrap()
}

#[derive(Debug, Default, Clone)]
pub struct OracleReport {
    pub instances: usize,
    /// Per operation: name and failure descriptions.
    pub failures: Vec<(&'static str, Vec<String>)>,
}

impl OracleReport {
    fn fail(&mut self, op: &'static str, msg: String) {
        match self.failures.iter_mut().find(|(o, _)| *o == op) {
            Some((_, v)) => v.push(msg),
            None => self.failures.push((op, vec![msg])),
        }
    }

    pub fn failures_of(&self, op: &str) -> usize {
        self.failures.iter().find(|(o, _)| *o == op).map_or(0, |(_, v)| v.len())
    }
}

pub const OPS: [&str; 5] = [
    "cosine_matrix",
    "knn",
    "margin_score",
    "mine_pairs",
    "calibrate_threshold",
];

/// Compares every retrieval operation against its reference on `count`
/// random instances with sides up to `max_side`.
pub fn run(count: usize, max_side: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::default();
    for inst_no in 0..count {
        report.instances += 1;
        let inst = instance(&mut rng, 4, max_side);
        let threads = rng.random_range(1..=4);
        let s = cosine_matrix(&inst.src, &inst.tgt, threads).unwrap();
        let reference = naive_cosine(&inst.src, &inst.tgt);
        let worst = (0..s.rows())
            .flat_map(|r| (0..s.cols()).map(move |c| (r, c)))
            .map(|(r, c)| (s.get(r, c) as f64 - reference[r][c]).abs())
            .fold(0.0, f64::max);
        if worst > FLOAT_TOL {
            report.fail("cosine_matrix", format!("instance {inst_no}: max deviation {worst:e}"));
        }

        let k = rng.random_range(1..=8.min(s.cols()));
        let nn = knn(&s, k).unwrap();
        for r in 0..s.rows() {
            let want = naive_top_k(s.row(r), k);
            if nn.indices_of(r) != want.as_slice() {
                report.fail(
                    "knn",
                    format!("instance {inst_no} row {r}: {:?} vs {want:?}", nn.indices_of(r)),
                );
                break;
            }
        }

        let margins = margin_score(&s, &MarginConfig::default()).unwrap();
        let reference = naive_margin(&s, 4);
        'margin: for (r, line) in reference.iter().enumerate() {
            for (c, want) in line.iter().enumerate() {
                let got = margins.scores.get(r, c) as f64;
                let ok = match want {
                    Some(w) => (got - w).abs() <= FLOAT_TOL * w.abs().max(1.0),
                    None => got == f64::NEG_INFINITY && margins.flagged.contains(&(r, c)),
                };
                if !ok {
                    report.fail(
                        "margin_score",
                        format!("instance {inst_no} ({r},{c}): {got} vs {want:?}"),
                    );
                    break 'margin;
                }
            }
        }

        for (label, scores) in [
            ("raw", margins.scores.clone()),
            ("quantized", quantized(&margins.scores, 32.0)),
        ] {
            let finite: Vec<f32> = scores.data().iter().copied().filter(|v| v.is_finite()).collect();
            let tau = if finite.is_empty() {
                0.0
            } else {
                finite[rng.random_range(0..finite.len())] as f64
            };
            let got: Vec<(usize, usize, f32)> = mine_pairs(&scores, tau)
                .candidates
                .iter()
                .map(|c| (c.src_index, c.tgt_index, c.score))
                .collect();
            let want = naive_mine(&scores, tau);
            if got != want {
                report.fail(
                    "mine_pairs",
                    format!(
                        "instance {inst_no} ({label}, tau {tau}): {} vs {} candidates",
                        got.len(),
                        want.len()
                    ),
                );
            }
        }

        if !inst.gold.is_empty() {
            let scores = quantized(&margins.scores, 32.0);
            let cal = calibrate_threshold(&scores, &inst.gold).unwrap();
            let (tau, f) = naive_calibrate(&scores, &inst.gold);
            let same_f1 = (cal.best.f1 - f).abs() <= 1e-12;
            // with no hits anywhere every threshold ties at F1 = 0
            let same_tau = f == 0.0 || cal.threshold == tau;
            if !(same_f1 && same_tau) {
                report.fail(
                    "calibrate_threshold",
                    format!(
                        "instance {inst_no}: ({}, {}) vs ({tau}, {f})",
                        cal.threshold, cal.best.f1
                    ),
                );
            }
        }
    }
    report
}
