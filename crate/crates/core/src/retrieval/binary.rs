use super::SimilarityMatrix;
use crate::error::Result;
use crate::vectors::SentenceVectors;

/// Packed bit vectors, `words_per_row` little-endian `u64` words per row.
#[derive(Clone, Debug, PartialEq)]
pub struct BitVectors {
    pub dim: usize,
    pub ids: Vec<u64>,
    pub words: Vec<u64>,
    pub words_per_row: usize,
}

impl BitVectors {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    pub fn bit(&self, i: usize, d: usize) -> bool {
        self.row(i)[d / 64] >> (d % 64) & 1 == 1
    }

    /// Mean fraction of set bits.
    pub fn active_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let ones: u64 = self.words.iter().map(|w| u64::from(w.count_ones())).sum();
        ones as f64 / (self.len() * self.dim) as f64
    }
}

/// Bit `d` of row `i` is set iff `v[i][d] >= threshold`.
pub fn binarize(v: &SentenceVectors, threshold: f32) -> BitVectors {
    let words_per_row = v.dim().div_ceil(64);
    let mut words = vec![0u64; v.len() * words_per_row];
    for (i, (_, row)) in v.rows().enumerate() {
        for (d, &x) in row.iter().enumerate() {
            if x >= threshold {
                words[i * words_per_row + d / 64] |= 1 << (d % 64);
            }
        }
    }
    BitVectors {
        dim: v.dim(),
        ids: v.ids().to_vec(),
        words,
        words_per_row,
    }
}

/// `popcount(a & b) / sqrt(popcount(a) * popcount(b))`, 0 when either side
/// has no set bits.
pub fn binary_similarity(a: &BitVectors, b: &BitVectors) -> Result<SimilarityMatrix> {
    if a.dim != b.dim {
        return Err(crate::Error::shape(
            "binary similarity",
            format!("dimensions {} and {}", a.dim, b.dim),
        ));
    }
    let pop = |w: &[u64]| w.iter().map(|x| x.count_ones()).sum::<u32>();
    let pa: Vec<u32> = (0..a.len()).map(|i| pop(a.row(i))).collect();
    let pb: Vec<u32> = (0..b.len()).map(|j| pop(b.row(j))).collect();
    let mut data = Vec::with_capacity(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            let value = if pa[i] == 0 || pb[j] == 0 {
                0.0
            } else {
                let both: u32 = a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x & y).count_ones()).sum();
                f64::from(both) / (f64::from(pa[i]) * f64::from(pb[j])).sqrt()
            };
            data.push(value as f32);
        }
    }
    SimilarityMatrix::new(a.len(), b.len(), data, a.ids.clone(), b.ids.clone())
}
