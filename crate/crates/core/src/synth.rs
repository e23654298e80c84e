//! Deterministic synthetic multilingual token embeddings.
//!
//! Every sentence `i` has a latent `z_i` shared by all languages. Token `t`
//! of sentence `i` in language `l` is
//!
//! ```text
//! e = g_s · P z_i  (+)  g_l · q_l  + noise(σ)
//! ```
//!
//! where `P z_i` fills the first `d_z` coordinates and the language offset
//! `q_l` fills the remaining `K − d_z`. Because the split is axis-aligned, a
//! lens that zeroes the last `K − d_z` coordinates removes the language
//! signal exactly.
//!
//! `P` and the offsets come from `base_seed` (the stand-in for a frozen base
//! model); latents, token counts and noise come from `seed`. Corpora drawn
//! with different `seed`s but the same `base_seed` therefore share one
//! embedding space.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingCorpus, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::pairs::RelatednessList;
use crate::tensor::Tensor;

/// Ids are `language * ID_STRIDE + sentence`.
pub const ID_STRIDE: u64 = 1_000_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub languages: usize,
    /// Sentences with a translation in every language.
    pub sentences: usize,
    /// Extra per-language sentences with no translation anywhere.
    pub unpaired: usize,
    pub latent_dim: usize,
    pub embed_dim: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub shared_gain: f64,
    pub language_gain: f64,
    pub noise: f64,
    pub seed: u64,
    pub base_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            languages: 3,
            sentences: 500,
            unpaired: 0,
            latent_dim: 16,
            embed_dim: 64,
            min_tokens: 4,
            max_tokens: 12,
            shared_gain: 1.0,
            language_gain: 4.0,
            noise: 0.3,
            seed: 1,
            base_seed: 20_200_301,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("synthetic config: {msg}")));
        if self.languages == 0 {
            return fail("need at least one language");
        }
        if self.sentences + self.unpaired == 0 {
            return fail("need at least one sentence");
        }
        if (self.sentences + self.unpaired) as u64 >= ID_STRIDE {
            return fail("too many sentences per language for the id scheme");
        }
        if self.latent_dim == 0 || self.latent_dim >= self.embed_dim {
            return fail("latent_dim must satisfy 0 < latent_dim < embed_dim");
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return fail("token range must satisfy 1 <= min_tokens <= max_tokens");
        }
        if !(self.shared_gain > 0.0 && self.shared_gain.is_finite()) {
            return fail("shared_gain must be positive");
        }
        if !(self.language_gain >= 0.0 && self.language_gain.is_finite()) {
            return fail("language_gain must be non-negative");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail("noise must be non-negative");
        }
        Ok(())
    }

    pub fn lang_tag(l: usize) -> String {
        format!("syn{l}")
    }
}

pub fn sentence_id(lang: usize, sentence: usize) -> u64 {
    lang as u64 * ID_STRIDE + sentence as u64
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub config: SynthConfig,
    /// One corpus per language; paired sentences first, then unpaired.
    pub corpora: Vec<EmbeddingCorpus>,
    /// Latents of the paired sentences.
    latents: Vec<Vec<f64>>,
}

impl SyntheticData {
    /// Translation pairs between two languages for paired sentences in `range`.
    pub fn gold(&self, src: usize, tgt: usize, range: Range<usize>) -> Vec<(u64, u64)> {
        range.map(|i| (sentence_id(src, i), sentence_id(tgt, i))).collect()
    }

    /// Rank-mode training list: every unordered language pair, every
    /// sentence in `range`.
    pub fn rank_pairs(&self, range: Range<usize>) -> RelatednessList {
        let l = self.corpora.len();
        let mut pairs = Vec::new();
        for i in range {
            for a in 0..l {
                for b in a + 1..l {
                    pairs.push((sentence_id(a, i), sentence_id(b, i)));
                }
            }
        }
        RelatednessList::rank(pairs)
    }

    /// Rank-mode training list with one pair per sentence, cycling through
    /// the language pairs. Unlike [`Self::rank_pairs`], no two entries share
    /// a sentence, so in-batch negatives are never translations of each
    /// other.
    pub fn rank_pairs_cycled(&self, range: Range<usize>) -> RelatednessList {
        let l = self.corpora.len();
        let combos: Vec<(usize, usize)> = (0..l).flat_map(|a| (a + 1..l).map(move |b| (a, b))).collect();
        if combos.is_empty() {
            return RelatednessList::rank(std::iter::empty());
        }
        RelatednessList::rank(range.map(|i| {
            let (a, b) = combos[i % combos.len()];
            (sentence_id(a, i), sentence_id(b, i))
        }))
    }

    /// Three-way relatedness labels: 0 for a translation, 1 for a different
    /// sentence with positively aligned latents, 2 otherwise. Each sentence
    /// in `range` yields one translation pair and two random pairs.
    pub fn classify_pairs(&self, range: Range<usize>, seed: u64) -> RelatednessList {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = self.corpora.len();
        let n = self.latents.len();
        let mut out = Vec::new();
        let span = range.clone();
        for i in range {
            let a = rng.random_range(0..l);
            let b = if l > 1 { (a + rng.random_range(1..l)) % l } else { a };
            out.push((sentence_id(a, i), sentence_id(b, i), 0));
            for _ in 0..2 {
                let mut j = rng.random_range(span.clone());
                if j == i {
                    j = if j + 1 < span.end.min(n) { j + 1 } else { span.start };
                }
                if j == i {
                    continue;
                }
                let dot: f64 = self.latents[i].iter().zip(&self.latents[j]).map(|(x, y)| x * y).sum();
                out.push((sentence_id(a, i), sentence_id(b, j), if dot > 0.0 { 1 } else { 2 }));
            }
        }
        RelatednessList::classify(out)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn generate(cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let dz = cfg.latent_dim;
    let k = cfg.embed_dim;

    let mut base = ChaCha8Rng::seed_from_u64(cfg.base_seed);
    let scale = (dz as f64).sqrt().recip();
    let projection: Vec<f64> = (0..dz * dz).map(|_| normal(&mut base) * scale).collect();
    let offsets: Vec<Vec<f64>> = (0..cfg.languages)
        .map(|_| (0..k - dz).map(|_| normal(&mut base)).collect())
        .collect();

    let mut latent_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let latents: Vec<Vec<f64>> = (0..cfg.sentences)
        .map(|_| (0..dz).map(|_| normal(&mut latent_rng)).collect())
        .collect();

    let project = |z: &[f64]| -> Vec<f64> {
        (0..dz)
            .map(|r| (0..dz).map(|c| projection[r * dz + c] * z[c]).sum::<f64>())
            .collect()
    };

    let mut corpora = Vec::with_capacity(cfg.languages);
    for (lang, offset) in offsets.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(lang as u64 + 1);
        let tag = SynthConfig::lang_tag(lang);
        let mut records = Vec::with_capacity(cfg.sentences + cfg.unpaired);
        for i in 0..cfg.sentences + cfg.unpaired {
            let own;
            let z = if i < cfg.sentences {
                &latents[i]
            } else {
                own = (0..dz).map(|_| normal(&mut rng)).collect::<Vec<_>>();
                &own
            };
            let signal = project(z);
            let t = rng.random_range(cfg.min_tokens..=cfg.max_tokens);
            let mut data = vec![0f32; k * t];
            for row in 0..k {
                let center = if row < dz {
                    cfg.shared_gain * signal[row]
                } else {
                    cfg.language_gain * offset[row - dz]
                };
                for col in 0..t {
                    let noise = if cfg.noise > 0.0 {
                        cfg.noise * normal(&mut rng)
                    } else {
                        0.0
                    };
                    data[row * t + col] = (center + noise) as f32;
                }
            }
            records.push(EmbeddingRecord::new(
                sentence_id(lang, i),
                tag.clone(),
                Tensor::new(vec![k, t], data)?,
            )?);
        }
        corpora.push(EmbeddingCorpus::new(k, records)?);
    }
    Ok(SyntheticData {
        config: cfg.clone(),
        corpora,
        latents,
    })
}
