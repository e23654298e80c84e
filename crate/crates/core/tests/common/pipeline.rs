//! The synthetic end-to-end experiment: train a Simple lens with the ranker
//! on the default synthetic corpora and evaluate it every way the toolkit
//! can.

use std::time::Instant;

use ctxlens::analysis::{probe_eval, probe_train};
use ctxlens::corpus::CorpusIndex;
use ctxlens::lens::{EncoderKind, LensParameters};
use ctxlens::retrieval::{
    binarize, binary_similarity, calibrate_threshold, cosine_matrix, margin_score, match_error, MarginConfig,
};
use ctxlens::synth::{generate, SynthConfig, SyntheticData};
use ctxlens::tensor::Activation;
use ctxlens::train::{encode_list, train, translation_error, TrainConfig, TrainInputs, TrainOutcome, TrainingModule};
use ctxlens::vectors::{batch_encode, SentenceVectors};

/// Paired sentences 0..300 train, 300..400 validate, 400..500 are held out.
pub const TRAIN: std::ops::Range<usize> = 0..300;
pub const VALIDATION: std::ops::Range<usize> = 300..400;
pub const TEST: std::ops::Range<usize> = 400..500;

pub fn train_config() -> TrainConfig {
    TrainConfig {
        encoder: EncoderKind::Simple,
        module: TrainingModule::Ranker,
        activation: Activation::Relu,
        output_dim: 128,
        batch_size: 128,
        warmup_steps: 1000,
        max_steps: 1500,
        eval_every: 100,
        patience: 5,
        seed: 1,
        ..TrainConfig::default()
    }
}

pub struct Trained {
    pub data: SyntheticData,
    pub outcome: TrainOutcome,
    pub meanpool_error: f64,
    pub test_error: f64,
    pub seconds: f64,
}

/// Trains on one thread and measures match errors on held-out sentences.
/// Mean pooling is measured on all sentences since it has nothing to fit.
pub fn train_lens() -> Trained {
    let start = Instant::now();
    let data = generate(&SynthConfig::default()).unwrap();
    let index = CorpusIndex::new(&data.corpora).unwrap();
    let pairs = data.rank_pairs_cycled(TRAIN);
    let validation = data.rank_pairs(VALIDATION);
    let test = data.rank_pairs(TEST);
    let outcome = train(
        &TrainInputs {
            index: &index,
            pairs: &pairs,
            validation: &validation,
        },
        &train_config(),
        1,
    )
    .unwrap();
    let vectors = encode_list(&index, &test, &outcome.lens, 1).unwrap();
    let test_error = translation_error(&index, &vectors, &test, 1).unwrap();
    let all = data.rank_pairs(0..data.config.sentences);
    let mp = meanpool_lens(&data);
    let vectors = encode_list(&index, &all, &mp, 1).unwrap();
    let meanpool_error = translation_error(&index, &vectors, &all, 1).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    Trained {
        data,
        outcome,
        meanpool_error,
        test_error,
        seconds,
    }
}

pub struct MiningPair {
    pub langs: (usize, usize),
    pub threshold: f64,
    pub f1: f64,
}

/// Mining corpus: 500 planted translations plus 500 distractors per
/// language, generated with a different seed than the training corpus.
pub fn mine_synthetic(lens: &LensParameters) -> Vec<MiningPair> {
    let cfg = SynthConfig {
        unpaired: 500,
        seed: 2,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).unwrap();
    let vectors: Vec<SentenceVectors> = data.corpora.iter().map(|c| batch_encode(c, lens, 1).unwrap()).collect();
    let mut out = Vec::new();
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let s = cosine_matrix(&vectors[a], &vectors[b], 1).unwrap();
        let m = margin_score(&s, &MarginConfig::default()).unwrap();
        let cal = calibrate_threshold(&m.scores, &data.gold(a, b, 0..cfg.sentences)).unwrap();
        out.push(MiningPair {
            langs: (a, b),
            threshold: cal.threshold,
            f1: cal.best.f1,
        });
    }
    out
}

pub fn population_std(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub struct BinaryResult {
    pub dense_error: f64,
    pub binary_error: f64,
    /// `(threshold, active fraction)` in increasing threshold order.
    pub active: Vec<(f32, f64)>,
}

/// Dense versus binary matching on held-out sentences of languages 0 and 1.
pub fn binary_comparison(data: &SyntheticData, lens: &LensParameters, threshold: f32) -> BinaryResult {
    let src = batch_encode(&data.corpora[0], lens, 1).unwrap().slice(TEST);
    let tgt = batch_encode(&data.corpora[1], lens, 1).unwrap().slice(TEST);
    let gold: Vec<usize> = (0..TEST.len()).collect();
    let dense_error = match_error(&cosine_matrix(&src, &tgt, 1).unwrap(), &gold).unwrap();
    let bits = |v: &SentenceVectors| binarize(v, threshold);
    let binary_error = match_error(&binary_similarity(&bits(&src), &bits(&tgt)).unwrap(), &gold).unwrap();
    let active = [f32::NEG_INFINITY, -1.0, 0.0, 0.25, 0.5, 1.0, 2.0, 4.0, f32::INFINITY]
        .into_iter()
        .map(|t| (t, binarize(&src, t).active_fraction()))
        .collect();
    BinaryResult {
        dense_error,
        binary_error,
        active,
    }
}

/// Language-identification probe accuracy on held-out rows, averaged over
/// three split seeds. Trains on 1% of all vectors of every language.
pub fn language_probe(data: &SyntheticData, lens: &LensParameters) -> f64 {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (l, corpus) in data.corpora.iter().enumerate() {
        let v = batch_encode(corpus, lens, 1).unwrap();
        for (id, row) in v.rows() {
            rows.push((id, row.to_vec()));
            labels.push(l);
        }
    }
    let vectors = SentenceVectors::from_rows(lens.output_dim(), rows).unwrap();
    let seeds = 0..3u64;
    let total: f64 = seeds
        .clone()
        .map(|seed| {
            let fit = probe_train(&vectors, &labels, 0.01, seed).unwrap();
            probe_eval(&fit.model, &vectors, &labels, Some(&fit.split.test)).unwrap()
        })
        .sum();
    total / seeds.count() as f64
}

pub fn meanpool_lens(data: &SyntheticData) -> LensParameters {
    LensParameters::MeanPool {
        dim: data.config.embed_dim,
    }
}
