//! Lens training on relatedness lists.
//!
//! Both sides of every pair go through the same lens. The classifier module
//! feeds pair features to a two-layer softmax head; the ranker module scores
//! all in-batch pairs by cosine and applies a bidirectional max-of-hinges
//! loss. Optimization is Adam with a warmup schedule; the returned lens is
//! the one with the best validation metric seen.

mod config;
mod objective;
mod optim;
mod search;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusIndex, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::lens::{EncoderKind, GatedConvLens, LensParameters, SimpleLens};
use crate::pairs::{PairMode, RelatednessList};
use crate::retrieval::aligned_match_error;
use crate::tensor::{Tape, Tensor};
use crate::vectors::{encode_records, SentenceVectors};

pub use config::{
    TrainConfig, TrainingModule, BATCH_SIZES, EMBEDDING_DROPOUTS, GATING_SIZES, HIDDEN_SIZES, MARGINS, PRESETS,
    WARMUP_STEPS,
};
pub use objective::{
    classifier_features, classifier_features_on, classifier_loss, encode_pairs, ranker_loss, BoundHead, ClassifierHead,
};
pub use optim::{lr_schedule, Adam};
pub use search::{random_search, sample_config, SearchOutcome, Trial};

/// Corpora and pair lists for one training run.
pub struct TrainInputs<'a> {
    pub index: &'a CorpusIndex<'a>,
    pub pairs: &'a RelatednessList,
    /// Rank-mode lists are scored by translation match error; classify-mode
    /// lists by classification error of the head.
    pub validation: &'a RelatednessList,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub lr: Option<f64>,
    pub loss: Option<f64>,
    pub val: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub lens: LensParameters,
    pub head: Option<ClassifierHead>,
    pub history: Vec<HistoryRow>,
    pub best_step: usize,
    /// Lower is better.
    pub best_metric: f64,
    pub metric: &'static str,
    pub steps: usize,
}

impl TrainOutcome {
    pub fn history_tsv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut out = String::from("step\tlr\tloss\tval\n");
        for r in &self.history {
            writeln!(out, "{}\t{}\t{}\t{}", r.step, opt(r.lr), opt(r.loss), opt(r.val))
                .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn write_history(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.history_tsv()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

fn lookup<'a>(
    index: &CorpusIndex<'a>,
    list: &RelatednessList,
) -> Result<Vec<(&'a EmbeddingRecord, &'a EmbeddingRecord)>> {
    list.bind(index)?;
    Ok(list
        .pairs()
        .map(|(a, b)| (index.get(a).expect("bound"), index.get(b).expect("bound")))
        .collect())
}

/// Encodes the distinct records referenced by `list`, in first-seen order.
pub fn encode_list(
    index: &CorpusIndex<'_>,
    list: &RelatednessList,
    lens: &LensParameters,
    threads: usize,
) -> Result<SentenceVectors> {
    list.bind(index)?;
    let mut seen = HashSet::new();
    let records: Vec<&EmbeddingRecord> = list
        .pairs()
        .flat_map(|(a, b)| [a, b])
        .filter(|id| seen.insert(*id))
        .map(|id| index.get(id).expect("bound"))
        .collect();
    encode_records(index.dim(), &records, lens, threads)
}

/// Mean translation match error over the language pairs present in `list`.
/// Pairs are grouped by the language tags of their two sides; each group is
/// scored as a square matching problem.
pub fn translation_error(
    index: &CorpusIndex<'_>,
    vectors: &SentenceVectors,
    list: &RelatednessList,
    threads: usize,
) -> Result<f64> {
    let mut groups: BTreeMap<(&str, &str), Vec<(u64, u64)>> = BTreeMap::new();
    for (a, b) in list.pairs() {
        let la = index.get(a).ok_or(Error::UnknownId { id: a, line: 0 })?.lang.as_str();
        let lb = index.get(b).ok_or(Error::UnknownId { id: b, line: 0 })?.lang.as_str();
        groups.entry((la, lb)).or_default().push((a, b));
    }
    if groups.is_empty() {
        return Err(Error::Config("validation list is empty".into()));
    }
    let mut total = 0.0;
    for pairs in groups.values() {
        total += aligned_match_error(vectors, vectors, pairs, threads)?;
    }
    Ok(total / groups.len() as f64)
}

/// Fraction of pairs the head labels wrongly.
pub fn classification_error(
    lens: &LensParameters,
    head: &ClassifierHead,
    pairs: &[(&EmbeddingRecord, &EmbeddingRecord)],
    labels: &[usize],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Config("validation list is empty".into()));
    }
    let mut wrong = 0;
    for (chunk, chunk_labels) in pairs.chunks(256).zip(labels.chunks(256)) {
        let mut tape = Tape::new();
        let bound = lens.bind(&mut tape);
        let bound_head = head.bind(&mut tape);
        let encoded = encode_pairs(
            &mut tape,
            &bound,
            chunk.iter().map(|(a, b)| (a.embeddings.clone(), b.embeddings.clone())),
        )?;
        let feats = encoded
            .iter()
            .map(|&(u, v)| classifier_features_on(&mut tape, u, v))
            .collect::<Result<Vec<_>>>()?;
        let x = tape.stack_columns(&feats)?;
        let logits = bound_head.logits(&mut tape, x)?;
        let logits = tape.value(logits);
        for (col, &label) in chunk_labels.iter().enumerate() {
            let classes = logits.shape()[0];
            let mut best = 0;
            for c in 1..classes {
                if logits.at2(c, col) > logits.at2(best, col) {
                    best = c;
                }
            }
            wrong += usize::from(best != label);
        }
    }
    Ok(wrong as f64 / pairs.len() as f64)
}

fn dropout(e: &Tensor<f32>, rate: f64, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    if rate == 0.0 {
        return e.clone();
    }
    let keep = (1.0 / (1.0 - rate)) as f32;
    let data = e
        .data()
        .iter()
        .map(|&x| if rng.random::<f64>() < rate { 0.0 } else { x * keep })
        .collect();
    Tensor::new(e.shape().to_vec(), data).expect("same shape")
}

/// Fresh lens parameters for `cfg` over `K`-dimensional embeddings.
pub fn init_lens(cfg: &TrainConfig, input_dim: usize, rng: &mut impl Rng) -> Result<LensParameters> {
    Ok(match cfg.encoder {
        EncoderKind::MeanPool => LensParameters::MeanPool { dim: input_dim },
        EncoderKind::Simple => LensParameters::Simple(SimpleLens::init(input_dim, cfg.output_dim, cfg.activation, rng)),
        EncoderKind::GatedConv => LensParameters::GatedConv(GatedConvLens::init(
            input_dim,
            cfg.gating_size,
            cfg.output_dim,
            cfg.conv_depth,
            cfg.conv_width,
            rng,
        )?),
    })
}

/// Resolved classifier validation pairs and their labels.
type ClassifyPairs<'a> = (Vec<(&'a EmbeddingRecord, &'a EmbeddingRecord)>, Vec<usize>);

struct Evaluator<'a> {
    inputs: &'a TrainInputs<'a>,
    classify: Option<ClassifyPairs<'a>>,
    threads: usize,
}

impl Evaluator<'_> {
    fn metric_name(&self) -> &'static str {
        if self.classify.is_some() {
            "classification_error"
        } else {
            "match_error"
        }
    }

    fn eval(&self, lens: &LensParameters, head: Option<&ClassifierHead>) -> Result<f64> {
        match (&self.classify, head) {
            (Some((pairs, labels)), Some(head)) => classification_error(lens, head, pairs, labels),
            (Some(_), None) => Err(Error::Config(
                "a classify-mode validation list needs the classifier module".into(),
            )),
            (None, _) => {
                let v = encode_list(self.inputs.index, self.inputs.validation, lens, self.threads)?;
                translation_error(self.inputs.index, &v, self.inputs.validation, self.threads)
            }
        }
    }
}

fn as_divergence(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(detail) => Error::Divergence { step, detail },
        other => other,
    }
}

/// Trains a lens. Single-threaded apart from validation encoding, and
/// deterministic for a given `cfg.seed`.
pub fn train(inputs: &TrainInputs<'_>, cfg: &TrainConfig, threads: usize) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_pairs = lookup(inputs.index, inputs.pairs)?;
    let val_pairs = lookup(inputs.index, inputs.validation)?;
    if train_pairs.is_empty() && cfg.encoder != EncoderKind::MeanPool {
        return Err(Error::Config("training list is empty".into()));
    }
    let train_ids: HashSet<u64> = inputs.pairs.pairs().flat_map(|(a, b)| [a, b]).collect();
    if let Some((a, b)) = inputs
        .validation
        .pairs()
        .find(|(a, b)| train_ids.contains(a) || train_ids.contains(b))
    {
        return Err(Error::Config(format!(
            "validation pair ({a}, {b}) shares a sentence with the training list"
        )));
    }

    let classes = match (cfg.module, inputs.pairs.mode) {
        (TrainingModule::Classifier, PairMode::Classify) => {
            let hist = inputs.pairs.class_histogram();
            if let Some(empty) = hist.iter().position(|&n| n == 0) {
                return Err(Error::EmptyClass(empty));
            }
            hist.len()
        }
        (TrainingModule::Ranker, PairMode::Rank) => 0,
        (TrainingModule::Classifier, PairMode::Rank) => {
            return Err(Error::Config("the classifier module needs a classify-mode list".into()))
        }
        (TrainingModule::Ranker, PairMode::Classify) => {
            return Err(Error::Config("the ranker module needs a rank-mode list".into()))
        }
    };
    let classify_val = match inputs.validation.mode {
        PairMode::Classify => {
            let labels: Vec<usize> = inputs
                .validation
                .entries
                .iter()
                .map(|e| e.label.expect("classify mode"))
                .collect();
            if let Some(&label) = labels.iter().find(|&&l| l >= classes.max(1)) {
                return Err(Error::Label { label, classes });
            }
            Some((val_pairs, labels))
        }
        PairMode::Rank => None,
    };
    let evaluator = Evaluator {
        inputs,
        classify: classify_val,
        threads,
    };

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lens = init_lens(cfg, inputs.index.dim(), &mut init_rng)?;
    let mut head = (cfg.module == TrainingModule::Classifier && cfg.encoder != EncoderKind::MeanPool)
        .then(|| ClassifierHead::init(lens.output_dim(), cfg.hidden_size, classes, &mut init_rng));

    let initial = evaluator.eval(&lens, head.as_ref())?;
    let mut history = vec![HistoryRow {
        step: 0,
        lr: None,
        loss: None,
        val: Some(initial),
    }];
    let mut best = (lens.clone(), head.clone(), 0usize, initial);
    if cfg.encoder == EncoderKind::MeanPool {
        return Ok(TrainOutcome {
            lens,
            head: None,
            history,
            best_step: 0,
            best_metric: initial,
            metric: evaluator.metric_name(),
            steps: 0,
        });
    }

    let mut adam = Adam::new(lens.tensors().into_iter().chain(head.iter().flat_map(|h| h.tensors())));
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);

    let single_pass = train_pairs.len() >= cfg.single_pass_threshold;
    let epochs = if single_pass { 1 } else { cfg.max_epochs };
    let min_batch = if cfg.module == TrainingModule::Ranker { 2 } else { 1 };
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut step = 0;
    let mut since_best = 0;
    let mut last_eval = 0;

    'epochs: for _ in 0..epochs {
        order.shuffle(&mut order_rng);
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < min_batch {
                continue;
            }
            if step >= cfg.max_steps {
                break 'epochs;
            }
            step += 1;
            let lr = lr_schedule(step, cfg.warmup_steps, lens.output_dim())?;

            let mut tape = Tape::new();
            let bound = lens.bind(&mut tape);
            let bound_head = head.as_ref().map(|h| h.bind(&mut tape));
            let inputs_iter = batch.iter().map(|&i| {
                let (a, b) = train_pairs[i];
                (
                    dropout(&a.embeddings, cfg.embedding_dropout, &mut dropout_rng),
                    dropout(&b.embeddings, cfg.embedding_dropout, &mut dropout_rng),
                )
            });
            let encoded = encode_pairs(&mut tape, &bound, inputs_iter).map_err(|e| as_divergence(step, e))?;
            let loss = match &bound_head {
                Some(h) => {
                    let labels: Vec<usize> = batch
                        .iter()
                        .map(|&i| inputs.pairs.entries[i].label.expect("classify mode"))
                        .collect();
                    classifier_loss(&mut tape, h, &encoded, &labels)
                }
                None => ranker_loss(&mut tape, &encoded, cfg.margin),
            }
            .map_err(|e| as_divergence(step, e))?;
            let loss_value = f64::from(tape.value(loss).data()[0]);
            let grads = tape.backward(loss, Tensor::scalar(1.0))?;

            let mut vars: Vec<_> = bound.params().to_vec();
            if let Some(h) = &bound_head {
                vars.extend(h.params);
            }
            let mut params: Vec<&mut Tensor<f32>> = lens
                .tensors_mut()
                .into_iter()
                .chain(head.iter_mut().flat_map(|h| h.tensors_mut()))
                .collect();
            let zeros: Vec<Tensor<f32>> = params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
            let grad_refs: Vec<&Tensor<f32>> = vars
                .iter()
                .zip(&zeros)
                .map(|(&v, z)| grads.get(v).unwrap_or(z))
                .collect();
            adam.step(&mut params, &grad_refs, lr).map_err(|e| match e {
                Error::Divergence { detail, .. } => Error::Divergence { step, detail },
                other => other,
            })?;

            let mut row = HistoryRow {
                step,
                lr: Some(lr),
                loss: Some(loss_value),
                val: None,
            };
            if !single_pass && step % cfg.eval_every == 0 {
                let metric = evaluator.eval(&lens, head.as_ref())?;
                row.val = Some(metric);
                last_eval = step;
                if metric < best.3 {
                    best = (lens.clone(), head.clone(), step, metric);
                    since_best = 0;
                } else {
                    since_best += 1;
                }
            }
            history.push(row);
            if since_best >= cfg.patience && cfg.patience > 0 {
                break 'epochs;
            }
        }
    }
    if last_eval != step {
        let metric = evaluator.eval(&lens, head.as_ref())?;
        history.last_mut().expect("at least the initial row").val = Some(metric);
        if metric < best.3 {
            best = (lens.clone(), head.clone(), step, metric);
        }
    }
    let (lens, head, best_step, best_metric) = best;
    Ok(TrainOutcome {
        lens,
        head,
        history,
        best_step,
        best_metric,
        metric: evaluator.metric_name(),
        steps: step,
    })
}
