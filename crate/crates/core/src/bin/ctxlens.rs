use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ctxlens::analysis::{export_projection_input, language_vector, probe_eval, probe_train};
use ctxlens::corpus::{CorpusIndex, EmbeddingCorpus};
use ctxlens::lens::LensParameters;
use ctxlens::manifest::RunManifest;
use ctxlens::pairs::{read_gold, write_gold, PairMode, RelatednessList};
use ctxlens::retrieval::{
    aligned_match_error, binarize, binary_similarity, calibrate_threshold, cosine_matrix, f1, gold_columns,
    margin_score, match_error, mine_pairs, write_candidates, write_sweep, MarginConfig,
};
use ctxlens::synth::{generate, SynthConfig};
use ctxlens::train::{random_search, train, TrainConfig, TrainInputs, TrainingModule};
use ctxlens::vectors::{batch_encode, SentenceVectors};

#[derive(Parser)]
#[command(
    name = "ctxlens",
    version,
    about = "Lensed sentence vectors from frozen token embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Threads {
    /// Worker threads for encoding and similarity search.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic multilingual embedding corpora and pair lists.
    GenSynth {
        /// JSON generator config; defaults are used for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fraction of paired sentences used for training pairs.
        #[arg(long, default_value_t = 0.6)]
        train_fraction: f64,
        /// Fraction of paired sentences used for validation pairs.
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a lens on a relatedness list.
    Train {
        #[arg(long = "corpus", required = true)]
        corpora: Vec<PathBuf>,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        validation: PathBuf,
        /// Validation list mode (defaults to the training mode).
        #[arg(long, value_parser = parse_mode)]
        validation_mode: Option<PairMode>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        threads: Threads,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random hyperparameter search over the training grid.
    Search {
        #[arg(long = "corpus", required = true)]
        corpora: Vec<PathBuf>,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        validation: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        validation_mode: Option<PairMode>,
        /// Base config; searched fields are overwritten per trial.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        threads: Threads,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a corpus into sentence vectors (CLVE).
    Encode {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, conflicts_with = "meanpool", required_unless_present = "meanpool")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        meanpool: bool,
        #[command(flatten)]
        threads: Threads,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cosine nearest-neighbour match error against gold translations.
    Match {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[command(flatten)]
        threads: Threads,
        /// JSON report path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine parallel pairs with ratio-margin scores.
    Mine {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, required_unless_present = "calibrate", conflicts_with = "calibrate")]
        threshold: Option<f64>,
        /// Pick the threshold maximizing F1 against --gold.
        #[arg(long, requires = "gold")]
        calibrate: bool,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Write the calibration sweep table here.
        #[arg(long, requires = "calibrate")]
        sweep_out: Option<PathBuf>,
        #[command(flatten)]
        threads: Threads,
        /// Candidate TSV (score, src_id, tgt_id).
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep mining thresholds against gold pairs.
    Calibrate {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[command(flatten)]
        threads: Threads,
        /// Sweep table TSV (threshold, precision, recall, f1).
        #[arg(long)]
        out: PathBuf,
    },
    /// Linear probe predicting which file (label) each vector came from.
    Probe {
        /// LABEL=vectors.clve, one per class.
        #[arg(long = "vectors", required = true, value_parser = parse_labeled)]
        vectors: Vec<(String, PathBuf)>,
        #[arg(long, default_value_t = 0.01)]
        train_fraction: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-language variance vectors, as TSV for projection tools.
    Langvec {
        /// LANG=vectors.clve, one per language.
        #[arg(long = "vectors", required = true, value_parser = parse_labeled)]
        vectors: Vec<(String, PathBuf)>,
        /// Also export every sentence vector labelled by language.
        #[arg(long)]
        sentences_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold vectors into bits and compare binary with dense matching.
    Binarize {
        #[arg(long)]
        src: PathBuf,
        #[arg(long, requires = "gold")]
        tgt: Option<PathBuf>,
        #[arg(long, requires = "tgt")]
        gold: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        threshold: f32,
        #[command(flatten)]
        threads: Threads,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<PairMode, String> {
    match s {
        "rank" => Ok(PairMode::Rank),
        "classify" => Ok(PairMode::Classify),
        other => Err(format!("expected rank or classify, got {other:?}")),
    }
}

fn parse_labeled(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => Ok((label.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected LABEL=PATH, got {s:?}")),
    }
}

/// What a subcommand reports back for its manifest.
#[derive(Default)]
struct Record {
    config: Option<serde_json::Value>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    threads: usize,
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    print!("{text}");
    Ok(())
}

/// `out` with `suffix` appended to its file name.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    out.with_file_name(name)
}

fn read_corpora(paths: &[PathBuf]) -> anyhow::Result<Vec<EmbeddingCorpus>> {
    Ok(paths.iter().map(EmbeddingCorpus::read).collect::<Result<_, _>>()?)
}

fn training_mode(cfg: &TrainConfig) -> PairMode {
    match cfg.module {
        TrainingModule::Classifier => PairMode::Classify,
        TrainingModule::Ranker => PairMode::Rank,
    }
}

fn read_train_config(path: &Path, seed: Option<u64>) -> anyhow::Result<TrainConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = TrainConfig::from_json(&text)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn gen_synth(
    config: Option<&Path>,
    seed: Option<u64>,
    train_fraction: f64,
    val_fraction: f64,
    out: &Path,
) -> anyhow::Result<Record> {
    let mut cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SynthConfig>(&text).map_err(ctxlens::Error::from)?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if !(train_fraction >= 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0) {
        bail!(ctxlens::Error::Config(
            "train and validation fractions must be non-negative and sum to at most 1".into()
        ));
    }
    let data = generate(&cfg)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut outputs = Vec::new();
    for (l, corpus) in data.corpora.iter().enumerate() {
        let path = out.join(format!("{}.clem", SynthConfig::lang_tag(l)));
        corpus.write(&path)?;
        outputs.push(path);
    }
    let n = cfg.sentences;
    let n_train = (train_fraction * n as f64).round() as usize;
    let n_val = ((val_fraction * n as f64).round() as usize).min(n - n_train);
    for a in 0..cfg.languages {
        for b in a + 1..cfg.languages {
            let path = out.join(format!("gold-{a}-{b}.tsv"));
            write_gold(&path, &data.gold(a, b, 0..n))?;
            outputs.push(path);
        }
    }
    let lists = [
        ("train.tsv", data.rank_pairs_cycled(0..n_train)),
        ("val.tsv", data.rank_pairs(n_train..n_train + n_val)),
        ("test.tsv", data.rank_pairs(n_train + n_val..n)),
        ("classify-train.tsv", data.classify_pairs(0..n_train, cfg.seed)),
        (
            "classify-val.tsv",
            data.classify_pairs(n_train..n_train + n_val, cfg.seed.wrapping_add(1)),
        ),
    ];
    for (name, list) in lists {
        let path = out.join(name);
        list.write(&path)?;
        outputs.push(path);
    }
    let config = serde_json::to_value(&cfg)?;
    std::fs::write(
        out.join("synth-config.json"),
        serde_json::to_string_pretty(&config)? + "\n",
    )
    .context("writing synth-config.json")?;
    outputs.push(out.join("synth-config.json"));
    Ok(Record {
        seed: Some(cfg.seed),
        config: Some(config),
        inputs: Vec::new(),
        outputs,
        threads: 1,
    })
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    corpora: &[PathBuf],
    pairs: &Path,
    validation: &Path,
    validation_mode: Option<PairMode>,
    config: &Path,
    seed: Option<u64>,
    threads: usize,
    out: &Path,
) -> anyhow::Result<Record> {
    let cfg = read_train_config(config, seed)?;
    let loaded = read_corpora(corpora)?;
    let index = CorpusIndex::new(&loaded)?;
    let mode = training_mode(&cfg);
    let pair_list = RelatednessList::read(pairs, mode)?;
    let val_list = RelatednessList::read(validation, validation_mode.unwrap_or(mode))?;
    let outcome = train(
        &TrainInputs {
            index: &index,
            pairs: &pair_list,
            validation: &val_list,
        },
        &cfg,
        threads,
    )?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let lens_path = out.join("lens.cllp");
    outcome.lens.save(&lens_path)?;
    let metrics = out.join("metrics.tsv");
    outcome.write_history(&metrics)?;
    let config_path = out.join("config.json");
    std::fs::write(&config_path, cfg.to_json() + "\n").context("writing config.json")?;
    let summary = out.join("summary.json");
    write_json(
        &summary,
        &json!({
            "metric": outcome.metric,
            "best_metric": outcome.best_metric,
            "best_step": outcome.best_step,
            "steps": outcome.steps,
            "parameters": outcome.lens.parameter_count(),
            "corpus_hashes": loaded.iter().map(|c| c.content_hash()).collect::<Vec<_>>(),
        }),
    )?;
    let mut inputs = corpora.to_vec();
    inputs.extend([pairs.to_path_buf(), validation.to_path_buf(), config.to_path_buf()]);
    Ok(Record {
        config: Some(serde_json::to_value(&cfg)?),
        inputs,
        outputs: vec![lens_path, metrics, config_path, summary],
        seed: Some(cfg.seed),
        threads,
    })
}

#[allow(clippy::too_many_arguments)]
fn search_cmd(
    corpora: &[PathBuf],
    pairs: &Path,
    validation: &Path,
    validation_mode: Option<PairMode>,
    config: &Path,
    trials: usize,
    seed: u64,
    threads: usize,
    out: &Path,
) -> anyhow::Result<Record> {
    let base = read_train_config(config, None)?;
    let loaded = read_corpora(corpora)?;
    let index = CorpusIndex::new(&loaded)?;
    let mode = training_mode(&base);
    let pair_list = RelatednessList::read(pairs, mode)?;
    let val_list = RelatednessList::read(validation, validation_mode.unwrap_or(mode))?;
    let inputs = TrainInputs {
        index: &index,
        pairs: &pair_list,
        validation: &val_list,
    };
    let result = random_search(&inputs, &base, trials, seed, threads)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let board = out.join("leaderboard.tsv");
    let mut text = String::from("rank\ttrial\tmetric\tbest_step\tbatch_size\twarmup_steps\tembedding_dropout\tgating_size\thidden_size\tmargin\n");
    for (rank, t) in result.leaderboard.iter().enumerate() {
        let c = &t.config;
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            rank + 1,
            t.index,
            t.best_metric,
            t.best_step,
            c.batch_size,
            c.warmup_steps,
            c.embedding_dropout,
            c.gating_size,
            c.hidden_size,
            c.margin
        ));
    }
    std::fs::write(&board, text).context("writing leaderboard.tsv")?;
    let best_config = out.join("best-config.json");
    std::fs::write(&best_config, result.best.to_json() + "\n").context("writing best-config.json")?;
    let lens_path = out.join("lens.cllp");
    result.best_outcome.lens.save(&lens_path)?;
    let metrics = out.join("metrics.tsv");
    result.best_outcome.write_history(&metrics)?;
    let mut inputs_list = corpora.to_vec();
    inputs_list.extend([pairs.to_path_buf(), validation.to_path_buf(), config.to_path_buf()]);
    Ok(Record {
        config: Some(serde_json::to_value(&base)?),
        inputs: inputs_list,
        outputs: vec![board, best_config, lens_path, metrics],
        seed: Some(seed),
        threads,
    })
}

fn encode_cmd(corpus: &Path, checkpoint: Option<&Path>, threads: usize, out: &Path) -> anyhow::Result<Record> {
    let data = EmbeddingCorpus::read(corpus)?;
    let lens = match checkpoint {
        Some(p) => LensParameters::load(p)?,
        None => LensParameters::MeanPool { dim: data.dim() },
    };
    let vectors = batch_encode(&data, &lens, threads)?;
    vectors.write(out)?;
    let mut inputs = vec![corpus.to_path_buf()];
    inputs.extend(checkpoint.map(Path::to_path_buf));
    Ok(Record {
        inputs,
        outputs: vec![out.to_path_buf()],
        threads,
        ..Record::default()
    })
}

fn match_cmd(src: &Path, tgt: &Path, gold: &Path, threads: usize, out: &Path) -> anyhow::Result<Record> {
    let a = SentenceVectors::read(src)?;
    let b = SentenceVectors::read(tgt)?;
    let pairs = read_gold(gold)?;
    let error = aligned_match_error(&a, &b, &pairs, threads)?;
    write_json(out, &json!({ "match_error": error, "pairs": pairs.len() }))?;
    Ok(Record {
        inputs: vec![src.to_path_buf(), tgt.to_path_buf(), gold.to_path_buf()],
        outputs: vec![out.to_path_buf()],
        threads,
        ..Record::default()
    })
}

#[allow(clippy::too_many_arguments)]
fn mine_cmd(
    src: &Path,
    tgt: &Path,
    k: usize,
    threshold: Option<f64>,
    gold: Option<&Path>,
    sweep_out: Option<&Path>,
    threads: usize,
    out: &Path,
) -> anyhow::Result<Record> {
    let a = SentenceVectors::read(src)?;
    let b = SentenceVectors::read(tgt)?;
    let s = cosine_matrix(&a, &b, threads)?;
    let margins = margin_score(
        &s,
        &MarginConfig {
            k,
            ..MarginConfig::default()
        },
    )?;
    let gold_pairs = gold.map(read_gold).transpose()?;
    let mut outputs = vec![out.to_path_buf()];
    let tau = match threshold {
        Some(t) => t,
        None => {
            let cal = calibrate_threshold(&margins.scores, gold_pairs.as_deref().expect("clap requires gold"))?;
            if let Some(p) = sweep_out {
                write_sweep(p, &cal)?;
                outputs.push(p.to_path_buf());
            }
            cal.threshold
        }
    };
    let mined = mine_pairs(&margins.scores, tau);
    write_candidates(out, &mined)?;
    let mut report = json!({
        "threshold": tau,
        "k": k,
        "candidates": mined.candidates.len(),
        "flagged": margins.flagged.len(),
        "policy": mined.policy,
    });
    if let Some(g) = &gold_pairs {
        let prf = f1(&mined.pairs(), g)?;
        report["precision"] = json!(prf.precision);
        report["recall"] = json!(prf.recall);
        report["f1"] = json!(prf.f1);
    }
    let report_path = sibling(out, ".report.json");
    write_json(&report_path, &report)?;
    outputs.push(report_path);
    let mut inputs = vec![src.to_path_buf(), tgt.to_path_buf()];
    inputs.extend(gold.map(Path::to_path_buf));
    Ok(Record {
        inputs,
        outputs,
        threads,
        ..Record::default()
    })
}

fn calibrate_cmd(src: &Path, tgt: &Path, gold: &Path, k: usize, threads: usize, out: &Path) -> anyhow::Result<Record> {
    let a = SentenceVectors::read(src)?;
    let b = SentenceVectors::read(tgt)?;
    let s = cosine_matrix(&a, &b, threads)?;
    let margins = margin_score(
        &s,
        &MarginConfig {
            k,
            ..MarginConfig::default()
        },
    )?;
    let cal = calibrate_threshold(&margins.scores, &read_gold(gold)?)?;
    write_sweep(out, &cal)?;
    println!(
        "{}",
        json!({
            "threshold": cal.threshold,
            "precision": cal.best.precision,
            "recall": cal.best.recall,
            "f1": cal.best.f1,
        })
    );
    Ok(Record {
        inputs: vec![src.to_path_buf(), tgt.to_path_buf(), gold.to_path_buf()],
        outputs: vec![out.to_path_buf()],
        threads,
        ..Record::default()
    })
}

/// Concatenates labelled vector files; returns vectors, class indices and
/// class names in argument order.
fn labeled_vectors(files: &[(String, PathBuf)]) -> anyhow::Result<(SentenceVectors, Vec<usize>, Vec<String>)> {
    let mut names: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for (name, path) in files {
        let v = SentenceVectors::read(path)?;
        if *dim.get_or_insert(v.dim()) != v.dim() {
            bail!(ctxlens::Error::Config(format!(
                "{} has dimension {}, expected {}",
                path.display(),
                v.dim(),
                dim.unwrap_or(0)
            )));
        }
        let class = match names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                names.push(name.clone());
                names.len() - 1
            }
        };
        for (id, row) in v.rows() {
            rows.push((id, row.to_vec()));
            labels.push(class);
        }
    }
    let vectors = SentenceVectors::from_rows(dim.unwrap_or(0), rows)?;
    Ok((vectors, labels, names))
}

fn probe_cmd(files: &[(String, PathBuf)], fraction: f64, seed: u64, out: &Path) -> anyhow::Result<Record> {
    let (vectors, labels, names) = labeled_vectors(files)?;
    let fit = probe_train(&vectors, &labels, fraction, seed)?;
    let train_acc = probe_eval(&fit.model, &vectors, &labels, Some(&fit.split.train))?;
    let test_acc = if fit.split.test.is_empty() {
        None
    } else {
        Some(probe_eval(&fit.model, &vectors, &labels, Some(&fit.split.test))?)
    };
    write_json(
        out,
        &json!({
            "classes": names,
            "train_examples": fit.split.train.len(),
            "test_examples": fit.split.test.len(),
            "train_accuracy": train_acc,
            "test_accuracy": test_acc,
        }),
    )?;
    Ok(Record {
        inputs: files.iter().map(|(_, p)| p.clone()).collect(),
        outputs: vec![out.to_path_buf()],
        seed: Some(seed),
        threads: 1,
        ..Record::default()
    })
}

fn langvec_cmd(files: &[(String, PathBuf)], sentences_out: Option<&Path>, out: &Path) -> anyhow::Result<Record> {
    let mut vectors = Vec::new();
    for (lang, path) in files {
        let v = SentenceVectors::read(path)?;
        let lv = language_vector(lang.clone(), &v)?;
        vectors.push((lv, v));
    }
    let dim = vectors.first().map_or(0, |(lv, _)| lv.variance.len());
    let rows: Vec<(String, Vec<f32>)> = vectors
        .iter()
        .map(|(lv, _)| (lv.lang.clone(), lv.variance.iter().map(|&x| x as f32).collect()))
        .collect();
    export_projection_input(out, dim, rows.iter().map(|(l, r)| (l.as_str(), r.as_slice())))?;
    let mut outputs = vec![out.to_path_buf()];
    if let Some(p) = sentences_out {
        let labeled = vectors
            .iter()
            .flat_map(|(lv, v)| v.rows().map(move |(_, row)| (lv.lang.as_str(), row)));
        export_projection_input(p, dim, labeled)?;
        outputs.push(p.to_path_buf());
    }
    Ok(Record {
        inputs: files.iter().map(|(_, p)| p.clone()).collect(),
        outputs,
        threads: 1,
        ..Record::default()
    })
}

fn binarize_cmd(
    src: &Path,
    tgt: Option<&Path>,
    gold: Option<&Path>,
    threshold: f32,
    threads: usize,
    out: &Path,
) -> anyhow::Result<Record> {
    let a = SentenceVectors::read(src)?;
    let bits = binarize(&a, threshold);
    let mut report = json!({ "threshold": threshold, "active_fraction": bits.active_fraction() });
    let mut inputs = vec![src.to_path_buf()];
    if let (Some(tgt), Some(gold)) = (tgt, gold) {
        let b = SentenceVectors::read(tgt)?;
        let pairs = read_gold(gold)?;
        let (sa, sb): (Vec<u64>, Vec<u64>) = pairs.iter().copied().unzip();
        let (a, b) = (a.select(&sa)?, b.select(&sb)?);
        let dense = cosine_matrix(&a, &b, threads)?;
        let cols = gold_columns(&dense, &pairs)?;
        let binary = binary_similarity(&binarize(&a, threshold), &binarize(&b, threshold))?;
        report["dense_match_error"] = json!(match_error(&dense, &cols)?);
        report["binary_match_error"] = json!(match_error(&binary, &cols)?);
        inputs.extend([tgt.to_path_buf(), gold.to_path_buf()]);
    }
    write_json(out, &report)?;
    Ok(Record {
        inputs,
        outputs: vec![out.to_path_buf()],
        threads,
        ..Record::default()
    })
}

/// Runs one parsed command. Returns the manifest location and its record.
fn run(command: Command) -> anyhow::Result<Option<(PathBuf, Record)>> {
    Ok(Some(match command {
        Command::GenSynth {
            config,
            seed,
            train_fraction,
            val_fraction,
            out,
        } => {
            let mut rec = gen_synth(config.as_deref(), seed, train_fraction, val_fraction, &out)?;
            rec.inputs.extend(config);
            (RunManifest::location(&out, true), rec)
        }
        Command::Train {
            corpora,
            pairs,
            validation,
            validation_mode,
            config,
            seed,
            threads,
            out,
        } => (
            RunManifest::location(&out, true),
            train_cmd(
                &corpora,
                &pairs,
                &validation,
                validation_mode,
                &config,
                seed,
                threads.threads,
                &out,
            )?,
        ),
        Command::Search {
            corpora,
            pairs,
            validation,
            validation_mode,
            config,
            trials,
            seed,
            threads,
            out,
        } => (
            RunManifest::location(&out, true),
            search_cmd(
                &corpora,
                &pairs,
                &validation,
                validation_mode,
                &config,
                trials,
                seed,
                threads.threads,
                &out,
            )?,
        ),
        Command::Encode {
            corpus,
            checkpoint,
            meanpool: _,
            threads,
            out,
        } => (
            RunManifest::location(&out, false),
            encode_cmd(&corpus, checkpoint.as_deref(), threads.threads, &out)?,
        ),
        Command::Match {
            src,
            tgt,
            gold,
            threads,
            out,
        } => (
            RunManifest::location(&out, false),
            match_cmd(&src, &tgt, &gold, threads.threads, &out)?,
        ),
        Command::Mine {
            src,
            tgt,
            k,
            threshold,
            calibrate: _,
            gold,
            sweep_out,
            threads,
            out,
        } => (
            RunManifest::location(&out, false),
            mine_cmd(
                &src,
                &tgt,
                k,
                threshold,
                gold.as_deref(),
                sweep_out.as_deref(),
                threads.threads,
                &out,
            )?,
        ),
        Command::Calibrate {
            src,
            tgt,
            gold,
            k,
            threads,
            out,
        } => (
            RunManifest::location(&out, false),
            calibrate_cmd(&src, &tgt, &gold, k, threads.threads, &out)?,
        ),
        Command::Probe {
            vectors,
            train_fraction,
            seed,
            out,
        } => (
            RunManifest::location(&out, false),
            probe_cmd(&vectors, train_fraction, seed, &out)?,
        ),
        Command::Langvec {
            vectors,
            sentences_out,
            out,
        } => (
            RunManifest::location(&out, false),
            langvec_cmd(&vectors, sentences_out.as_deref(), &out)?,
        ),
        Command::Binarize {
            src,
            tgt,
            gold,
            threshold,
            threads,
            out,
        } => (
            RunManifest::location(&out, false),
            binarize_cmd(&src, tgt.as_deref(), gold.as_deref(), threshold, threads.threads, &out)?,
        ),
        Command::Replay { manifest } => {
            let m = RunManifest::read(&manifest)?;
            let argv = std::iter::once("ctxlens".to_string()).chain(m.args.iter().cloned());
            let cli = Cli::try_parse_from(argv).context("manifest arguments no longer parse")?;
            if matches!(cli.command, Command::Replay { .. }) {
                bail!(ctxlens::Error::Config("a manifest cannot replay another replay".into()));
            }
            // the replayed command rewrites its own manifest, so a replay leaves none of its own
            execute(cli.command, m.args)?;
            return Ok(None);
        }
    }))
}

fn execute(command: Command, args: Vec<String>) -> anyhow::Result<Option<(PathBuf, Record)>> {
    let name = subcommand_name(&command).to_string();
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let Some((location, rec)) = run(command)? else {
        return Ok(None);
    };
    RunManifest {
        subcommand: name,
        args,
        config: rec.config.clone(),
        inputs: rec.inputs.clone(),
        outputs: rec.outputs.clone(),
        seed: rec.seed,
        threads: rec.threads,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    }
    .write(&location)?;
    Ok(Some((location, rec)))
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::GenSynth { .. } => "gen-synth",
        Command::Train { .. } => "train",
        Command::Search { .. } => "search",
        Command::Encode { .. } => "encode",
        Command::Match { .. } => "match",
        Command::Mine { .. } => "mine",
        Command::Calibrate { .. } => "calibrate",
        Command::Probe { .. } => "probe",
        Command::Langvec { .. } => "langvec",
        Command::Binarize { .. } => "binarize",
        Command::Replay { .. } => "replay",
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<ctxlens::Error>())
        .map_or_else(
            || {
                if err.chain().any(|e| e.downcast_ref::<std::io::Error>().is_some()) {
                    "io"
                } else {
                    "error"
                }
            },
            ctxlens::Error::kind,
        )
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match execute(cli.command, args) {
        Ok(_) => ExitCode::SUCCESS,
        Err(err) => {
            let mut message = String::new();
            for cause in err.chain().map(|e| e.to_string()) {
                if !message.contains(&cause) {
                    if !message.is_empty() {
                        message.push_str(": ");
                    }
                    message.push_str(&cause);
                }
            }
            eprintln!("{}", json!({ "error": error_kind(&err), "message": message }));
            ExitCode::FAILURE
        }
    }
}
