mod common;

use ctxlens::corpus::CorpusIndex;
use ctxlens::lens::EncoderKind;
use ctxlens::synth::{generate, SynthConfig};
use ctxlens::tensor::{Tape, Tensor};
use ctxlens::train::{
    classifier_features, lr_schedule, random_search, ranker_loss, train, Adam, TrainConfig, TrainInputs,
    TrainingModule, BATCH_SIZES, EMBEDDING_DROPOUTS, GATING_SIZES, HIDDEN_SIZES, MARGINS, WARMUP_STEPS,
};

fn quadratic_grad_norm(curvature: [f64; 2]) -> f64 {
    let mut p = Tensor::<f64>::vector(vec![1.0, -1.0]);
    let mut adam = Adam::new([&p]);
    let grad = |p: &Tensor<f64>| Tensor::vector(vec![curvature[0] * p.data()[0], curvature[1] * p.data()[1]]);
    for step in 1..=100 {
        let g = grad(&p);
        // warmup 1 and D = 4 give 0.5 / sqrt(step)
        let lr = lr_schedule(step, 1, 4).unwrap();
        adam.step(&mut [&mut p], &[&g], lr).unwrap();
    }
    let g = grad(&p);
    g.data().iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn adam_solves_a_quadratic_in_100_steps() {
    // measured 8.6e-5 and 6.1e-4
    assert!(quadratic_grad_norm([1.0, 1.0]) < 1e-3);
    assert!(quadratic_grad_norm([1.0, 10.0]) < 1e-3);
}

fn small_setup() -> (ctxlens::synth::SyntheticData, TrainConfig) {
    let data = generate(&SynthConfig {
        sentences: 120,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        encoder: EncoderKind::Simple,
        module: TrainingModule::Ranker,
        output_dim: 32,
        max_steps: 30,
        eval_every: 10,
        ..TrainConfig::default()
    };
    (data, cfg)
}

#[test]
fn training_leaves_the_base_embeddings_untouched() {
    let (data, cfg) = small_setup();
    let before: Vec<String> = data.corpora.iter().map(|c| c.content_hash()).collect();
    let index = CorpusIndex::new(&data.corpora).unwrap();
    let pairs = data.rank_pairs_cycled(0..80);
    let validation = data.rank_pairs(80..120);
    let cfg = TrainConfig {
        embedding_dropout: 0.2,
        ..cfg
    };
    train(
        &TrainInputs {
            index: &index,
            pairs: &pairs,
            validation: &validation,
        },
        &cfg,
        1,
    )
    .unwrap();
    let after: Vec<String> = data.corpora.iter().map(|c| c.content_hash()).collect();
    assert_eq!(before, after);
}

#[test]
fn early_stopping_returns_the_best_checkpoint() {
    let (data, cfg) = small_setup();
    let index = CorpusIndex::new(&data.corpora).unwrap();
    let pairs = data.rank_pairs_cycled(0..80);
    let validation = data.rank_pairs(80..120);
    let inputs = TrainInputs {
        index: &index,
        pairs: &pairs,
        validation: &validation,
    };
    let out = train(&inputs, &cfg, 1).unwrap();
    let evaluated: Vec<f64> = out.history.iter().filter_map(|r| r.val).collect();
    let best = evaluated.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_metric, best);
    let first_best = out.history.iter().find(|r| r.val == Some(best)).unwrap().step;
    assert_eq!(out.best_step, first_best);

    // the returned lens really is the one that scored best
    let vectors = ctxlens::train::encode_list(&index, &validation, &out.lens, 1).unwrap();
    let err = ctxlens::train::translation_error(&index, &vectors, &validation, 1).unwrap();
    assert_eq!(err, out.best_metric);
}

#[test]
fn ranker_loss_is_symmetric_under_swapping_sides() {
    let mut tape = Tape::<f64>::new();
    let vecs: Vec<_> = [[0.3, -1.0, 0.2], [0.9, 0.1, 0.4], [-0.5, 0.5, 0.7], [0.2, 0.2, -0.9]]
        .iter()
        .map(|v| tape.constant(Tensor::vector(v.to_vec())))
        .collect();
    let pairs = [(vecs[0], vecs[1]), (vecs[2], vecs[3])];
    let swapped = [(vecs[1], vecs[0]), (vecs[3], vecs[2])];
    let a = ranker_loss(&mut tape, &pairs, 0.2).unwrap();
    let b = ranker_loss(&mut tape, &swapped, 0.2).unwrap();
    assert!((tape.value(a).data()[0] - tape.value(b).data()[0]).abs() < 1e-12);
}

#[test]
fn classifier_symmetric_blocks_survive_a_swap() {
    let u = [0.3f64, -1.0, 0.2];
    let v = [0.9f64, 0.1, 0.4];
    let f = classifier_features(&u, &v).unwrap();
    let g = classifier_features(&v, &u).unwrap();
    assert_eq!(f[6..], g[6..]);
    assert_eq!(f[..3], g[3..6]);
}

#[test]
fn random_search_best_beats_the_median() {
    let (data, cfg) = small_setup();
    let index = CorpusIndex::new(&data.corpora).unwrap();
    let pairs = data.rank_pairs_cycled(0..80);
    let validation = data.rank_pairs(80..120);
    let inputs = TrainInputs {
        index: &index,
        pairs: &pairs,
        validation: &validation,
    };
    let cfg = TrainConfig { max_steps: 10, ..cfg };
    let out = random_search(&inputs, &cfg, 8, 5, 1).unwrap();
    assert_eq!(out.leaderboard.len(), 8);
    let mut metrics: Vec<f64> = out.leaderboard.iter().map(|t| t.best_metric).collect();
    metrics.sort_by(f64::total_cmp);
    let median = (metrics[3] + metrics[4]) / 2.0;
    assert!(out.best_outcome.best_metric <= median);
    assert_eq!(out.best_outcome.best_metric, metrics[0]);
    for t in &out.leaderboard {
        let c = &t.config;
        assert!(BATCH_SIZES.contains(&c.batch_size));
        assert!(WARMUP_STEPS.contains(&c.warmup_steps));
        assert!(EMBEDDING_DROPOUTS.contains(&c.embedding_dropout));
        assert!(GATING_SIZES.contains(&c.gating_size));
        assert!(HIDDEN_SIZES.contains(&c.hidden_size));
        assert!(MARGINS.contains(&c.margin));
    }

    let single = random_search(&inputs, &cfg, 1, 5, 1).unwrap();
    let direct = train(&inputs, &single.best, 1).unwrap();
    assert_eq!(direct.lens, single.best_outcome.lens);
}
