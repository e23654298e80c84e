use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    train, TrainConfig, TrainInputs, TrainOutcome, BATCH_SIZES, EMBEDDING_DROPOUTS, GATING_SIZES, HIDDEN_SIZES,
    MARGINS, WARMUP_STEPS,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Trial {
    pub index: usize,
    pub config: TrainConfig,
    pub best_metric: f64,
    pub best_step: usize,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best: TrainConfig,
    pub best_outcome: TrainOutcome,
    /// Sorted by metric, then trial index.
    pub leaderboard: Vec<Trial>,
}

/// Draws every searched hyperparameter uniformly from its grid; everything
/// else comes from `base`.
pub fn sample_config(base: &TrainConfig, rng: &mut ChaCha8Rng) -> TrainConfig {
    let pick = |xs: &[usize], rng: &mut ChaCha8Rng| *xs.choose(rng).expect("grid is non-empty");
    let pickf = |xs: &[f64], rng: &mut ChaCha8Rng| *xs.choose(rng).expect("grid is non-empty");
    TrainConfig {
        batch_size: pick(&BATCH_SIZES, rng),
        warmup_steps: pick(&WARMUP_STEPS, rng),
        embedding_dropout: pickf(&EMBEDDING_DROPOUTS, rng),
        gating_size: pick(&GATING_SIZES, rng),
        hidden_size: pick(&HIDDEN_SIZES, rng),
        margin: pickf(&MARGINS, rng),
        off_grid: false,
        ..base.clone()
    }
}

/// Trains `trials` sampled configurations and ranks them by validation
/// metric. Trial `i` trains with seed `base.seed + i`.
pub fn random_search(
    inputs: &TrainInputs<'_>,
    base: &TrainConfig,
    trials: usize,
    seed: u64,
    threads: usize,
) -> Result<SearchOutcome> {
    if trials == 0 {
        return Err(Error::Config("random search needs at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut leaderboard = Vec::with_capacity(trials);
    let mut best: Option<(TrainConfig, TrainOutcome)> = None;
    for index in 0..trials {
        let config = TrainConfig {
            seed: base.seed.wrapping_add(index as u64),
            ..sample_config(base, &mut rng)
        };
        let outcome = train(inputs, &config, threads)?;
        leaderboard.push(Trial {
            index,
            config: config.clone(),
            best_metric: outcome.best_metric,
            best_step: outcome.best_step,
        });
        if best.as_ref().is_none_or(|(_, b)| outcome.best_metric < b.best_metric) {
            best = Some((config, outcome));
        }
    }
    leaderboard.sort_by(|a, b| a.best_metric.total_cmp(&b.best_metric).then(a.index.cmp(&b.index)));
    let (best, best_outcome) = best.expect("at least one trial");
    Ok(SearchOutcome {
        best,
        best_outcome,
        leaderboard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_stay_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let c = sample_config(&TrainConfig::default(), &mut rng);
            c.validate().unwrap();
        }
    }
}
