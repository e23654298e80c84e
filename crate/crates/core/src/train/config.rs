use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lens::EncoderKind;
use crate::tensor::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingModule {
    Classifier,
    Ranker,
}

pub const BATCH_SIZES: [usize; 3] = [128, 256, 512];
pub const WARMUP_STEPS: [usize; 5] = [1000, 2000, 4000, 8000, 16000];
pub const EMBEDDING_DROPOUTS: [f64; 3] = [0.0, 0.1, 0.2];
pub const GATING_SIZES: [usize; 3] = [128, 256, 512];
pub const HIDDEN_SIZES: [usize; 3] = [256, 512, 1024];
pub const MARGINS: [f64; 3] = [0.1, 0.2, 0.3];

/// Named encoder/module/dimension combinations.
pub const PRESETS: [&str; 7] = [
    "bow",
    "sCL-simple-classifier",
    "CL-gatedconv-classifier",
    "CL-gatedconv-ranker",
    "sCL-simple-ranker",
    "CL-gatedconv-ranker-4096",
    "sCL-simple-ranker-4096",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Preset the other fields were resolved from, if any.
    pub preset: Option<String>,
    pub encoder: EncoderKind,
    pub module: TrainingModule,
    /// Sentence vector size `D`. Ignored for mean pooling, which keeps `K`.
    pub output_dim: usize,
    /// Activation of the simple lens.
    pub activation: Activation,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub embedding_dropout: f64,
    /// Internal channel count of the gated convolutional lens.
    pub gating_size: usize,
    pub conv_depth: usize,
    pub conv_width: usize,
    /// Hidden layer of the classifier head.
    pub hidden_size: usize,
    /// Ranker hinge margin.
    pub margin: f64,
    pub max_steps: usize,
    pub max_epochs: usize,
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Training lists at least this long get one pass and no early stopping.
    pub single_pass_threshold: usize,
    pub seed: u64,
    /// Allow values outside the search grid.
    pub off_grid: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            preset: None,
            encoder: EncoderKind::Simple,
            module: TrainingModule::Ranker,
            output_dim: 1024,
            activation: Activation::Relu,
            batch_size: 128,
            warmup_steps: 4000,
            embedding_dropout: 0.0,
            gating_size: 256,
            conv_depth: 2,
            conv_width: 3,
            hidden_size: 512,
            margin: 0.2,
            max_steps: 20_000,
            max_epochs: 1000,
            eval_every: 500,
            patience: 5,
            single_pass_threshold: 1_000_000,
            seed: 1,
            off_grid: false,
        }
    }
}

impl TrainConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let (encoder, module, output_dim) = match name {
            "bow" => (EncoderKind::MeanPool, TrainingModule::Ranker, 0),
            "sCL-simple-classifier" => (EncoderKind::Simple, TrainingModule::Classifier, 1024),
            "CL-gatedconv-classifier" => (EncoderKind::GatedConv, TrainingModule::Classifier, 1024),
            "CL-gatedconv-ranker" => (EncoderKind::GatedConv, TrainingModule::Ranker, 1024),
            "sCL-simple-ranker" => (EncoderKind::Simple, TrainingModule::Ranker, 1024),
            "CL-gatedconv-ranker-4096" => (EncoderKind::GatedConv, TrainingModule::Ranker, 4096),
            "sCL-simple-ranker-4096" => (EncoderKind::Simple, TrainingModule::Ranker, 4096),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; known presets: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(Self {
            preset: Some(name.to_string()),
            encoder,
            module,
            output_dim,
            ..Self::default()
        })
    }

    /// Parses a JSON config. A `preset` key supplies defaults that the
    /// remaining keys override; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(overrides) = value else {
            return Err(Error::Config("training config must be a JSON object".into()));
        };
        let base = match overrides.get("preset") {
            Some(serde_json::Value::String(name)) => Self::preset(name)?,
            Some(serde_json::Value::Null) | None => Self::default(),
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
        };
        let serde_json::Value::Object(mut merged) = serde_json::to_value(&base)? else {
            unreachable!("a struct serializes to an object");
        };
        merged.extend(overrides);
        let cfg: Self = serde_json::from_value(serde_json::Value::Object(merged))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.encoder != EncoderKind::MeanPool && self.output_dim == 0 {
            return fail("output_dim must be positive".into());
        }
        if self.batch_size < 2 && self.module == TrainingModule::Ranker {
            return fail("ranker needs a batch size of at least 2".into());
        }
        if self.batch_size == 0 || self.warmup_steps == 0 || self.eval_every == 0 {
            return fail("batch_size, warmup_steps and eval_every must be positive".into());
        }
        if !(0.0..1.0).contains(&self.embedding_dropout) {
            return fail(format!("embedding_dropout {} not in [0, 1)", self.embedding_dropout));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return fail(format!("margin {} must be finite and non-negative", self.margin));
        }
        if self.encoder == EncoderKind::GatedConv {
            if self.conv_depth == 0 {
                return fail("conv_depth must be at least 1".into());
            }
            if self.conv_width.is_multiple_of(2) {
                return fail(format!("conv_width must be odd, got {}", self.conv_width));
            }
        }
        if self.off_grid {
            return Ok(());
        }
        let off = |name: &str, value: String| {
            Err(Error::Config(format!(
                "{name}={value} is outside the search grid (set off_grid to allow it)"
            )))
        };
        if !BATCH_SIZES.contains(&self.batch_size) {
            return off("batch_size", self.batch_size.to_string());
        }
        if !WARMUP_STEPS.contains(&self.warmup_steps) {
            return off("warmup_steps", self.warmup_steps.to_string());
        }
        if !EMBEDDING_DROPOUTS.contains(&self.embedding_dropout) {
            return off("embedding_dropout", self.embedding_dropout.to_string());
        }
        if !GATING_SIZES.contains(&self.gating_size) {
            return off("gating_size", self.gating_size.to_string());
        }
        if !HIDDEN_SIZES.contains(&self.hidden_size) {
            return off("hidden_size", self.hidden_size.to_string());
        }
        if !MARGINS.contains(&self.margin) {
            return off("margin", self.margin.to_string());
        }
        Ok(())
    }
}
