//! Flat run settings shared by every subcommand. Values come from flags,
//! then the `--config` file, then `GABAR_SEED` (seed only), then defaults.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use gabar::exec::{ExecConfig, DEFAULT_BEAM, DEFAULT_MAX_STEPS};
use gabar::graph::Ablation;
use gabar::model::{ModelConfig, DEFAULT_HIDDEN, DEFAULT_LAYERS};
use gabar::search::SearchBudget;
use gabar::train::{TrainConfig, DEFAULT_BATCH, DEFAULT_EPOCHS, DEFAULT_LR};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub problems: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub tiers: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub include_reports: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub sizes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<Ablation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beam: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_expansions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
}

macro_rules! merge_fields {
    ($a:ident, $b:ident; opt: $($o:ident),*; vec: $($v:ident),*) => {
        Settings {
            $($o: $a.$o.or($b.$o),)*
            $($v: if $a.$v.is_empty() { $b.$v } else { $a.$v },)*
        }
    };
}

impl Settings {
    /// `self` wins wherever it has a value.
    pub fn or(self, other: Settings) -> Settings {
        let (a, b) = (self, other);
        merge_fields!(a, b;
            opt: domain, out, checkpoint, train_data, val_data, trace, log, family, count, split, seed, ablation,
                 beam, max_steps, fallback, lr, batch, epochs, layers, hidden, workers, max_expansions, max_seconds;
            vec: problems, tiers, include_reports, sizes)
    }

    pub fn from_json(text: &str) -> Result<Settings, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("settings serialize")
    }

    pub fn need<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, CliError> {
        v.clone().ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Resolves the seed from `GABAR_SEED` when neither flag nor file set it.
    pub fn with_env_seed(mut self) -> Result<Settings, CliError> {
        if self.seed.is_none() {
            if let Ok(s) = std::env::var("GABAR_SEED") {
                let v = s.trim().parse().map_err(|_| CliError::Usage(format!("GABAR_SEED is not an integer: `{s}`")))?;
                self.seed = Some(v);
            }
        }
        Ok(self)
    }

    pub fn fill_model(&mut self) {
        self.ablation.get_or_insert(Ablation::Full);
        self.layers.get_or_insert(DEFAULT_LAYERS);
        self.hidden.get_or_insert(DEFAULT_HIDDEN);
    }

    pub fn fill_train(&mut self) {
        self.fill_model();
        self.lr.get_or_insert(DEFAULT_LR);
        self.batch.get_or_insert(DEFAULT_BATCH);
        self.epochs.get_or_insert(DEFAULT_EPOCHS);
        self.seed.get_or_insert(0);
    }

    pub fn fill_exec(&mut self) {
        self.beam.get_or_insert(DEFAULT_BEAM);
        self.max_steps.get_or_insert(DEFAULT_MAX_STEPS);
        self.fallback.get_or_insert(true);
    }

    pub fn fill_budget(&mut self, default: SearchBudget) {
        self.max_expansions.get_or_insert(default.max_expansions);
        self.max_seconds.get_or_insert(default.max_seconds);
    }

    pub fn fill_workers(&mut self) {
        self.workers.get_or_insert(1);
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden.unwrap_or(DEFAULT_HIDDEN),
            layers: self.layers.unwrap_or(DEFAULT_LAYERS),
            ablation: self.ablation.unwrap_or(Ablation::Full),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr.unwrap_or(DEFAULT_LR),
            batch: self.batch.unwrap_or(DEFAULT_BATCH),
            max_epochs: self.epochs.unwrap_or(DEFAULT_EPOCHS),
            seed: self.seed(),
            model: self.model_config(),
        }
    }

    pub fn exec_config(&self) -> ExecConfig {
        ExecConfig {
            max_steps: self.max_steps.unwrap_or(DEFAULT_MAX_STEPS),
            beam: self.beam.unwrap_or(DEFAULT_BEAM),
            fallback: self.fallback.unwrap_or(true),
        }
    }

    pub fn budget(&self, default: SearchBudget) -> SearchBudget {
        SearchBudget::new(
            self.max_expansions.unwrap_or(default.max_expansions),
            self.max_seconds.unwrap_or(default.max_seconds),
        )
    }
}
