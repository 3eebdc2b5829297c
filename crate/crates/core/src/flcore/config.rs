use serde::{Deserialize, Serialize};

use crate::datagen::DatasetSpec;
use crate::error::FieldError;
use crate::nnkit::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ModalityMirror,
    Unifl,
    Multifl,
    Harmony,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::ModalityMirror,
        Strategy::Multifl,
        Strategy::Unifl,
        Strategy::Harmony,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::ModalityMirror => "modality_mirror",
            Strategy::Unifl => "unifl",
            Strategy::Multifl => "multifl",
            Strategy::Harmony => "harmony",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected one of modality_mirror, multifl, unifl, harmony)"))
    }
}

/// Client weights inside FedAvg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    DataSize,
}

/// Divisor used when averaging distilled students.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage2Divisor {
    /// Mean over the contributing multimodal clients.
    Contributors,
    /// Sum over contributors divided by the number of audio-only clients in
    /// the same round's draw. Ablation only.
    AudioCohort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage2Init {
    /// Student starts from the stage-1 audio encoder and head.
    Warm,
    /// Student starts from fresh random weights.
    Cold,
}

/// Full description of one simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub seed: u64,
    pub n_clients: usize,
    pub missing_rate: f64,
    /// Rounds per stage.
    pub rounds: usize,
    pub local_epochs: usize,
    pub clients_per_round: usize,
    pub lr: f64,
    pub temperature: f64,
    pub kl_weight: f64,
    pub batch_size: usize,
    pub topk: usize,
    pub dirichlet_alpha: f64,
    pub encoder_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub weighting: Weighting,
    pub stage2_divisor: Stage2Divisor,
    pub stage2_init: Stage2Init,
    pub harmony_freeze_encoders: bool,
    pub dataset: DatasetSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::ModalityMirror,
            seed: 0,
            n_clients: 100,
            missing_rate: 0.3,
            rounds: 200,
            local_epochs: 1,
            clients_per_round: 10,
            lr: 5e-4,
            temperature: 2.0,
            kl_weight: 1.0,
            batch_size: 16,
            topk: 5,
            dirichlet_alpha: 0.1,
            encoder_hidden: vec![64],
            embed_dim: 32,
            weighting: Weighting::Uniform,
            stage2_divisor: Stage2Divisor::Contributors,
            stage2_init: Stage2Init::Warm,
            harmony_freeze_encoders: false,
            dataset: DatasetSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn topology(&self) -> Topology {
        Topology {
            audio_dim: self.dataset.audio_dim,
            visual_dim: self.dataset.visual_dim,
            encoder_hidden: self.encoder_hidden.clone(),
            embed_dim: self.embed_dim,
            num_classes: self.dataset.num_classes,
        }
    }

    /// Checks that the engine can execute this configuration. Looser than
    /// [`RunConfig::validate`]: zero rounds and a zero learning rate are allowed.
    pub fn check_runnable(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        if self.n_clients == 0 {
            errs.push(FieldError::new("n_clients", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            errs.push(FieldError::new("missing_rate", "must lie in [0, 1]"));
        }
        if self.clients_per_round == 0 {
            errs.push(FieldError::new("clients_per_round", "must be at least 1"));
        }
        if self.clients_per_round > self.n_clients {
            errs.push(FieldError::new(
                "clients_per_round",
                format!("{} exceeds n_clients = {}", self.clients_per_round, self.n_clients),
            ));
        }
        if self.local_epochs == 0 {
            errs.push(FieldError::new("local_epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            errs.push(FieldError::new("batch_size", "must be at least 1"));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            errs.push(FieldError::new("lr", "must be a finite nonnegative number"));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            errs.push(FieldError::new("temperature", "must be positive"));
        }
        if !(self.kl_weight >= 0.0) || !self.kl_weight.is_finite() {
            errs.push(FieldError::new("kl_weight", "must be nonnegative"));
        }
        if self.topk == 0 || self.topk > self.dataset.num_classes {
            errs.push(FieldError::new(
                "topk",
                format!("must lie in [1, {}]", self.dataset.num_classes),
            ));
        }
        if !(self.dirichlet_alpha > 0.0) || !self.dirichlet_alpha.is_finite() {
            errs.push(FieldError::new("dirichlet_alpha", "must be positive"));
        }
        if self.embed_dim == 0 {
            errs.push(FieldError::new("embed_dim", "must be at least 1"));
        }
        if let Some(i) = self.encoder_hidden.iter().position(|&h| h == 0) {
            errs.push(FieldError::new(format!("encoder_hidden[{i}]"), "must be at least 1"));
        }
        if let Err(e) = self.dataset.validate() {
            errs.push(FieldError::new("dataset", e.to_string()));
        } else {
            let train = self.dataset.num_classes * (self.dataset.samples_per_class - self.dataset.test_per_class());
            if self.n_clients > train {
                errs.push(FieldError::new(
                    "n_clients",
                    format!("{} clients exceed the {train} training samples", self.n_clients),
                ));
            }
        }
        errs
    }

    /// Full validation for user-supplied configs.
    pub fn validate(&self) -> Vec<FieldError> {
        let mut errs = self.check_runnable();
        if self.rounds == 0 {
            errs.push(FieldError::new("rounds", "must be at least 1"));
        }
        if !(self.lr > 0.0) {
            errs.push(FieldError::new("lr", "must be positive"));
        }
        errs
    }
}
