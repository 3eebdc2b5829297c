//! Comparison strategies sharing the flcore engine, and a dispatcher that
//! runs any strategy into a common result type.

mod harmony;
mod unifl;

use serde::{Deserialize, Serialize};

pub use harmony::run_harmony;
pub use unifl::{cohort_quota, run_unifl};

use crate::datagen::MultimodalDataset;
use crate::error::Result;
use crate::flcore::{
    audio_class_report, run_modality_mirror, run_stage1, ChannelAudit, Federation, ParamSet, RunConfig, Strategy,
};
use crate::metrics::{ClassReport, RoundMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    /// Audio encoder and audio head.
    pub audio_model: ParamSet,
    pub multimodal_model: Option<ParamSet>,
    pub history: Vec<RoundMetrics>,
    /// Combined channel counters over every phase.
    pub audit: ChannelAudit,
    /// Final audio model on the test split.
    pub class_report: ClassReport,
}

impl StrategyResult {
    pub(crate) fn finish(
        fed: &Federation,
        strategy: Strategy,
        audio_model: ParamSet,
        multimodal_model: Option<ParamSet>,
        history: Vec<RoundMetrics>,
        audit: ChannelAudit,
    ) -> Result<Self> {
        let audio_model = audio_model.audio_view();
        let class_report = audio_class_report(&audio_model.audio_model(&fed.topology)?, fed.data)?;
        Ok(Self {
            strategy,
            audio_model,
            multimodal_model,
            history,
            audit,
            class_report,
        })
    }

    /// Last recorded audio top-1, or `None` for a zero-round run.
    pub fn final_audio_top1(&self) -> Option<f64> {
        self.history.last().map(|m| m.audio_top1)
    }
}

/// Stage-1 modality-aware FL on its own.
pub fn run_multifl(fed: &Federation) -> Result<StrategyResult> {
    let out = run_stage1(fed, fed.init_params()?)?;
    StrategyResult::finish(
        fed,
        Strategy::Multifl,
        out.global.audio_view(),
        Some(out.global),
        out.history,
        out.audit,
    )
}

/// Two-stage run; the multimodal model reported is the frozen teacher.
pub fn run_mirror(fed: &Federation) -> Result<StrategyResult> {
    let out = run_modality_mirror(fed)?;
    let mut audit = out.stage1_audit;
    audit.merge(&out.stage2_audit);
    StrategyResult::finish(
        fed,
        Strategy::ModalityMirror,
        out.audio_model,
        Some(out.teacher),
        out.history,
        audit,
    )
}

/// Runs `fed.cfg.strategy` on a prepared federation.
pub fn run_on(fed: &Federation) -> Result<StrategyResult> {
    match fed.cfg.strategy {
        Strategy::ModalityMirror => run_mirror(fed),
        Strategy::Unifl => run_unifl(fed),
        Strategy::Multifl => run_multifl(fed),
        Strategy::Harmony => run_harmony(fed),
    }
}

/// Builds the federation from the master seed and runs `cfg.strategy`.
pub fn run_strategy(cfg: &RunConfig, data: &MultimodalDataset) -> Result<StrategyResult> {
    run_on(&Federation::new(cfg, data)?)
}
