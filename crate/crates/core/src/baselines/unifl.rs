use super::StrategyResult;
use crate::datagen::Modality;
use crate::error::{Error, Result};
use crate::flcore::engine::{mean_loss, round_metrics, train_all};
use crate::flcore::local::{train_audio_on_shard, train_fusion_on_shard};
use crate::flcore::{aggregate_stage1, sample_round_clients, ChannelAudit, ClientSpec, Federation, Phase, RoundCtx, Strategy};

/// Clients drawn per round from a cohort: proportional share of `k`,
/// rounded, at least 1 for a nonempty cohort, at most the cohort size.
pub fn cohort_quota(k: usize, cohort: usize, population: usize) -> usize {
    if cohort == 0 || population == 0 {
        return 0;
    }
    let share = (k as f64 * cohort as f64 / population as f64).round() as usize;
    share.clamp(1, cohort)
}

/// Two disjoint federations: audio-only clients train the audio classifier,
/// multimodal clients train the fusion model. Nothing crosses cohorts.
pub fn run_unifl(fed: &Federation) -> Result<StrategyResult> {
    let cfg = &fed.cfg;
    let (audio, multi): (Vec<ClientSpec>, Vec<ClientSpec>) =
        fed.clients.iter().cloned().partition(|c| c.modality == Modality::AudioOnly);
    if audio.is_empty() {
        return Err(Error::Strategy(
            "UniFL needs audio-only clients to train its audio model, and the missing rate is 0".into(),
        ));
    }
    let n = fed.clients.len();
    let k_audio = cohort_quota(cfg.clients_per_round, audio.len(), n);
    let k_multi = cohort_quota(cfg.clients_per_round, multi.len(), n);

    let init = fed.init_params()?;
    let mut audio_global = init.audio_view();
    let mut multi_global = init;
    let mut audit = ChannelAudit::default();
    let mut history = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        // The audio cohort shares the stage-1 phase tag so that a population
        // with no multimodal clients reproduces modality-aware FL exactly.
        let ids = sample_round_clients(round, &audio, k_audio, cfg.seed, Phase::ModalityAware)?.audio_only;
        let jobs: Vec<_> = ids
            .iter()
            .map(|&id| {
                let c = fed.client(id);
                (c, audit.deliver(c, audio_global.clone()))
            })
            .collect();
        let ctx = RoundCtx { phase: Phase::ModalityAware, round };
        let audio_updates = train_all(&jobs, |c, p| train_audio_on_shard(p, c, fed.data, cfg, &fed.topology, ctx))?;
        audit.receive(audio_updates.len());
        audit.credit_audio_model(Modality::AudioOnly, audio_updates.len());
        audio_global = aggregate_stage1(&audio_global, &audio_updates, cfg.weighting)?;

        let mut losses = audio_updates;
        if k_multi > 0 {
            let ids = sample_round_clients(round, &multi, k_multi, cfg.seed, Phase::UniflMultimodal)?.multimodal;
            let jobs: Vec<_> = ids
                .iter()
                .map(|&id| {
                    let c = fed.client(id);
                    (c, audit.deliver(c, multi_global.clone()))
                })
                .collect();
            let ctx = RoundCtx { phase: Phase::UniflMultimodal, round };
            let updates = train_all(&jobs, |c, p| {
                train_fusion_on_shard(p, c, fed.data, cfg, &fed.topology, ctx, false)
            })?;
            audit.receive(updates.len());
            multi_global = aggregate_stage1(&multi_global, &updates, cfg.weighting)?;
            losses.extend(updates);
            losses.sort_by_key(|u| u.client);
        }
        let fusion = if multi.is_empty() {
            None
        } else {
            Some(multi_global.multimodal_model(&fed.topology)?)
        };
        history.push(round_metrics(
            fed,
            round,
            1,
            &audio_global.audio_model(&fed.topology)?,
            fusion.as_ref(),
            mean_loss(&losses),
        )?);
    }
    let multimodal_model = (!multi.is_empty()).then_some(multi_global);
    StrategyResult::finish(fed, Strategy::Unifl, audio_global, multimodal_model, history, audit)
}
