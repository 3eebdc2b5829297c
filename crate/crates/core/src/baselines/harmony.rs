use super::StrategyResult;
use crate::datagen::Modality;
use crate::error::Result;
use crate::flcore::aggregate::running_mean;
use crate::flcore::engine::{mean_loss, round_metrics, train_all};
use crate::flcore::local::{train_audio_on_shard, train_fusion_on_shard, train_unimodal};
use crate::flcore::{
    aggregate_stage1, init_block, sample_round_clients, Block, ChannelAudit, ClientSpec, ClientUpdate, Federation,
    ParamSet, Phase, RoundCtx, Strategy, Weighting,
};
use crate::nnkit::{Model, UnimodalModel};
use crate::rng::{derived_rng, stream};

/// Salt for the temporary visual head used only during unimodal training.
const VISUAL_HEAD_SALT: u64 = 200;

/// Visual encoder plus its temporary classification head.
#[derive(Debug, Clone)]
struct VisualUpdate {
    num_samples: usize,
    encoder: Vec<f64>,
    head: Vec<f64>,
}

fn train_visual(
    fed: &Federation,
    client: &ClientSpec,
    encoder: &[f64],
    head: &[f64],
    round: usize,
) -> Result<VisualUpdate> {
    let topo = &fed.topology;
    let mut model = UnimodalModel::new(topo.visual_encoder()?, topo.head()?)?;
    model.load_flat(&[encoder, head].concat())?;
    let inputs: Vec<&[f64]> = client.shard.iter().map(|&i| fed.data.train[i].visual.as_slice()).collect();
    let labels: Vec<usize> = client.shard.iter().map(|&i| fed.data.train[i].label).collect();
    // Offset the phase tag so the visual shuffle is independent of the audio one.
    let mut rng = derived_rng(
        fed.cfg.seed,
        &[stream::LOCAL, Phase::HarmonyUnimodal.tag(), round as u64, client.id as u64, 1],
    );
    train_unimodal(&mut model, &inputs, &labels, &fed.cfg, &mut rng)?;
    Ok(VisualUpdate {
        num_samples: client.shard.len(),
        encoder: model.encoder.to_flat(),
        head: model.head.to_flat(),
    })
}

fn average_visual(updates: &[VisualUpdate], weighting: Weighting) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = |u: &VisualUpdate| match weighting {
        Weighting::Uniform => 1.0,
        Weighting::DataSize => u.num_samples as f64,
    };
    let enc: Vec<_> = updates.iter().map(|u| (u.encoder.as_slice(), w(u))).collect();
    let head: Vec<_> = updates.iter().map(|u| (u.head.as_slice(), w(u))).collect();
    Ok((running_mean(&enc)?, running_mean(&head)?))
}

/// Two-stage baseline. Stage 1 trains an audio classifier on every sampled
/// client and a visual classifier on sampled multimodal clients. Stage 2
/// fine-tunes a fusion model built on the stage-1 encoders among multimodal
/// clients. The reported audio model is the stage-1 audio classifier, so its
/// metrics do not depend on the missing rate.
pub fn run_harmony(fed: &Federation) -> Result<StrategyResult> {
    let cfg = &fed.cfg;
    let topo = &fed.topology;
    let init = fed.init_params()?;
    let mut audio = init.audio_view();
    let mut visual_encoder = init.visual_encoder.clone().expect("init has every block");
    let mut visual_head = init_block(topo, Block::AudioHead, cfg.seed, VISUAL_HEAD_SALT)?;
    let mut audit = ChannelAudit::default();
    let mut history = Vec::with_capacity(2 * cfg.rounds);

    for round in 0..cfg.rounds {
        let sample = sample_round_clients(round, &fed.clients, cfg.clients_per_round, cfg.seed, Phase::HarmonyUnimodal)?;
        let mut ids: Vec<usize> = sample.audio_only.iter().chain(&sample.multimodal).copied().collect();
        ids.sort_unstable();
        let jobs: Vec<_> = ids
            .iter()
            .map(|&id| {
                let c = fed.client(id);
                (c, audit.deliver(c, audio.clone()))
            })
            .collect();
        let ctx = RoundCtx { phase: Phase::HarmonyUnimodal, round };
        let audio_updates: Vec<ClientUpdate> = train_all(&jobs, |c, p| {
            let mut u = train_audio_on_shard(p, c, fed.data, cfg, topo, ctx)?;
            as_audio_cohort(&mut u);
            Ok(u)
        })?;
        audit.receive(audio_updates.len());
        for &id in &ids {
            audit.credit_audio_model(fed.client(id).modality, 1);
        }
        audio = aggregate_stage1(&audio, &audio_updates, cfg.weighting)?;

        let visual_jobs: Vec<_> = sample
            .multimodal
            .iter()
            .map(|&id| {
                let c = fed.client(id);
                let payload = ParamSet {
                    visual_encoder: Some(visual_encoder.clone()),
                    ..ParamSet::default()
                };
                (c, audit.deliver(c, payload))
            })
            .collect();
        if !visual_jobs.is_empty() {
            let updates = train_all(&visual_jobs, |c, p| {
                train_visual(fed, c, p.visual_encoder.as_deref().unwrap_or_default(), &visual_head, round)
            })?;
            audit.receive(updates.len());
            (visual_encoder, visual_head) = average_visual(&updates, cfg.weighting)?;
        }
        history.push(round_metrics(
            fed,
            round,
            1,
            &audio.audio_model(topo)?,
            None,
            mean_loss(&audio_updates),
        )?);
    }

    let audio_model = audio.audio_model(topo)?;
    let mut fusion = ParamSet {
        audio_encoder: audio.audio_encoder.clone(),
        visual_encoder: Some(visual_encoder),
        audio_head: None,
        fusion_head: init.fusion_head.clone(),
    };
    for round in 0..cfg.rounds {
        let sample = sample_round_clients(round, &fed.clients, cfg.clients_per_round, cfg.seed, Phase::HarmonyFusion)?;
        let jobs: Vec<_> = sample
            .multimodal
            .iter()
            .map(|&id| {
                let c = fed.client(id);
                (c, audit.deliver(c, fusion.clone()))
            })
            .collect();
        let ctx = RoundCtx { phase: Phase::HarmonyFusion, round };
        let updates = train_all(&jobs, |c, p| {
            train_fusion_on_shard(p, c, fed.data, cfg, topo, ctx, cfg.harmony_freeze_encoders)
        })?;
        audit.receive(updates.len());
        if !updates.is_empty() {
            fusion = aggregate_stage1(&fusion, &updates, cfg.weighting)?;
        }
        history.push(round_metrics(
            fed,
            round,
            2,
            &audio_model,
            Some(&fusion.multimodal_model(topo)?),
            mean_loss(&updates),
        )?);
    }
    StrategyResult::finish(fed, Strategy::Harmony, audio, Some(fusion), history, audit)
}

/// Every client trains the audio classifier here, so the update is owned by
/// the audio cohort for aggregation purposes.
fn as_audio_cohort(u: &mut ClientUpdate) {
    u.modality = Modality::AudioOnly;
}
