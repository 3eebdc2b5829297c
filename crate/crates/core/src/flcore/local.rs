//! Client-side training routines.

use rand::seq::SliceRandom;

use super::aggregate::ClientUpdate;
use super::client::{ClientSpec, Phase};
use super::config::RunConfig;
use super::params::ParamSet;
use crate::datagen::{Modality, MultimodalDataset};
use crate::error::{Error, Result};
use crate::nnkit::{grad_ce, grad_distill, predict_proba, sgd_step, DistillWeights, LossGrad, Model, MultimodalModel, Topology, UnimodalModel};
use crate::rng::{derived_rng, stream, SimRng};

/// Identifies one client's task within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundCtx {
    pub phase: Phase,
    pub round: usize,
}

fn local_rng(cfg: &RunConfig, ctx: RoundCtx, client: usize) -> SimRng {
    derived_rng(
        cfg.seed,
        &[stream::LOCAL, ctx.phase.tag(), ctx.round as u64, client as u64],
    )
}

fn check_shard(client: &ClientSpec, data: &MultimodalDataset) -> Result<()> {
    if client.shard.is_empty() {
        return Err(Error::InvalidState(format!("client {} has an empty shard", client.id)));
    }
    if let Some(&bad) = client.shard.iter().find(|&&i| i >= data.train.len()) {
        return Err(Error::invalid(format!(
            "client {} references sample {bad} beyond the training split",
            client.id
        )));
    }
    Ok(())
}

/// Mini-batch SGD for `local_epochs` epochs over `n` local samples, reshuffled
/// each epoch. The first `frozen_prefix` parameters receive no update.
/// Returns the mean minibatch loss.
pub(crate) fn sgd_epochs<M, F>(
    model: &mut M,
    n: usize,
    cfg: &RunConfig,
    rng: &mut SimRng,
    frozen_prefix: usize,
    mut batch_grad: F,
) -> Result<f64>
where
    M: Model,
    F: FnMut(&M, &[usize]) -> Result<LossGrad>,
{
    let mut order: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    let mut batches = 0usize;
    for _ in 0..cfg.local_epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            let LossGrad { loss, mut grad } = batch_grad(model, batch)?;
            grad[..frozen_prefix].iter_mut().for_each(|g| *g = 0.0);
            let next = sgd_step(&model.to_flat(), &grad, cfg.lr)?;
            model.load_flat(&next)?;
            total += loss;
            batches += 1;
        }
    }
    Ok(total / batches as f64)
}

/// Cross-entropy training of an encoder+head on one modality of a shard.
pub(crate) fn train_unimodal(
    model: &mut UnimodalModel,
    inputs: &[&[f64]],
    labels: &[usize],
    cfg: &RunConfig,
    rng: &mut SimRng,
) -> Result<f64> {
    sgd_epochs(model, inputs.len(), cfg, rng, 0, |m, batch| {
        let xs: Vec<&[f64]> = batch.iter().map(|&j| inputs[j]).collect();
        let ys: Vec<usize> = batch.iter().map(|&j| labels[j]).collect();
        grad_ce(m, &xs, &ys)
    })
}

/// Audio classifier training on any client's audio features.
pub(crate) fn train_audio_on_shard(
    global: &ParamSet,
    client: &ClientSpec,
    data: &MultimodalDataset,
    cfg: &RunConfig,
    topology: &Topology,
    ctx: RoundCtx,
) -> Result<ClientUpdate> {
    check_shard(client, data)?;
    let mut model = global.audio_model(topology)?;
    let inputs: Vec<&[f64]> = client.shard.iter().map(|&i| data.train[i].audio.as_slice()).collect();
    let labels: Vec<usize> = client.shard.iter().map(|&i| data.train[i].label).collect();
    let mut rng = local_rng(cfg, ctx, client.id);
    let train_loss = train_unimodal(&mut model, &inputs, &labels, cfg, &mut rng)?;
    let mut params = ParamSet::default();
    params.set_audio_model(&model);
    Ok(ClientUpdate {
        client: client.id,
        modality: client.modality,
        num_samples: client.shard.len(),
        params,
        train_loss,
    })
}

/// Audio-only client step: train the audio encoder and audio head on CE.
/// The result carries no visual blocks.
pub fn local_train_audio(
    global: &ParamSet,
    client: &ClientSpec,
    data: &MultimodalDataset,
    cfg: &RunConfig,
    ctx: RoundCtx,
) -> Result<ClientUpdate> {
    if client.modality != Modality::AudioOnly {
        return Err(Error::Contract(format!(
            "local_train_audio called for multimodal client {}",
            client.id
        )));
    }
    train_audio_on_shard(global, client, data, cfg, &cfg.topology(), ctx)
}

pub(crate) fn train_fusion_on_shard(
    global: &ParamSet,
    client: &ClientSpec,
    data: &MultimodalDataset,
    cfg: &RunConfig,
    topology: &Topology,
    ctx: RoundCtx,
    freeze_encoders: bool,
) -> Result<ClientUpdate> {
    if client.modality != Modality::Multimodal {
        return Err(Error::Contract(format!(
            "client {} has no visual data for fusion training",
            client.id
        )));
    }
    check_shard(client, data)?;
    let mut model = global.multimodal_model(topology)?;
    let joint: Vec<Vec<f64>> = client
        .shard
        .iter()
        .map(|&i| [data.train[i].audio.as_slice(), &data.train[i].visual].concat())
        .collect();
    let labels: Vec<usize> = client.shard.iter().map(|&i| data.train[i].label).collect();
    let frozen = if freeze_encoders {
        model.audio_encoder.num_params() + model.visual_encoder.num_params()
    } else {
        0
    };
    let mut rng = local_rng(cfg, ctx, client.id);
    let train_loss = sgd_epochs(&mut model, joint.len(), cfg, &mut rng, frozen, |m: &MultimodalModel, batch| {
        let xs: Vec<&[f64]> = batch.iter().map(|&j| joint[j].as_slice()).collect();
        let ys: Vec<usize> = batch.iter().map(|&j| labels[j]).collect();
        grad_ce(m, &xs, &ys)
    })?;
    let mut params = ParamSet {
        audio_head: global.audio_head.clone(),
        ..ParamSet::default()
    };
    params.set_multimodal_model(&model);
    Ok(ClientUpdate {
        client: client.id,
        modality: client.modality,
        num_samples: client.shard.len(),
        params,
        train_loss,
    })
}

/// Multimodal client step: jointly train both encoders and the fusion head
/// on the late-fusion CE. The audio head is returned unchanged.
pub fn local_train_multimodal(
    global: &ParamSet,
    client: &ClientSpec,
    data: &MultimodalDataset,
    cfg: &RunConfig,
    ctx: RoundCtx,
) -> Result<ClientUpdate> {
    train_fusion_on_shard(global, client, data, cfg, &cfg.topology(), ctx, false)
}

pub(crate) fn distill_with_teacher(
    student_global: &ParamSet,
    teacher: &MultimodalModel,
    client: &ClientSpec,
    data: &MultimodalDataset,
    cfg: &RunConfig,
    topology: &Topology,
    ctx: RoundCtx,
) -> Result<ClientUpdate> {
    if client.modality != Modality::Multimodal {
        return Err(Error::Contract(format!(
            "distillation requires a multimodal client, client {} is audio-only",
            client.id
        )));
    }
    check_shard(client, data)?;
    let mut student = student_global.audio_model(topology)?;
    let samples: Vec<_> = client.shard.iter().map(|&i| &data.train[i]).collect();
    let weights = DistillWeights {
        temperature: cfg.temperature,
        kl_weight: cfg.kl_weight,
    };
    let mut rng = local_rng(cfg, ctx, client.id);
    let train_loss = sgd_epochs(&mut student, samples.len(), cfg, &mut rng, 0, |m: &UnimodalModel, batch| {
        let xs: Vec<&[f64]> = batch.iter().map(|&j| samples[j].audio.as_slice()).collect();
        let ys: Vec<usize> = batch.iter().map(|&j| samples[j].label).collect();
        if weights.kl_weight == 0.0 {
            return grad_ce(m, &xs, &ys);
        }
        let teacher_probs = batch
            .iter()
            .map(|&j| {
                let s = samples[j];
                predict_proba(teacher, &[s.audio.as_slice(), &s.visual].concat())
            })
            .collect::<Result<Vec<_>>>()?;
        grad_distill(m, &teacher_probs, &xs, &ys, weights)
    })?;
    let mut params = ParamSet::default();
    params.set_audio_model(&student);
    Ok(ClientUpdate {
        client: client.id,
        modality: client.modality,
        num_samples: client.shard.len(),
        params,
        train_loss,
    })
}

/// Stage-2 client step: train the audio student on
/// `CE + λ·KL(temper(p_student) ‖ temper(p_teacher))` against the frozen
/// multimodal teacher. Only audio blocks are returned.
pub fn distill_local(
    student_global: &ParamSet,
    teacher: &ParamSet,
    client: &ClientSpec,
    data: &MultimodalDataset,
    cfg: &RunConfig,
    ctx: RoundCtx,
) -> Result<ClientUpdate> {
    let topology = cfg.topology();
    let teacher_model = teacher.multimodal_model(&topology)?;
    distill_with_teacher(student_global, &teacher_model, client, data, cfg, &topology, ctx)
}
