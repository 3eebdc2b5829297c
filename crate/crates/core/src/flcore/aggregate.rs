//! Modality-aware FedAvg.

use serde::{Deserialize, Serialize};

use super::config::Weighting;
use super::params::{Block, ParamSet};
use crate::datagen::Modality;
use crate::error::{Error, Result};

/// What a client sends back after local training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub client: usize,
    pub modality: Modality,
    pub num_samples: usize,
    pub params: ParamSet,
    /// Mean minibatch loss over the local run.
    pub train_loss: f64,
}

/// Weighted mean as a running update `m += (w_k / W_k)(x_k − m)`.
///
/// Identical inputs reproduce the input bit-for-bit, and each coordinate stays
/// within the range of its inputs.
pub(crate) fn running_mean(vectors: &[(&[f64], f64)]) -> Result<Vec<f64>> {
    let (first, w0) = vectors
        .first()
        .ok_or_else(|| Error::invalid("nothing to average"))?;
    let mut mean = first.to_vec();
    let mut total = *w0;
    for &(v, w) in &vectors[1..] {
        if v.len() != mean.len() {
            return Err(Error::invalid(format!(
                "cannot average vectors of length {} and {}",
                mean.len(),
                v.len()
            )));
        }
        total += w;
        let frac = w / total;
        for (m, x) in mean.iter_mut().zip(v) {
            *m += frac * (x - *m);
        }
    }
    Ok(mean)
}

fn weight(u: &ClientUpdate, weighting: Weighting) -> f64 {
    match weighting {
        Weighting::Uniform => 1.0,
        Weighting::DataSize => u.num_samples as f64,
    }
}

fn average_block(updates: &[&ClientUpdate], block: Block, weighting: Weighting) -> Result<Vec<f64>> {
    let vectors = updates
        .iter()
        .map(|u| {
            u.params
                .get(block)
                .map(|v| (v.as_slice(), weight(u, weighting)))
                .ok_or_else(|| {
                    Error::InvalidState(format!(
                        "update from client {} lacks the {} block",
                        u.client,
                        block.name()
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    running_mean(&vectors)
}

fn canonical(updates: &[ClientUpdate]) -> Vec<&ClientUpdate> {
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client);
    sorted
}

/// Stage-1 server step.
///
/// * audio encoder: mean over every participant;
/// * visual encoder and fusion head: mean over multimodal participants, else carried over;
/// * audio head: mean over audio-only participants, else carried over.
pub fn aggregate_stage1(previous: &ParamSet, updates: &[ClientUpdate], weighting: Weighting) -> Result<ParamSet> {
    if updates.is_empty() {
        return Err(Error::invalid("stage-1 aggregation needs at least one update"));
    }
    let all = canonical(updates);
    if let Some(u) = all
        .iter()
        .find(|u| u.modality == Modality::AudioOnly && u.params.has_visual())
    {
        return Err(Error::Contract(format!(
            "audio-only client {} returned visual parameters",
            u.client
        )));
    }
    let audio: Vec<&ClientUpdate> = all.iter().copied().filter(|u| u.modality == Modality::AudioOnly).collect();
    let multi: Vec<&ClientUpdate> = all.iter().copied().filter(|u| u.modality == Modality::Multimodal).collect();

    let mut next = previous.clone();
    next.audio_encoder = Some(average_block(&all, Block::AudioEncoder, weighting)?);
    if !multi.is_empty() {
        next.visual_encoder = Some(average_block(&multi, Block::VisualEncoder, weighting)?);
        next.fusion_head = Some(average_block(&multi, Block::FusionHead, weighting)?);
    }
    if !audio.is_empty() {
        next.audio_head = Some(average_block(&audio, Block::AudioHead, weighting)?);
    }
    Ok(next)
}

/// Stage-2 server step over distilled students: audio encoder and head
/// averaged over contributors. With `divisor = Some(n)` the weighted sum is
/// divided by `n` instead of by the contributor count.
pub fn aggregate_stage2(
    previous: &ParamSet,
    updates: &[ClientUpdate],
    weighting: Weighting,
    divisor: Option<usize>,
) -> Result<ParamSet> {
    if updates.is_empty() {
        return Err(Error::invalid("stage-2 aggregation needs at least one update"));
    }
    let all = canonical(updates);
    if let Some(u) = all.iter().find(|u| u.params.has_visual()) {
        return Err(Error::Contract(format!(
            "student update from client {} carries visual parameters",
            u.client
        )));
    }
    let scale = match divisor {
        None => 1.0,
        Some(0) => return Err(Error::invalid("stage-2 divisor is zero")),
        Some(n) => all.len() as f64 / n as f64,
    };
    let mut next = previous.clone();
    for block in [Block::AudioEncoder, Block::AudioHead] {
        let mut mean = average_block(&all, block, weighting)?;
        if scale != 1.0 {
            mean.iter_mut().for_each(|v| *v *= scale);
        }
        *next.slot(block) = Some(mean);
    }
    Ok(next)
}
