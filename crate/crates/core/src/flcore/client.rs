use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::datagen::{Modality, Partition};
use crate::error::{Error, Result};
use crate::rng::{derived_rng, stream};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientSpec {
    pub id: usize,
    pub modality: Modality,
    /// Indices into the training split.
    pub shard: Vec<usize>,
}

/// Training phases. The tag is folded into every derived seed, so the same
/// client in the same round draws independent randomness in each phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    ModalityAware = 1,
    Distillation = 2,
    UniflMultimodal = 3,
    HarmonyUnimodal = 4,
    HarmonyFusion = 5,
}

impl Phase {
    pub fn tag(self) -> u64 {
        self as u64
    }
}

pub fn build_clients(partition: &Partition, modalities: &[Modality]) -> Result<Vec<ClientSpec>> {
    if partition.n_clients() != modalities.len() {
        return Err(Error::invalid(format!(
            "partition has {} shards but {} modality assignments",
            partition.n_clients(),
            modalities.len()
        )));
    }
    Ok(partition
        .shards
        .iter()
        .zip(modalities)
        .enumerate()
        .map(|(id, (shard, &modality))| ClientSpec {
            id,
            modality,
            shard: shard.clone(),
        })
        .collect())
}

/// Clients selected for one round, split by modality, ascending ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RoundSample {
    pub audio_only: Vec<usize>,
    pub multimodal: Vec<usize>,
}

impl RoundSample {
    pub fn len(&self) -> usize {
        self.audio_only.len() + self.multimodal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws `k` distinct clients uniformly without replacement from `clients`.
/// The draw depends only on `(seed, phase, round)` and the population.
pub fn sample_round_clients(
    round: usize,
    clients: &[ClientSpec],
    k: usize,
    seed: u64,
    phase: Phase,
) -> Result<RoundSample> {
    if k > clients.len() {
        return Err(Error::invalid(format!(
            "cannot sample {k} clients from a population of {}",
            clients.len()
        )));
    }
    let mut rng = derived_rng(seed, &[stream::SAMPLING, phase.tag(), round as u64]);
    let mut picked: Vec<&ClientSpec> = index::sample(&mut rng, clients.len(), k)
        .into_iter()
        .map(|i| &clients[i])
        .collect();
    picked.sort_by_key(|c| c.id);
    let mut out = RoundSample::default();
    for c in picked {
        match c.modality {
            Modality::AudioOnly => out.audio_only.push(c.id),
            Modality::Multimodal => out.multimodal.push(c.id),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::assign_modalities;

    fn population(n: usize, r: f64) -> Vec<ClientSpec> {
        let mods = assign_modalities(n, r, 3).unwrap();
        let part = Partition {
            shards: (0..n).map(|i| vec![i]).collect(),
        };
        build_clients(&part, &mods).unwrap()
    }

    #[test]
    fn full_sample_covers_everyone() {
        let clients = population(10, 0.3);
        let s = sample_round_clients(4, &clients, 10, 1, Phase::ModalityAware).unwrap();
        let mut all: Vec<usize> = s.audio_only.iter().chain(&s.multimodal).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(s.audio_only.len(), 3);
        assert_eq!(s.multimodal.len(), 7);
    }

    #[test]
    fn draws_are_reproducible_and_distinct() {
        let clients = population(50, 0.5);
        let a = sample_round_clients(7, &clients, 10, 9, Phase::ModalityAware).unwrap();
        assert_eq!(a, sample_round_clients(7, &clients, 10, 9, Phase::ModalityAware).unwrap());
        assert_ne!(a, sample_round_clients(8, &clients, 10, 9, Phase::ModalityAware).unwrap());
        assert_eq!(a.len(), 10);
        let mut ids: Vec<usize> = a.audio_only.iter().chain(&a.multimodal).copied().collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn oversampling_fails() {
        let clients = population(5, 0.0);
        assert!(sample_round_clients(0, &clients, 6, 0, Phase::ModalityAware).is_err());
    }

    #[test]
    fn mismatched_inputs_fail() {
        let part = Partition { shards: vec![vec![0], vec![1]] };
        assert!(build_clients(&part, &[Modality::AudioOnly]).is_err());
    }
}
