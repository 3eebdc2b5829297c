use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derived_rng, stream, SimRng};

/// Which sensors a client holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    AudioOnly,
    Multimodal,
}

/// Per-client lists of training-sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub shards: Vec<Vec<usize>>,
}

impl Partition {
    pub fn n_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn total(&self) -> usize {
        self.shards.iter().map(Vec::len).sum()
    }
}

/// Dirichlet(α, …, α) draw over `k` outcomes.
///
/// Sampled in log space (`G_α = G_{α+1} · U^{1/α}`) so that very small α does
/// not underflow every component to zero.
fn dirichlet(rng: &mut SimRng, k: usize, alpha: f64) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha + 1.0, 1.0).map_err(|e| Error::invalid(format!("gamma: {e}")))?;
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
            g.ln() + u.ln() / alpha
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / s).collect())
}

/// Label-skewed split of sample indices across clients.
///
/// For each class, client proportions are drawn from Dirichlet(α) and the
/// (shuffled) class members are cut at the cumulative proportions. Clients
/// left empty then receive one sample each from the currently largest shard.
pub fn dirichlet_partition(labels: &[usize], n_clients: usize, alpha: f64, seed: u64) -> Result<Partition> {
    if labels.is_empty() {
        return Err(Error::invalid("cannot partition an empty label list"));
    }
    if n_clients == 0 {
        return Err(Error::invalid("n_clients must be at least 1"));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if n_clients > labels.len() {
        return Err(Error::invalid(format!(
            "{n_clients} clients cannot all receive one of {} samples",
            labels.len()
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }

    let mut rng = derived_rng(seed, &[stream::PARTITION]);
    let mut shards = vec![Vec::new(); n_clients];
    for members in &mut by_class {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let props = dirichlet(&mut rng, n_clients, alpha)?;
        let n = members.len();
        let mut start = 0;
        let mut cum = 0.0;
        for (client, p) in props.iter().enumerate() {
            cum += p;
            let end = if client + 1 == n_clients {
                n
            } else {
                ((cum * n as f64).floor() as usize).clamp(start, n)
            };
            shards[client].extend_from_slice(&members[start..end]);
            start = end;
        }
    }

    for empty in 0..n_clients {
        if !shards[empty].is_empty() {
            continue;
        }
        let donor = (0..n_clients)
            .max_by(|&a, &b| shards[a].len().cmp(&shards[b].len()).then(b.cmp(&a)))
            .expect("n_clients >= 1");
        let moved = shards[donor].pop().expect("donor shard is the largest and nonempty");
        shards[empty].push(moved);
    }
    for s in &mut shards {
        s.sort_unstable();
    }
    Ok(Partition { shards })
}

/// Marks `round(r · n)` clients (ties upward) as audio-only via a seeded
/// shuffle; the rest are multimodal. For a fixed seed the audio-only set
/// grows monotonically with `r`.
pub fn assign_modalities(n_clients: usize, missing_rate: f64, seed: u64) -> Result<Vec<Modality>> {
    if !(0.0..=1.0).contains(&missing_rate) {
        return Err(Error::invalid(format!(
            "missing rate must lie in [0, 1], got {missing_rate}"
        )));
    }
    let n_audio = ((missing_rate * n_clients as f64).round() as usize).min(n_clients);
    let mut order: Vec<usize> = (0..n_clients).collect();
    order.shuffle(&mut derived_rng(seed, &[stream::MODALITY]));
    let mut out = vec![Modality::Multimodal; n_clients];
    for &id in &order[..n_audio] {
        out[id] = Modality::AudioOnly;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(classes: usize, per: usize) -> Vec<usize> {
        (0..classes).flat_map(|c| std::iter::repeat_n(c, per)).collect()
    }

    #[test]
    fn single_client_gets_everything() {
        let l = labels(3, 10);
        let p = dirichlet_partition(&l, 1, 0.1, 5).unwrap();
        assert_eq!(p.shards, vec![(0..30).collect::<Vec<_>>()]);
    }

    #[test]
    fn errors() {
        assert!(dirichlet_partition(&[], 3, 0.1, 0).is_err());
        assert!(dirichlet_partition(&[0, 1], 0, 0.1, 0).is_err());
        assert!(dirichlet_partition(&[0, 1], 2, 0.0, 0).is_err());
        assert!(dirichlet_partition(&[0, 1], 3, 1.0, 0).is_err());
        assert!(assign_modalities(10, 1.5, 0).is_err());
        assert!(assign_modalities(10, -0.1, 0).is_err());
    }

    #[test]
    fn small_alpha_has_no_empty_shards() {
        let l = labels(10, 160);
        for seed in 0..10 {
            let p = dirichlet_partition(&l, 100, 0.1, seed).unwrap();
            assert!(p.shards.iter().all(|s| !s.is_empty()));
            assert_eq!(p.total(), l.len());
        }
    }

    #[test]
    fn modality_counts() {
        let count = |v: &[Modality]| v.iter().filter(|&&m| m == Modality::AudioOnly).count();
        assert_eq!(count(&assign_modalities(10, 0.3, 4).unwrap()), 3);
        assert_eq!(count(&assign_modalities(10, 0.0, 4).unwrap()), 0);
        assert_eq!(count(&assign_modalities(10, 1.0, 4).unwrap()), 10);
        // 0.25 * 10 = 2.5 rounds toward more audio-only clients
        assert_eq!(count(&assign_modalities(10, 0.25, 4).unwrap()), 3);
    }

    #[test]
    fn audio_only_sets_are_nested() {
        let lo = assign_modalities(20, 0.1, 9).unwrap();
        let hi = assign_modalities(20, 0.5, 9).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            if *a == Modality::AudioOnly {
                assert_eq!(*b, Modality::AudioOnly);
            }
        }
    }

    proptest! {
        #[test]
        fn conservation(n_clients in 1usize..40, alpha in 0.05f64..50.0, seed in any::<u64>()) {
            let l = labels(7, 23);
            let p = dirichlet_partition(&l, n_clients, alpha, seed).unwrap();
            let mut all: Vec<usize> = p.shards.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..l.len()).collect::<Vec<_>>());
            prop_assert!(p.shards.iter().all(|s| !s.is_empty()));
            prop_assert_eq!(p, dirichlet_partition(&l, n_clients, alpha, seed).unwrap());
        }
    }
}
