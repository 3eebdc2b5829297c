#![allow(dead_code)]

use mmirror::datagen::{DatasetSpec, Partition};
use mmirror::flcore::RunConfig;

/// Class histogram of every shard.
pub fn histograms(p: &Partition, labels: &[usize], classes: usize) -> Vec<Vec<usize>> {
    p.shards
        .iter()
        .map(|s| {
            let mut h = vec![0; classes];
            for &i in s {
                h[labels[i]] += 1;
            }
            h
        })
        .collect()
}

/// (cells within `tol` of the uniform count, total cells).
pub fn near_uniform_cells(p: &Partition, labels: &[usize], classes: usize, tol: f64) -> (usize, usize) {
    let per_class = labels.len() as f64 / classes as f64;
    let expected = per_class / p.n_clients() as f64;
    let h = histograms(p, labels, classes);
    let ok = h
        .iter()
        .flatten()
        .filter(|&&c| (c as f64 - expected).abs() <= tol * expected)
        .count();
    (ok, h.len() * classes)
}

/// Clients with at least 60% of their samples in their top two classes.
pub fn concentrated_clients(p: &Partition, labels: &[usize], classes: usize) -> usize {
    histograms(p, labels, classes)
        .into_iter()
        .filter(|h| {
            let total: usize = h.iter().sum();
            let mut s = h.clone();
            s.sort_unstable_by(|a, b| b.cmp(a));
            total > 0 && (s[0] + s[1]) as f64 >= 0.6 * total as f64
        })
        .count()
}

pub fn balanced_labels(classes: usize, per_class: usize) -> Vec<usize> {
    (0..classes).flat_map(|c| std::iter::repeat_n(c, per_class)).collect()
}

/// Small federation for fast engine tests.
pub fn tiny_config() -> RunConfig {
    RunConfig {
        n_clients: 8,
        clients_per_round: 4,
        rounds: 3,
        lr: 0.01,
        batch_size: 4,
        encoder_hidden: vec![8],
        embed_dim: 6,
        topk: 2,
        dataset: DatasetSpec {
            num_classes: 4,
            audio_dim: 4,
            visual_dim: 3,
            samples_per_class: 20,
            audio_ambiguous_pairs: vec![(0, 1)],
            ..DatasetSpec::default()
        },
        ..RunConfig::default()
    }
}
