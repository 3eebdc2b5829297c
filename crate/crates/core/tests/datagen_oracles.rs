mod common;

use common::{balanced_labels, concentrated_clients, near_uniform_cells};
use mmirror::datagen::{dirichlet_partition, generate_dataset, read_dataset, write_dataset, DatasetSpec, Sample};

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Multinomial logistic regression by full-batch gradient descent.
fn linear_probe(train: &[Sample], classes: usize, dim: usize) -> impl Fn(&[f64]) -> usize {
    let mut w = vec![vec![0.0; dim + 1]; classes];
    for _ in 0..300 {
        let mut g = vec![vec![0.0; dim + 1]; classes];
        for s in train {
            let z: Vec<f64> = w
                .iter()
                .map(|row| row[dim] + row[..dim].iter().zip(&s.audio).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let p = softmax(&z);
            for c in 0..classes {
                let err = p[c] - f64::from(u8::from(c == s.label));
                for j in 0..dim {
                    g[c][j] += err * s.audio[j];
                }
                g[c][dim] += err;
            }
        }
        for c in 0..classes {
            for j in 0..=dim {
                w[c][j] -= 0.1 * g[c][j] / train.len() as f64;
            }
        }
    }
    move |x: &[f64]| {
        let z: Vec<f64> = w
            .iter()
            .map(|row| row[dim] + row[..dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        (0..classes).fold(0, |best, c| if z[c] > z[best] { c } else { best })
    }
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let d = |c: &Vec<f64>| c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    (0..centers.len()).fold(0, |best, c| if d(&centers[c]) < d(&centers[best]) { c } else { best })
}

#[test]
fn unambiguous_audio_is_linearly_separable() {
    let spec = DatasetSpec {
        audio_ambiguous_pairs: vec![],
        audio_noise_sigma: 0.1,
        visual_noise_sigma: 0.1,
        ..DatasetSpec::default()
    };
    let ds = generate_dataset(&spec).unwrap();
    let probe = linear_probe(&ds.train, spec.num_classes, spec.audio_dim);
    let acc = ds.test.iter().filter(|s| probe(&s.audio) == s.label).count() as f64 / ds.test.len() as f64;
    assert!(acc > 0.95, "linear probe accuracy {acc}");
}

#[test]
fn ambiguous_pair_needs_vision() {
    let spec = DatasetSpec {
        audio_ambiguous_pairs: vec![(0, 1)],
        audio_noise_sigma: 0.1,
        visual_noise_sigma: 0.1,
        ..DatasetSpec::default()
    };
    let ds = generate_dataset(&spec).unwrap();
    let pair: Vec<&Sample> = ds.test.iter().filter(|s| s.label < 2).collect();
    let audio_centers = &ds.audio_centers[..2];
    let audio_acc = pair.iter().filter(|s| nearest(audio_centers, &s.audio) == s.label).count() as f64 / pair.len() as f64;
    let joint: Vec<Vec<f64>> = (0..2)
        .map(|c| [ds.audio_centers[c].as_slice(), &ds.visual_centers[c]].concat())
        .collect();
    let joint_acc = pair
        .iter()
        .filter(|s| nearest(&joint, &[s.audio.as_slice(), &s.visual].concat()) == s.label)
        .count() as f64
        / pair.len() as f64;
    assert!((audio_acc - 0.5).abs() < 0.05, "audio-only accuracy {audio_acc}");
    assert!(joint_acc > 0.99, "audio-visual accuracy {joint_acc}");
}

#[test]
fn ambiguous_pair_is_visually_far_apart() {
    let ds = generate_dataset(&DatasetSpec::default()).unwrap();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mut min_other = f64::INFINITY;
    for a in 0..10 {
        for b in a + 1..10 {
            if !ds.spec.audio_ambiguous_pairs.contains(&(a, b)) {
                min_other = min_other.min(dist(&ds.visual_centers[a], &ds.visual_centers[b]));
            }
        }
    }
    for &(a, b) in &ds.spec.audio_ambiguous_pairs {
        assert_eq!(dist(&ds.audio_centers[a], &ds.audio_centers[b]), 0.0);
        assert!(dist(&ds.visual_centers[a], &ds.visual_centers[b]) >= min_other);
    }
}

#[test]
fn large_alpha_is_near_uniform() {
    let labels = balanced_labels(10, 1000);
    let (mut ok, mut total) = (0, 0);
    for seed in 0..5 {
        let p = dirichlet_partition(&labels, 10, 1000.0, seed).unwrap();
        let (o, t) = near_uniform_cells(&p, &labels, 10, 0.2);
        ok += o;
        total += t;
    }
    assert!(ok as f64 >= 0.95 * total as f64, "{ok}/{total} cells near uniform");
}

#[test]
fn small_alpha_concentrates_clients() {
    let labels = balanced_labels(10, 1000);
    for seed in 0..5 {
        let p = dirichlet_partition(&labels, 10, 0.1, seed).unwrap();
        let c = concentrated_clients(&p, &labels, 10);
        assert!(c >= 5, "seed {seed}: only {c} of 10 clients concentrated");
    }
}

#[test]
fn serialized_dataset_round_trips() {
    let ds = generate_dataset(&DatasetSpec {
        samples_per_class: 10,
        ..DatasetSpec::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    write_dataset(&ds, &path).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back, ds);
    let path2 = dir.path().join("e.jsonl");
    write_dataset(&back, &path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}
