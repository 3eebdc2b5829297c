use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{derived_rng, stream, SimRng};

/// Fraction of each class held out for the global test split.
pub const TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub audio_dim: usize,
    pub visual_dim: usize,
    pub samples_per_class: usize,
    /// Class pairs that share one audio center and differ only visually.
    pub audio_ambiguous_pairs: Vec<(usize, usize)>,
    pub audio_noise_sigma: f64,
    pub visual_noise_sigma: f64,
    pub audio_radius: f64,
    pub visual_radius: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            audio_dim: 16,
            visual_dim: 16,
            samples_per_class: 200,
            audio_ambiguous_pairs: vec![(0, 1), (2, 3)],
            audio_noise_sigma: 1.0,
            visual_noise_sigma: 1.0,
            audio_radius: 5.0,
            visual_radius: 5.0,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes must be at least 2"));
        }
        if self.audio_dim < 2 || self.visual_dim < 2 {
            return Err(Error::invalid("feature dimensions must be at least 2"));
        }
        if self.test_per_class() == 0 || self.test_per_class() >= self.samples_per_class {
            return Err(Error::invalid(format!(
                "samples_per_class = {} leaves an empty train or test split",
                self.samples_per_class
            )));
        }
        for (name, v) in [
            ("audio_noise_sigma", self.audio_noise_sigma),
            ("visual_noise_sigma", self.visual_noise_sigma),
            ("audio_radius", self.audio_radius),
            ("visual_radius", self.visual_radius),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let mut seen = vec![false; self.num_classes];
        for &(a, b) in &self.audio_ambiguous_pairs {
            if a >= self.num_classes || b >= self.num_classes {
                return Err(Error::invalid(format!(
                    "ambiguous pair ({a}, {b}) out of range for {} classes",
                    self.num_classes
                )));
            }
            if a == b || seen[a] || seen[b] {
                return Err(Error::invalid(format!(
                    "ambiguous pair ({a}, {b}) overlaps another pair or itself"
                )));
            }
            seen[a] = true;
            seen[b] = true;
        }
        Ok(())
    }

    pub fn test_per_class(&self) -> usize {
        (self.samples_per_class as f64 * TEST_FRACTION).round() as usize
    }

    /// Whether a class belongs to an audio-ambiguous pair.
    pub fn is_ambiguous(&self, class: usize) -> bool {
        self.audio_ambiguous_pairs
            .iter()
            .any(|&(a, b)| a == class || b == class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub audio: Vec<f64>,
    pub visual: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalDataset {
    pub spec: DatasetSpec,
    pub audio_centers: Vec<Vec<f64>>,
    pub visual_centers: Vec<Vec<f64>>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl MultimodalDataset {
    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn train_labels(&self) -> Vec<usize> {
        self.train.iter().map(|s| s.label).collect()
    }

    pub fn test_labels(&self) -> Vec<usize> {
        self.test.iter().map(|s| s.label).collect()
    }

    /// SHA-256 over the canonical serialized form of the test split.
    pub fn test_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.test {
            h.update(s.label.to_le_bytes());
            for v in s.audio.iter().chain(&s.visual) {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn sphere_point(rng: &mut SimRng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x * radius / norm).collect();
        }
    }
}

/// Class-conditional Gaussian clusters on two modalities.
///
/// Every class gets a random audio center and a random visual center on
/// spheres of the configured radii. Each ambiguous pair then collapses both
/// audio centers onto their midpoint and places the second visual center
/// antipodal to the first, so the pair is inseparable from audio alone and
/// maximally separated visually.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<MultimodalDataset> {
    spec.validate()?;
    let mut rng = derived_rng(spec.seed, &[stream::DATASET]);
    let mut audio_centers: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| sphere_point(&mut rng, spec.audio_dim, spec.audio_radius))
        .collect();
    let mut visual_centers: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| sphere_point(&mut rng, spec.visual_dim, spec.visual_radius))
        .collect();
    for &(a, b) in &spec.audio_ambiguous_pairs {
        let mid: Vec<f64> = audio_centers[a]
            .iter()
            .zip(&audio_centers[b])
            .map(|(x, y)| 0.5 * (x + y))
            .collect();
        audio_centers[a] = mid.clone();
        audio_centers[b] = mid;
        visual_centers[b] = visual_centers[a].iter().map(|x| -x).collect();
    }

    let n_test = spec.test_per_class();
    let n_train = spec.samples_per_class - n_test;
    let mut train = Vec::with_capacity(n_train * spec.num_classes);
    let mut test = Vec::with_capacity(n_test * spec.num_classes);
    for class in 0..spec.num_classes {
        for i in 0..spec.samples_per_class {
            let audio = audio_centers[class]
                .iter()
                .map(|c| c + spec.audio_noise_sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let visual = visual_centers[class]
                .iter()
                .map(|c| c + spec.visual_noise_sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let sample = Sample {
                audio,
                visual,
                label: class,
            };
            if i < n_train {
                train.push(sample);
            } else {
                test.push(sample);
            }
        }
    }
    Ok(MultimodalDataset {
        spec: spec.clone(),
        audio_centers,
        visual_centers,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn same_seed_same_data() {
        let spec = DatasetSpec::default();
        assert_eq!(generate_dataset(&spec).unwrap(), generate_dataset(&spec).unwrap());
        let other = DatasetSpec { seed: 1, ..spec.clone() };
        assert_ne!(generate_dataset(&spec).unwrap().train, generate_dataset(&other).unwrap().train);
    }

    #[test]
    fn split_sizes_and_labels() {
        let ds = generate_dataset(&DatasetSpec::default()).unwrap();
        assert_eq!(ds.train.len(), 1600);
        assert_eq!(ds.test.len(), 400);
        for c in 0..10 {
            assert_eq!(ds.test.iter().filter(|s| s.label == c).count(), 40);
        }
        assert!(ds.train.iter().all(|s| s.audio.len() == 16 && s.visual.len() == 16 && s.label < 10));
    }

    #[test]
    fn ambiguity_construction() {
        let spec = DatasetSpec::default();
        let ds = generate_dataset(&spec).unwrap();
        let mut min_other = f64::INFINITY;
        for a in 0..10 {
            for b in (a + 1)..10 {
                if !spec.audio_ambiguous_pairs.contains(&(a, b)) {
                    min_other = min_other.min(dist(&ds.visual_centers[a], &ds.visual_centers[b]));
                    assert!(dist(&ds.audio_centers[a], &ds.audio_centers[b]) > 1e-6);
                }
            }
        }
        for &(a, b) in &spec.audio_ambiguous_pairs {
            assert_eq!(dist(&ds.audio_centers[a], &ds.audio_centers[b]), 0.0);
            assert!(dist(&ds.visual_centers[a], &ds.visual_centers[b]) >= min_other);
        }
    }

    #[test]
    fn rejects_bad_pairs() {
        let bad = DatasetSpec {
            audio_ambiguous_pairs: vec![(0, 10)],
            ..DatasetSpec::default()
        };
        assert!(matches!(generate_dataset(&bad), Err(Error::InvalidInput(_))));
        let overlap = DatasetSpec {
            audio_ambiguous_pairs: vec![(0, 1), (1, 2)],
            ..DatasetSpec::default()
        };
        assert!(generate_dataset(&overlap).is_err());
        let tiny = DatasetSpec {
            num_classes: 1,
            ..DatasetSpec::default()
        };
        assert!(generate_dataset(&tiny).is_err());
    }
}
