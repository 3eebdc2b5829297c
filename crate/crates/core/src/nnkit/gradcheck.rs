//! Central finite-difference verification of the analytic gradients.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::grad::{batch_ce_loss, batch_distill_loss, grad_ce, grad_distill, predict_proba, DistillWeights};
use super::model::{AudioModel, Model, MultimodalModel, Topology};
use crate::error::Result;
use crate::rng::seeded_rng;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-8;

/// `(f(x + h e_i) − f(x − h e_i)) / 2h` for every coordinate.
pub fn central_differences<F>(f: F, point: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut x = point.to_vec();
    let mut out = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        x[i] = point[i] + h;
        let plus = f(&x)?;
        x[i] = point[i] - h;
        let minus = f(&x)?;
        x[i] = point[i];
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradComparison {
    pub coordinates: usize,
    /// Largest relative error among coordinates whose magnitude exceeds the absolute tolerance.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub failures: usize,
}

impl GradComparison {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

pub fn compare(analytic: &[f64], numeric: &[f64], rel_tol: f64, abs_tol: f64) -> GradComparison {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let mut cmp = GradComparison {
        coordinates: analytic.len(),
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        failures: 0,
    };
    for (&a, &n) in analytic.iter().zip(numeric) {
        let abs = (a - n).abs();
        cmp.max_abs_error = cmp.max_abs_error.max(abs);
        let scale = a.abs().max(n.abs());
        if scale <= abs_tol {
            continue;
        }
        let rel = abs / scale;
        cmp.max_rel_error = cmp.max_rel_error.max(rel);
        if abs > abs_tol && rel >= rel_tol {
            cmp.failures += 1;
        }
    }
    cmp
}

/// Shape of the randomized suite run by `gradcheck`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seeds: Vec<u64>,
    pub topology: Topology,
    pub batch_size: usize,
    pub temperatures: Vec<f64>,
    pub kl_weight: f64,
    pub step: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            topology: Topology {
                audio_dim: 8,
                visual_dim: 8,
                encoder_hidden: vec![16],
                embed_dim: 8,
                num_classes: 4,
            },
            batch_size: 6,
            temperatures: vec![1.0, 2.0, 4.0],
            kl_weight: 1.0,
            step: DEFAULT_STEP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteEntry {
    pub seed: u64,
    pub case: String,
    pub result: GradComparison,
}

fn normal_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<SuiteEntry>> {
    let t = &cfg.topology;
    let mut entries = Vec::new();
    for &seed in &cfg.seeds {
        let mut rng = seeded_rng(seed);
        let audio = AudioModel::new(t.glorot_audio_encoder(&mut rng)?, t.glorot_head(&mut rng)?)?;
        let fused = MultimodalModel::new(
            t.glorot_audio_encoder(&mut rng)?,
            t.glorot_visual_encoder(&mut rng)?,
            t.glorot_fusion_head(&mut rng)?,
        )?;
        let xa: Vec<Vec<f64>> = (0..cfg.batch_size).map(|_| normal_vec(&mut rng, t.audio_dim)).collect();
        let xv: Vec<Vec<f64>> = (0..cfg.batch_size).map(|_| normal_vec(&mut rng, t.visual_dim)).collect();
        let labels: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..t.num_classes)).collect();
        let audio_in: Vec<&[f64]> = xa.iter().map(Vec::as_slice).collect();
        let joint: Vec<Vec<f64>> = xa.iter().zip(&xv).map(|(a, v)| [a.as_slice(), v].concat()).collect();
        let joint_in: Vec<&[f64]> = joint.iter().map(Vec::as_slice).collect();

        let analytic = grad_ce(&audio, &audio_in, &labels)?.grad;
        let numeric = central_differences(
            |theta| {
                let mut m = audio.clone();
                m.load_flat(theta)?;
                batch_ce_loss(&m, &audio_in, &labels)
            },
            &audio.to_flat(),
            cfg.step,
        )?;
        entries.push(SuiteEntry {
            seed,
            case: "ce/audio".into(),
            result: compare(&analytic, &numeric, REL_TOL, ABS_TOL),
        });

        let analytic = grad_ce(&fused, &joint_in, &labels)?.grad;
        let numeric = central_differences(
            |theta| {
                let mut m = fused.clone();
                m.load_flat(theta)?;
                batch_ce_loss(&m, &joint_in, &labels)
            },
            &fused.to_flat(),
            cfg.step,
        )?;
        entries.push(SuiteEntry {
            seed,
            case: "ce/multimodal".into(),
            result: compare(&analytic, &numeric, REL_TOL, ABS_TOL),
        });

        let teacher: Vec<Vec<f64>> = joint_in
            .iter()
            .map(|x| predict_proba(&fused, x))
            .collect::<Result<_>>()?;
        for &temperature in &cfg.temperatures {
            let w = DistillWeights {
                temperature,
                kl_weight: cfg.kl_weight,
            };
            let analytic = grad_distill(&audio, &teacher, &audio_in, &labels, w)?.grad;
            let numeric = central_differences(
                |theta| {
                    let mut m = audio.clone();
                    m.load_flat(theta)?;
                    batch_distill_loss(&m, &teacher, &audio_in, &labels, w)
                },
                &audio.to_flat(),
                cfg.step,
            )?;
            entries.push(SuiteEntry {
                seed,
                case: format!("distill/T={temperature}"),
                result: compare(&analytic, &numeric, REL_TOL, ABS_TOL),
            });
        }
    }
    Ok(entries)
}
