use super::loss::{
    cross_entropy, kl_div, ln_floor, log_softmax_unchecked, softmax, softmax_unchecked, temper,
    PROB_FLOOR,
};
use super::model::{AudioModel, Model};
use crate::error::{Error, Result};

/// Mean batch loss together with its flat parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Weights of the distillation objective `CE + kl_weight · KL(temper(p_s) ‖ temper(p_t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillWeights {
    pub temperature: f64,
    pub kl_weight: f64,
}

fn check_batch(n_inputs: usize, labels: &[usize], num_classes: usize) -> Result<()> {
    if n_inputs == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if n_inputs != labels.len() {
        return Err(Error::invalid(format!(
            "{n_inputs} inputs but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {num_classes} classes")));
    }
    Ok(())
}

/// Loss and `∂loss/∂logits` for floored cross-entropy on one sample.
fn ce_logit_grad(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let ls = log_softmax_unchecked(logits);
    let floor = PROB_FLOOR.ln();
    let loss = -ls[label].max(floor);
    let mut d = vec![0.0; logits.len()];
    if ls[label] > floor {
        for (di, l) in d.iter_mut().zip(&ls) {
            *di = l.exp();
        }
        d[label] -= 1.0;
    }
    (loss, d)
}

/// Loss and `∂/∂logits` of `KL(temper(softmax(z), T) ‖ b)` where `b` is the
/// already-tempered teacher distribution.
fn kl_logit_grad(logits: &[f64], tempered_teacher: &[f64], temperature: f64) -> (f64, Vec<f64>) {
    let floor = PROB_FLOOR.ln();
    let ls = log_softmax_unchecked(logits);
    let scaled: Vec<f64> = ls.iter().map(|&l| l / temperature).collect();
    let la = log_softmax_unchecked(&scaled);
    let a: Vec<f64> = la.iter().map(|l| l.exp()).collect();
    let ln_b: Vec<f64> = tempered_teacher.iter().map(|&b| ln_floor(b)).collect();

    let mut loss = 0.0;
    let mut h = vec![0.0; a.len()];
    for i in 0..a.len() {
        let ln_a = la[i].max(floor);
        if a[i] > 0.0 {
            loss += a[i] * (ln_a - ln_b[i]);
        }
        h[i] = ln_a - ln_b[i] + if la[i] > floor { 1.0 } else { 0.0 };
    }
    let mean_h: f64 = a.iter().zip(&h).map(|(ai, hi)| ai * hi).sum();
    // through the tempered softmax, then the 1/T scaling
    let d_scaled: Vec<f64> = a
        .iter()
        .zip(&h)
        .map(|(ai, hi)| ai * (hi - mean_h) / temperature)
        .collect();
    // through the student's log-softmax
    let total: f64 = d_scaled.iter().sum();
    let d = ls
        .iter()
        .zip(&d_scaled)
        .map(|(l, ds)| ds - l.exp() * total)
        .collect();
    (loss, d)
}

/// Exact gradient of mean cross-entropy over a batch.
pub fn grad_ce<M: Model>(model: &M, inputs: &[&[f64]], labels: &[usize]) -> Result<LossGrad> {
    check_batch(inputs.len(), labels, model.num_classes())?;
    let mut grad = vec![0.0; model.num_params()];
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        let (z, cache) = model.forward(x)?;
        let (l, dz) = ce_logit_grad(&z, y);
        loss += l;
        model.backward(&cache, &dz, &mut grad);
    }
    let n = inputs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(LossGrad { loss: loss / n, grad })
}

/// Exact gradient of the mean distillation objective with respect to the
/// student. Teacher probabilities are constants.
pub fn grad_distill(
    student: &AudioModel,
    teacher_probs: &[Vec<f64>],
    inputs: &[&[f64]],
    labels: &[usize],
    weights: DistillWeights,
) -> Result<LossGrad> {
    check_batch(inputs.len(), labels, student.num_classes())?;
    if teacher_probs.len() != inputs.len() {
        return Err(Error::invalid(format!(
            "{} teacher distributions for a batch of {}",
            teacher_probs.len(),
            inputs.len()
        )));
    }
    if !(weights.temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let mut grad = vec![0.0; student.num_params()];
    let mut loss = 0.0;
    for ((x, &y), t) in inputs.iter().zip(labels).zip(teacher_probs) {
        if t.len() != student.num_classes() {
            return Err(Error::invalid(format!(
                "teacher distribution has {} entries, student has {} classes",
                t.len(),
                student.num_classes()
            )));
        }
        let (z, cache) = student.forward(x)?;
        let (mut l, mut dz) = ce_logit_grad(&z, y);
        if weights.kl_weight != 0.0 {
            let b = temper(t, weights.temperature)?;
            let (kl, dkl) = kl_logit_grad(&z, &b, weights.temperature);
            l += weights.kl_weight * kl;
            for (d, k) in dz.iter_mut().zip(&dkl) {
                *d += weights.kl_weight * k;
            }
        }
        loss += l;
        student.backward(&cache, &dz, &mut grad);
    }
    let n = inputs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(LossGrad { loss: loss / n, grad })
}

/// `params − lr · grad`.
pub fn sgd_step(params: &[f64], grad: &[f64], lr: f64) -> Result<Vec<f64>> {
    if params.len() != grad.len() {
        return Err(Error::invalid(format!(
            "parameter length {} differs from gradient length {}",
            params.len(),
            grad.len()
        )));
    }
    Ok(params.iter().zip(grad).map(|(p, g)| p - lr * g).collect())
}

/// Mean cross-entropy, evaluated only through the forward pass and the public
/// loss primitives. Used as the finite-difference objective.
pub fn batch_ce_loss<M: Model>(model: &M, inputs: &[&[f64]], labels: &[usize]) -> Result<f64> {
    check_batch(inputs.len(), labels, model.num_classes())?;
    let mut total = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        total += cross_entropy(&softmax(&model.logits(x)?)?, y)?;
    }
    Ok(total / inputs.len() as f64)
}

/// Mean distillation objective via the forward pass only.
pub fn batch_distill_loss(
    student: &AudioModel,
    teacher_probs: &[Vec<f64>],
    inputs: &[&[f64]],
    labels: &[usize],
    weights: DistillWeights,
) -> Result<f64> {
    check_batch(inputs.len(), labels, student.num_classes())?;
    let mut total = 0.0;
    for ((x, &y), t) in inputs.iter().zip(labels).zip(teacher_probs) {
        let p = softmax(&student.logits(x)?)?;
        let kl = kl_div(&temper(&p, weights.temperature)?, &temper(t, weights.temperature)?)?;
        total += cross_entropy(&p, y)? + weights.kl_weight * kl;
    }
    Ok(total / inputs.len() as f64)
}

/// Class probabilities of a model on one input.
pub fn predict_proba<M: Model>(model: &M, x: &[f64]) -> Result<Vec<f64>> {
    Ok(softmax_unchecked(&model.logits(x)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::dense::{Activation, DenseNet, Layer};
    use crate::nnkit::matrix::Matrix;
    use crate::nnkit::model::Topology;
    use crate::rng::seeded_rng;

    fn random_audio_model(seed: u64) -> AudioModel {
        let t = Topology {
            audio_dim: 4,
            visual_dim: 3,
            encoder_hidden: vec![5],
            embed_dim: 3,
            num_classes: 3,
        };
        let mut rng = seeded_rng(seed);
        AudioModel::new(
            t.glorot_audio_encoder(&mut rng).unwrap(),
            t.glorot_head(&mut rng).unwrap(),
        )
        .unwrap()
    }

    fn batch() -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            vec![
                vec![0.3, -1.2, 0.8, 0.1],
                vec![-0.7, 0.4, 1.5, -0.2],
                vec![1.1, 0.9, -0.3, 0.6],
            ],
            vec![0, 2, 1],
        )
    }

    #[test]
    fn sgd_examples() {
        assert_eq!(sgd_step(&[1.0, 2.0], &[0.0, 0.0], 0.1).unwrap(), vec![1.0, 2.0]);
        assert_eq!(sgd_step(&[1.0, 2.0], &[1.0, -1.0], 0.5).unwrap(), vec![0.5, 2.5]);
        let g = [0.25, -0.5];
        let twice = sgd_step(&sgd_step(&[1.0, 2.0], &g, 0.5).unwrap(), &g, 0.5).unwrap();
        let once = sgd_step(&[1.0, 2.0], &[0.5, -1.0], 0.5).unwrap();
        assert_eq!(twice, once);
        assert!(sgd_step(&[1.0], &[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn empty_batch_rejected() {
        let m = random_audio_model(1);
        assert!(grad_ce(&m, &[], &[]).is_err());
    }

    #[test]
    fn out_of_range_label_rejected() {
        let m = random_audio_model(1);
        let (xs, _) = batch();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        assert!(grad_ce(&m, &refs, &[0, 1, 3]).is_err());
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let m = random_audio_model(2);
        let (xs, ys) = batch();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let g1 = grad_ce(&m, &refs, &ys).unwrap();
        let refs2: Vec<&[f64]> = refs.iter().chain(refs.iter()).copied().collect();
        let ys2: Vec<usize> = ys.iter().chain(ys.iter()).copied().collect();
        let g2 = grad_ce(&m, &refs2, &ys2).unwrap();
        for (a, b) in g1.grad.iter().zip(&g2.grad) {
            assert!((a - b).abs() <= 1e-15 * (1.0 + a.abs()));
        }
        assert!((g1.loss - g2.loss).abs() < 1e-15);
    }

    #[test]
    fn confident_prediction_has_vanishing_gradient() {
        // single linear layer, logits = W x; scale W to push p(y) toward 1
        let mut norms = Vec::new();
        for scale in [1.0, 5.0, 20.0] {
            let enc = DenseNet::from_layers(vec![Layer::new(
                Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                vec![0.0, 0.0],
                Activation::Identity,
            )
            .unwrap()])
            .unwrap();
            let head = DenseNet::from_layers(vec![Layer::new(
                Matrix::new(2, 2, vec![scale, 0.0, -scale, 0.0]).unwrap(),
                vec![0.0, 0.0],
                Activation::Identity,
            )
            .unwrap()])
            .unwrap();
            let m = AudioModel::new(enc, head).unwrap();
            let g = grad_ce(&m, &[&[1.0, 0.0]], &[0]).unwrap();
            norms.push(g.grad.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        assert!(norms[0] > norms[1] && norms[1] > norms[2]);
        assert!(norms[2] < 1e-12);
    }

    #[test]
    fn kl_term_vanishes_at_teacher() {
        let m = random_audio_model(4);
        let (xs, ys) = batch();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let t = 2.0;
        // teacher = student's own probabilities -> tempered distributions match
        let teacher: Vec<Vec<f64>> = refs.iter().map(|x| predict_proba(&m, x).unwrap()).collect();
        let w = DistillWeights { temperature: t, kl_weight: 1.0 };
        let with_kl = grad_distill(&m, &teacher, &refs, &ys, w).unwrap();
        let ce = grad_ce(&m, &refs, &ys).unwrap();
        let diff: f64 = with_kl
            .grad
            .iter()
            .zip(&ce.grad)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-8, "kl contribution norm {diff}");
    }

    #[test]
    fn uniform_teacher_matches_negative_entropy_closed_form() {
        // Linear student z = W x + b (identity encoder). With T = 1 and a
        // uniform teacher, KL(p‖u) = Σ p ln p + ln C, whose logit gradient is
        // p_j (ln p_j − Σ p ln p).
        let c = 3;
        let enc = DenseNet::from_layers(vec![Layer::new(
            Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            vec![0.0, 0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let head = DenseNet::from_layers(vec![Layer::new(
            Matrix::new(c, 2, vec![0.4, -0.3, 1.2, 0.7, -0.9, 0.2]).unwrap(),
            vec![0.1, -0.2, 0.05],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let m = AudioModel::new(enc, head).unwrap();
        let x = [0.8, -1.3];
        let uniform = vec![vec![1.0 / c as f64; c]];
        let w = DistillWeights { temperature: 1.0, kl_weight: 1.0 };
        let full = grad_distill(&m, &uniform, &[&x], &[1], w).unwrap();
        let ce = grad_ce(&m, &[&x], &[1]).unwrap();

        let p = predict_proba(&m, &x).unwrap();
        let neg_h: f64 = p.iter().map(|q| q * q.ln()).sum();
        let dz: Vec<f64> = p.iter().map(|q| q * (q.ln() - neg_h)).collect();
        // head weight gradient = dz xᵀ, bias gradient = dz; encoder part = Wᵀ dz xᵀ
        let enc_params = 6;
        for j in 0..c {
            for i in 0..2 {
                let got = full.grad[enc_params + j * 2 + i] - ce.grad[enc_params + j * 2 + i];
                assert!((got - dz[j] * x[i]).abs() < 1e-10);
            }
            let got_b = full.grad[enc_params + c * 2 + j] - ce.grad[enc_params + c * 2 + j];
            assert!((got_b - dz[j]).abs() < 1e-10);
        }
        let expected_loss: f64 = -p[1].ln() + neg_h + (c as f64).ln();
        assert!((full.loss - expected_loss).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_equals_cross_entropy_exactly() {
        let m = random_audio_model(9);
        let (xs, ys) = batch();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let teacher = vec![vec![0.2, 0.5, 0.3]; 3];
        let w = DistillWeights { temperature: 3.0, kl_weight: 0.0 };
        assert_eq!(grad_distill(&m, &teacher, &refs, &ys, w).unwrap(), grad_ce(&m, &refs, &ys).unwrap());
    }

    #[test]
    fn teacher_length_mismatch() {
        let m = random_audio_model(9);
        let (xs, ys) = batch();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let w = DistillWeights { temperature: 1.0, kl_weight: 1.0 };
        assert!(grad_distill(&m, &[vec![0.5, 0.25, 0.25]], &refs, &ys, w).is_err());
    }
}
