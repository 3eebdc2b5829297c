use crate::error::{Error, Result};

/// Probabilities are clamped below at this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

pub(crate) fn ln_floor(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// Max-subtracted log-softmax; caller guarantees finite, nonempty input.
pub(crate) fn log_softmax_unchecked(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub(crate) fn softmax_unchecked(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_finite(logits, "logits")?;
    Ok(softmax_unchecked(logits))
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_finite(logits, "logits")?;
    Ok(log_softmax_unchecked(logits))
}

/// Sharpens (`T < 1`) or flattens (`T > 1`) a distribution: `p_i^(1/T)`,
/// renormalized in log space. Zero entries stay zero, so tempering composes:
/// `temper(temper(p, a), b) = temper(p, a·b)`.
pub fn temper(p: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    check_finite(p, "probabilities")?;
    if p.iter().any(|&x| x < 0.0) {
        return Err(Error::invalid("probabilities must be nonnegative"));
    }
    if p.iter().all(|&x| x == 0.0) {
        return Err(Error::invalid("distribution has no mass"));
    }
    let scaled: Vec<f64> = p.iter().map(|&x| x.ln() / temperature).collect();
    Ok(softmax_unchecked(&scaled))
}

/// `Σ p_i ln(p_i / q_i)`, with `0 · ln 0 = 0` and `q` floored at [`PROB_FLOOR`].
pub fn kl_div(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    check_finite(p, "p")?;
    check_finite(q, "q")?;
    Ok(p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (ln_floor(pi) - ln_floor(qi)))
        .sum())
}

/// `-ln p_y` with the probability floor.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs
        .get(label)
        .ok_or_else(|| Error::invalid(format!("label {label} out of range for {} classes", probs.len())))?;
    Ok(-ln_floor(*p))
}
