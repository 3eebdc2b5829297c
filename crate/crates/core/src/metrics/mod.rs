//! Evaluation metrics and per-class F1 difference reports.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluation record per communication round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// Round index within its stage, from 0.
    pub round: usize,
    pub stage: u8,
    pub audio_top1: f64,
    pub audio_topk: f64,
    pub multimodal_top1: Option<f64>,
    /// Mean local training loss over the round's participants.
    pub train_loss: Option<f64>,
}

/// Position of `label` when classes are ordered by descending logit, ties
/// broken toward the lower class index.
fn rank_of(logits: &[f64], label: usize) -> usize {
    let target = logits[label];
    logits
        .iter()
        .enumerate()
        .filter(|&(j, &z)| z > target || (z == target && j < label))
        .count()
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn topk_accuracy(logits: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    if logits.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} logit rows for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let classes = logits[0].len();
    if k == 0 || k > classes {
        return Err(Error::invalid(format!("k = {k} outside [1, {classes}]")));
    }
    let mut hits = 0usize;
    for (z, &y) in logits.iter().zip(labels) {
        if z.len() != classes || y >= classes {
            return Err(Error::invalid("inconsistent logit width or label out of range"));
        }
        if rank_of(z, y) < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub classes: Vec<ClassStats>,
}

impl ClassReport {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn f1(&self, class: usize) -> f64 {
        self.classes[class].f1
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv_rows(w, &self.classes)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest scores per class. Every zero denominator yields 0.
pub fn class_f1(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<ClassReport> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut tp = vec![0usize; num_classes];
    let mut pred_count = vec![0usize; num_classes];
    let mut support = vec![0usize; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= num_classes || y >= num_classes {
            return Err(Error::invalid(format!(
                "class index out of range for {num_classes} classes (prediction {p}, label {y})"
            )));
        }
        pred_count[p] += 1;
        support[y] += 1;
        if p == y {
            tp[y] += 1;
        }
    }
    let classes = (0..num_classes)
        .map(|c| {
            let precision = ratio(tp[c], pred_count[c]);
            let recall = ratio(tp[c], support[c]);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassStats {
                class: c,
                precision,
                recall,
                f1,
                support: support[c],
            }
        })
        .collect();
    Ok(ClassReport { classes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Delta {
    pub class: usize,
    pub f1_a: f64,
    pub f1_b: f64,
    /// `f1_a − f1_b`.
    pub delta: f64,
}

/// Per-class `f1(a) − f1(b)`, largest absolute change first (ties by class
/// index), truncated to `top_n`.
pub fn f1_diff_report(a: &ClassReport, b: &ClassReport, top_n: usize) -> Result<Vec<F1Delta>> {
    if a.num_classes() != b.num_classes() {
        return Err(Error::invalid(format!(
            "reports cover {} and {} classes",
            a.num_classes(),
            b.num_classes()
        )));
    }
    let mut rows: Vec<F1Delta> = a
        .classes
        .iter()
        .zip(&b.classes)
        .map(|(x, y)| F1Delta {
            class: x.class,
            f1_a: x.f1,
            f1_b: y.f1,
            delta: x.f1 - y.f1,
        })
        .collect();
    rows.sort_by(|x, y| {
        y.delta
            .abs()
            .total_cmp(&x.delta.abs())
            .then(x.class.cmp(&y.class))
    });
    rows.truncate(top_n);
    Ok(rows)
}

/// Classes with strictly positive delta, largest first, at most `n`.
pub fn top_positive(deltas: &[F1Delta], n: usize) -> Vec<usize> {
    let mut pos: Vec<&F1Delta> = deltas.iter().filter(|d| d.delta > 0.0).collect();
    pos.sort_by(|x, y| y.delta.total_cmp(&x.delta).then(x.class.cmp(&y.class)));
    pos.into_iter().take(n).map(|d| d.class).collect()
}

pub(crate) fn write_csv_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::Format(format!("csv: {e}")))?;
    }
    wtr.flush().map_err(|e| Error::Format(format!("csv: {e}")))
}

/// Round records as CSV with a fixed column order:
/// `round,stage,audio_top1,audio_topk,multimodal_top1,train_loss`.
pub fn write_rounds_csv<W: Write>(w: W, history: &[RoundMetrics]) -> Result<()> {
    if history.is_empty() {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["round", "stage", "audio_top1", "audio_topk", "multimodal_top1", "train_loss"])
            .map_err(|e| Error::Format(format!("csv: {e}")))?;
        return wtr.flush().map_err(|e| Error::Format(format!("csv: {e}")));
    }
    write_csv_rows(w, history)
}

pub fn read_rounds_csv<R: Read>(r: R) -> Result<Vec<RoundMetrics>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("rounds csv: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_hot(y: usize, c: usize) -> Vec<f64> {
        (0..c).map(|j| if j == y { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn topk_examples() {
        let labels = [0, 1, 2];
        let onehots: Vec<Vec<f64>> = labels.iter().map(|&y| one_hot(y, 3)).collect();
        assert_eq!(topk_accuracy(&onehots, &labels, 1).unwrap(), 1.0);
        let junk = vec![vec![0.3, 0.2, 0.1]; 3];
        assert_eq!(topk_accuracy(&junk, &labels, 3).unwrap(), 1.0);
        // sample 0 hits at top-1; samples 1 and 2 have their label second
        let z = vec![vec![3.0, 1.0, 0.0], vec![2.0, 1.0, 0.0], vec![0.0, 5.0, 4.0]];
        assert!((topk_accuracy(&z, &labels, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(topk_accuracy(&z, &labels, 2).unwrap(), 1.0);
        assert!(topk_accuracy(&[], &[], 1).is_err());
        assert!(topk_accuracy(&z, &labels, 0).is_err());
        assert!(topk_accuracy(&z, &labels, 4).is_err());
    }

    #[test]
    fn ties_go_to_lower_index() {
        let z = vec![vec![1.0, 1.0, 1.0]];
        assert_eq!(topk_accuracy(&z, &[0], 1).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&z, &[1], 1).unwrap(), 0.0);
        assert_eq!(topk_accuracy(&z, &[1], 2).unwrap(), 1.0);
        assert_eq!(argmax(&[2.0, 5.0, 5.0]), 1);
    }

    #[test]
    fn f1_examples() {
        let r = class_f1(&[0, 1, 2, 2], &[0, 1, 2, 2], 4).unwrap();
        for c in 0..3 {
            assert_eq!(r.f1(c), 1.0);
        }
        assert_eq!(r.classes[3].f1, 0.0);
        assert_eq!(r.classes[3].support, 0);

        // class 0: tp = 1 (s0), fp = 1 (s2 predicted 0), fn = 1 (s1 predicted 1)
        let r = class_f1(&[0, 1, 0, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.classes[0].precision, 0.5);
        assert_eq!(r.classes[0].recall, 0.5);
        assert_eq!(r.classes[0].f1, 0.5);
        assert_eq!(r.classes.iter().map(|c| c.support).sum::<usize>(), 4);
        assert!(class_f1(&[0, 5], &[0, 1], 2).is_err());
        assert!(class_f1(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn diff_report_examples() {
        let a = class_f1(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        let d = f1_diff_report(&a, &a, 10).unwrap();
        assert_eq!(d.len(), 3);
        assert!(d.iter().all(|x| x.delta == 0.0));
        assert_eq!(d.iter().map(|x| x.class).collect::<Vec<_>>(), vec![0, 1, 2]);

        let b = class_f1(&[0, 1, 2, 1], &[0, 1, 2, 2], 3).unwrap();
        let d = f1_diff_report(&a, &b, 1).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].class, 1);
        let four = class_f1(&[0], &[0], 4).unwrap();
        assert!(f1_diff_report(&a, &four, 3).is_err());
    }

    #[test]
    fn rounds_csv_round_trip() {
        let h = vec![
            RoundMetrics {
                round: 0,
                stage: 1,
                audio_top1: 0.25,
                audio_topk: 0.75,
                multimodal_top1: Some(0.5),
                train_loss: Some(1.125),
            },
            RoundMetrics {
                round: 1,
                stage: 2,
                audio_top1: 0.1,
                audio_topk: 0.3,
                multimodal_top1: None,
                train_loss: None,
            },
        ];
        let mut buf = Vec::new();
        write_rounds_csv(&mut buf, &h).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("round,stage,audio_top1,audio_topk,multimodal_top1,train_loss\n"));
        assert_eq!(read_rounds_csv(buf.as_slice()).unwrap(), h);
    }

    fn predictions(c: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        prop::collection::vec((0..c, 0..c), 1..60).prop_map(|v| v.into_iter().unzip())
    }

    proptest! {
        #[test]
        fn topk_monotone(rows in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 5), 0usize..5), 1..30)) {
            let (z, y): (Vec<Vec<f64>>, Vec<usize>) = rows.into_iter().unzip();
            for k in 1..5 {
                prop_assert!(topk_accuracy(&z, &y, k).unwrap() <= topk_accuracy(&z, &y, k + 1).unwrap());
            }
        }

        #[test]
        fn micro_recall_is_accuracy((p, y) in predictions(6)) {
            let r = class_f1(&p, &y, 6).unwrap();
            let micro = r.classes.iter().map(|c| c.recall * c.support as f64).sum::<f64>() / y.len() as f64;
            let acc = p.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
            prop_assert!((micro - acc).abs() < 1e-12);
        }

        #[test]
        fn diff_antisymmetric((p, y) in predictions(5), (q, _) in predictions(5)) {
            let n = p.len().min(q.len());
            let a = class_f1(&p[..n], &y[..n], 5).unwrap();
            let b = class_f1(&q[..n], &y[..n], 5).unwrap();
            let mut ab = f1_diff_report(&a, &b, 5).unwrap();
            let mut ba = f1_diff_report(&b, &a, 5).unwrap();
            ab.sort_by_key(|d| d.class);
            ba.sort_by_key(|d| d.class);
            for (x, z) in ab.iter().zip(&ba) {
                prop_assert_eq!(x.delta, -z.delta);
            }
        }
    }
}
