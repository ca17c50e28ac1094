//! ROC analysis with separable (label 0) as the positive class: a sample is
//! called separable when its score is at most the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{error_rates, threshold_eer};

fn split(scores: &[f64], labels: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let sep: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(&s, _)| s).collect();
    let ent: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l != 0).map(|(&s, _)| s).collect();
    if sep.is_empty() || ent.is_empty() {
        return Err(Error::invalid("both separable and entangled samples are required"));
    }
    Ok((sep, ent))
}

/// Probability that a random separable sample scores below a random
/// entangled one, ties counted one half (Mann–Whitney statistic via
/// average ranks).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (sep, ent) = split(scores, labels)?;
    let mut all: Vec<(f64, bool)> = sep.iter().map(|&s| (s, true)).chain(ent.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of (1-based, tie-averaged) ranks of the entangled samples.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg_rank * all[i..j].iter().filter(|x| !x.1).count() as f64;
        i = j;
    }
    let (n_sep, n_ent) = (sep.len() as f64, ent.len() as f64);
    Ok((rank_sum - n_ent * (n_ent + 1.0) / 2.0) / (n_sep * n_ent))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    /// Entangled samples called separable.
    pub fpr: f64,
    /// Separable samples called separable.
    pub tpr: f64,
}

/// ROC points for every distinct threshold, from `(0, 0)` to `(1, 1)`.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    let (mut sep, mut ent) = split(scores, labels)?;
    sep.sort_by(f64::total_cmp);
    ent.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = sep.iter().chain(&ent).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut points = vec![RocPoint { threshold: f64::NEG_INFINITY, fpr: 0.0, tpr: 0.0 }];
    for b in thresholds {
        let (fnr, fpr) = error_rates(&sep, &ent, b);
        points.push(RocPoint { threshold: b, fpr, tpr: 1.0 - fnr });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC curve.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
}

/// Equal error rate and its threshold: the false-negative rate at the
/// threshold chosen by [`threshold_eer`].
pub fn eer(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    let (mut sep, mut ent) = split(scores, labels)?;
    let t = threshold_eer(&sep, &ent)?;
    sep.sort_by(f64::total_cmp);
    ent.sort_by(f64::total_cmp);
    let (fnr, _) = error_rates(&sep, &ent, t.b);
    Ok((fnr, t.b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &[0, 0, 1, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.9, 0.2, 0.8], &[0, 0, 1, 1]).unwrap(), 0.5);
        assert!(roc_auc(&[0.1, 0.2], &[0, 0]).is_err());
    }

    #[test]
    fn eer_examples() {
        assert_eq!(eer(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap().0, 0.0);
        assert_eq!(eer(&[0.1, 0.9, 0.2, 0.8], &[0, 0, 1, 1]).unwrap().0, 0.5);
        assert_eq!(eer(&[0.1, 0.2, 0.1, 0.2], &[0, 0, 1, 1]).unwrap().0, 0.5);
        assert!(eer(&[0.3], &[1]).is_err());
    }

    #[test]
    fn curve_spans_unit_square() {
        let pts = roc_curve(&[0.3, 0.1, 0.7, 0.2], &[0, 1, 1, 0]).unwrap();
        assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }
}
