//! Classification metrics and the per-evaluation report.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TagclError};

pub fn accuracy(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    if truth.is_empty() || truth.len() != predicted.len() {
        return Err(TagclError::InvalidArgument(
            "accuracy needs equal-length nonempty label slices".into(),
        ));
    }
    let hits = truth
        .iter()
        .zip(predicted)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Unweighted mean of per-class F1. A class absent from both truth and
/// prediction contributes F1 = 0.
pub fn macro_f1(truth: &[usize], predicted: &[usize], classes: usize) -> Result<f64> {
    if truth.is_empty() || truth.len() != predicted.len() {
        return Err(TagclError::InvalidArgument(
            "macro_f1 needs equal-length nonempty label slices".into(),
        ));
    }
    if classes == 0 {
        return Err(TagclError::InvalidArgument("classes must be positive".into()));
    }
    for &l in truth.iter().chain(predicted) {
        if l >= classes {
            return Err(TagclError::InvalidArgument(format!(
                "label {l} outside 0..{classes}"
            )));
        }
    }
    let mut f1_sum = 0.0;
    for c in 0..classes {
        let tp = truth
            .iter()
            .zip(predicted)
            .filter(|&(&t, &p)| t == c && p == c)
            .count() as f64;
        let fp = truth
            .iter()
            .zip(predicted)
            .filter(|&(&t, &p)| t != c && p == c)
            .count() as f64;
        let fn_ = truth
            .iter()
            .zip(predicted)
            .filter(|&(&t, &p)| t == c && p != c)
            .count() as f64;
        let denom = 2.0 * tp + fp + fn_;
        if denom > 0.0 {
            f1_sum += 2.0 * tp / denom;
        }
    }
    Ok(f1_sum / classes as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: Vec<RunMetrics>,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub config_hash: String,
    pub seconds: f64,
}

impl EvalReport {
    pub fn from_runs(runs: Vec<RunMetrics>, config_hash: String, seconds: f64) -> Self {
        let (acc_mean, acc_std) = mean_std(runs.iter().map(|r| r.accuracy));
        let (f1_mean, f1_std) = mean_std(runs.iter().map(|r| r.macro_f1));
        Self {
            runs,
            acc_mean,
            acc_std,
            f1_mean,
            f1_std,
            config_hash,
            seconds,
        }
    }
}

/// Mean and sample standard deviation; std is 0 for a single value.
pub fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let vals: Vec<f64> = values.collect();
    let n = vals.len() as f64;
    if vals.is_empty() {
        return (0.0, 0.0);
    }
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = vec![0, 1, 2, 1];
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        assert_eq!(macro_f1(&y, &y, 3).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_all_one_class() {
        // 2 balanced classes, everything predicted class 0:
        // class 0 F1 = 2/3, class 1 F1 = 0 -> macro 1/3.
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 0, 0, 0];
        assert_eq!(accuracy(&truth, &pred).unwrap(), 0.5);
        let f1 = macro_f1(&truth, &pred, 2).unwrap();
        assert!((f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(accuracy(&[], &[]).is_err());
        assert!(macro_f1(&[], &[], 2).is_err());
        assert!(macro_f1(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn absent_class_counts_as_zero() {
        // Class 2 never occurs; macro over 3 classes.
        let truth = vec![0, 1];
        let pred = vec![0, 1];
        let f1 = macro_f1(&truth, &pred, 3).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn std_of_single_run_is_zero() {
        let report = EvalReport::from_runs(
            vec![RunMetrics {
                accuracy: 0.8,
                macro_f1: 0.7,
            }],
            "h".into(),
            0.1,
        );
        assert_eq!(report.acc_std, 0.0);
        assert_eq!(report.acc_mean, 0.8);
    }
}
