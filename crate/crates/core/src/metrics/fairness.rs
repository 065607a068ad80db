use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::oracle::Prediction;

/// Observed and reference proportions over a set of groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDistribution {
    pub labels: Vec<String>,
    pub observed: Vec<f64>,
    pub reference: Vec<f64>,
}

fn check_distribution(what: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Contract(format!(
            "{what} proportions {p:?} contain a negative entry"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "{what} proportions sum to {total}"
        )));
    }
    Ok(())
}

impl GroupDistribution {
    /// Two groups against the uniform reference.
    pub fn binary(a: &str, b: &str, p_a: f64) -> Result<Self> {
        let dist = GroupDistribution {
            labels: vec![a.to_string(), b.to_string()],
            observed: vec![p_a, 1.0 - p_a],
            reference: vec![0.5, 0.5],
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() < 2
            || self.observed.len() != self.labels.len()
            || self.reference.len() != self.labels.len()
        {
            return Err(Error::Contract(
                "group distribution needs matching vectors over at least two groups".into(),
            ));
        }
        check_distribution("observed", &self.observed)?;
        check_distribution("reference", &self.reference)
    }
}

/// `|p_ref(a) - p̂(a)|` for the first group.
pub fn compute_fd(dist: &GroupDistribution) -> Result<f64> {
    dist.validate()?;
    Ok((dist.reference[0] - dist.observed[0]).abs())
}

/// `|rate_a1 - rate_a2|`.
pub fn compute_spd(rate_a1: f64, rate_a2: f64) -> Result<f64> {
    for r in [rate_a1, rate_a2] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Contract(format!("rate {r} outside [0, 1]")));
        }
    }
    Ok((rate_a1 - rate_a2).abs())
}

/// Fraction of predictions that differ from the intended class.
pub fn unrecognizable_proportion(predicted: &[u8], intended: &[u8]) -> Result<f64> {
    if predicted.len() != intended.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} intended classes",
            predicted.len(),
            intended.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Contract("no predictions".into()));
    }
    let misses = predicted
        .iter()
        .zip(intended)
        .filter(|(p, i)| p != i)
        .count();
    Ok(misses as f64 / predicted.len() as f64)
}

/// Digit counts among neutral-condition samples, split by oracle class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdSummary {
    pub d1: u8,
    pub d2: u8,
    pub count_d1: usize,
    pub count_d2: usize,
    pub count_other: usize,
    /// `count_d1 / (count_d1 + count_d2)`; 0 when neither digit appears, so
    /// an all-unrecognizable batch scores the worst-case FD of 0.5.
    pub proportion_d1: f64,
    pub other_fraction: f64,
    pub fd: f64,
}

/// FD of the d1/d2 proportion against the uniform reference. Samples the
/// oracle assigns to neither digit are dropped and counted separately.
pub fn fd_from_predictions(predictions: &[Prediction], d1: u8, d2: u8) -> Result<FdSummary> {
    if predictions.is_empty() {
        return Err(Error::Contract("no predictions".into()));
    }
    let count_d1 = predictions.iter().filter(|p| p.class == d1).count();
    let count_d2 = predictions.iter().filter(|p| p.class == d2).count();
    let kept = count_d1 + count_d2;
    let proportion_d1 = if kept == 0 {
        0.0
    } else {
        count_d1 as f64 / kept as f64
    };
    let fd = compute_fd(&GroupDistribution::binary(
        &d1.to_string(),
        &d2.to_string(),
        proportion_d1,
    )?)?;
    Ok(FdSummary {
        d1,
        d2,
        count_d1,
        count_d2,
        count_other: predictions.len() - kept,
        proportion_d1,
        other_fraction: (predictions.len() - kept) as f64 / predictions.len() as f64,
        fd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_examples() {
        assert_eq!(
            compute_fd(&GroupDistribution::binary("a", "b", 0.5).unwrap()).unwrap(),
            0.0
        );
        assert!(
            (compute_fd(&GroupDistribution::binary("a", "b", 0.6).unwrap()).unwrap() - 0.1).abs()
                < 1e-15
        );
        assert!(
            (compute_fd(&GroupDistribution::binary("a", "b", 0.74).unwrap()).unwrap() - 0.24).abs()
                < 1e-12
        );
        let bad = GroupDistribution {
            labels: vec!["a".into(), "b".into()],
            observed: vec![0.7, 0.7],
            reference: vec![0.5, 0.5],
        };
        assert!(matches!(compute_fd(&bad), Err(Error::Contract(_))));
    }

    #[test]
    fn spd_examples() {
        assert_eq!(compute_spd(0.4, 0.4).unwrap(), 0.0);
        assert!((compute_spd(0.6, 0.497).unwrap() - 0.103).abs() < 1e-12);
        assert!((compute_spd(0.5, 0.503).unwrap() - 0.003).abs() < 1e-12);
        assert!(compute_spd(1.2, 0.1).is_err());
    }

    #[test]
    fn unrecognizable_examples() {
        assert_eq!(unrecognizable_proportion(&[1, 2], &[1, 2]).unwrap(), 0.0);
        assert_eq!(unrecognizable_proportion(&[0, 0], &[1, 2]).unwrap(), 1.0);
        assert_eq!(
            unrecognizable_proportion(&[1, 0, 3, 0], &[1, 2, 3, 4]).unwrap(),
            0.5
        );
        assert!(unrecognizable_proportion(&[1], &[1, 2]).is_err());
    }

    fn pred(class: u8) -> Prediction {
        Prediction {
            class,
            probs: vec![],
        }
    }

    #[test]
    fn fd_drops_other_digits() {
        let preds: Vec<_> = [3, 3, 3, 0, 5, 5].into_iter().map(pred).collect();
        let s = fd_from_predictions(&preds, 3, 0).unwrap();
        assert_eq!((s.count_d1, s.count_d2, s.count_other), (3, 1, 2));
        assert!((s.fd - 0.25).abs() < 1e-15);
        assert!((s.other_fraction - 1.0 / 3.0).abs() < 1e-15);
        let swapped = fd_from_predictions(&preds, 0, 3).unwrap();
        assert_eq!(s.fd, swapped.fd);
        let none = fd_from_predictions(&[pred(9)], 3, 0).unwrap();
        assert_eq!(none.fd, 0.5);
    }
}
