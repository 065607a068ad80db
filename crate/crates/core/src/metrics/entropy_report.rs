use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::LabeledExample;
use crate::debias::{entropy, Indicator};
use crate::diffusion::{add_noise, reconstruct_z0, DenoiserNet, NoiseSchedule};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Contract(format!(
            "pearson needs equal lengths of at least 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "a series has zero variance".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntropy {
    pub label: String,
    pub mean_entropy: f64,
    pub entropies: Vec<f64>,
    /// Share of examples the indicator scores as target (`p_target > 0.5`).
    pub target_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntropyReport {
    pub t_eval: usize,
    pub groups: Vec<GroupEntropy>,
    /// Correlation of the first two groups' entropies, paired by index after a
    /// seeded shuffle; `None` when either series is constant.
    pub pearson_r: Option<f64>,
}

/// Indicator entropies of noised-then-denoised test examples, per group.
///
/// Every group is noised at `t_eval` with noise from the same seeded stream,
/// so identical groups produce identical entropies.
pub fn group_entropy_report(
    indicator: &Indicator<f64>,
    denoiser: &DenoiserNet<f64>,
    sched: &NoiseSchedule,
    groups: &[(String, Vec<LabeledExample>)],
    t_eval: usize,
    seed: u64,
) -> Result<GroupEntropyReport> {
    sched.check_step(t_eval)?;
    if groups.is_empty() {
        return Err(Error::Contract("no groups".into()));
    }
    let pixels = denoiser.arch.pixels;
    let mut out = Vec::with_capacity(groups.len());
    let mut shuffled = Vec::with_capacity(groups.len());
    for (label, examples) in groups {
        if examples.is_empty() {
            return Err(Error::Contract(format!("group '{label}' is empty")));
        }
        let n = examples.len();
        let mut g = rng::stream(seed, rng::ENTROPY_EVAL);
        let z0 = Tensor::new(
            vec![n, pixels],
            examples
                .iter()
                .flat_map(|e| e.pixels().iter().map(|&v| v as f64))
                .collect(),
        )?;
        let eps = Tensor::new(vec![n, pixels], rng::normals::<f64>(&mut g, n * pixels))?;
        let z_t = add_noise(&z0, &eps, t_eval, sched)?;
        let conditions: Vec<usize> = examples.iter().map(|e| e.condition_id).collect();
        let eps_hat = denoiser.predict(&z_t, &vec![t_eval; n], &conditions, sched)?;
        let z0_prime = reconstruct_z0(&z0, &eps, &eps_hat)?;
        let probs = indicator.probabilities(&z0_prime)?;

        let entropies = probs
            .iter()
            .map(|p| entropy(p))
            .collect::<Result<Vec<f64>>>()?;
        let target_rate = probs.iter().filter(|p| p[1] > 0.5).count() as f64 / n as f64;
        let mut order = entropies.clone();
        order.shuffle(&mut g);
        shuffled.push(order);
        out.push(GroupEntropy {
            label: label.clone(),
            mean_entropy: entropies.iter().sum::<f64>() / n as f64,
            entropies,
            target_rate,
        });
    }

    let pearson_r = if shuffled.len() >= 2 {
        let m = shuffled[0].len().min(shuffled[1].len());
        match pearson(&shuffled[0][..m], &shuffled[1][..m]) {
            Ok(r) => Some(r),
            Err(Error::UndefinedCorrelation(_)) => None,
            Err(Error::Contract(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(GroupEntropyReport {
        t_eval,
        groups: out,
        pearson_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            pearson(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }
}
