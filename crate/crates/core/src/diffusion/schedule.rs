use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            steps: 200,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        build_schedule(self.steps, self.beta_start, self.beta_end)
    }
}

/// Per-step `beta`, `alpha = 1 - beta` and cumulative `alpha_bar`, indexed by
/// diffusion step `t` in `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

/// Linearly spaced betas from `beta_start` to `beta_end` over `steps` steps.
pub fn build_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(format!(
            "betas must satisfy 0 < start <= end < 1, got ({beta_start}, {beta_end})"
        )));
    }
    let beta = if steps == 1 {
        vec![beta_start]
    } else {
        let span = (steps - 1) as f64;
        (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / span)
            .collect()
    };
    NoiseSchedule::from_betas(beta)
}

impl NoiseSchedule {
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Config(format!("beta {b} outside (0, 1)")));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let alpha_bar = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(NoiseSchedule {
            beta,
            alpha,
            alpha_bar,
        })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if (1..=self.steps()).contains(&t) {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "step {t} outside 1..={}",
                self.steps()
            )))
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}
