use std::fs;
use std::path::{Path, PathBuf};

use ddm_core::data::{DatasetSpec, Scenario};
use ddm_core::debias::{DdmConfig, IndicatorArch};
use ddm_core::diffusion::{DenoiserArch, ScheduleConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Flat run configuration, loadable from TOML or JSON. Command-line flags
/// override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    /// Sweep grid; `alpha` is used when empty.
    pub alphas: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub hidden: usize,
    pub scenario: Scenario,
    pub d1: u8,
    pub d2: u8,
    pub n1: usize,
    pub n2: usize,
    pub nontarget_count: usize,
    pub mnist_dir: PathBuf,
    pub out: PathBuf,
    pub samples_per_digit: usize,
    pub samples_neutral: usize,
    pub sample_seed: u64,
    pub eval_seed: u64,
    pub test_per_group: usize,
    /// Diffusion step for the entropy report; `T/2` when absent.
    pub t_eval: Option<usize>,
    pub is_splits: usize,
    pub reference_per_digit: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ddm = DdmConfig::default();
        RunConfig {
            alpha: ddm.alpha,
            alphas: Vec::new(),
            epochs: ddm.epochs,
            batch_size: ddm.batch_size,
            learning_rate: ddm.learning_rate,
            seed: 0,
            steps: ddm.schedule.steps,
            beta_start: ddm.schedule.beta_start,
            beta_end: ddm.schedule.beta_end,
            hidden: ddm.denoiser.hidden,
            scenario: Scenario::Spd,
            d1: 3,
            d2: 0,
            n1: 80,
            n2: 20,
            nontarget_count: 100,
            mnist_dir: PathBuf::from("data/mnist"),
            out: PathBuf::from("runs/default"),
            samples_per_digit: 500,
            samples_neutral: 1000,
            sample_seed: 1,
            eval_seed: 2,
            test_per_group: 50,
            t_eval: None,
            is_splits: 10,
            reference_per_digit: 500,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let cfg: RunConfig = if is_json {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        for a in std::iter::once(&self.alpha).chain(&self.alphas) {
            if !(0.0..=1.0).contains(a) {
                return Err(CliError::Config(format!("alpha {a} outside [0, 1]")));
            }
        }
        if self.samples_per_digit == 0 || self.samples_neutral == 0 || self.test_per_group == 0 {
            return Err(CliError::Config("sample counts must be positive".into()));
        }
        if self.is_splits == 0 || self.reference_per_digit == 0 {
            return Err(CliError::Config(
                "is_splits and reference_per_digit must be positive".into(),
            ));
        }
        self.ddm_config().validate()?;
        if let Some(t) = self.t_eval {
            self.ddm_config().schedule.build()?.check_step(t)?;
        }
        Ok(())
    }

    pub fn dataset(&self) -> DatasetSpec {
        DatasetSpec {
            d1: self.d1,
            d2: self.d2,
            n1: self.n1,
            n2: self.n2,
            scenario: self.scenario,
            nontarget_count: self.nontarget_count,
            seed: self.seed,
        }
    }

    pub fn ddm_config(&self) -> DdmConfig {
        DdmConfig {
            alpha: self.alpha,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            schedule: ScheduleConfig {
                steps: self.steps,
                beta_start: self.beta_start,
                beta_end: self.beta_end,
            },
            dataset: self.dataset(),
            denoiser: DenoiserArch {
                hidden: self.hidden,
                ..DenoiserArch::default()
            },
            indicator: IndicatorArch::default(),
        }
    }

    pub fn t_eval(&self) -> usize {
        self.t_eval.unwrap_or((self.steps / 2).max(1))
    }

    pub fn alpha_grid(&self) -> Vec<f64> {
        if self.alphas.is_empty() {
            vec![self.alpha]
        } else {
            self.alphas.clone()
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }
}

pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("plain data serializes");
    hex::encode(Sha256::digest(&bytes))
}
