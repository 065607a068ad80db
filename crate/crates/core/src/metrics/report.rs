use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// Everything one evaluation run reports. Metrics that do not apply to the
/// run's scenario are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub config_fingerprint: String,
    pub scenario: String,
    pub d1: u8,
    pub d2: u8,
    pub alpha: f64,
    pub seed: u64,
    pub fd: Option<f64>,
    pub fd_other_fraction: Option<f64>,
    pub spd: Option<f64>,
    pub recognition_rate_d1: Option<f64>,
    pub recognition_rate_d2: Option<f64>,
    pub frechet: f64,
    pub is_mean: f64,
    pub is_std: f64,
    pub unrecognizable: f64,
    pub per_group_entropy: IndexMap<String, f64>,
    pub indicator_target_rate: IndexMap<String, f64>,
    pub pearson_r: Option<f64>,
    pub sample_counts: IndexMap<String, usize>,
    pub oracle_accuracy: Option<f64>,
    pub warnings: Vec<String>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;
