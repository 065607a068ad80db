//! Oracle training, DDM training, sampling and evaluation on in-memory data.

use ddm_core::data::{
    build_test_groups, build_training_set, ConditionVocab, MnistSplit, Scenario, PIXELS,
};
use ddm_core::debias::{
    train, DdmConfig, Indicator, StepRecord, TrainHistory, TrainedModel, Trainer,
};
use ddm_core::diffusion::{ancestral_sample, DenoiserNet};
use ddm_core::metrics::{
    compute_frechet, compute_is, compute_spd, fd_from_predictions, group_entropy_report,
    train_oracle, unrecognizable_proportion, MetricsReport, OracleClassifier, OracleTrainConfig,
    Prediction, REPORT_SCHEMA_VERSION,
};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const ORACLE_KIND: &str = "oracle";
pub const DDM_KIND: &str = "ddm";
pub const MIN_ORACLE_ACCURACY: f64 = 0.985;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMetadata {
    pub accuracy: f64,
    pub train: OracleTrainConfig,
}

pub fn run_oracle_training(
    train_split: &MnistSplit,
    test_split: &MnistSplit,
    config: &OracleTrainConfig,
) -> CliResult<(Checkpoint, f64)> {
    let (oracle, accuracy) = train_oracle(train_split, test_split, config)?;
    let meta = OracleMetadata {
        accuracy,
        train: *config,
    };
    let ck = Checkpoint {
        kind: ORACLE_KIND.into(),
        metadata: serde_json::to_value(meta)?,
        params: oracle.params,
    };
    Ok((ck, accuracy))
}

pub fn oracle_from_checkpoint(
    ck: Checkpoint,
) -> CliResult<(OracleClassifier<f32>, OracleMetadata)> {
    let ck = ck.expect_kind(ORACLE_KIND)?;
    let meta: OracleMetadata = serde_json::from_value(ck.metadata)?;
    Ok((OracleClassifier::from_params(ck.params)?, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdmMetadata {
    pub run: RunConfig,
    pub ddm: DdmConfig,
    /// True when the indicator never entered the training graph.
    pub baseline: bool,
    pub steps_run: usize,
}

#[derive(Debug, Clone)]
pub struct DdmModel {
    pub meta: DdmMetadata,
    pub denoiser: DenoiserNet<f32>,
    pub indicator: Indicator<f32>,
}

impl DdmModel {
    pub fn to_checkpoint(&self) -> CliResult<Checkpoint> {
        let mut params = ddm_core::numerics::ParameterSet::new();
        params.absorb("denoiser", self.denoiser.params.clone())?;
        params.absorb("indicator", self.indicator.params.clone())?;
        Ok(Checkpoint {
            kind: DDM_KIND.into(),
            metadata: serde_json::to_value(&self.meta)?,
            params,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> CliResult<Self> {
        let ck = ck.expect_kind(DDM_KIND)?;
        let meta: DdmMetadata = serde_json::from_value(ck.metadata)?;
        let denoiser = DenoiserNet::from_params(meta.ddm.denoiser, ck.params.extract("denoiser"))?;
        let indicator = Indicator::from_params(meta.ddm.indicator, ck.params.extract("indicator"))?;
        Ok(DdmModel {
            meta,
            denoiser,
            indicator,
        })
    }
}

/// Builds `D_t ∪ D_nt` from `pool` and trains; `baseline` drops the indicator.
pub fn run_training(
    run: &RunConfig,
    pool: &MnistSplit,
    baseline: bool,
) -> CliResult<(DdmModel, TrainHistory)> {
    run.validate()?;
    let ddm = run.ddm_config();
    let data = build_training_set(&ddm.dataset, pool)?;
    let trained: TrainedModel = if baseline {
        Trainer::diffusion_only(ddm.clone(), &data)?.run()?
    } else {
        train(ddm.clone(), &data)?
    };
    let model = DdmModel {
        meta: DdmMetadata {
            run: run.clone(),
            ddm,
            baseline,
            steps_run: trained.history.records.len(),
        },
        denoiser: trained.denoiser,
        indicator: trained.indicator,
    };
    Ok((model, trained.history))
}

pub fn history_csv(history: &TrainHistory) -> CliResult<Vec<u8>> {
    #[derive(Serialize)]
    struct Row<'a> {
        step: usize,
        epoch: usize,
        sdm_loss: f64,
        indicator_loss: f64,
        ddm_loss: f64,
        timesteps: &'a str,
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for StepRecord {
        step,
        epoch,
        sdm_loss,
        indicator_loss,
        ddm_loss,
        timesteps,
    } in &history.records
    {
        let ts = timesteps
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";");
        w.serialize(Row {
            step: *step,
            epoch: *epoch,
            sdm_loss: *sdm_loss,
            indicator_loss: *indicator_loss,
            ddm_loss: *ddm_loss,
            timesteps: &ts,
        })
        .map_err(|e| CliError::Config(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub condition_id: usize,
    /// Digit the condition asks for; `None` for the neutral condition.
    pub intended: Option<u8>,
    pub images: Vec<f32>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.images.len() / PIXELS
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// `(condition id, intended digit, count)` for every condition the scenario samples.
pub fn sampling_plan(run: &RunConfig) -> Vec<(usize, Option<u8>, usize)> {
    match run.scenario {
        Scenario::Spd => [run.d1, run.d2]
            .into_iter()
            .map(|d| (ConditionVocab::digit(d), Some(d), run.samples_per_digit))
            .collect(),
        Scenario::Fd => vec![(ConditionVocab::NEUTRAL, None, run.samples_neutral)],
    }
}

pub fn generate_samples(
    denoiser: &DenoiserNet<f32>,
    run: &RunConfig,
    seed: u64,
) -> CliResult<Vec<SampleSet>> {
    let sched = run.ddm_config().schedule.build()?;
    sampling_plan(run)
        .into_iter()
        .map(|(condition_id, intended, n)| {
            let images = ancestral_sample(denoiser, &sched, condition_id, n, seed)?.into_data();
            Ok(SampleSet {
                condition_id,
                intended,
                images,
            })
        })
        .collect()
}

/// Checks that `samples` covers exactly the conditions `run` calls for.
pub fn check_samples(run: &RunConfig, samples: &[SampleSet]) -> CliResult<()> {
    let mut want: Vec<usize> = sampling_plan(run).iter().map(|p| p.0).collect();
    let mut have: Vec<usize> = samples.iter().map(|s| s.condition_id).collect();
    want.sort_unstable();
    have.sort_unstable();
    if want != have {
        return Err(CliError::Mismatch(format!(
            "{} run expects sample conditions {want:?}, found {have:?}",
            run.scenario
        )));
    }
    Ok(())
}

/// Held-out real images for the feature reference: the first
/// `reference_per_digit` test images of each of the two digits.
pub fn reference_images(run: &RunConfig, test_pool: &MnistSplit) -> CliResult<Vec<f32>> {
    let mut out = Vec::new();
    for d in [run.d1, run.d2] {
        let idx = test_pool.indices_of(d);
        if idx.is_empty() {
            return Err(CliError::Mismatch(format!("test split has no digit {d}")));
        }
        for &i in idx.iter().take(run.reference_per_digit) {
            out.extend_from_slice(test_pool.image(i));
        }
    }
    Ok(out)
}

fn to_f64(images: &[f32]) -> Vec<f64> {
    images.iter().map(|&v| v as f64).collect()
}

/// Unrecognizable means the oracle's class differs from the intended digit;
/// a neutral-condition sample counts as recognized when it is either digit.
pub fn recognized(pred: &Prediction, intended: Option<u8>, d1: u8, d2: u8) -> bool {
    match intended {
        Some(d) => pred.class == d,
        None => pred.class == d1 || pred.class == d2,
    }
}

pub struct EvalInputs<'a> {
    pub run: &'a RunConfig,
    pub model: &'a DdmModel,
    pub oracle: &'a OracleClassifier<f32>,
    pub oracle_accuracy: Option<f64>,
    pub samples: &'a [SampleSet],
    pub reference: &'a [f32],
    pub test_pool: &'a MnistSplit,
}

pub fn evaluate(inputs: &EvalInputs) -> CliResult<MetricsReport> {
    let run = inputs.run;
    check_samples(run, inputs.samples)?;
    let oracle = inputs.oracle.cast::<f64>();
    let mut warnings = Vec::new();
    if let Some(acc) = inputs.oracle_accuracy {
        if acc < MIN_ORACLE_ACCURACY {
            warnings.push(format!(
                "oracle accuracy {acc:.4} is below {MIN_ORACLE_ACCURACY}"
            ));
        }
    }

    let mut all_preds = Vec::new();
    let mut intended = Vec::new();
    let mut all_images = Vec::new();
    let mut sample_counts = IndexMap::new();
    let mut rates = Vec::new();
    for set in inputs.samples {
        let preds = oracle.classify(&to_f64(&set.images))?;
        let ok = preds
            .iter()
            .filter(|p| recognized(p, set.intended, run.d1, run.d2))
            .count();
        rates.push((set.intended, ok as f64 / preds.len() as f64));
        sample_counts.insert(
            ConditionVocab::digits().name(set.condition_id)?.to_string(),
            set.len(),
        );
        intended.extend(std::iter::repeat_n(set.intended, preds.len()));
        all_preds.extend(preds);
        all_images.extend_from_slice(&set.images);
    }

    let (mut fd, mut fd_other, mut spd, mut r1, mut r2) = (None, None, None, None, None);
    let unrecognizable = match run.scenario {
        Scenario::Fd => {
            let s = fd_from_predictions(&all_preds, run.d1, run.d2)?;
            fd = Some(s.fd);
            fd_other = Some(s.other_fraction);
            s.other_fraction
        }
        Scenario::Spd => {
            let rate_of = |d: u8| rates.iter().find(|(i, _)| *i == Some(d)).map(|r| r.1);
            let (a, b) = (
                rate_of(run.d1).expect("checked plan"),
                rate_of(run.d2).expect("checked plan"),
            );
            spd = Some(compute_spd(a, b)?);
            r1 = Some(a);
            r2 = Some(b);
            let predicted: Vec<u8> = all_preds.iter().map(|p| p.class).collect();
            let wanted: Vec<u8> = intended
                .iter()
                .map(|d| d.expect("digit conditions"))
                .collect();
            unrecognizable_proportion(&predicted, &wanted)?
        }
    };

    let real = oracle.extract_features(&to_f64(inputs.reference))?;
    let generated = oracle.extract_features(&to_f64(&all_images))?;
    let frechet = compute_frechet(&real, &generated)?;
    let probs: Vec<Vec<f64>> = all_preds.iter().map(|p| p.probs.clone()).collect();
    let (is_mean, is_std) = compute_is(&probs, run.is_splits)?;

    let ddm = run.ddm_config();
    let groups: Vec<(String, _)> = build_test_groups(
        &ddm.dataset,
        inputs.test_pool,
        run.test_per_group,
        run.eval_seed,
    )?
    .into_iter()
    .map(|(d, ex)| (d.to_string(), ex))
    .collect();
    let entropy = group_entropy_report(
        &inputs.model.indicator.cast(),
        &inputs.model.denoiser.cast(),
        &ddm.schedule.build()?,
        &groups,
        run.t_eval(),
        run.eval_seed,
    )?;

    Ok(MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config_fingerprint: run.fingerprint(),
        scenario: run.scenario.to_string(),
        d1: run.d1,
        d2: run.d2,
        alpha: run.alpha,
        seed: run.seed,
        fd,
        fd_other_fraction: fd_other,
        spd,
        recognition_rate_d1: r1,
        recognition_rate_d2: r2,
        frechet,
        is_mean,
        is_std,
        unrecognizable,
        per_group_entropy: entropy
            .groups
            .iter()
            .map(|g| (g.label.clone(), g.mean_entropy))
            .collect(),
        indicator_target_rate: entropy
            .groups
            .iter()
            .map(|g| (g.label.clone(), g.target_rate))
            .collect(),
        pearson_r: entropy.pearson_r,
        sample_counts,
        oracle_accuracy: inputs.oracle_accuracy,
        warnings,
    })
}

/// Train, sample and evaluate one configuration in memory.
pub fn run_experiment(
    run: &RunConfig,
    train_pool: &MnistSplit,
    test_pool: &MnistSplit,
    oracle: &OracleClassifier<f32>,
    oracle_accuracy: Option<f64>,
) -> CliResult<MetricsReport> {
    let (model, _) = run_training(run, train_pool, false)?;
    let samples = generate_samples(&model.denoiser, run, run.sample_seed)?;
    let reference = reference_images(run, test_pool)?;
    evaluate(&EvalInputs {
        run,
        model: &model,
        oracle,
        oracle_accuracy,
        samples: &samples,
        reference: &reference,
        test_pool,
    })
}
