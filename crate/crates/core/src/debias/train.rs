use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSpec, LabeledExample, Scenario};
use crate::diffusion::{
    add_noise_rows, reconstruct_z0_on, sdm_loss_on, DenoiserArch, DenoiserNet, NoiseSchedule,
    ScheduleConfig,
};
use crate::error::{Error, Result};
use crate::numerics::{adam_update, AdamConfig, Bound, OptimizerState, Real, Tape, Var};
use crate::rng::{self, Rng};

use super::indicator::{Indicator, IndicatorArch};
use super::loss::{ddm_loss, ddm_loss_on, indicator_loss_on};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdmConfig {
    pub alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub dataset: DatasetSpec,
    pub denoiser: DenoiserArch,
    pub indicator: IndicatorArch,
}

impl Default for DdmConfig {
    fn default() -> Self {
        DdmConfig {
            alpha: 0.0,
            epochs: 30,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 0,
            schedule: ScheduleConfig::default(),
            dataset: DatasetSpec::new(3, 0, Scenario::Spd, 0),
            denoiser: DenoiserArch::default(),
            indicator: IndicatorArch::default(),
        }
    }
}

impl DdmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "bad learning rate {}",
                self.learning_rate
            )));
        }
        if self.denoiser.pixels != self.indicator.input {
            return Err(Error::Config("denoiser and indicator widths differ".into()));
        }
        self.denoiser.validate()?;
        self.dataset.validate()?;
        self.schedule.build().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub sdm_loss: f64,
    /// Zero when the indicator is absent from the graph.
    pub indicator_loss: f64,
    pub ddm_loss: f64,
    pub timesteps: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub alpha: f64,
    pub records: Vec<StepRecord>,
}

/// Per-example diffusion steps and noise for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw<R: Real> {
    pub steps: Vec<usize>,
    pub eps: Vec<R>,
}

/// Draws `t ~ U{1..T}` for every example, then standard-normal noise.
pub fn draw_noise<R: Real>(
    rng: &mut Rng,
    n: usize,
    pixels: usize,
    sched: &NoiseSchedule,
) -> NoiseDraw<R> {
    let steps = (0..n)
        .map(|_| rng.random_range(1..=sched.steps()))
        .collect();
    let eps = rng::normals(rng, n * pixels);
    NoiseDraw { steps, eps }
}

/// One batch in network precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<R: Real> {
    pub z0: Vec<R>,
    pub labels: Vec<u8>,
    pub conditions: Vec<usize>,
}

impl<R: Real> Batch<R> {
    pub fn from_examples(examples: &[&LabeledExample]) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        Ok(Batch {
            z0: examples
                .iter()
                .flat_map(|e| e.pixels().iter().map(|&v| R::of(v as f64)))
                .collect(),
            labels: examples.iter().map(|e| e.y).collect(),
            conditions: examples.iter().map(|e| e.condition_id).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Handles to the recorded losses of one batch.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub loss: Var,
    pub sdm: Var,
    pub indicator: Option<Var>,
}

/// Records the training objective on `tape`.
///
/// With an indicator the loss is `(1-α)·L_sdm + α·L_ind`, where the indicator
/// sees `z0 + (eps - eps_hat)`. Without one the loss is `L_sdm` alone.
#[allow(clippy::too_many_arguments)]
pub fn ddm_objective<R: Real>(
    tape: &mut Tape<R>,
    denoiser: &DenoiserNet<R>,
    denoiser_vars: &Bound,
    indicator: Option<(&Indicator<R>, &Bound)>,
    batch: &Batch<R>,
    noise: &NoiseDraw<R>,
    sched: &NoiseSchedule,
    alpha: f64,
) -> Result<Objective> {
    let n = batch.len();
    let pixels = denoiser.arch.pixels;
    let z_t = add_noise_rows(&batch.z0, &noise.eps, &noise.steps, sched)?;
    let z_t = tape.constant(vec![n, pixels], z_t)?;
    let eps = tape.constant(vec![n, pixels], noise.eps.clone())?;
    let eps_hat = denoiser.predict_noise(
        tape,
        denoiser_vars,
        z_t,
        &noise.steps,
        &batch.conditions,
        sched,
    )?;
    let sdm = sdm_loss_on(tape, eps, eps_hat)?;
    match indicator {
        None => Ok(Objective {
            loss: sdm,
            sdm,
            indicator: None,
        }),
        Some((ind, ind_vars)) => {
            let z0 = tape.constant(vec![n, pixels], batch.z0.clone())?;
            let z0_prime = reconstruct_z0_on(tape, z0, eps, eps_hat)?;
            let yhat = ind.forward(tape, ind_vars, z0_prime)?;
            let l_ind = indicator_loss_on(tape, yhat, &batch.labels)?;
            let loss = ddm_loss_on(tape, sdm, l_ind, alpha)?;
            Ok(Objective {
                loss,
                sdm,
                indicator: Some(l_ind),
            })
        }
    }
}

/// A network together with its optimizer state.
#[derive(Debug, Clone)]
pub struct Learner<N, R: Real> {
    pub net: N,
    pub optimizer: OptimizerState<R>,
}

/// One joint update. Passing `None` for the indicator trains the denoiser on
/// the diffusion loss alone; `noise` must come from [`draw_noise`].
#[allow(clippy::too_many_arguments)]
pub fn train_step<R: Real>(
    denoiser: &mut Learner<DenoiserNet<R>, R>,
    indicator: Option<&mut Learner<Indicator<R>, R>>,
    batch: &Batch<R>,
    noise: &NoiseDraw<R>,
    sched: &NoiseSchedule,
    alpha: f64,
    step: usize,
    epoch: usize,
) -> Result<StepRecord> {
    let diagnostic = |sdm: f64, ind: f64| Error::NonFiniteLoss {
        step,
        sdm_loss: sdm,
        indicator_loss: ind,
        timesteps: noise.steps.clone(),
    };

    let mut tape = Tape::new();
    let dvars = denoiser.net.params.bind(&mut tape);
    let ivars = indicator.as_ref().map(|l| l.net.params.bind(&mut tape));
    let pair = indicator.as_ref().map(|l| &l.net).zip(ivars.as_ref());
    let objective = match ddm_objective(
        &mut tape,
        &denoiser.net,
        &dvars,
        pair,
        batch,
        noise,
        sched,
        alpha,
    ) {
        Err(Error::Numeric(_)) => return Err(diagnostic(f64::NAN, f64::NAN)),
        other => other?,
    };

    let sdm = tape.scalar(objective.sdm)?.as_f64();
    let ind = match objective.indicator {
        Some(v) => tape.scalar(v)?.as_f64(),
        None => 0.0,
    };
    if !sdm.is_finite() || !ind.is_finite() {
        return Err(diagnostic(sdm, ind));
    }
    let total = ddm_loss(
        sdm,
        ind,
        if objective.indicator.is_some() {
            alpha
        } else {
            0.0
        },
    )?;

    let mut grads = match tape.backward(objective.loss) {
        Err(Error::Numeric(_)) => return Err(diagnostic(sdm, ind)),
        other => other?,
    };
    denoiser.net.params.store_grads(&dvars, &mut grads)?;
    adam_update(&mut denoiser.net.params, &mut denoiser.optimizer)?;
    denoiser.net.params.clear_grads();
    if let (Some(l), Some(vars)) = (indicator, ivars) {
        l.net.params.store_grads(&vars, &mut grads)?;
        adam_update(&mut l.net.params, &mut l.optimizer)?;
        l.net.params.clear_grads();
    }

    Ok(StepRecord {
        step,
        epoch,
        sdm_loss: sdm,
        indicator_loss: ind,
        ddm_loss: total,
        timesteps: noise.steps.clone(),
    })
}

/// Stepwise driver over a fixed dataset: seeded shuffle per epoch, then
/// consecutive batches of `batch_size` (the last one may be short).
pub struct Trainer<'a> {
    pub config: DdmConfig,
    pub schedule: NoiseSchedule,
    pub denoiser: Learner<DenoiserNet<f32>, f32>,
    /// `None` for the pure-diffusion baseline.
    pub indicator: Option<Learner<Indicator<f32>, f32>>,
    data: &'a [LabeledExample],
    rng: Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    step: usize,
    history: TrainHistory,
}

/// Seeded denoiser initialization with its skip fitted to `data`.
pub fn initial_denoiser(config: &DdmConfig, data: &[LabeledExample]) -> Result<DenoiserNet<f32>> {
    let mut net = DenoiserNet::init(config.denoiser, config.seed)?;
    let pixels: Vec<f32> = data
        .iter()
        .flat_map(|e| e.pixels().iter().copied())
        .collect();
    let conditions: Vec<usize> = data.iter().map(|e| e.condition_id).collect();
    net.fit_skip(&pixels, &conditions)?;
    Ok(net)
}

impl<'a> Trainer<'a> {
    pub fn new(config: DdmConfig, data: &'a [LabeledExample]) -> Result<Self> {
        Self::build(config, data, true)
    }

    /// Same initialization and data order, but the indicator never enters the graph.
    pub fn diffusion_only(config: DdmConfig, data: &'a [LabeledExample]) -> Result<Self> {
        Self::build(config, data, false)
    }

    fn build(config: DdmConfig, data: &'a [LabeledExample], with_indicator: bool) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let schedule = config.schedule.build()?;
        let adam = AdamConfig::with_learning_rate(config.learning_rate);
        let net = initial_denoiser(&config, data)?;
        let denoiser = Learner {
            optimizer: OptimizerState::new(&net.params, adam),
            net,
        };
        let indicator = if with_indicator {
            let net = Indicator::init(config.indicator, config.seed)?;
            Some(Learner {
                optimizer: OptimizerState::new(&net.params, adam),
                net,
            })
        } else {
            None
        };
        let history = TrainHistory {
            alpha: config.alpha,
            records: Vec::new(),
        };
        Ok(Trainer {
            rng: rng::stream(config.seed, rng::TRAINING),
            config,
            schedule,
            denoiser,
            indicator,
            data,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
            step: 0,
            history,
        })
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.config.batch_size)
    }

    pub fn total_steps(&self) -> usize {
        self.config.epochs * self.steps_per_epoch()
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Runs the next step, or returns `None` once every epoch is done.
    pub fn step(&mut self) -> Result<Option<&StepRecord>> {
        if self.cursor >= self.order.len() {
            if self.epoch >= self.config.epochs {
                return Ok(None);
            }
            self.order = (0..self.data.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let end = (self.cursor + self.config.batch_size).min(self.order.len());
        let picked: Vec<&LabeledExample> = self.order[self.cursor..end]
            .iter()
            .map(|&i| &self.data[i])
            .collect();
        self.cursor = end;

        let batch = Batch::from_examples(&picked)?;
        let noise = draw_noise(
            &mut self.rng,
            batch.len(),
            self.config.denoiser.pixels,
            &self.schedule,
        );
        let record = train_step(
            &mut self.denoiser,
            self.indicator.as_mut(),
            &batch,
            &noise,
            &self.schedule,
            self.config.alpha,
            self.step,
            self.epoch - 1,
        )?;
        self.step += 1;
        self.history.records.push(record);
        Ok(self.history.records.last())
    }

    pub fn run(mut self) -> Result<TrainedModel> {
        while self.step()?.is_some() {}
        Ok(self.finish())
    }

    pub fn finish(self) -> TrainedModel {
        let indicator = match self.indicator {
            Some(l) => l.net,
            None => Indicator::zeros(self.config.indicator).expect("validated architecture"),
        };
        TrainedModel {
            config: self.config,
            denoiser: self.denoiser.net,
            indicator,
            history: self.history,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: DdmConfig,
    pub denoiser: DenoiserNet<f32>,
    pub indicator: Indicator<f32>,
    pub history: TrainHistory,
}

/// Trains the denoiser and indicator jointly for `config.epochs` epochs.
pub fn train(config: DdmConfig, data: &[LabeledExample]) -> Result<TrainedModel> {
    Trainer::new(config, data)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_nontarget;

    fn small_config(alpha: f64) -> DdmConfig {
        DdmConfig {
            alpha,
            epochs: 1,
            batch_size: 4,
            schedule: ScheduleConfig {
                steps: 20,
                ..ScheduleConfig::default()
            },
            denoiser: DenoiserArch {
                hidden: 16,
                ..DenoiserArch::default()
            },
            indicator: IndicatorArch {
                hidden1: 8,
                hidden2: 4,
                ..IndicatorArch::default()
            },
            ..DdmConfig::default()
        }
    }

    fn toy_data() -> Vec<LabeledExample> {
        let mut data = generate_nontarget(6, 1).unwrap();
        for (i, e) in data.iter_mut().enumerate().take(3) {
            e.y = 1;
            e.condition_id = i + 1;
        }
        data
    }

    #[test]
    fn epochs_zero_returns_initialization() {
        let data = toy_data();
        let cfg = DdmConfig {
            epochs: 0,
            ..small_config(0.5)
        };
        let model = train(cfg.clone(), &data).unwrap();
        assert!(model.history.records.is_empty());
        let init = initial_denoiser(&cfg, &data).unwrap();
        assert!(model.denoiser.params.bitwise_eq(&init.params));
        let init = Indicator::<f32>::init(cfg.indicator, cfg.seed).unwrap();
        assert!(model.indicator.params.bitwise_eq(&init.params));
    }

    #[test]
    fn step_count_and_bookkeeping() {
        let data = toy_data();
        let cfg = DdmConfig {
            epochs: 3,
            ..small_config(0.3)
        };
        let model = train(cfg, &data).unwrap();
        assert_eq!(model.history.records.len(), 3 * 2);
        for r in &model.history.records {
            assert!(r.sdm_loss.is_finite() && r.indicator_loss.is_finite());
            let want = 0.7 * r.sdm_loss + 0.3 * r.indicator_loss;
            assert!((r.ddm_loss - want).abs() <= 1e-9);
        }
        assert_eq!(model.history.records.last().unwrap().epoch, 2);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let data = toy_data();
        let cfg = DdmConfig {
            learning_rate: 0.0,
            ..small_config(0.5)
        };
        let model = train(cfg.clone(), &data).unwrap();
        assert_eq!(model.history.records.len(), 2);
        let init = initial_denoiser(&cfg, &data).unwrap();
        assert!(model.denoiser.params.bitwise_eq(&init.params));
        let init = Indicator::<f32>::init(cfg.indicator, cfg.seed).unwrap();
        assert!(model.indicator.params.bitwise_eq(&init.params));
    }

    #[test]
    fn alpha_zero_leaves_indicator_and_matches_baseline() {
        let data = toy_data();
        let cfg = DdmConfig {
            epochs: 4,
            ..small_config(0.0)
        };
        let mut joint = Trainer::new(cfg.clone(), &data).unwrap();
        let mut base = Trainer::diffusion_only(cfg.clone(), &data).unwrap();
        let ind0 = joint.indicator.as_ref().unwrap().net.params.clone();
        while joint.step().unwrap().is_some() {
            base.step().unwrap().unwrap();
            assert!(joint
                .denoiser
                .net
                .params
                .bitwise_eq(&base.denoiser.net.params));
        }
        assert!(base.step().unwrap().is_none());
        assert!(joint.indicator.unwrap().net.params.bitwise_eq(&ind0));
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_data();
        let a = train(small_config(0.2), &data).unwrap();
        let b = train(small_config(0.2), &data).unwrap();
        assert!(a.denoiser.params.bitwise_eq(&b.denoiser.params));
        assert!(a.indicator.params.bitwise_eq(&b.indicator.params));
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn rejects_bad_config_and_empty_data() {
        assert!(matches!(
            train(small_config(1.5), &toy_data()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train(small_config(0.5), &[]),
            Err(Error::Config(_))
        ));
    }
}
