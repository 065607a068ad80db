use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ddm_core::data::{ConditionVocab, MnistFiles, MnistSplit, Scenario};
use ddm_core::diffusion::ancestral_sample;
use ddm_core::metrics::{MetricsReport, OracleTrainConfig};

use crate::checkpoint::Checkpoint;
use crate::config::{fingerprint, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{
    bar_chart_png, read_sample_dumps, write_atomic, write_json, write_sample_dump, SampleDumpInfo,
};
use crate::pipeline::{
    history_csv, oracle_from_checkpoint, reference_images, run_oracle_training, run_training,
    DdmModel, EvalInputs, SampleSet,
};
use crate::sweep::{append_row, markdown_tables, read_rows, summarize, SweepRow};

#[derive(Debug, Parser)]
#[command(
    name = "ddm",
    version,
    about = "Debiasing diffusion models on MNIST digit mixtures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the oracle digit classifier and save its checkpoint.
    OracleTrain(OracleTrainArgs),
    /// Train a denoiser and indicator on a biased digit mixture.
    Train(TrainArgs),
    /// Draw samples under one condition from a trained checkpoint.
    Sample(SampleArgs),
    /// Score sample dumps and write a JSON report.
    Eval(EvalArgs),
    /// Aggregate sweep rows into per-alpha tables and bar charts.
    Report(ReportArgs),
}

/// Flags shared by every command that reads a run configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat TOML or JSON run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
}

impl CommonArgs {
    fn base_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.mnist_dir {
            cfg.mnist_dir = d.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct OracleTrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Checkpoint directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub d1: Option<u8>,
    #[arg(long)]
    pub d2: Option<u8>,
    /// Train the denoiser alone, without the indicator in the graph.
    #[arg(long)]
    pub baseline: bool,
    /// Run directory; receives `checkpoint/` and `history.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Condition name, e.g. "A number 3".
    #[arg(long)]
    pub condition: String,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub oracle: PathBuf,
    /// Directory of sample dumps covering the run's conditions.
    #[arg(long)]
    pub samples: PathBuf,
    /// Sample dumps to use as the real feature reference instead of MNIST test images.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    /// Seed for the entropy report noise and test-group draw.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Sweep CSV to append one row to.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub sweep: PathBuf,
    /// Directory for the tables and charts.
    #[arg(long)]
    pub out: PathBuf,
}

fn mnist(dir: &Path) -> CliResult<MnistFiles> {
    Ok(MnistFiles::in_dir(dir)?)
}

pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::OracleTrain(a) => cmd_oracle_train(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Sample(a) => cmd_sample(&a),
        Command::Eval(a) => {
            cmd_eval(&a).map(|r| serde_json::to_string_pretty(&r).expect("report serializes"))
        }
        Command::Report(a) => cmd_report(&a),
    }
}

pub fn cmd_oracle_train(args: &OracleTrainArgs) -> CliResult<String> {
    let cfg = args.common.base_config()?;
    let files = mnist(&cfg.mnist_dir)?;
    let (train, test) = (files.load_train()?, files.load_test()?);
    let mut oc = OracleTrainConfig {
        seed: args.common.seed.unwrap_or(cfg.seed),
        ..OracleTrainConfig::default()
    };
    if let Some(e) = args.epochs {
        oc.epochs = e;
    }
    let (ck, accuracy) = run_oracle_training(&train, &test, &oc)?;
    ck.save(&args.out)?;
    Ok(format!(
        "oracle test accuracy {accuracy:.4}, saved to {}",
        args.out.display()
    ))
}

/// Resolved configuration for `train`: file values, then flags.
pub fn train_config(args: &TrainArgs) -> CliResult<RunConfig> {
    let mut cfg = args.common.base_config()?;
    if let Some(v) = args.common.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.scenario {
        cfg.scenario = v;
    }
    if let Some(v) = args.d1 {
        cfg.d1 = v;
    }
    if let Some(v) = args.d2 {
        cfg.d2 = v;
    }
    cfg.out = args.out.clone();
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<String> {
    let cfg = train_config(args)?;
    train_with_pool(&cfg, &mnist(&cfg.mnist_dir)?.load_train()?, args.baseline)
}

/// The `train` command body once the training split is in memory.
pub fn train_with_pool(cfg: &RunConfig, pool: &MnistSplit, baseline: bool) -> CliResult<String> {
    let (model, history) = run_training(cfg, pool, baseline)?;
    write_atomic(&cfg.out.join("history.csv"), &history_csv(&history)?)?;
    model.to_checkpoint()?.save(&cfg.out.join("checkpoint"))?;
    let last = history.records.last();
    Ok(match last {
        Some(r) => format!(
            "{} steps; final sdm_loss {:.6} indicator_loss {:.6} ddm_loss {:.6}",
            history.records.len(),
            r.sdm_loss,
            r.indicator_loss,
            r.ddm_loss
        ),
        None => "0 steps; parameters left at initialization".into(),
    })
}

pub fn cmd_sample(args: &SampleArgs) -> CliResult<String> {
    let vocab = ConditionVocab::digits();
    let condition_id = vocab.id_of(&args.condition)?;
    let ck = Checkpoint::load(&args.checkpoint)?;
    let ck_fingerprint = fingerprint(&ck.metadata);
    let model = DdmModel::from_checkpoint(ck)?;
    if args.n == 0 {
        return Err(CliError::Config("--n must be positive".into()));
    }
    let sched = model.meta.ddm.schedule.build()?;
    let images = ancestral_sample(&model.denoiser, &sched, condition_id, args.n, args.seed)?;
    let info = SampleDumpInfo {
        condition_id,
        condition: vocab.name(condition_id)?.to_string(),
        seed: args.seed,
        count: args.n,
        shape: images.shape().to_vec(),
        checkpoint_fingerprint: ck_fingerprint,
    };
    let path = write_sample_dump(&args.out, &info, images.data())?;
    Ok(format!("wrote {} samples to {}", args.n, path.display()))
}

fn load_sets(dir: &Path) -> CliResult<Vec<SampleSet>> {
    let vocab = ConditionVocab::digits();
    read_sample_dumps(dir)?
        .into_iter()
        .map(|(info, images)| {
            vocab.check(info.condition_id)?;
            Ok(SampleSet {
                condition_id: info.condition_id,
                intended: ConditionVocab::digit_of(info.condition_id),
                images,
            })
        })
        .collect()
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<MetricsReport> {
    let model = DdmModel::from_checkpoint(Checkpoint::load(&args.checkpoint)?)?;
    let (oracle, oracle_meta) = oracle_from_checkpoint(Checkpoint::load(&args.oracle)?)?;
    let mut run = model.meta.run.clone();
    if let Some(d) = &args.mnist_dir {
        run.mnist_dir = d.clone();
    }
    if let Some(s) = args.seed {
        run.eval_seed = s;
    }
    let samples = load_sets(&args.samples)?;
    if samples.is_empty() {
        return Err(CliError::Mismatch(format!(
            "no sample dumps in {}",
            args.samples.display()
        )));
    }
    let test_pool = mnist(&run.mnist_dir)?.load_test()?;
    let reference = match &args.reference {
        Some(dir) => load_sets(dir)?.into_iter().flat_map(|s| s.images).collect(),
        None => reference_images(&run, &test_pool)?,
    };
    let report = crate::pipeline::evaluate(&EvalInputs {
        run: &run,
        model: &model,
        oracle: &oracle,
        oracle_accuracy: Some(oracle_meta.accuracy),
        samples: &samples,
        reference: &reference,
        test_pool: &test_pool,
    })?;
    write_json(&args.out, &report)?;
    if let Some(sweep) = &args.sweep {
        append_row(sweep, &SweepRow::from_report(&report))?;
    }
    Ok(report)
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<String> {
    let rows = read_rows(&args.sweep)?;
    let summaries = summarize(&rows);
    let tables = markdown_tables(&summaries);
    write_atomic(&args.out.join("summary.md"), tables.as_bytes())?;
    write_json(&args.out.join("summary.json"), &summaries)?;
    let mut settings: Vec<(String, u8, u8)> = summaries
        .iter()
        .map(|s| (s.scenario.clone(), s.d1, s.d2))
        .collect();
    settings.dedup();
    for (scenario, d1, d2) in settings {
        let bars: Vec<(f64, f64, f64)> = summaries
            .iter()
            .filter(|s| s.scenario == scenario && s.d1 == d1 && s.d2 == d2)
            .map(|s| (s.gap_median, s.gap_min, s.gap_max))
            .collect();
        let name = format!("{}_{d1}_{d2}.png", scenario.to_lowercase());
        write_atomic(&args.out.join(name), &bar_chart_png(&bars)?)?;
    }
    Ok(tables)
}
