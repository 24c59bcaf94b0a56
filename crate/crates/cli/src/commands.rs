// Copyright 2026 The dpboost Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


//! Command-line definitions and handlers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dpboost::data::{load_libsvm, load_libsvm_with, write_libsvm, LibsvmOptions};
use dpboost::metrics::evaluate;
use dpboost::verify::{self, Check};
use dpboost::{synthetic, GbdtModel, GlcIndexMode, Mode, Task};

use crate::{append_csv, cross_validate, train_and_score, RunConfig, UsageError};

#[derive(Debug, Parser)]
#[command(name = "dpboost", version, about = "Differentially private gradient boosted decision trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a LIBSVM file and write it as JSON.
    Train(TrainArgs),
    /// K-fold cross-validation; prints one RunResult JSON line.
    Cv(CvArgs),
    /// Score a saved model on a LIBSVM file.
    Predict(PredictArgs),
    /// Brute-force and Monte-Carlo checks of the privacy machinery.
    Verify(VerifyArgs),
    /// Write a synthetic dataset in LIBSVM format.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Cls,
    Reg,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Cls => Task::Classification,
            TaskArg::Reg => Task::Regression,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Dpboost,
    Seq,
    Para,
    Np,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Dpboost => Mode::DpBoost,
            ModeArg::Seq => Mode::Seq,
            ModeArg::Para => Mode::Para,
            ModeArg::Np => Mode::Np,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GlcIndexArg {
    Ensemble,
    Global,
}

impl From<GlcIndexArg> for GlcIndexMode {
    fn from(g: GlcIndexArg) -> GlcIndexMode {
        match g {
            GlcIndexArg::Ensemble => GlcIndexMode::EnsembleLocal,
            GlcIndexArg::Global => GlcIndexMode::Global,
        }
    }
}

/// Flags shared by `train` and `cv`.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// LIBSVM input file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long, value_enum, default_value = "dpboost")]
    pub mode: ModeArg,
    /// Total privacy budget (required for dpboost, seq and para).
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub trees: usize,
    /// Trees per ensemble (dpboost); defaults to min(trees, 50).
    #[arg(long)]
    pub ensemble_size: Option<usize>,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 32)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "ensemble")]
    pub glc_index: GlcIndexArg,
    /// Disable geometric leaf clipping (dpboost).
    #[arg(long)]
    pub no_glc: bool,
}

impl RunArgs {
    pub fn config(&self) -> RunConfig {
        RunConfig {
            task: self.task.into(),
            mode: self.mode.into(),
            eps: self.eps,
            trees: self.trees,
            ensemble_size: self.ensemble_size,
            depth: self.depth,
            lambda: self.lambda,
            eta: self.eta,
            bins: self.bins,
            seed: self.seed,
            glc_index: self.glc_index.into(),
            glc: !self.no_glc,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Where to write the model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Optional LIBSVM validation file.
    #[arg(long)]
    pub valid: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Append (eps, mean, std) columns to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Write one prediction per line here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckArg {
    SensitivityGain,
    SensitivityLeaf,
    GdfBound,
    Laplace,
    Expmech,
    Ledger,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub check: CheckArg,
    /// Trials (or draws); each check has its own default.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse arguments, run, and map errors to exit codes (2 for usage, 1 otherwise).
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn prepare(run: &RunArgs) -> Result<RunConfig> {
    let cfg = run.config();
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn load(path: &PathBuf, task: Task) -> Result<dpboost::Dataset> {
    load_libsvm(path, task).with_context(|| format!("loading {}", path.display()))
}

pub fn cmd_train(a: TrainArgs) -> Result<ExitCode> {
    let cfg = prepare(&a.run)?;
    let train = load(&a.run.data, cfg.task)?;
    let valid = match &a.valid {
        Some(p) => {
            let opts = LibsvmOptions { index_base: Some(train.index_base()) };
            let v = load_libsvm_with(p, cfg.task, opts).with_context(|| format!("loading {}", p.display()))?;
            Some(v.with_label_scale(train.label_scale()).with_n_features(train.n_features()))
        }
        None => None,
    };
    eprintln!("training {} on {} instances ({} trees)", cfg.mode, train.len(), cfg.trees);
    let (output, result) = train_and_score(&cfg, &train, valid.as_ref())?;
    output.model.save(&a.model).with_context(|| format!("writing {}", a.model.display()))?;
    eprintln!("model written to {}", a.model.display());
    println!("{}", result.to_json_line()?);
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_cv(a: CvArgs) -> Result<ExitCode> {
    let cfg = prepare(&a.run)?;
    let data = load(&a.run.data, cfg.task)?;
    eprintln!("{}-fold cv of {} on {} instances", a.folds, cfg.mode, data.len());
    let cv = cross_validate(&cfg, &data, a.folds)?;
    if let (Some(m), Some(s)) = (cv.result.mean, cv.result.std) {
        eprintln!("{:?}: {m:.4} ± {s:.4}", cv.result.metric);
    }
    if let Some(path) = &a.csv {
        append_csv(path, &cv.result)?;
    }
    println!("{}", cv.result.to_json_line()?);
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_predict(a: PredictArgs) -> Result<ExitCode> {
    let model = GbdtModel::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let data = load(&a.data, model.task)?.with_label_scale(model.label_scale);
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    for x in data.instances() {
        writeln!(out, "{}", model.predict(x))?;
    }
    out.flush()?;
    eprintln!("{}: {:.6}", if model.task == Task::Classification { "test error" } else { "rmse" }, evaluate(&model, &data));
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_verify(a: VerifyArgs) -> Result<ExitCode> {
    let checks: Vec<Check> = match a.check {
        CheckArg::All => Check::ALL.to_vec(),
        CheckArg::SensitivityGain => vec![Check::SensitivityGain],
        CheckArg::SensitivityLeaf => vec![Check::SensitivityLeaf],
        CheckArg::GdfBound => vec![Check::GdfBound],
        CheckArg::Laplace => vec![Check::Laplace],
        CheckArg::Expmech => vec![Check::Expmech],
        CheckArg::Ledger => vec![Check::Ledger],
    };
    let mut ok = true;
    for check in checks {
        let report = verify::run(check, a.trials, a.seed)?;
        eprintln!(
            "{}: {} ({} violations in {} trials, {:.2}s)",
            report.check,
            if report.passed { "pass" } else { "FAIL" },
            report.violations,
            report.trials,
            report.seconds
        );
        println!("{}", serde_json::to_string(&report)?);
        ok &= report.passed;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

pub fn cmd_synth(a: SynthArgs) -> Result<ExitCode> {
    let ds = match Task::from(a.task) {
        Task::Classification => synthetic::make_classification(a.n, a.d, a.seed),
        Task::Regression => synthetic::make_regression(a.n, a.d, a.seed),
    }
    .map_err(|e| UsageError(e.to_string()))?;
    let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_libsvm(&ds, BufWriter::new(file))?;
    eprintln!("wrote {} instances to {}", ds.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}
