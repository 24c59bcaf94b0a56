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


//! Experiment plumbing behind the `dpboost` binary: run configuration,
//! cross-validation and the JSON-lines result record.

use std::fmt;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use dpboost::mechanisms::{derive_seed, SeedPurpose};
use dpboost::metrics::{evaluate, mean_std};
use dpboost::{
    Dataset, FoldSplit, GbdtModel, GlcIndexMode, Mode, PrivacyConfig, Task, TrainOutput, TrainParams,
    TrainingReport,
};
use serde::{Deserialize, Serialize};

pub mod commands;

/// Ensemble size used when none is given (capped by the number of trees).
pub const DEFAULT_ENSEMBLE_SIZE: usize = 50;

/// Bad flag combination. The binary maps it to exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Everything needed to train one model, minus the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub mode: Mode,
    pub eps: Option<f64>,
    pub trees: usize,
    pub ensemble_size: Option<usize>,
    pub depth: usize,
    pub lambda: f64,
    pub eta: f64,
    pub bins: usize,
    pub seed: u64,
    pub glc_index: GlcIndexMode,
    pub glc: bool,
}

impl RunConfig {
    pub fn new(task: Task, mode: Mode) -> Self {
        let d = TrainParams::default();
        RunConfig {
            task,
            mode,
            eps: None,
            trees: d.trees,
            ensemble_size: None,
            depth: d.depth_max,
            lambda: d.lambda,
            eta: d.eta,
            bins: d.bins,
            seed: d.seed,
            glc_index: GlcIndexMode::EnsembleLocal,
            glc: true,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Check flag combinations; returns warnings for ignored flags.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.trees == 0 {
            return Err(usage("--trees must be at least 1"));
        }
        if self.mode.is_private() {
            match self.eps {
                None => return Err(usage(format!("--eps is required for mode {}", self.mode))),
                Some(e) if !(e > 0.0 && e.is_finite()) => {
                    return Err(usage(format!("--eps must be positive, got {e}")))
                }
                _ => {}
            }
            if let Some(te) = self.ensemble_size {
                if te == 0 || te > self.trees {
                    return Err(usage(format!("--ensemble-size {te} must be in 1..={}", self.trees)));
                }
                if self.mode != Mode::DpBoost {
                    warnings.push(format!("--ensemble-size is ignored by mode {}", self.mode));
                }
            }
        } else {
            if let Some(e) = self.eps {
                warnings.push(format!("mode np has no privacy budget; --eps {e} ignored"));
            }
            if self.ensemble_size.is_some_and(|te| te > self.trees) {
                return Err(usage("--ensemble-size exceeds --trees"));
            }
        }
        self.params(self.seed).validate().map_err(|e| usage(e.to_string()))?;
        Ok(warnings)
    }

    /// Effective ensemble size (dpboost only).
    pub fn effective_ensemble_size(&self) -> Option<usize> {
        (self.mode == Mode::DpBoost).then(|| self.ensemble_size.unwrap_or(DEFAULT_ENSEMBLE_SIZE.min(self.trees)))
    }

    /// Budget recorded in results: `None` for np.
    pub fn effective_eps(&self) -> Option<f64> {
        if self.mode.is_private() {
            self.eps
        } else {
            None
        }
    }

    pub fn params(&self, seed: u64) -> TrainParams {
        TrainParams {
            trees: self.trees,
            depth_max: self.depth,
            lambda: self.lambda,
            eta: self.eta,
            bins: self.bins,
            seed,
            ..TrainParams::default()
        }
    }

    pub fn privacy(&self) -> Result<PrivacyConfig> {
        // np ignores the privacy settings; any valid placeholder will do.
        let eps = self.effective_eps().unwrap_or(1.0);
        let te = self.effective_ensemble_size().unwrap_or(1);
        let mut p = PrivacyConfig::new(eps, te).map_err(|e| usage(e.to_string()))?;
        p.glc_index = self.glc_index;
        p.glc = self.glc;
        Ok(p)
    }

    /// Train on `train` with the given tree seed.
    pub fn fit(&self, train: &Dataset, seed: u64) -> Result<TrainOutput> {
        if train.task() != self.task {
            return Err(usage(format!("dataset task {} does not match --task {}", train.task(), self.task)));
        }
        Ok(dpboost::train(train, self.mode, &self.params(seed), &self.privacy()?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Fraction misclassified.
    TestError,
    /// RMSE in original label units.
    Rmse,
}

impl Metric {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classification => Metric::TestError,
            Task::Regression => Metric::Rmse,
        }
    }
}

/// Budget audit of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerAudit {
    pub total: f64,
    pub charges: usize,
}

impl LedgerAudit {
    pub fn of(model: &GbdtModel) -> Self {
        LedgerAudit {
            total: model.ledger.total(),
            charges: model.ledger.entries().iter().map(|e| e.charge_count()).sum(),
        }
    }
}

/// Seed chain of a run: the run seed, then one tree seed per fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub run: u64,
    pub split: Option<u64>,
    pub folds: Vec<u64>,
}

/// One line of results output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: Mode,
    pub task: Task,
    pub eps: Option<f64>,
    pub trees: usize,
    pub ensemble_size: Option<usize>,
    pub metric: Metric,
    /// Metric per fold (one entry for a train/valid run, none without validation data).
    pub folds: Vec<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub seconds_per_tree: f64,
    pub ledger: Vec<LedgerAudit>,
    pub seeds: Seeds,
}

impl RunResult {
    fn new(cfg: &RunConfig, folds: Vec<f64>, seconds_per_tree: f64, ledger: Vec<LedgerAudit>, seeds: Seeds) -> Self {
        let (mean, std) = if folds.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&folds);
            (Some(m), Some(s))
        };
        RunResult {
            mode: cfg.mode,
            task: cfg.task,
            eps: cfg.effective_eps(),
            trees: cfg.trees,
            ensemble_size: cfg.effective_ensemble_size(),
            metric: Metric::for_task(cfg.task),
            folds,
            mean,
            std,
            seconds_per_tree,
            ledger,
            seeds,
        }
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }

    pub const CSV_HEADER: &'static str = "mode,task,eps,trees,ensemble_size,mean,std";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.mode,
            self.task,
            opt(self.eps),
            self.trees,
            self.ensemble_size.map(|t| t.to_string()).unwrap_or_default(),
            opt(self.mean),
            opt(self.std),
        )
    }
}

/// Append `result` to a CSV file, writing the header when the file is new or empty.
pub fn append_csv(path: &Path, result: &RunResult) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if fresh {
        writeln!(f, "{}", RunResult::CSV_HEADER)?;
    }
    writeln!(f, "{}", result.csv_row())?;
    Ok(())
}

/// A fold's model together with its training report.
pub struct FoldOutcome {
    pub metric: f64,
    pub output: TrainOutput,
}

pub struct CvOutcome {
    pub result: RunResult,
    pub folds: Vec<FoldOutcome>,
}

/// Tree seed of fold `fold` under run seed `seed`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    derive_seed(seed, &[SeedPurpose::Train as u64, fold as u64])
}

/// K-fold cross-validation. Regression labels are rescaled per fold from the
/// training part. Folds train concurrently; results do not depend on scheduling.
pub fn cross_validate(cfg: &RunConfig, dataset: &Dataset, k: usize) -> Result<CvOutcome> {
    cfg.validate()?;
    if k < 2 {
        return Err(usage(format!("--folds must be at least 2, got {k}")));
    }
    let split_seed = derive_seed(cfg.seed, &[SeedPurpose::Fold as u64]);
    let split = FoldSplit::new(dataset.len(), k, split_seed).map_err(|e| usage(e.to_string()))?;
    let seeds: Vec<u64> = (0..k).map(|f| fold_seed(cfg.seed, f)).collect();
    let outcomes: Vec<Result<FoldOutcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..k)
            .map(|fold| {
                let split = &split;
                let seed = seeds[fold];
                s.spawn(move || -> Result<FoldOutcome> {
                    let (train, test) = dataset.split_scaled(&split.train_indices(fold), &split.test_indices(fold));
                    let output = cfg.fit(&train, seed)?;
                    Ok(FoldOutcome { metric: evaluate(&output.model, &test), output })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fold thread panicked")).collect()
    });
    let folds = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let result = RunResult::new(
        cfg,
        folds.iter().map(|f| f.metric).collect(),
        seconds_per_tree(folds.iter().map(|f| &f.output.report)),
        folds.iter().map(|f| LedgerAudit::of(&f.output.model)).collect(),
        Seeds { run: cfg.seed, split: Some(split_seed), folds: seeds },
    );
    Ok(CvOutcome { result, folds })
}

/// Train on the full `train` set and optionally score `valid`.
pub fn train_and_score(cfg: &RunConfig, train: &Dataset, valid: Option<&Dataset>) -> Result<(TrainOutput, RunResult)> {
    cfg.validate()?;
    let output = cfg.fit(train, cfg.seed)?;
    let folds = valid.map(|v| vec![evaluate(&output.model, v)]).unwrap_or_default();
    let result = RunResult::new(
        cfg,
        folds,
        output.report.seconds_per_tree(),
        vec![LedgerAudit::of(&output.model)],
        Seeds { run: cfg.seed, split: None, folds: vec![cfg.seed] },
    );
    Ok((output, result))
}

fn seconds_per_tree<'a>(reports: impl Iterator<Item = &'a TrainingReport>) -> f64 {
    let (secs, trees) = reports.fold((0.0, 0usize), |(s, t), r| (s + r.seconds, t + r.trees.len()));
    if trees == 0 {
        0.0
    } else {
        secs / trees as f64
    }
}
