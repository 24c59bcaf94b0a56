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

//! Boosting with tightened sensitivity bounds.
//!
//! * Gradient-based data filtering drops, for one iteration, every instance whose
//!   `|g|` exceeds the loss constant `g*`, which bounds the gain sensitivity by
//!   `3 g*^2` and the leaf sensitivity by `g* / (1 + λ)`.
//! * Geometric leaf clipping caps the leaves of the tree at index `t` at
//!   `g* (1 - η)^(t-1)`, shrinking the leaf sensitivity geometrically.
//! * The ensemble-of-ensembles trainer splits the total budget evenly across
//!   `⌈T / T_e⌉` sequential ensembles; inside an ensemble every tree sees a disjoint
//!   subset and spends the full per-ensemble budget.
//!
//! SEQ, PARA and non-private trainers are provided as baselines.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{sample_disjoint, Dataset};
use crate::dp_tree::{split_budget, train_single_tree, DpTreeParams};
use crate::error::{invalid, Error, Result};
use crate::gbdt::{train_greedy_tree, BinnedData, GbdtModel, LossKind, Tree, MAX_DEPTH};
use crate::mechanisms::{derive_seed, Composition, LedgerEntry, Rng, SeedPurpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[serde(rename = "dpboost")]
    DpBoost,
    Seq,
    Para,
    Np,
}

impl Mode {
    pub fn is_private(self) -> bool {
        self != Mode::Np
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpboost" => Ok(Mode::DpBoost),
            "seq" => Ok(Mode::Seq),
            "para" => Ok(Mode::Para),
            "np" => Ok(Mode::Np),
            other => Err(invalid(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::DpBoost => "dpboost",
            Mode::Seq => "seq",
            Mode::Para => "para",
            Mode::Np => "np",
        })
    }
}

/// Which tree index drives the clipping exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlcIndexMode {
    /// Position inside the current ensemble (restarts at 1 every ensemble).
    #[default]
    EnsembleLocal,
    /// Global tree index `t`.
    Global,
}

impl FromStr for GlcIndexMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ensemble" | "ensemble_local" => Ok(GlcIndexMode::EnsembleLocal),
            "global" => Ok(GlcIndexMode::Global),
            other => Err(invalid(format!("unknown glc index mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub trees: usize,
    pub depth_max: usize,
    pub lambda: f64,
    pub eta: f64,
    pub bins: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams { trees: 50, depth_max: 6, lambda: 0.1, eta: 0.1, bins: 32, seed: 0, loss: LossKind::Square }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(invalid("need at least one tree"));
        }
        if self.depth_max == 0 || self.depth_max > MAX_DEPTH {
            return Err(invalid(format!("depth must be in 1..={MAX_DEPTH}, got {}", self.depth_max)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid(format!("eta must be in (0, 1], got {}", self.eta)));
        }
        if self.bins < 2 {
            return Err(invalid("need at least 2 histogram bins"));
        }
        Ok(())
    }
}

/// Privacy settings of a private training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub total_eps: f64,
    /// Trees per ensemble (`T_e`); only the dpboost trainer uses it.
    pub ensemble_size: usize,
    pub glc_index: GlcIndexMode,
    /// Geometric leaf clipping on/off (dpboost only).
    pub glc: bool,
}

impl PrivacyConfig {
    pub fn new(total_eps: f64, ensemble_size: usize) -> Result<Self> {
        if !(total_eps > 0.0) || !total_eps.is_finite() {
            return Err(invalid(format!("eps must be positive, got {total_eps}")));
        }
        if ensemble_size == 0 {
            return Err(invalid("ensemble size must be at least 1"));
        }
        Ok(PrivacyConfig { total_eps, ensemble_size, glc_index: GlcIndexMode::EnsembleLocal, glc: true })
    }

    pub fn n_ensembles(&self, trees: usize) -> usize {
        trees.div_ceil(self.ensemble_size)
    }

    /// Budget of every tree (and of every ensemble) in the dpboost trainer.
    pub fn eps_per_tree(&self, trees: usize) -> f64 {
        self.total_eps / self.n_ensembles(trees) as f64
    }
}

/// What gradient-based data filtering removed from one subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub filtered: usize,
    /// Fraction of instances filtered out.
    pub p: f64,
    /// Mean gradient over the filtered instances (0 when none were filtered).
    pub mean_filtered_gradient: f64,
    /// Upper bound `p (|ḡ_f| + g*)` on the leaf-value error caused by filtering.
    pub error_bound: f64,
}

/// Keep the rows whose `|gradient|` is at most `g_star`.
pub fn gdf_filter(rows: &[u32], grads: &[f64], g_star: f64) -> (Vec<u32>, FilterReport) {
    let mut kept = Vec::with_capacity(rows.len());
    let mut filtered = 0usize;
    let mut filtered_sum = 0.0;
    for &r in rows {
        let g = grads[r as usize];
        if g.abs() <= g_star {
            kept.push(r);
        } else {
            filtered += 1;
            filtered_sum += g;
        }
    }
    let total = rows.len();
    let p = if total == 0 { 0.0 } else { filtered as f64 / total as f64 };
    let mean = if filtered == 0 { 0.0 } else { filtered_sum / filtered as f64 };
    let report = FilterReport {
        total,
        filtered,
        p,
        mean_filtered_gradient: mean,
        error_bound: p * (mean.abs() + g_star),
    };
    (kept, report)
}

/// Clip bound `g* (1 - η)^(index - 1)` for the tree at 1-based `index`.
pub fn glc_bound(index: usize, eta: f64, g_star: f64) -> f64 {
    assert!(index >= 1, "tree index is 1-based");
    g_star * (1.0 - eta).powi(index as i32 - 1)
}

/// Scale `value` into `[-bound, bound]`.
pub fn glc_clip(value: f64, bound: f64) -> f64 {
    if value.abs() <= bound {
        value
    } else {
        bound.copysign(value)
    }
}

/// Leaf sensitivity `min(g* / (1 + λ), 2 g* (1 - η)^(index - 1))` with filtering and clipping.
pub fn leaf_sensitivity(index: usize, eta: f64, g_star: f64, lambda: f64) -> f64 {
    (g_star / (1.0 + lambda)).min(2.0 * glc_bound(index, eta, g_star))
}

/// Subset size for each position of an ensemble of `ensemble_size` trees,
/// proportional to `η (1 - η)^(j-1)`. Flooring leftovers go to the last position.
pub fn subset_schedule(n_total: usize, eta: f64, ensemble_size: usize) -> Result<Vec<usize>> {
    if ensemble_size == 0 {
        return Err(invalid("ensemble size must be at least 1"));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid(format!("eta must be in (0, 1), got {eta}")));
    }
    let denom = 1.0 - (1.0 - eta).powi(ensemble_size as i32);
    let mut sizes: Vec<usize> = (0..ensemble_size)
        .map(|j| (n_total as f64 * eta * (1.0 - eta).powi(j as i32) / denom).floor() as usize)
        .collect();
    let assigned: usize = sizes.iter().sum();
    if assigned > n_total {
        // Only reachable through rounding in the last ulp; trim from the back.
        let mut excess = assigned - n_total;
        for s in sizes.iter_mut().rev() {
            let cut = excess.min(*s);
            *s -= cut;
            excess -= cut;
        }
    } else {
        *sizes.last_mut().unwrap() += n_total - assigned;
    }
    Ok(sizes)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeReport {
    /// 1-based position of the tree in the model.
    pub index: usize,
    pub ensemble: usize,
    /// 1-based position inside its ensemble.
    pub position: usize,
    pub subset_size: usize,
    /// Rows drawn for this tree (sampling trainers only).
    pub subset: Vec<u32>,
    pub filter: FilterReport,
    pub eps_t: f64,
    pub clip_bound: Option<f64>,
    pub leaf_sensitivity: f64,
    pub pre_noise_leaves: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub trees: Vec<TreeReport>,
    pub seconds: f64,
}

impl TrainingReport {
    pub fn seconds_per_tree(&self) -> f64 {
        if self.trees.is_empty() {
            0.0
        } else {
            self.seconds / self.trees.len() as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: GbdtModel,
    pub report: TrainingReport,
}

/// Shared state of a boosting run: binned features and the running raw scores.
struct Booster<'a> {
    dataset: &'a Dataset,
    binned: BinnedData,
    scores: Vec<f64>,
    model: GbdtModel,
    report: TrainingReport,
    started: Instant,
}

impl<'a> Booster<'a> {
    fn new(dataset: &'a Dataset, params: &TrainParams, private: bool) -> Result<Self> {
        params.validate()?;
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if private {
            if let Some(y) = dataset.labels().find(|y| y.abs() > 1.0 + 1e-9) {
                return Err(invalid(format!("private training needs labels in [-1, 1], found {y}")));
            }
        }
        Ok(Booster {
            dataset,
            binned: BinnedData::new(dataset, params.bins),
            scores: vec![0.0; dataset.len()],
            model: GbdtModel::new(dataset.task(), params.eta, params.lambda, params.loss, dataset.label_scale()),
            report: TrainingReport::default(),
            started: Instant::now(),
        })
    }

    fn gradients(&self) -> Vec<f64> {
        self.scores
            .iter()
            .zip(self.dataset.labels())
            .map(|(&s, y)| self.model.loss.gradient(s, y))
            .collect()
    }

    fn push(&mut self, tree: Tree, mut report: TreeReport, tree_started: Instant) {
        let eta = self.model.eta;
        for (s, x) in self.scores.iter_mut().zip(self.dataset.instances()) {
            *s += eta * tree.predict(x);
        }
        self.model.trees.push(tree);
        report.seconds = tree_started.elapsed().as_secs_f64();
        self.report.trees.push(report);
    }

    fn finish(mut self) -> TrainOutput {
        self.report.seconds = self.started.elapsed().as_secs_f64();
        TrainOutput { model: self.model, report: self.report }
    }
}

fn tree_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, &[SeedPurpose::Tree as u64, t as u64])
}

fn all_rows(n: usize) -> Vec<u32> {
    (0..n as u32).collect()
}

/// Train with the given mode. `privacy` is ignored for [`Mode::Np`].
pub fn train(dataset: &Dataset, mode: Mode, params: &TrainParams, privacy: &PrivacyConfig) -> Result<TrainOutput> {
    match mode {
        Mode::DpBoost => train_dpboost(dataset, privacy, params),
        Mode::Seq => train_seq(dataset, privacy.total_eps, params),
        Mode::Para => train_para(dataset, privacy.total_eps, params),
        Mode::Np => train_np(dataset, params),
    }
}

/// Ensemble-of-ensembles training.
pub fn train_dpboost(dataset: &Dataset, privacy: &PrivacyConfig, params: &TrainParams) -> Result<TrainOutput> {
    let mut b = Booster::new(dataset, params, true)?;
    let trees = params.trees;
    let te = privacy.ensemble_size;
    if te == 0 || te > trees {
        return Err(invalid(format!("ensemble size {te} must be in 1..={trees}")));
    }
    if params.eta >= 1.0 {
        return Err(invalid("geometric leaf clipping needs eta < 1"));
    }
    let g_star = params.loss.g_star();
    let eps_e = privacy.eps_per_tree(trees);
    let budget = split_budget(eps_e, params.depth_max)?;
    let schedule = subset_schedule(dataset.len(), params.eta, te)?;

    let mut pool: Vec<usize> = Vec::new();
    let mut ensemble_entries: Vec<LedgerEntry> = Vec::new();
    for t in 1..=trees {
        let started = Instant::now();
        let position = (t - 1) % te + 1;
        let ensemble = (t - 1) / te;
        if position == 1 {
            pool = (0..dataset.len()).collect();
        }
        let grads = b.gradients();
        let size = schedule[position - 1].min(pool.len());
        let mut rng = Rng::derived(params.seed, &[SeedPurpose::Sample as u64, t as u64]);
        let (picked, rest) = sample_disjoint(&pool, size, &mut rng)?;
        pool = rest;
        let subset: Vec<u32> = picked.iter().map(|&i| i as u32).collect();
        let (kept, filter) = gdf_filter(&subset, &grads, g_star);

        let glc_index = match privacy.glc_index {
            GlcIndexMode::EnsembleLocal => position,
            GlcIndexMode::Global => t,
        };
        let (clip_bound, delta_v) = if privacy.glc {
            (
                Some(glc_bound(glc_index, params.eta, g_star)),
                leaf_sensitivity(glc_index, params.eta, g_star, params.lambda),
            )
        } else {
            (None, g_star / (1.0 + params.lambda))
        };
        let tree_params = DpTreeParams { budget, delta_g: 3.0 * g_star * g_star, delta_v, clip_bound, lambda: params.lambda };
        let mut dp = train_single_tree(&b.binned, kept, &grads, &tree_params, tree_seed(params.seed, t))?;
        dp.ledger.set_scope(format!("tree {t}"));
        ensemble_entries.push(dp.ledger);
        if position == te || t == trees {
            b.model.ledger.push(LedgerEntry::group(
                Composition::Parallel,
                format!("ensemble {}", ensemble + 1),
                std::mem::take(&mut ensemble_entries),
            ));
        }
        let report = TreeReport {
            index: t,
            ensemble: ensemble + 1,
            position,
            subset_size: subset.len(),
            subset,
            filter,
            eps_t: eps_e,
            clip_bound,
            leaf_sensitivity: delta_v,
            pre_noise_leaves: dp.pre_noise_leaves,
            seconds: 0.0,
        };
        b.push(dp.tree, report, started);
    }
    Ok(b.finish())
}

/// Baseline: every tree sees the whole (filtered) dataset with budget `ε / T`.
pub fn train_seq(dataset: &Dataset, total_eps: f64, params: &TrainParams) -> Result<TrainOutput> {
    PrivacyConfig::new(total_eps, 1)?;
    let mut b = Booster::new(dataset, params, true)?;
    let g_star = params.loss.g_star();
    let eps_t = total_eps / params.trees as f64;
    let budget = split_budget(eps_t, params.depth_max)?;
    let delta_v = g_star / (1.0 + params.lambda);
    let tree_params = DpTreeParams { budget, delta_g: 3.0 * g_star * g_star, delta_v, clip_bound: None, lambda: params.lambda };
    let rows = all_rows(dataset.len());
    for t in 1..=params.trees {
        let started = Instant::now();
        let grads = b.gradients();
        let (kept, filter) = gdf_filter(&rows, &grads, g_star);
        let mut dp = train_single_tree(&b.binned, kept, &grads, &tree_params, tree_seed(params.seed, t))?;
        dp.ledger.set_scope(format!("tree {t}"));
        b.model.ledger.push(dp.ledger);
        let report = TreeReport {
            index: t,
            ensemble: t,
            position: 1,
            subset_size: rows.len(),
            subset: Vec::new(),
            filter,
            eps_t,
            clip_bound: None,
            leaf_sensitivity: delta_v,
            pre_noise_leaves: dp.pre_noise_leaves,
            seconds: 0.0,
        };
        b.push(dp.tree, report, started);
    }
    Ok(b.finish())
}

/// Baseline: each tree takes half of the still-unused instances and the full budget.
///
/// Stops early once fewer than two unused instances remain.
pub fn train_para(dataset: &Dataset, total_eps: f64, params: &TrainParams) -> Result<TrainOutput> {
    PrivacyConfig::new(total_eps, 1)?;
    let mut b = Booster::new(dataset, params, true)?;
    let g_star = params.loss.g_star();
    let budget = split_budget(total_eps, params.depth_max)?;
    let delta_v = g_star / (1.0 + params.lambda);
    let tree_params = DpTreeParams { budget, delta_g: 3.0 * g_star * g_star, delta_v, clip_bound: None, lambda: params.lambda };
    let mut pool: Vec<usize> = (0..dataset.len()).collect();
    let mut entries = Vec::new();
    for t in 1..=params.trees {
        if pool.len() < 2 {
            break;
        }
        let started = Instant::now();
        let grads = b.gradients();
        let mut rng = Rng::derived(params.seed, &[SeedPurpose::Sample as u64, t as u64]);
        let (picked, rest) = sample_disjoint(&pool, pool.len().div_ceil(2), &mut rng)?;
        pool = rest;
        let subset: Vec<u32> = picked.iter().map(|&i| i as u32).collect();
        let (kept, filter) = gdf_filter(&subset, &grads, g_star);
        let mut dp = train_single_tree(&b.binned, kept, &grads, &tree_params, tree_seed(params.seed, t))?;
        dp.ledger.set_scope(format!("tree {t}"));
        entries.push(dp.ledger);
        let report = TreeReport {
            index: t,
            ensemble: 1,
            position: t,
            subset_size: subset.len(),
            subset,
            filter,
            eps_t: total_eps,
            clip_bound: None,
            leaf_sensitivity: delta_v,
            pre_noise_leaves: dp.pre_noise_leaves,
            seconds: 0.0,
        };
        b.push(dp.tree, report, started);
    }
    b.model.ledger.push(LedgerEntry::group(Composition::Parallel, "disjoint trees", entries));
    Ok(b.finish())
}

/// Non-private greedy boosting on the full dataset.
pub fn train_np(dataset: &Dataset, params: &TrainParams) -> Result<TrainOutput> {
    let mut b = Booster::new(dataset, params, false)?;
    let rows = all_rows(dataset.len());
    for t in 1..=params.trees {
        let started = Instant::now();
        let grads = b.gradients();
        let tree = train_greedy_tree(&b.binned, rows.clone(), &grads, params.depth_max, params.lambda)?;
        let report = TreeReport {
            index: t,
            ensemble: 1,
            position: t,
            subset_size: rows.len(),
            subset: Vec::new(),
            filter: gdf_filter(&[], &grads, params.loss.g_star()).1,
            eps_t: 0.0,
            clip_bound: None,
            leaf_sensitivity: 0.0,
            pre_noise_leaves: tree.leaf_values().collect(),
            seconds: 0.0,
        };
        b.push(tree, report, started);
    }
    Ok(b.finish())
}
