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


//! Acceptance suite: twelve criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines are always printed. Exits
//! nonzero if any criterion fails.

use std::collections::HashSet;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use dpboost::boosting::{glc_bound, subset_schedule};
use dpboost::data::FoldSplit;
use dpboost::metrics::mean_std;
use dpboost::verify::{self, Check, DEFAULT_LEDGER_CONFIGS};
use dpboost::{synthetic, Dataset, GlcIndexMode, LossKind, Mode, Task};
use dpboost_cli::{cross_validate, RunConfig};

const N: usize = 10_000;
const D: usize = 20;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const EPS_GRID: [f64; 3] = [1.0, 10.0, 100.0];
const DP_MODES: [Mode; 3] = [Mode::DpBoost, Mode::Para, Mode::Seq];

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn within(limit_secs: u64, elapsed: Duration) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

fn cls_data(seed: u64) -> Dataset {
    synthetic::make_classification(N, D, seed).expect("synthetic classification")
}

fn reg_data(seed: u64) -> Dataset {
    synthetic::make_regression(N, D, seed).expect("synthetic regression")
}

fn cfg(task: Task, mode: Mode, eps: Option<f64>, seed: u64) -> RunConfig {
    let mut c = RunConfig::new(task, mode).with_seed(seed);
    c.eps = eps;
    c
}

/// Mean 5-fold CV metric.
fn cv_mean(c: &RunConfig, data: &Dataset) -> f64 {
    cross_validate(c, data, 5).expect("cross-validation").result.mean.expect("folds")
}

fn sensitivity() -> Verdict {
    let started = Instant::now();
    let gain = verify::run(Check::SensitivityGain, None, 11).unwrap();
    let leaf = verify::run(Check::SensitivityLeaf, None, 12).unwrap();
    let extremal = leaf.metrics["extremal_ratio"];
    let elapsed = started.elapsed();
    verdict(
        gain.violations == 0 && leaf.violations == 0 && extremal >= 0.95 && within(30, elapsed),
        format!(
            "gain: {} violations / {} trials (max ratio {:.4}); leaf: {} violations / {} trials (max ratio {:.4}, extremal n=1 ratio {:.4}); {:.2}s",
            gain.violations,
            gain.trials,
            gain.metrics["max_ratio"],
            leaf.violations,
            leaf.trials,
            leaf.metrics["max_ratio"],
            extremal,
            elapsed.as_secs_f64()
        ),
    )
}

fn gdf_bound() -> Verdict {
    let started = Instant::now();
    let r = verify::run(Check::GdfBound, Some(10_000), 13).unwrap();
    let elapsed = started.elapsed();
    verdict(
        r.violations == 0 && r.trials == 10_000 && within(10, elapsed),
        format!(
            "{} violations / {} sets ({} with filtering, max ratio {:.4}); {:.2}s",
            r.violations,
            r.trials,
            r.metrics["trials_with_filtering"],
            r.metrics["max_ratio"],
            elapsed.as_secs_f64()
        ),
    )
}

fn mechanisms() -> Verdict {
    let started = Instant::now();
    let lap = verify::run(Check::Laplace, Some(1_000_000), 14).unwrap();
    let exp = verify::run(Check::Expmech, Some(100_000), 15).unwrap();
    let elapsed = started.elapsed();
    let var_err = lap.metrics["variance_rel_err"];
    let max_abs = exp.metrics["max_abs_err"];
    verdict(
        var_err <= 0.02 && max_abs <= 0.01 && within(30, elapsed),
        format!(
            "laplace b=1 variance {:.4} (rel err {:.4}); expmech max |freq - softmax| {:.4}; {:.2}s",
            lap.metrics["variance"],
            var_err,
            max_abs,
            elapsed.as_secs_f64()
        ),
    )
}

fn budget() -> Verdict {
    let data = synthetic::make_classification(400, 5, 16).unwrap();
    let mut worst_dp: f64 = 0.0;
    let mut exact = true;
    let mut lines = Vec::new();
    for &(eps, trees, te) in &DEFAULT_LEDGER_CONFIGS {
        for mode in DP_MODES {
            let mut c = cfg(Task::Classification, mode, Some(eps), 16);
            c.trees = trees;
            c.ensemble_size = (mode == Mode::DpBoost).then_some(te);
            let out = c.fit(&data, 16).unwrap();
            let total = out.model.ledger.total();
            if mode == Mode::DpBoost {
                worst_dp = worst_dp.max((total - eps).abs());
            } else {
                exact &= total == eps;
            }
            lines.push(format!("{mode}({eps},{trees},{te})={total}"));
        }
    }
    let report = verify::run(Check::Ledger, None, 16).unwrap();
    verdict(
        worst_dp <= 1e-9 && exact && report.passed,
        format!("max dpboost |total - eps| {worst_dp:.2e}; {}", lines.join(" ")),
    )
}

fn disjointness() -> Verdict {
    let data = reg_data(17);
    let mut c = cfg(Task::Regression, Mode::DpBoost, Some(1.0), 17);
    c.trees = 100;
    c.ensemble_size = Some(50);
    let out = c.fit(&data, 17).unwrap();
    let schedule = subset_schedule(N, c.eta, 50).unwrap();
    let mut ok = schedule.iter().sum::<usize>() == N;
    let mut ensembles = 0;
    for e in 1..=2 {
        let trees: Vec<_> = out.report.trees.iter().filter(|t| t.ensemble == e).collect();
        let sizes: Vec<usize> = trees.iter().map(|t| t.subset_size).collect();
        let mut seen = HashSet::new();
        let mut dup = false;
        for t in &trees {
            dup |= t.subset.len() != t.subset_size;
            for &i in &t.subset {
                dup |= !seen.insert(i);
            }
        }
        ok &= !dup && sizes == schedule && seen.len() == N;
        ensembles += 1;
    }
    verdict(
        ok && ensembles == 2,
        format!(
            "2 ensembles of 50; schedule first/last {}/{} sum {}; subsets disjoint and covering",
            schedule[0],
            schedule[49],
            schedule.iter().sum::<usize>()
        ),
    )
}

fn glc_postcondition() -> Verdict {
    let started = Instant::now();
    let mut checked = 0usize;
    let mut bad = 0usize;
    let mut runs = Vec::new();
    for (task, data) in [(Task::Regression, reg_data(18)), (Task::Classification, cls_data(18))] {
        for glc_index in [GlcIndexMode::EnsembleLocal, GlcIndexMode::Global] {
            let mut c = cfg(task, Mode::DpBoost, Some(1.0), 18);
            c.trees = 100;
            c.ensemble_size = Some(50);
            c.glc_index = glc_index;
            let out = c.fit(&data, 18).unwrap();
            let g_star = LossKind::Square.g_star();
            for t in &out.report.trees {
                let index = match glc_index {
                    GlcIndexMode::EnsembleLocal => t.position,
                    GlcIndexMode::Global => t.index,
                };
                let bound = glc_bound(index, c.eta, g_star);
                for &v in &t.pre_noise_leaves {
                    checked += 1;
                    if v.abs() > bound {
                        bad += 1;
                    }
                }
            }
            runs.push(format!("{task}/{glc_index:?}"));
        }
    }
    let elapsed = started.elapsed();
    verdict(
        bad == 0 && checked > 0 && within(60, elapsed),
        format!("{bad} of {checked} pre-noise leaves over bound ({}); {:.2}s", runs.join(", "), elapsed.as_secs_f64()),
    )
}

fn np_utility() -> Verdict {
    let started = Instant::now();
    let data = reg_data(19);
    let c = cfg(Task::Regression, Mode::Np, None, 19);
    let cv = cross_validate(&c, &data, 5).unwrap();
    // Baseline: predict the training-fold mean of the raw labels.
    let split = FoldSplit::new(N, 5, cv.result.seeds.split.unwrap()).unwrap();
    let baselines: Vec<f64> = (0..5)
        .map(|f| {
            let train = split.train_indices(f);
            let test = split.test_indices(f);
            let mean = train.iter().map(|&i| data.raw_label(i)).sum::<f64>() / train.len() as f64;
            let sse: f64 = test.iter().map(|&i| (data.raw_label(i) - mean).powi(2)).sum();
            (sse / test.len() as f64).sqrt()
        })
        .collect();
    let (base, _) = mean_std(&baselines);
    let rmse = cv.result.mean.unwrap();
    let elapsed = started.elapsed();
    verdict(
        rmse < 0.9 * base && within(60, elapsed),
        format!("np rmse {rmse:.4} vs 0.9 x label-std baseline {:.4}; {:.2}s", 0.9 * base, elapsed.as_secs_f64()),
    )
}

/// Per-seed mean CV errors on the classification grid.
struct ClsGrid {
    np: Vec<f64>,
    /// (mode, eps index) -> per-seed error.
    dp: Vec<(Mode, usize, Vec<f64>)>,
}

impl ClsGrid {
    fn run() -> Self {
        let mut np = Vec::new();
        let mut dp: Vec<(Mode, usize, Vec<f64>)> =
            DP_MODES.iter().flat_map(|&m| (0..EPS_GRID.len()).map(move |e| (m, e, Vec::new()))).collect();
        for seed in SEEDS {
            let data = cls_data(seed);
            np.push(cv_mean(&cfg(Task::Classification, Mode::Np, None, seed), &data));
            for (mode, e, errs) in dp.iter_mut() {
                errs.push(cv_mean(&cfg(Task::Classification, *mode, Some(EPS_GRID[*e]), seed), &data));
            }
        }
        ClsGrid { np, dp }
    }

    fn per_seed(&self, mode: Mode, eps_index: usize) -> &[f64] {
        &self.dp.iter().find(|(m, e, _)| *m == mode && *e == eps_index).unwrap().2
    }

    fn mean(&self, mode: Mode, eps_index: usize) -> f64 {
        mean_std(self.per_seed(mode, eps_index)).0
    }
}

fn eps_trend(grid: &ClsGrid) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for mode in DP_MODES {
        let means: Vec<f64> = (0..EPS_GRID.len()).map(|e| grid.mean(mode, e)).collect();
        ok &= means.windows(2).all(|w| w[1] <= w[0] + 0.02);
        parts.push(format!("{mode} {:.4}/{:.4}/{:.4}", means[0], means[1], means[2]));
    }
    let np = mean_std(&grid.np).0;
    let dp100 = grid.mean(Mode::DpBoost, 2);
    ok &= dp100 <= np + 0.05;
    verdict(ok, format!("mean error at eps 1/10/100: {}; np {np:.4}, dpboost@100 gap {:.4}", parts.join(", "), dp100 - np))
}

fn baseline_ordering(grid: &ClsGrid) -> Verdict {
    let dp = grid.per_seed(Mode::DpBoost, 0);
    let para = grid.per_seed(Mode::Para, 0);
    let seq = grid.per_seed(Mode::Seq, 0);
    let wins = (0..SEEDS.len()).filter(|&s| dp[s] <= para[s] && dp[s] <= seq[s]).count();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    verdict(
        wins >= 4,
        format!(
            "dpboost best in {wins}/5 seeds at eps=1; dpboost [{}] para [{}] seq [{}]",
            fmt(dp),
            fmt(para),
            fmt(seq)
        ),
    )
}

fn glc_ablation() -> Verdict {
    let mut with = Vec::new();
    let mut without = Vec::new();
    for seed in SEEDS {
        let data = reg_data(seed);
        let mut c = cfg(Task::Regression, Mode::DpBoost, Some(1.0), seed);
        with.push(cv_mean(&c, &data));
        c.glc = false;
        without.push(cv_mean(&c, &data));
    }
    let wins = (0..SEEDS.len()).filter(|&s| with[s] <= without[s]).count();
    verdict(
        wins >= 4,
        format!(
            "glc better in {wins}/5 seeds; mean rmse with {:.4}, without {:.4}",
            mean_std(&with).0,
            mean_std(&without).0
        ),
    )
}

fn filtered_ratio() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in EPS_GRID {
        let mut worst: f64 = 0.0;
        let mut mean_p = Vec::new();
        for seed in SEEDS {
            let data = reg_data(seed);
            let c = cfg(Task::Regression, Mode::DpBoost, Some(eps), seed);
            let out = c.fit(&data, seed).unwrap();
            let trees = &out.report.trees;
            ok &= trees[0].filter.p == 0.0;
            for t in &trees[1..] {
                worst = worst.max(t.filter.p);
                mean_p.push(t.filter.p);
            }
        }
        ok &= worst < 0.10;
        parts.push(format!("eps {eps}: max p {:.4} (mean {:.4})", worst, mean_std(&mean_p).0));
    }
    verdict(ok, format!("per-iteration filtered fraction after iteration 1: {}", parts.join("; ")))
}

fn throughput() -> Verdict {
    let mut worst_tree: f64 = 0.0;
    let mut worst_avg: f64 = 0.0;
    for (task, data) in [(Task::Classification, cls_data(20)), (Task::Regression, reg_data(20))] {
        for mode in [Mode::DpBoost, Mode::Para, Mode::Seq, Mode::Np] {
            let eps = mode.is_private().then_some(1.0);
            let mut c = cfg(task, mode, eps, 20);
            c.trees = 100;
            let out = c.fit(&data, 20).unwrap();
            worst_avg = worst_avg.max(out.report.seconds_per_tree());
            for t in &out.report.trees {
                worst_tree = worst_tree.max(t.seconds);
            }
        }
    }
    verdict(
        worst_tree < 3.0,
        format!("slowest tree {worst_tree:.4}s, slowest run average {worst_avg:.4}s per tree"),
    )
}

fn main() -> ExitCode {
    let grid: OnceLock<ClsGrid> = OnceLock::new();
    let cls_grid = || grid.get_or_init(ClsGrid::run);
    let mut results: Vec<(&str, Verdict)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let v = f();
        println!("criterion {:>2} {:<24} {}: {}", results.len() + 1, name, if v.passed { "PASS" } else { "FAIL" }, v.detail);
        results.push((name, v));
    };
    run("sensitivity soundness", &mut sensitivity);
    run("gdf error bound", &mut gdf_bound);
    run("mechanism calibration", &mut mechanisms);
    run("budget exactness", &mut budget);
    run("ensemble disjointness", &mut disjointness);
    run("glc postcondition", &mut glc_postcondition);
    run("np utility", &mut np_utility);
    run("utility vs eps", &mut || eps_trend(cls_grid()));
    run("baseline ordering", &mut || baseline_ordering(cls_grid()));
    run("glc ablation", &mut glc_ablation);
    run("filtered ratio", &mut filtered_ratio);
    run("throughput", &mut throughput);
    let failed = results.iter().filter(|(_, v)| !v.passed).count();
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
