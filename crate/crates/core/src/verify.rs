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

//! Brute-force and Monte-Carlo checks of the sensitivity bounds, the filtering
//! error bound, mechanism calibration and budget composition.
//!
//! Each check returns a [`CheckReport`]; a check passes when it finds no
//! violation and its calibration statistics are inside tolerance.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::boosting::{gdf_filter, train, Mode, PrivacyConfig, TrainParams};
use crate::error::{invalid, Error, Result};
use crate::gbdt::{leaf_value_or_zero, split_gain};
use crate::mechanisms::{exp_mechanism_select, laplace_sample, Rng, ScoredCandidate};
use crate::synthetic;

/// Relative slack for comparing a measured quantity with a bound it can attain exactly.
const FP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    SensitivityGain,
    SensitivityLeaf,
    GdfBound,
    Laplace,
    Expmech,
    Ledger,
}

impl Check {
    pub const ALL: [Check; 6] = [
        Check::SensitivityGain,
        Check::SensitivityLeaf,
        Check::GdfBound,
        Check::Laplace,
        Check::Expmech,
        Check::Ledger,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::SensitivityGain => "sensitivity-gain",
            Check::SensitivityLeaf => "sensitivity-leaf",
            Check::GdfBound => "gdf-bound",
            Check::Laplace => "laplace",
            Check::Expmech => "expmech",
            Check::Ledger => "ledger",
        }
    }

    pub fn default_trials(self) -> usize {
        match self {
            Check::SensitivityGain | Check::SensitivityLeaf | Check::Expmech => 100_000,
            Check::GdfBound => 10_000,
            Check::Laplace => 1_000_000,
            Check::Ledger => 1,
        }
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| invalid(format!("unknown check `{s}`")))
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub passed: bool,
    pub trials: usize,
    pub violations: usize,
    pub metrics: BTreeMap<String, f64>,
    pub seconds: f64,
}

impl CheckReport {
    fn new(check: Check, trials: usize) -> Self {
        CheckReport {
            check: check.name().to_string(),
            passed: true,
            trials,
            violations: 0,
            metrics: BTreeMap::new(),
            seconds: 0.0,
        }
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }
}

/// Run `check` with `trials` (or its default) and a seed.
pub fn run(check: Check, trials: Option<usize>, seed: u64) -> Result<CheckReport> {
    let trials = trials.unwrap_or_else(|| check.default_trials());
    let started = Instant::now();
    let mut report = match check {
        Check::SensitivityGain => gain_sensitivity(trials, seed),
        Check::SensitivityLeaf => leaf_sensitivity(trials, seed),
        Check::GdfBound => gdf_bound(trials, seed),
        Check::Laplace => laplace_calibration(trials, 1.0, seed)?,
        Check::Expmech => expmech_calibration(trials, seed)?,
        Check::Ledger => ledger_exactness(&DEFAULT_LEDGER_CONFIGS, seed)?,
    };
    report.seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

const LAMBDAS: [f64; 3] = [0.0, 0.1, 1.0];
const MAX_SET: u64 = 50;

/// A random pair of adjacent instance sets: `base` and `base ∪ {extra}`, with a
/// random left/right assignment of every instance.
struct AdjacentSets {
    lambda: f64,
    base: Vec<(f64, bool)>,
    extra: (f64, bool),
}

impl AdjacentSets {
    fn draw(rng: &mut Rng) -> Self {
        let lambda = LAMBDAS[(rng.next_u64() % 3) as usize];
        let n = (rng.next_u64() % (MAX_SET + 1)) as usize;
        let uniform = |rng: &mut Rng| 2.0 * rng.uniform() - 1.0;
        let sign = |rng: &mut Rng| if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
        let (base, extra_g) = match rng.next_u64() % 4 {
            // Plain uniform gradients.
            0 => ((0..n).map(|_| uniform(rng)).collect::<Vec<_>>(), uniform(rng)),
            // The boundary configuration: extra at ±g*, everything else opposite.
            1 => {
                let s = sign(rng);
                (vec![-s; n], s)
            }
            // Random signs at the boundary.
            2 => ((0..n).map(|_| sign(rng)).collect(), sign(rng)),
            // Uniform with a random scale g* < 1.
            _ => {
                let a = rng.uniform();
                ((0..n).map(|_| a * uniform(rng)).collect(), a * uniform(rng))
            }
        };
        let extreme = rng.next_u64().is_multiple_of(4);
        let extra_left = rng.next_u64() & 1 == 0;
        let base = base
            .into_iter()
            .map(|g| (g, if extreme { extra_left } else { rng.next_u64() & 1 == 0 }))
            .collect();
        AdjacentSets { lambda, base, extra: (extra_g, extra_left) }
    }

    fn g_star(&self) -> f64 {
        self.base.iter().map(|&(g, _)| g.abs()).fold(self.extra.0.abs(), f64::max)
    }

    /// (sum_left, n_left, sum_right, n_right), optionally including the extra instance.
    fn sides(&self, with_extra: bool) -> (f64, usize, f64, usize) {
        let mut s = (0.0, 0, 0.0, 0);
        let extra = with_extra.then_some(self.extra);
        for &(g, left) in self.base.iter().chain(extra.iter()) {
            if left {
                s.0 += g;
                s.1 += 1;
            } else {
                s.2 += g;
                s.3 += 1;
            }
        }
        s
    }
}

fn exceeds(measured: f64, bound: f64) -> bool {
    measured > bound * (1.0 + FP_SLACK) + f64::MIN_POSITIVE
}

/// Largest gain change `|G(I2) - G(I1)|` relative to `3 g*^2` on adjacent sets.
pub fn gain_sensitivity(trials: usize, seed: u64) -> CheckReport {
    let mut report = CheckReport::new(Check::SensitivityGain, trials);
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let sets = AdjacentSets::draw(&mut rng);
        let g_star = sets.g_star();
        let (sl, nl, sr, nr) = sets.sides(false);
        let before = split_gain(sl, nl, sr, nr, sets.lambda);
        let (sl, nl, sr, nr) = sets.sides(true);
        let after = split_gain(sl, nl, sr, nr, sets.lambda);
        let delta = (after - before).abs();
        let bound = 3.0 * g_star * g_star;
        if bound > 0.0 {
            worst = worst.max(delta / bound);
        }
        if exceeds(delta, bound) {
            report.violations += 1;
        }
    }
    // The analytic worst case: n_l copies of g* on one side, the extra at -g*.
    let mut extremal: f64 = 0.0;
    for &lambda in &LAMBDAS {
        for nl in 1..=MAX_SET as usize {
            let before = split_gain(nl as f64, nl, 0.0, 0, lambda);
            let after = split_gain(nl as f64 - 1.0, nl + 1, 0.0, 0, lambda);
            extremal = extremal.max((after - before).abs() / 3.0);
        }
    }
    report.metric("max_ratio", worst);
    report.metric("extremal_ratio", extremal);
    report.passed = report.violations == 0 && extremal <= 1.0;
    report
}

/// Largest leaf change `|V(I2) - V(I1)|` relative to `g* / (1 + λ)` on adjacent sets.
pub fn leaf_sensitivity(trials: usize, seed: u64) -> CheckReport {
    let mut report = CheckReport::new(Check::SensitivityLeaf, trials);
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let sets = AdjacentSets::draw(&mut rng);
        let g_star = sets.g_star();
        let sum: f64 = sets.base.iter().map(|&(g, _)| g).sum();
        let n = sets.base.len();
        let before = leaf_value_or_zero(sum, n, sets.lambda);
        let after = leaf_value_or_zero(sum + sets.extra.0, n + 1, sets.lambda);
        let delta = (after - before).abs();
        let bound = g_star / (1.0 + sets.lambda);
        if bound > 0.0 {
            worst = worst.max(delta / bound);
        }
        if exceeds(delta, bound) {
            report.violations += 1;
        }
    }
    // g_s = g*, sum of the others = -n g*, with n = 1 and λ = 0.
    let before = leaf_value_or_zero(-1.0, 1, 0.0);
    let after = leaf_value_or_zero(-1.0 + 1.0, 2, 0.0);
    let extremal = (after - before).abs();
    report.metric("max_ratio", worst);
    report.metric("extremal_ratio", extremal);
    report.passed = report.violations == 0 && extremal >= 0.95;
    report
}

/// Filtering error `|V(I) - V(I_kept)|` against `p (|ḡ_f| + g*)` on random sets
/// where a random share of gradients exceeds `g* = 1`.
pub fn gdf_bound(trials: usize, seed: u64) -> CheckReport {
    let mut report = CheckReport::new(Check::GdfBound, trials);
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    let mut filtered_any = 0usize;
    for _ in 0..trials {
        let lambda = LAMBDAS[(rng.next_u64() % 3) as usize];
        let n = 1 + (rng.next_u64() % 100) as usize;
        let outlier_share = 0.5 * rng.uniform();
        let grads: Vec<f64> = (0..n)
            .map(|_| {
                let sign = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
                if rng.uniform() < outlier_share {
                    sign * (1.0 + 4.0 * rng.open_uniform())
                } else {
                    sign * rng.uniform()
                }
            })
            .collect();
        let rows: Vec<u32> = (0..n as u32).collect();
        let (kept, filter) = gdf_filter(&rows, &grads, 1.0);
        if filter.filtered > 0 {
            filtered_any += 1;
        }
        let full = leaf_value_or_zero(grads.iter().sum(), n, lambda);
        let kept_sum: f64 = kept.iter().map(|&r| grads[r as usize]).sum();
        let partial = leaf_value_or_zero(kept_sum, kept.len(), lambda);
        let err = (full - partial).abs();
        if filter.error_bound > 0.0 {
            worst = worst.max(err / filter.error_bound);
        }
        if exceeds(err, filter.error_bound) {
            report.violations += 1;
        }
    }
    report.metric("max_ratio", worst);
    report.metric("trials_with_filtering", filtered_any as f64);
    report.passed = report.violations == 0;
    report
}

fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}

/// Moments, tail mass and Kolmogorov-Smirnov distance of `draws` Laplace samples.
pub fn laplace_calibration(draws: usize, scale: f64, seed: u64) -> Result<CheckReport> {
    if draws < 2 {
        return Err(invalid("need at least two draws"));
    }
    let mut report = CheckReport::new(Check::Laplace, draws);
    let mut rng = Rng::new(seed);
    let mut xs = Vec::with_capacity(draws);
    for _ in 0..draws {
        xs.push(laplace_sample(&mut rng, scale)?);
    }
    let n = draws as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let tail = xs.iter().filter(|x| x.abs() > scale * 100f64.ln()).count() as f64 / n;
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = laplace_cdf(x, scale);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let var_rel_err = (var / (2.0 * scale * scale) - 1.0).abs();
    report.metric("mean", mean);
    report.metric("variance", var);
    report.metric("variance_rel_err", var_rel_err);
    report.metric("tail_mass_ln100", tail);
    report.metric("ks_statistic", ks);
    report.passed = var_rel_err <= 0.02 && ks < 0.005;
    if !report.passed {
        report.violations = 1;
    }
    Ok(report)
}

/// Selection frequencies on the fixture whose scaled scores are {0, ln 2, ln 4},
/// i.e. analytic probabilities {1/7, 2/7, 4/7}.
pub fn expmech_calibration(draws: usize, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new(Check::Expmech, draws);
    let (eps, sensitivity) = (2.0, 1.0);
    let candidates = [
        ScoredCandidate::new(0usize, 0.0),
        ScoredCandidate::new(1, 2f64.ln()),
        ScoredCandidate::new(2, 4f64.ln()),
    ];
    let expected = [1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0];
    let mut rng = Rng::new(seed);
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        counts[exp_mechanism_select(&mut rng, &candidates, eps, sensitivity)?] += 1;
    }
    let n = draws as f64;
    let mut max_abs: f64 = 0.0;
    let mut chi2 = 0.0;
    for (i, (&c, &p)) in counts.iter().zip(&expected).enumerate() {
        let freq = c as f64 / n;
        max_abs = max_abs.max((freq - p).abs());
        chi2 += (c as f64 - n * p).powi(2) / (n * p);
        report.metric(&format!("freq_{i}"), freq);
    }
    // Two degrees of freedom: the chi-square survival function is exp(-x / 2).
    let p_value = (-chi2 / 2.0).exp();
    report.metric("max_abs_err", max_abs);
    report.metric("chi_square", chi2);
    report.metric("p_value", p_value);
    report.passed = max_abs <= 0.01 && p_value > 0.001;
    if !report.passed {
        report.violations = 1;
    }
    Ok(report)
}

/// (ε, T, T_e) configurations checked by default.
pub const DEFAULT_LEDGER_CONFIGS: [(f64, usize, usize); 3] = [(1.0, 50, 50), (100.0, 1000, 50), (5.0, 20, 20)];

/// Train every private mode on a small synthetic set and compare the composed
/// ledger total with the requested ε.
pub fn ledger_exactness(configs: &[(f64, usize, usize)], seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new(Check::Ledger, configs.len());
    let data = synthetic::make_classification(400, 5, seed)?;
    for &(eps, trees, te) in configs {
        let params = TrainParams { trees, seed, ..TrainParams::default() };
        let privacy = PrivacyConfig::new(eps, te)?;
        for mode in [Mode::DpBoost, Mode::Seq, Mode::Para] {
            let total = train(&data, mode, &params, &privacy)?.model.ledger.total();
            let ok = match mode {
                Mode::DpBoost => (total - eps).abs() <= 1e-9,
                _ => total == eps,
            };
            if !ok {
                report.violations += 1;
            }
            report.metric(&format!("{mode}_eps{eps}_T{trees}_Te{te}"), total);
        }
    }
    report.passed = report.violations == 0;
    Ok(report)
}
