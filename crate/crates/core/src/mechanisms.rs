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

//! Randomness and privacy accounting.
//!
//! Every random draw in training flows through [`Rng`], a ChaCha stream seeded
//! from a 64-bit seed. Child seeds are derived from a parent seed and a path of
//! integers (tree index, node id, purpose) so results never depend on the order
//! in which nodes or folds are evaluated.

use rand::distr::{Distribution, Open01, StandardUniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Tags mixed into derived seeds so independent streams never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedPurpose {
    Fold = 1,
    Sample = 2,
    Tree = 3,
    Split = 4,
    Leaf = 5,
    Train = 6,
}

#[derive(Debug, Clone)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Stream for the child seed reached from `seed` along `path`.
    pub fn derived(seed: u64, path: &[u64]) -> Self {
        Rng::new(derive_seed(seed, path))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        StandardUniform.sample(&mut self.0)
    }

    /// Uniform draw in the open interval `(0, 1)`.
    pub fn open_uniform(&mut self) -> f64 {
        Open01.sample(&mut self.0)
    }

    pub fn next_u64(&mut self) -> u64 {
        rand::RngCore::next_u64(&mut self.0)
    }

    pub(crate) fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.0
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically derive a child seed from `seed` and a path of integers.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// One draw from Laplace(0, `scale`) by inverting the CDF.
///
/// `u` is uniform on the open interval (-1/2, 1/2); the closed end of the usual
/// half-open interval maps to an infinite sample and is excluded.
pub fn laplace_sample(rng: &mut Rng, scale: f64) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(invalid(format!("laplace scale must be positive and finite, got {scale}")));
    }
    let u = rng.open_uniform() - 0.5;
    Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

/// A candidate output of the exponential mechanism together with its utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate<T> {
    pub id: T,
    pub utility: f64,
}

impl<T> ScoredCandidate<T> {
    pub fn new(id: T, utility: f64) -> Self {
        ScoredCandidate { id, utility }
    }
}

fn check_mechanism_args<T>(candidates: &[ScoredCandidate<T>], eps: f64, sensitivity: f64) -> Result<()> {
    if candidates.is_empty() {
        return Err(invalid("exponential mechanism needs at least one candidate"));
    }
    if !(eps > 0.0) || !(sensitivity > 0.0) || !sensitivity.is_finite() {
        return Err(invalid(format!(
            "exponential mechanism needs eps > 0 and finite sensitivity > 0, got eps={eps} sensitivity={sensitivity}"
        )));
    }
    if let Some(bad) = candidates.iter().find(|c| !c.utility.is_finite()) {
        return Err(invalid(format!("non-finite utility {}", bad.utility)));
    }
    Ok(())
}

/// Unnormalised weights `exp(s_i - max s)` with `s_i = eps * u_i / (2 * sensitivity)`.
fn shifted_weights<T>(candidates: &[ScoredCandidate<T>], eps: f64, sensitivity: f64) -> Vec<f64> {
    let coef = eps / (2.0 * sensitivity);
    let max = candidates
        .iter()
        .map(|c| coef * c.utility)
        .fold(f64::NEG_INFINITY, f64::max);
    candidates
        .iter()
        .map(|c| (coef * c.utility - max).exp())
        .collect()
}

/// Selection probabilities of the exponential mechanism, in candidate order.
pub fn selection_probabilities<T>(
    candidates: &[ScoredCandidate<T>],
    eps: f64,
    sensitivity: f64,
) -> Result<Vec<f64>> {
    check_mechanism_args(candidates, eps, sensitivity)?;
    let weights = shifted_weights(candidates, eps, sensitivity);
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Pick one candidate with probability proportional to `exp(eps * u / (2 * sensitivity))`.
pub fn exp_mechanism_select<T: Copy>(
    rng: &mut Rng,
    candidates: &[ScoredCandidate<T>],
    eps: f64,
    sensitivity: f64,
) -> Result<T> {
    check_mechanism_args(candidates, eps, sensitivity)?;
    let weights = shifted_weights(candidates, eps, sensitivity);
    let total: f64 = weights.iter().sum();
    let mut target = rng.uniform() * total;
    for (c, w) in candidates.iter().zip(&weights) {
        if target < *w {
            return Ok(c.id);
        }
        target -= w;
    }
    // Rounding can leave `target` a hair above the last weight.
    let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    Ok(candidates[last].id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    Sequential,
    Parallel,
}

/// One node of the composition tree. Charges are leaves; groups compose their
/// members by sum (sequential) or max (parallel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LedgerEntry {
    Charge { scope: String, eps: f64 },
    Sequential { scope: String, entries: Vec<LedgerEntry> },
    Parallel { scope: String, entries: Vec<LedgerEntry> },
}

impl LedgerEntry {
    pub fn charge(scope: impl Into<String>, eps: f64) -> Self {
        LedgerEntry::Charge { scope: scope.into(), eps }
    }

    pub fn group(kind: Composition, scope: impl Into<String>, entries: Vec<LedgerEntry>) -> Self {
        let scope = scope.into();
        match kind {
            Composition::Sequential => LedgerEntry::Sequential { scope, entries },
            Composition::Parallel => LedgerEntry::Parallel { scope, entries },
        }
    }

    pub fn scope(&self) -> &str {
        match self {
            LedgerEntry::Charge { scope, .. }
            | LedgerEntry::Sequential { scope, .. }
            | LedgerEntry::Parallel { scope, .. } => scope,
        }
    }

    pub fn set_scope(&mut self, new_scope: impl Into<String>) {
        match self {
            LedgerEntry::Charge { scope, .. }
            | LedgerEntry::Sequential { scope, .. }
            | LedgerEntry::Parallel { scope, .. } => *scope = new_scope.into(),
        }
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        match self {
            LedgerEntry::Charge { .. } => &[],
            LedgerEntry::Sequential { entries, .. } | LedgerEntry::Parallel { entries, .. } => entries,
        }
    }

    pub fn total(&self) -> f64 {
        match self {
            LedgerEntry::Charge { eps, .. } => *eps,
            LedgerEntry::Sequential { entries, .. } => compensated_sum(entries.iter().map(LedgerEntry::total)),
            LedgerEntry::Parallel { entries, .. } => {
                entries.iter().map(LedgerEntry::total).fold(0.0, f64::max)
            }
        }
    }

    /// Number of leaf charges under this entry.
    pub fn charge_count(&self) -> usize {
        match self {
            LedgerEntry::Charge { .. } => 1,
            LedgerEntry::Sequential { entries, .. } | LedgerEntry::Parallel { entries, .. } => {
                entries.iter().map(LedgerEntry::charge_count).sum()
            }
        }
    }
}

/// Neumaier summation; keeps totals like `50 * (1/50)` from drifting off `1`.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Auditable record of every privacy charge made while training a model.
///
/// Top-level entries compose sequentially.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "LedgerJson", from = "LedgerJson")]
pub struct BudgetLedger {
    entries: Vec<LedgerEntry>,
}

#[derive(Serialize, Deserialize)]
struct LedgerJson {
    total: f64,
    entries: Vec<LedgerEntry>,
}

impl From<BudgetLedger> for LedgerJson {
    fn from(l: BudgetLedger) -> Self {
        LedgerJson { total: l.total(), entries: l.entries }
    }
}

impl From<LedgerJson> for BudgetLedger {
    fn from(j: LedgerJson) -> Self {
        BudgetLedger { entries: j.entries }
    }
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Record a charge of `eps`.
    ///
    /// Sequential charges stand alone. Consecutive parallel charges under the same
    /// scope label form one group and contribute the max of their members.
    ///
    /// Panics if `eps` is not a positive finite number.
    pub fn record(&mut self, scope: &str, eps: f64, kind: Composition) {
        assert!(eps > 0.0 && eps.is_finite(), "privacy charge must be positive, got {eps}");
        let charge = LedgerEntry::charge(scope, eps);
        match kind {
            Composition::Sequential => self.entries.push(charge),
            Composition::Parallel => match self.entries.last_mut() {
                Some(LedgerEntry::Parallel { scope: s, entries }) if s == scope => entries.push(charge),
                _ => self.entries.push(LedgerEntry::group(Composition::Parallel, scope, vec![charge])),
            },
        }
    }

    /// Append an already composed entry (e.g. a whole tree's accounting).
    pub fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    /// Composed privacy cost: sequential sum over entries, parallel groups by max.
    pub fn total(&self) -> f64 {
        compensated_sum(self.entries.iter().map(LedgerEntry::total))
    }
}
