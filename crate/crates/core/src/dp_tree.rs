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

//! Growing one ε_t-differentially private tree.
//!
//! Half of ε_t goes to the leaves; the other half is split evenly across the
//! `depth_max` split levels. Nodes at one level see disjoint rows, so each level
//! costs one level budget under parallel composition, and likewise for the leaves.
//! Split points are drawn by the exponential mechanism over all (feature,
//! threshold) candidates of a node jointly; leaf values are clipped and then
//! perturbed with Laplace noise.

use crate::boosting::glc_clip;
use crate::error::{invalid, Result};
use crate::gbdt::{grow_tree, BinnedData, Tree};
use crate::mechanisms::{
    exp_mechanism_select, laplace_sample, Composition, LedgerEntry, Rng, ScoredCandidate, SeedPurpose,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeBudget {
    pub eps_t: f64,
    pub eps_leaf: f64,
    pub eps_nleaf: f64,
    pub depth_max: usize,
}

impl TreeBudget {
    /// `eps_leaf + depth_max * eps_nleaf`, which equals `eps_t`.
    pub fn composed(&self) -> f64 {
        self.eps_leaf + self.depth_max as f64 * self.eps_nleaf
    }
}

pub fn split_budget(eps_t: f64, depth_max: usize) -> Result<TreeBudget> {
    if !(eps_t > 0.0) || !eps_t.is_finite() {
        return Err(invalid(format!("tree budget must be positive, got {eps_t}")));
    }
    if depth_max == 0 {
        return Err(invalid("depth_max must be at least 1"));
    }
    Ok(TreeBudget {
        eps_t,
        eps_leaf: eps_t / 2.0,
        eps_nleaf: eps_t / (2.0 * depth_max as f64),
        depth_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpTreeParams {
    pub budget: TreeBudget,
    /// Sensitivity of the split gain.
    pub delta_g: f64,
    /// Sensitivity of a leaf value. Zero disables leaf noise (test mode only).
    pub delta_v: f64,
    /// Clip bound applied to leaf values before noise; `None` disables clipping.
    pub clip_bound: Option<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct DpTree {
    pub tree: Tree,
    /// Per-tree accounting: one parallel group per split level, then one for the leaves.
    pub ledger: LedgerEntry,
    /// Leaf values after clipping and before noise, ordered by heap node id.
    pub pre_noise_leaves: Vec<f64>,
    /// Row sets of the nodes visited at each split level.
    pub level_rows: Vec<Vec<Vec<u32>>>,
}

/// Train one private tree on `rows`, which the caller has already filtered.
///
/// Randomness for node `id` comes from streams derived from `(seed, purpose, id)`.
pub fn train_single_tree(
    binned: &BinnedData,
    rows: Vec<u32>,
    grads: &[f64],
    params: &DpTreeParams,
    seed: u64,
) -> Result<DpTree> {
    let budget = params.budget;
    if !(params.delta_g > 0.0) {
        return Err(invalid(format!("gain sensitivity must be positive, got {}", params.delta_g)));
    }
    if !(params.delta_v >= 0.0) || !params.delta_v.is_finite() {
        return Err(invalid(format!("leaf sensitivity must be non-negative, got {}", params.delta_v)));
    }
    if params.clip_bound.is_some_and(|b| !(b > 0.0)) {
        return Err(invalid("clip bound must be positive"));
    }

    let mut grown = grow_tree(binned, rows, grads, budget.depth_max, params.lambda, |id, candidates| {
        let scored: Vec<ScoredCandidate<usize>> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| ScoredCandidate::new(i, c.gain))
            .collect();
        let mut rng = Rng::derived(seed, &[SeedPurpose::Split as u64, id]);
        exp_mechanism_select(&mut rng, &scored, budget.eps_nleaf, params.delta_g)
    })?;

    let noise_scale = params.delta_v / budget.eps_leaf;
    let mut pre_noise_leaves = Vec::with_capacity(grown.leaves.len());
    for leaf in &grown.leaves {
        let exact = crate::gbdt::leaf_value_or_zero(leaf.sum_g, leaf.count, params.lambda);
        let clipped = params.clip_bound.map_or(exact, |b| glc_clip(exact, b));
        pre_noise_leaves.push(clipped);
        let noise = if noise_scale > 0.0 {
            let mut rng = Rng::derived(seed, &[SeedPurpose::Leaf as u64, leaf.node_id]);
            laplace_sample(&mut rng, noise_scale)?
        } else {
            0.0
        };
        grown.tree.set_leaf(leaf.slot, clipped + noise);
    }

    let mut levels: Vec<LedgerEntry> = grown
        .selections
        .iter()
        .enumerate()
        .map(|(d, ids)| {
            let charges = if ids.is_empty() {
                vec![LedgerEntry::charge(format!("depth {} unused", d + 1), budget.eps_nleaf)]
            } else {
                ids.iter().map(|id| LedgerEntry::charge(format!("node {id}"), budget.eps_nleaf)).collect()
            };
            LedgerEntry::group(Composition::Parallel, format!("depth {}", d + 1), charges)
        })
        .collect();
    levels.push(LedgerEntry::group(
        Composition::Parallel,
        "leaves",
        grown
            .leaves
            .iter()
            .map(|l| LedgerEntry::charge(format!("leaf {}", l.node_id), budget.eps_leaf))
            .collect(),
    ));

    Ok(DpTree {
        tree: grown.tree,
        ledger: LedgerEntry::group(Composition::Sequential, "tree", levels),
        pre_noise_leaves,
        level_rows: grown.level_rows,
    })
}
