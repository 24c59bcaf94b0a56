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

//! Non-private gradient boosting machinery.
//!
//! Square loss only: the gradient at raw score `s` for label `y` is `s - y` and
//! the implicit hessian is one per instance, which gives the `|I|` denominators
//! in the gain and leaf formulas below.
//!
//! Features are discretised once per training run into quantile bins
//! ([`BinnedData`]); split candidates are bin boundaries, each of which is an
//! observed feature value, and the split predicate is `x[feature] <= threshold`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, LabelScale, Task};
use crate::error::{invalid, Result};
use crate::mechanisms::BudgetLedger;

pub const MODEL_VERSION: u32 = 1;

/// Deepest tree the heap-style node numbering can address.
pub const MAX_DEPTH: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Square,
}

impl LossKind {
    /// Largest possible `|gradient|` at raw score 0 over labels in `[-1, 1]`.
    pub fn g_star(self) -> f64 {
        match self {
            LossKind::Square => 1.0,
        }
    }

    pub fn gradient(self, raw_score: f64, label: f64) -> f64 {
        match self {
            LossKind::Square => raw_score - label,
        }
    }

    pub fn loss(self, raw_score: f64, label: f64) -> f64 {
        match self {
            LossKind::Square => 0.5 * (raw_score - label).powi(2),
        }
    }
}

/// Gain of splitting a node into two sides with the given gradient sums and sizes.
///
/// An empty side contributes zero, including when `lambda` is zero.
pub fn split_gain(sum_left: f64, n_left: usize, sum_right: f64, n_right: usize, lambda: f64) -> f64 {
    side_score(sum_left, n_left, lambda) + side_score(sum_right, n_right, lambda)
}

fn side_score(sum: f64, n: usize, lambda: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum * sum / (n as f64 + lambda)
    }
}

/// Optimal leaf value `-sum / (n + lambda)`.
pub fn leaf_value(sum_g: f64, n: usize, lambda: f64) -> Result<f64> {
    let denom = n as f64 + lambda;
    if !(denom > 0.0) {
        return Err(invalid(format!("leaf value undefined for n={n}, lambda={lambda}")));
    }
    Ok(-sum_g / denom)
}

/// [`leaf_value`] with the empty-leaf convention: no instances gives 0.
pub fn leaf_value_or_zero(sum_g: f64, n: usize, lambda: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        -sum_g / (n as f64 + lambda)
    }
}

/// Per-instance gradients of the loss at the model's current raw scores.
pub fn compute_gradients(model: &GbdtModel, dataset: &Dataset) -> Vec<f64> {
    dataset
        .instances()
        .iter()
        .map(|x| model.loss.gradient(model.raw_score(x), x.label))
        .collect()
}

/// Quantile bin boundaries for one feature. Bin `k` holds values in
/// `(uppers[k-1], uppers[k]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBins {
    uppers: Vec<f64>,
    zero_bin: u32,
}

impl FeatureBins {
    /// Fit bins on the explicit non-zero `values` of a column with `n_total` rows;
    /// the remaining rows are implicit zeros.
    pub fn fit(mut values: Vec<f64>, n_total: usize, max_bins: usize) -> Self {
        let max_bins = max_bins.max(1);
        let zeros = n_total.saturating_sub(values.len());
        if zeros > 0 {
            values.push(0.0);
        }
        values.sort_by(f64::total_cmp);
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for v in values {
            let weight = if v == 0.0 { zeros.max(1) } else { 1 };
            match distinct.last_mut() {
                Some((last, c)) if *last == v => *c += weight,
                _ => distinct.push((v, weight)),
            }
        }
        if distinct.is_empty() {
            distinct.push((0.0, 0));
        }
        let uppers = if distinct.len() <= max_bins {
            distinct.iter().map(|&(v, _)| v).collect()
        } else {
            let total: usize = distinct.iter().map(|&(_, c)| c).sum();
            let mut uppers = Vec::with_capacity(max_bins);
            let mut cum = 0usize;
            let mut closed = 0usize;
            for (i, &(v, c)) in distinct.iter().enumerate() {
                cum += c;
                let last = i + 1 == distinct.len();
                // Close a bin once the cumulative count passes the next quantile cut.
                if last || (closed + 1 < max_bins && cum * max_bins >= (closed + 1) * total) {
                    uppers.push(v);
                    closed = (cum * max_bins / total).max(closed + 1);
                }
            }
            uppers
        };
        let mut bins = FeatureBins { uppers, zero_bin: 0 };
        bins.zero_bin = bins.bin_of(0.0);
        bins
    }

    pub fn len(&self) -> usize {
        self.uppers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uppers.is_empty()
    }

    pub fn uppers(&self) -> &[f64] {
        &self.uppers
    }

    pub fn bin_of(&self, value: f64) -> u32 {
        let k = self.uppers.partition_point(|&u| u < value);
        k.min(self.uppers.len() - 1) as u32
    }
}

/// Row-major binned copy of a dataset's features. Zero-valued entries are implicit.
#[derive(Debug, Clone)]
pub struct BinnedData {
    features: Vec<FeatureBins>,
    offsets: Vec<usize>,
    row_ptr: Vec<usize>,
    entries: Vec<(u32, u32)>,
}

impl BinnedData {
    pub fn new(dataset: &Dataset, max_bins: usize) -> Self {
        let d = dataset.n_features();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); d];
        for x in dataset.instances() {
            for &(f, v) in &x.features {
                if v != 0.0 {
                    columns[f as usize].push(v);
                }
            }
        }
        let features: Vec<FeatureBins> = columns
            .into_iter()
            .map(|col| FeatureBins::fit(col, dataset.len(), max_bins))
            .collect();
        let mut offsets = Vec::with_capacity(d + 1);
        let mut acc = 0;
        for fb in &features {
            offsets.push(acc);
            acc += fb.len();
        }
        offsets.push(acc);

        let mut row_ptr = Vec::with_capacity(dataset.len() + 1);
        let mut entries = Vec::new();
        row_ptr.push(0);
        for x in dataset.instances() {
            for &(f, v) in &x.features {
                if v != 0.0 {
                    entries.push((f, features[f as usize].bin_of(v)));
                }
            }
            row_ptr.push(entries.len());
        }
        BinnedData { features, offsets, row_ptr, entries }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_bins(&self, feature: usize) -> &FeatureBins {
        &self.features[feature]
    }

    fn total_bins(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    fn row(&self, r: u32) -> &[(u32, u32)] {
        &self.entries[self.row_ptr[r as usize]..self.row_ptr[r as usize + 1]]
    }

    fn bin(&self, r: u32, feature: u32) -> u32 {
        let row = self.row(r);
        match row.binary_search_by_key(&feature, |&(f, _)| f) {
            Ok(pos) => row[pos].1,
            Err(_) => self.features[feature as usize].zero_bin,
        }
    }
}

/// A scored way to split a node: `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: u32,
    pub threshold: f64,
    pub bin: u32,
    pub gain: f64,
    pub n_left: usize,
    pub n_right: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct BinStat {
    sum: f64,
    count: usize,
}

/// All candidate splits of the node holding `rows`, in (feature, threshold) order.
///
/// A threshold is emitted only for bins populated at this node and only when both
/// sides are non-empty, so every candidate induces a distinct partition.
pub fn enumerate_candidates(binned: &BinnedData, rows: &[u32], grads: &[f64], lambda: f64) -> Vec<SplitCandidate> {
    if rows.len() < 2 {
        return Vec::new();
    }
    let d = binned.n_features();
    let mut hist = vec![BinStat::default(); binned.total_bins()];
    let mut nz = vec![BinStat::default(); d];
    let mut node = BinStat::default();
    for &r in rows {
        let g = grads[r as usize];
        node.sum += g;
        node.count += 1;
        for &(f, b) in binned.row(r) {
            let f = f as usize;
            let h = &mut hist[binned.offsets[f] + b as usize];
            h.sum += g;
            h.count += 1;
            nz[f].sum += g;
            nz[f].count += 1;
        }
    }

    let mut out = Vec::new();
    for f in 0..d {
        let fb = &binned.features[f];
        if fb.len() < 2 {
            continue;
        }
        let bins = &mut hist[binned.offsets[f]..binned.offsets[f + 1]];
        let zero_count = node.count - nz[f].count;
        if zero_count > 0 {
            let z = &mut bins[fb.zero_bin as usize];
            z.sum += node.sum - nz[f].sum;
            z.count += zero_count;
        }
        let mut left = BinStat::default();
        for (k, stat) in bins.iter().enumerate().take(fb.len() - 1) {
            if stat.count == 0 {
                continue;
            }
            left.sum += stat.sum;
            left.count += stat.count;
            let n_right = node.count - left.count;
            if n_right == 0 {
                break;
            }
            out.push(SplitCandidate {
                feature: f as u32,
                threshold: fb.uppers[k],
                bin: k as u32,
                gain: split_gain(left.sum, left.count, node.sum - left.sum, n_right, lambda),
                n_left: left.count,
                n_right,
            });
        }
    }
    out
}

/// Index of the highest-gain candidate; ties go to the earliest.
pub fn greedy_choice(candidates: &[SplitCandidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if best.is_none_or(|b| c.gain > candidates[b].gain) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { leaf: f64 },
}

/// A binary regression tree stored as a node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree { nodes: vec![Node::Leaf { leaf: value }] }
    }

    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        let tree = Tree { nodes };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(invalid("tree has no nodes"));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                return Err(invalid(format!("node {i} reachable twice")));
            }
            if let Node::Split { left, right, .. } = self.nodes[i] {
                for c in [left as usize, right as usize] {
                    if c >= self.nodes.len() || c == 0 {
                        return Err(invalid(format!("node {i} has bad child {c}")));
                    }
                    stack.push(c);
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &Instance) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { leaf } => return leaf,
                Node::Split { feature, threshold, left, right } => {
                    i = if x.value(feature) <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { leaf } => Some(*leaf),
            Node::Split { .. } => None,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_values().count()
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn set_leaf(&mut self, slot: usize, value: f64) {
        debug_assert!(matches!(self.nodes[slot], Node::Leaf { .. }));
        self.nodes[slot] = Node::Leaf { leaf: value };
    }
}

/// Heap numbering: root is 1, children of `id` are `2 id` and `2 id + 1`.
pub(crate) fn child_ids(id: u64) -> (u64, u64) {
    (2 * id, 2 * id + 1)
}

#[derive(Debug, Clone)]
pub(crate) struct LeafStats {
    pub slot: usize,
    pub node_id: u64,
    pub sum_g: f64,
    pub count: usize,
}

/// Outcome of [`grow_tree`]: the tree with exact leaf values, the statistics of
/// each leaf, and per level the ids of the nodes that went through split selection.
#[derive(Debug, Clone)]
pub(crate) struct GrownTree {
    pub tree: Tree,
    pub leaves: Vec<LeafStats>,
    pub selections: Vec<Vec<u64>>,
    pub level_rows: Vec<Vec<Vec<u32>>>,
}

struct OpenNode {
    slot: usize,
    id: u64,
    rows: Vec<u32>,
}

/// Level-wise growth to `depth_max` split levels.
///
/// A node becomes a leaf when it holds fewer than two rows or has no candidates.
/// `choose` receives the node id and its non-empty candidate list and returns the
/// chosen index.
pub(crate) fn grow_tree<F>(
    binned: &BinnedData,
    rows: Vec<u32>,
    grads: &[f64],
    depth_max: usize,
    lambda: f64,
    mut choose: F,
) -> Result<GrownTree>
where
    F: FnMut(u64, &[SplitCandidate]) -> Result<usize>,
{
    if depth_max > MAX_DEPTH {
        return Err(invalid(format!("depth {depth_max} exceeds {MAX_DEPTH}")));
    }
    let mut nodes = vec![Node::Leaf { leaf: 0.0 }];
    let mut leaves = Vec::new();
    let mut selections = Vec::with_capacity(depth_max);
    let mut level_rows = Vec::with_capacity(depth_max);
    let mut open = vec![OpenNode { slot: 0, id: 1, rows }];

    let finish = |nodes: &mut Vec<Node>, leaves: &mut Vec<LeafStats>, n: OpenNode| {
        let sum_g: f64 = n.rows.iter().map(|&r| grads[r as usize]).sum();
        let count = n.rows.len();
        nodes[n.slot] = Node::Leaf { leaf: leaf_value_or_zero(sum_g, count, lambda) };
        leaves.push(LeafStats { slot: n.slot, node_id: n.id, sum_g, count });
    };

    for _ in 0..depth_max {
        let mut next = Vec::with_capacity(open.len() * 2);
        let mut selected = Vec::new();
        level_rows.push(open.iter().map(|n| n.rows.clone()).collect());
        for node in open {
            let candidates = enumerate_candidates(binned, &node.rows, grads, lambda);
            if candidates.is_empty() {
                finish(&mut nodes, &mut leaves, node);
                continue;
            }
            selected.push(node.id);
            let pick = choose(node.id, &candidates)?;
            let c = candidates[pick];
            let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
                node.rows.iter().partition(|&&r| binned.bin(r, c.feature) <= c.bin);
            debug_assert_eq!(left_rows.len(), c.n_left);
            let left = nodes.len();
            nodes.push(Node::Leaf { leaf: 0.0 });
            nodes.push(Node::Leaf { leaf: 0.0 });
            nodes[node.slot] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left: left as u32,
                right: left as u32 + 1,
            };
            let (lid, rid) = child_ids(node.id);
            next.push(OpenNode { slot: left, id: lid, rows: left_rows });
            next.push(OpenNode { slot: left + 1, id: rid, rows: right_rows });
        }
        selections.push(selected);
        open = next;
    }
    for node in open {
        finish(&mut nodes, &mut leaves, node);
    }
    leaves.sort_by_key(|l| l.node_id);
    Ok(GrownTree { tree: Tree { nodes }, leaves, selections, level_rows })
}

/// Greedy, noise-free tree on `rows` with exact leaf values.
pub fn train_greedy_tree(
    binned: &BinnedData,
    rows: Vec<u32>,
    grads: &[f64],
    depth_max: usize,
    lambda: f64,
) -> Result<Tree> {
    let grown = grow_tree(binned, rows, grads, depth_max, lambda, |_, c| {
        Ok(greedy_choice(c).expect("non-empty candidates"))
    })?;
    Ok(grown.tree)
}

/// The trained artifact: trees whose leaf values are damped by `eta` at prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub version: u32,
    pub task: Task,
    pub eta: f64,
    pub lambda: f64,
    pub loss: LossKind,
    pub label_scale: LabelScale,
    pub ledger: BudgetLedger,
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    pub fn new(task: Task, eta: f64, lambda: f64, loss: LossKind, label_scale: LabelScale) -> Self {
        GbdtModel {
            version: MODEL_VERSION,
            task,
            eta,
            lambda,
            loss,
            label_scale,
            ledger: BudgetLedger::new(),
            trees: Vec::new(),
        }
    }

    /// Sum of `eta * leaf` over all trees; 0 for an empty model.
    pub fn raw_score(&self, x: &Instance) -> f64 {
        self.trees.iter().map(|t| self.eta * t.predict(x)).sum()
    }

    /// `±1` by the sign of the raw score; a zero score maps to `+1`.
    pub fn predict_label(&self, x: &Instance) -> f64 {
        if self.raw_score(x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Prediction in original label units: the raw score clamped to `[-1, 1]` and
    /// mapped back through the label scale.
    pub fn predict_value(&self, x: &Instance) -> f64 {
        self.label_scale.invert(self.raw_score(x).clamp(-1.0, 1.0))
    }

    /// Task-appropriate output: a class label or a re-scaled regression value.
    pub fn predict(&self, x: &Instance) -> f64 {
        match self.task {
            Task::Classification => self.predict_label(x),
            Task::Regression => self.predict_value(x),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: GbdtModel = serde_json::from_str(text)?;
        if model.version != MODEL_VERSION {
            return Err(invalid(format!("unsupported model version {}", model.version)));
        }
        for t in &model.trees {
            t.validate()?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
