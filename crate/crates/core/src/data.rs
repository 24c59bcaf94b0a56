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

//! Dataset ingestion and resampling.
//!
//! Datasets come from LIBSVM text files (`label idx:val idx:val ...`). Labels are
//! mapped into `[-1, 1]`: binary classification labels become `±1`, regression
//! labels are scaled affinely by the min/max of the file, and the map is kept in
//! [`LabelScale`] so metrics can be reported in original units.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mechanisms::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" | "classification" => Ok(Task::Classification),
            "reg" | "regression" => Ok(Task::Regression),
            other => Err(invalid(format!("unknown task `{other}` (expected cls or reg)"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classification => "cls",
            Task::Regression => "reg",
        })
    }
}

/// Affine map `scaled = (raw - offset) / factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScale {
    pub offset: f64,
    pub factor: f64,
}

impl LabelScale {
    pub const IDENTITY: LabelScale = LabelScale { offset: 0.0, factor: 1.0 };

    /// Map `[min, max]` onto `[-1, 1]`. A constant label range keeps factor 1.
    pub fn from_range(min: f64, max: f64) -> Self {
        let half = (max - min) / 2.0;
        LabelScale {
            offset: min + half,
            factor: if half > 0.0 { half } else { 1.0 },
        }
    }

    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.offset) / self.factor
    }

    pub fn invert(&self, scaled: f64) -> f64 {
        scaled * self.factor + self.offset
    }
}

/// Whether feature indices in a LIBSVM file start at 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexBase {
    Zero,
    One,
}

impl IndexBase {
    fn offset(self) -> u64 {
        match self {
            IndexBase::Zero => 0,
            IndexBase::One => 1,
        }
    }
}

/// One example: sparse features sorted by index (absent = 0.0) and a scaled label.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: Vec<(u32, f64)>,
    pub label: f64,
}

impl Instance {
    pub fn value(&self, feature: u32) -> f64 {
        match self.features.binary_search_by_key(&feature, |&(f, _)| f) {
            Ok(pos) => self.features[pos].1,
            Err(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    instances: Vec<Instance>,
    n_features: usize,
    task: Task,
    label_scale: LabelScale,
    index_base: IndexBase,
}

/// A raw record before label mapping: sparse features and the label as read.
pub type RawRecord = (Vec<(u32, f64)>, f64);

impl Dataset {
    /// Build a dataset from raw records, mapping labels into `[-1, 1]`.
    ///
    /// Classification accepts labels in {0, 1, -1, +1}; 0 becomes -1. Regression
    /// labels are scaled by the min/max over the records.
    pub fn from_raw(records: Vec<RawRecord>, n_features: usize, task: Task) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let label_scale = match task {
            Task::Classification => LabelScale::IDENTITY,
            Task::Regression => {
                let (min, max) = records
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.1), hi.max(r.1)));
                LabelScale::from_range(min, max)
            }
        };
        let mut instances = Vec::with_capacity(records.len());
        for (i, (features, raw)) in records.into_iter().enumerate() {
            if let Some(&(f, _)) = features.last() {
                if f as usize >= n_features {
                    return Err(invalid(format!("record {i}: feature {f} out of range {n_features}")));
                }
            }
            let label = match task {
                Task::Classification => classification_label(raw)
                    .ok_or_else(|| invalid(format!("record {i}: label {raw} is not binary")))?,
                // Within the fitted range by construction; clamp rounding spill.
                Task::Regression => label_scale.apply(raw).clamp(-1.0, 1.0),
            };
            instances.push(Instance { features, label });
        }
        Ok(Dataset { instances, n_features, task, label_scale, index_base: IndexBase::One })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn label_scale(&self) -> LabelScale {
        self.label_scale
    }

    pub fn index_base(&self) -> IndexBase {
        self.index_base
    }

    pub fn labels(&self) -> impl Iterator<Item = f64> + '_ {
        self.instances.iter().map(|x| x.label)
    }

    pub fn raw_label(&self, i: usize) -> f64 {
        self.label_scale.invert(self.instances[i].label)
    }

    /// Instances at `indices`, in that order, sharing this dataset's label scale.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            ..self.shell()
        }
    }

    fn shell(&self) -> Dataset {
        Dataset {
            instances: Vec::new(),
            n_features: self.n_features,
            task: self.task,
            label_scale: self.label_scale,
            index_base: self.index_base,
        }
    }

    /// Scale fitted on the raw labels of `indices` only (identity for classification).
    pub fn fit_scale(&self, indices: &[usize]) -> LabelScale {
        match self.task {
            Task::Classification => LabelScale::IDENTITY,
            Task::Regression => {
                let (min, max) = indices
                    .iter()
                    .map(|&i| self.raw_label(i))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
                LabelScale::from_range(min, max)
            }
        }
    }

    /// Re-express every label under `scale`. Labels may leave `[-1, 1]`.
    pub fn with_label_scale(&self, scale: LabelScale) -> Dataset {
        self.rescaled(scale, false)
    }

    fn rescaled(&self, scale: LabelScale, clamp: bool) -> Dataset {
        if self.task == Task::Classification || scale == self.label_scale {
            return self.clone();
        }
        let instances = self
            .instances
            .iter()
            .map(|x| {
                let y = scale.apply(self.label_scale.invert(x.label));
                Instance { features: x.features.clone(), label: if clamp { y.clamp(-1.0, 1.0) } else { y } }
            })
            .collect();
        Dataset { instances, label_scale: scale, ..self.shell() }
    }

    /// Train/test pair where the regression scale is fitted on the training part.
    pub fn split_scaled(&self, train: &[usize], test: &[usize]) -> (Dataset, Dataset) {
        let scale = self.fit_scale(train);
        (
            self.select(train).rescaled(scale, true),
            self.select(test).with_label_scale(scale),
        )
    }

    /// Widen the feature space, e.g. to align a validation file with its training file.
    pub fn with_n_features(mut self, n_features: usize) -> Dataset {
        self.n_features = self.n_features.max(n_features);
        self
    }
}

fn classification_label(raw: f64) -> Option<f64> {
    if raw == 1.0 {
        Some(1.0)
    } else if raw == 0.0 || raw == -1.0 {
        Some(-1.0)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LibsvmOptions {
    /// Force an index base instead of detecting it from the smallest index.
    pub index_base: Option<IndexBase>,
}

pub fn load_libsvm(path: impl AsRef<Path>, task: Task) -> Result<Dataset> {
    load_libsvm_with(path, task, LibsvmOptions::default())
}

pub fn load_libsvm_with(path: impl AsRef<Path>, task: Task, opts: LibsvmOptions) -> Result<Dataset> {
    let file = File::open(path)?;
    read_libsvm(BufReader::new(file), task, opts)
}

pub fn read_libsvm(reader: impl BufRead, task: Task, opts: LibsvmOptions) -> Result<Dataset> {
    let mut rows: Vec<(Vec<(u64, f64)>, f64)> = Vec::new();
    let mut min_index = u64::MAX;
    let mut max_index = 0u64;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: lineno, msg };
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| perr(format!("bad label `{label_tok}`")))?;
        if !label.is_finite() {
            return Err(perr(format!("non-finite label `{label_tok}`")));
        }
        let mut features = Vec::new();
        let mut prev: Option<u64> = None;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| perr(format!("expected idx:val, got `{tok}`")))?;
            let idx: u64 = idx.parse().map_err(|_| perr(format!("bad feature index `{idx}`")))?;
            let val: f64 = val.parse().map_err(|_| perr(format!("bad feature value `{val}`")))?;
            if !val.is_finite() {
                return Err(perr(format!("non-finite feature value `{val}`")));
            }
            if prev.is_some_and(|p| idx <= p) {
                return Err(perr(format!("feature indices must increase strictly, got {idx} after {}", prev.unwrap())));
            }
            prev = Some(idx);
            min_index = min_index.min(idx);
            max_index = max_index.max(idx);
            features.push((idx, val));
        }
        if task == Task::Classification && classification_label(label).is_none() {
            return Err(perr(format!("classification label must be one of 0, 1, -1, +1, got {label}")));
        }
        rows.push((features, label));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let base = opts.index_base.unwrap_or(if min_index == 0 { IndexBase::Zero } else { IndexBase::One });
    if base == IndexBase::One && min_index == 0 {
        return Err(invalid("feature index 0 in a 1-based file"));
    }
    let shift = base.offset();
    let n_features = if min_index == u64::MAX { 0 } else { (max_index + 1 - shift) as usize };
    if n_features > u32::MAX as usize {
        return Err(invalid(format!("feature index {max_index} too large")));
    }
    let records = rows
        .into_iter()
        .map(|(features, label)| {
            let features = features
                .into_iter()
                .map(|(i, v)| ((i - shift) as u32, v))
                .collect();
            (features, label)
        })
        .collect();
    let mut ds = Dataset::from_raw(records, n_features, task)?;
    ds.index_base = base;
    Ok(ds)
}

/// Write raw (unscaled) labels and features in LIBSVM format.
pub fn write_libsvm(dataset: &Dataset, mut out: impl Write) -> Result<()> {
    let shift = dataset.index_base.offset();
    for (i, x) in dataset.instances.iter().enumerate() {
        write!(out, "{}", dataset.raw_label(i))?;
        for &(f, v) in &x.features {
            write!(out, " {}:{}", f as u64 + shift, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Assignment of each instance to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    k: usize,
    assignments: Vec<usize>,
}

impl FoldSplit {
    /// Seeded permutation of `0..n` dealt round-robin into `k` folds.
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(invalid(format!("need at least 2 folds, got {k}")));
        }
        if k > n {
            return Err(invalid(format!("{k} folds for {n} instances")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(Rng::new(seed).inner());
        let mut assignments = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            assignments[i] = pos % k;
        }
        Ok(FoldSplit { k, assignments })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn kfold_split(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldSplit> {
    FoldSplit::new(dataset.len(), k, seed)
}

/// Draw `count` members of `pool` uniformly without replacement.
///
/// Returns `(picked, remaining)`, both in pool order.
pub fn sample_disjoint(pool: &[usize], count: usize, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if count > pool.len() {
        return Err(invalid(format!("cannot draw {count} from a pool of {}", pool.len())));
    }
    let mut chosen = vec![false; pool.len()];
    for pos in rand::seq::index::sample(rng.inner(), pool.len(), count) {
        chosen[pos] = true;
    }
    let (picked, remaining): (Vec<_>, Vec<_>) = pool.iter().zip(&chosen).partition(|(_, &c)| c);
    Ok((
        picked.into_iter().map(|(&i, _)| i).collect(),
        remaining.into_iter().map(|(&i, _)| i).collect(),
    ))
}
