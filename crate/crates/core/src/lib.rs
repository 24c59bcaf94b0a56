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

//! Differentially private gradient boosted decision trees.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: LIBSVM ingestion, label scaling, k-fold splits and disjoint sampling.
//! - [`mechanisms`]: seeded randomness, the Laplace and exponential mechanisms and
//!   the privacy budget ledger.
//! - [`gbdt`]: gradients, split gain, leaf values, histogram split enumeration,
//!   trees and the model artifact.
//! - [`dp_tree`]: growing a single ε-differentially private tree.
//! - [`boosting`]: gradient-based data filtering, geometric leaf clipping, the
//!   ensemble-of-ensembles trainer and the SEQ / PARA / NP baselines.
//! - [`verify`]: brute-force and Monte-Carlo checks of the sensitivity bounds and
//!   mechanism calibration.
//! - [`metrics`] and [`synthetic`]: evaluation helpers and desk-scale data generators.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boosting;
pub mod data;
pub mod dp_tree;
mod error;
pub mod gbdt;
pub mod mechanisms;
pub mod metrics;
pub mod synthetic;
pub mod verify;

pub use boosting::{
    train, FilterReport, GlcIndexMode, Mode, PrivacyConfig, TrainOutput, TrainParams,
    TrainingReport, TreeReport,
};
pub use data::{Dataset, FoldSplit, Instance, LabelScale, Task};
pub use error::{Error, Result};
pub use gbdt::{GbdtModel, LossKind, Tree};
pub use mechanisms::{BudgetLedger, Composition, LedgerEntry, Rng};
