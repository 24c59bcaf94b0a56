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

//! Seeded synthetic datasets for desk-scale experiments.
//!
//! Features are i.i.d. standard normal; only the first five carry signal, through
//! a mix of linear, interaction and periodic terms plus Gaussian noise.

use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{Dataset, RawRecord, Task};
use crate::error::{invalid, Result};
use crate::mechanisms::Rng;

const INFORMATIVE: usize = 5;

fn features(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng.inner())).collect()
}

fn signal(x: &[f64]) -> f64 {
    2.0 * x[0] - 1.5 * x[1] + x[2] * x[3] + (2.0 * x[4]).sin()
}

fn build(n: usize, d: usize, seed: u64, task: Task, noise_sd: f64) -> Result<Dataset> {
    if d < INFORMATIVE {
        return Err(invalid(format!("synthetic data needs at least {INFORMATIVE} features")));
    }
    let mut rng = Rng::new(seed);
    let noise = Normal::new(0.0, noise_sd).expect("valid sd");
    let records: Vec<RawRecord> = (0..n)
        .map(|_| {
            let x = features(&mut rng, d);
            let y = signal(&x) + noise.sample(rng.inner());
            let label = match task {
                Task::Classification => {
                    if y >= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Task::Regression => y,
            };
            let sparse = x.into_iter().enumerate().filter(|(_, v)| *v != 0.0).map(|(j, v)| (j as u32, v)).collect();
            (sparse, label)
        })
        .collect();
    Dataset::from_raw(records, d, task)
}

/// Binary task: the sign of a noisy non-linear score.
pub fn make_classification(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    build(n, d, seed, Task::Classification, 1.0)
}

/// Regression task: the noisy non-linear score itself.
pub fn make_regression(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    build(n, d, seed, Task::Regression, 1.0)
}
