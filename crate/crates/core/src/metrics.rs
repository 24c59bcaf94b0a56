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

use crate::data::{Dataset, Task};
use crate::gbdt::GbdtModel;

/// Fraction of instances whose predicted sign disagrees with the label.
pub fn classification_error(model: &GbdtModel, dataset: &Dataset) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let wrong = dataset
        .instances()
        .iter()
        .filter(|x| model.predict_label(x) != x.label.signum())
        .count();
    wrong as f64 / dataset.len() as f64
}

/// Root mean squared error in the dataset's original label units.
pub fn rmse(model: &GbdtModel, dataset: &Dataset) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let sse: f64 = dataset
        .instances()
        .iter()
        .enumerate()
        .map(|(i, x)| (model.predict_value(x) - dataset.raw_label(i)).powi(2))
        .sum();
    (sse / dataset.len() as f64).sqrt()
}

/// Test error for classification, RMSE for regression.
pub fn evaluate(model: &GbdtModel, dataset: &Dataset) -> f64 {
    match dataset.task() {
        Task::Classification => classification_error(model, dataset),
        Task::Regression => rmse(model, dataset),
    }
}

/// Population standard deviation of the raw labels: the RMSE of predicting the mean.
pub fn label_std(dataset: &Dataset) -> f64 {
    let n = dataset.len() as f64;
    let raw: Vec<f64> = (0..dataset.len()).map(|i| dataset.raw_label(i)).collect();
    let mean = raw.iter().sum::<f64>() / n;
    (raw.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelScale;
    use crate::gbdt::{LossKind, Tree};

    #[test]
    fn error_counts_sign_mismatches() {
        let ds = Dataset::from_raw(
            vec![(vec![], 1.0), (vec![], -1.0), (vec![], 1.0), (vec![], -1.0)],
            1,
            Task::Classification,
        )
        .unwrap();
        let mut model = GbdtModel::new(Task::Classification, 0.5, 0.1, LossKind::Square, LabelScale::IDENTITY);
        model.trees.push(Tree::leaf(1.0));
        assert_eq!(classification_error(&model, &ds), 0.5);
    }

    #[test]
    fn rmse_in_raw_units() {
        let ds = Dataset::from_raw(vec![(vec![], 0.0), (vec![], 10.0)], 1, Task::Regression).unwrap();
        let model = GbdtModel::new(Task::Regression, 0.1, 0.1, LossKind::Square, ds.label_scale());
        // Empty model predicts the midpoint 5.
        assert!((rmse(&model, &ds) - 5.0).abs() < 1e-12);
        assert!((label_std(&ds) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[]), (0.0, 0.0));
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
