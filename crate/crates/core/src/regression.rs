//! Least-squares fitting on averaged judgments and test-set evaluation.

use crate::error::{Error, Result};
use crate::linalg::solve_least_squares;
use crate::model::{average_judgments, squared_loss, JudgmentDataset, LinearPredictor, RepeatVector};

/// Fits weights on the positive-count attributes of `r` plus an intercept.
///
/// `train` must already carry exactly `r` judgments per attribute.
pub fn fit(train: &JudgmentDataset, r: &RepeatVector) -> Result<LinearPredictor> {
    train.check_width(r)?;
    if !train.repeats().same_counts(r) {
        return Err(Error::RepeatMismatch {
            dataset: train.repeats().counts().to_vec(),
            expected: r.counts().to_vec(),
        });
    }
    let support = r.support();
    let design = average_judgments(train);
    let ls = solve_least_squares(&design.columns(&support), train.labels())?;
    let mut weights = vec![0.0; r.len()];
    for (&a, w) in support.iter().zip(ls.weights) {
        weights[a] = w;
    }
    Ok(LinearPredictor {
        weights,
        bias: ls.bias,
        repeat_vector: r.clone(),
    })
}

/// Mean squared error of `predictor` on `test`.
pub fn evaluate(predictor: &LinearPredictor, test: &JudgmentDataset) -> Result<f64> {
    test.check_width(&predictor.repeat_vector)?;
    if !test.repeats().same_counts(&predictor.repeat_vector) {
        return Err(Error::RepeatMismatch {
            dataset: test.repeats().counts().to_vec(),
            expected: predictor.repeat_vector.counts().to_vec(),
        });
    }
    let design = average_judgments(test);
    let m = test.num_objects();
    let total: f64 = (0..m)
        .map(|i| squared_loss(test.labels()[i], predictor.predict(&design.row(i))))
        .sum();
    Ok(total / m as f64)
}

/// Training MSE of the least-squares fit on the given averaged columns.
pub(crate) fn training_mse(columns: &nalgebra::DMatrix<f64>, labels: &[f64]) -> Result<f64> {
    let ls = solve_least_squares(columns, labels)?;
    let m = labels.len();
    let total: f64 = (0..m)
        .map(|i| {
            let pred = ls.bias + (0..columns.ncols()).map(|j| ls.weights[j] * columns[(i, j)]).sum::<f64>();
            squared_loss(labels[i], pred)
        })
        .sum();
    Ok(total / m as f64)
}
