//! Comparison methods that select whole features rather than repeat counts.
//!
//! `Averages` runs forward selection over per-attribute averages of the k
//! training judgments. `Copies` treats every judgment index of every
//! attribute as its own column. The direct-estimate baseline averages a
//! single designated attribute as many times as the budget allows.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::solve_least_squares;
use crate::model::{
    average_judgments, mean_or_zero, validate_costs, within_budget, JudgmentDataset, LinearPredictor, RepeatVector,
};
use crate::regression::{fit, training_mse};

/// A baseline's chosen repeat vector and its fitted predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSelection {
    pub repeat_vector: RepeatVector,
    pub predictor: LinearPredictor,
    /// Training MSE after each forward-selection step.
    pub training_trace: Vec<f64>,
}

fn uniform_repeats(train: &JudgmentDataset) -> Result<u32> {
    let counts = train.repeats().counts();
    let k = counts[0];
    if k == 0 || counts.iter().any(|&c| c != k) {
        return Err(Error::InvalidDataset(format!(
            "baselines need the same positive number of judgments for every attribute, got {counts:?}"
        )));
    }
    Ok(k)
}

fn check_costs(train: &JudgmentDataset, budget: f64, costs: &[f64]) -> Result<()> {
    if costs.len() != train.num_attributes() {
        return Err(Error::DimensionMismatch {
            expected: train.num_attributes(),
            actual: costs.len(),
            context: "costs vs dataset attributes",
        });
    }
    validate_costs(costs)?;
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::InvalidConfig(format!("budget must be finite and non-negative, got {budget}")));
    }
    Ok(())
}

/// Forward selection over `columns`: each step adds the affordable column
/// whose refit has the lowest training MSE. Returns the chosen column
/// indices in selection order and the MSE after each step.
fn forward_select(
    columns: &DMatrix<f64>,
    labels: &[f64],
    column_cost: impl Fn(usize) -> f64,
    budget: f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut selected: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut spent = 0.0;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..columns.ncols() {
            if selected.contains(&c) || !within_budget(spent + column_cost(c), budget) {
                continue;
            }
            let mut trial = selected.clone();
            trial.push(c);
            let sub = DMatrix::from_fn(columns.nrows(), trial.len(), |i, j| columns[(i, trial[j])]);
            let mse = training_mse(&sub, labels)?;
            if best.is_none_or(|(_, b)| mse < b) {
                best = Some((c, mse));
            }
        }
        let Some((c, mse)) = best else { break };
        spent += column_cost(c);
        selected.push(c);
        trace.push(mse);
    }
    Ok((selected, trace))
}

/// `Averages`: forward selection over the k-averaged attributes. Choosing
/// attribute `a` buys all `k` of its judgments at `k · costs[a]`.
pub fn averages_select(train: &JudgmentDataset, budget: f64, costs: &[f64]) -> Result<BaselineSelection> {
    let k = uniform_repeats(train)?;
    check_costs(train, budget, costs)?;
    let design = average_judgments(train);
    let (selected, training_trace) = forward_select(design.rows(), train.labels(), |a| f64::from(k) * costs[a], budget)?;
    let mut counts = vec![0; train.num_attributes()];
    for &a in &selected {
        counts[a] = k;
    }
    let repeat_vector = RepeatVector::with_costs(counts, costs.to_vec())?;
    let predictor = fit(&train.truncated(&repeat_vector)?, &repeat_vector)?;
    Ok(BaselineSelection {
        repeat_vector,
        predictor,
        training_trace,
    })
}

/// `Copies`: forward selection over the `k · d` individual judgment columns.
/// Column `a · k + j` holds judgment `j` of attribute `a` and costs `costs[a]`.
/// The predictor is refit on the average of the selected copies of each attribute.
pub fn copies_select(train: &JudgmentDataset, budget: f64, costs: &[f64]) -> Result<BaselineSelection> {
    let k = uniform_repeats(train)? as usize;
    check_costs(train, budget, costs)?;
    let m = train.num_objects();
    let d = train.num_attributes();
    let copies = DMatrix::from_fn(m, d * k, |i, c| train.judgments(i, c / k)[c % k]);
    let (selected, training_trace) = forward_select(&copies, train.labels(), |c| costs[c / k], budget)?;

    let mut chosen: Vec<Vec<usize>> = vec![Vec::new(); d];
    for &c in &selected {
        chosen[c / k].push(c % k);
    }
    chosen.iter_mut().for_each(|js| js.sort_unstable());
    let counts: Vec<u32> = chosen.iter().map(|js| js.len() as u32).collect();
    let repeat_vector = RepeatVector::with_costs(counts, costs.to_vec())?;

    let support = repeat_vector.support();
    let averaged = DMatrix::from_fn(m, support.len(), |i, s| {
        let a = support[s];
        let values: Vec<f64> = chosen[a].iter().map(|&j| train.judgments(i, a)[j]).collect();
        mean_or_zero(&values)
    });
    let ls = solve_least_squares(&averaged, train.labels())?;
    let mut weights = vec![0.0; d];
    for (&a, w) in support.iter().zip(ls.weights) {
        weights[a] = w;
    }
    Ok(BaselineSelection {
        predictor: LinearPredictor {
            weights,
            bias: ls.bias,
            repeat_vector: repeat_vector.clone(),
        },
        repeat_vector,
        training_trace,
    })
}

/// Averages `floor(budget / cost)` judgments of one designated attribute and
/// fits slope and intercept on that average.
///
/// `train` must hold at least that many judgments of the attribute; the
/// leading ones are used.
pub fn direct_estimate_baseline(
    train: &JudgmentDataset,
    budget: f64,
    estimate_attribute: usize,
    cost: f64,
) -> Result<BaselineSelection> {
    let d = train.num_attributes();
    if estimate_attribute >= d {
        return Err(Error::InvalidConfig(format!(
            "estimate attribute {estimate_attribute} out of range for {d} attributes"
        )));
    }
    if !(cost.is_finite() && cost > 0.0) {
        return Err(Error::InvalidConfig(format!("cost must be positive, got {cost}")));
    }
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::InvalidConfig(format!("budget must be finite and non-negative, got {budget}")));
    }
    let mut n: u32 = 0;
    while within_budget(f64::from(n + 1) * cost, budget) {
        n += 1;
    }
    let mut costs = vec![1.0; d];
    costs[estimate_attribute] = cost;
    let mut counts = vec![0; d];
    counts[estimate_attribute] = n;
    let repeat_vector = RepeatVector::with_costs(counts, costs)?;

    let available = train.repeats().count(estimate_attribute);
    if available < n {
        return Err(Error::InsufficientJudgments {
            attribute: estimate_attribute,
            available,
            required: n,
        });
    }
    let m = train.num_objects();
    let columns = if n == 0 {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_fn(m, 1, |i, _| mean_or_zero(&train.judgments(i, estimate_attribute)[..n as usize]))
    };
    let ls = solve_least_squares(&columns, train.labels())?;
    let mut weights = vec![0.0; d];
    if let Some(&w) = ls.weights.first() {
        weights[estimate_attribute] = w;
    }
    let mse = training_mse(&columns, train.labels())?;
    Ok(BaselineSelection {
        predictor: LinearPredictor {
            weights,
            bias: ls.bias,
            repeat_vector: repeat_vector.clone(),
        },
        repeat_vector,
        training_trace: vec![mse],
    })
}
