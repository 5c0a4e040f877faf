//! Domain types shared across the pipeline.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;

/// Relative slack used when comparing a total cost with a budget, so that
/// fractional costs that sum exactly to the budget remain affordable.
pub const COST_RTOL: f64 = 1e-9;

/// Returns true when `cost` fits within `budget`.
pub fn within_budget(cost: f64, budget: f64) -> bool {
    cost <= budget + COST_RTOL * budget.abs().max(1.0)
}

/// Number of judgments per attribute, with the per-judgment cost of each attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RepeatVectorRepr")]
pub struct RepeatVector {
    counts: Vec<u32>,
    costs: Vec<f64>,
}

#[derive(Deserialize)]
struct RepeatVectorRepr {
    counts: Vec<u32>,
    costs: Option<Vec<f64>>,
}

impl TryFrom<RepeatVectorRepr> for RepeatVector {
    type Error = Error;

    fn try_from(repr: RepeatVectorRepr) -> Result<Self> {
        match repr.costs {
            Some(costs) => RepeatVector::with_costs(repr.counts, costs),
            None => Ok(RepeatVector::new(repr.counts)),
        }
    }
}

impl RepeatVector {
    /// Unit costs for every attribute.
    pub fn new(counts: Vec<u32>) -> Self {
        let costs = vec![1.0; counts.len()];
        Self { counts, costs }
    }

    pub fn with_costs(counts: Vec<u32>, costs: Vec<f64>) -> Result<Self> {
        if counts.len() != costs.len() {
            return Err(Error::DimensionMismatch {
                expected: counts.len(),
                actual: costs.len(),
                context: "repeat vector costs",
            });
        }
        validate_costs(&costs)?;
        Ok(Self { counts, costs })
    }

    pub fn zeros(d: usize) -> Self {
        Self::new(vec![0; d])
    }

    pub fn uniform(d: usize, k: u32) -> Self {
        Self::new(vec![k; d])
    }

    /// Same counts with new per-attribute costs.
    pub fn priced(mut self, costs: &[f64]) -> Result<Self> {
        if costs.len() != self.counts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.counts.len(),
                actual: costs.len(),
                context: "repeat vector costs",
            });
        }
        validate_costs(costs)?;
        self.costs = costs.to_vec();
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn count(&self, attribute: usize) -> u32 {
        self.counts[attribute]
    }

    /// Indices of attributes with at least one judgment.
    pub fn support(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&a| self.counts[a] > 0).collect()
    }

    pub fn support_size(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn total_cost(&self) -> f64 {
        self.counts
            .iter()
            .zip(&self.costs)
            .map(|(&c, &p)| f64::from(c) * p)
            .sum()
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn is_feasible(&self, budget: f64) -> bool {
        within_budget(self.total_cost(), budget)
    }

    /// Copy with one more judgment of `attribute`.
    pub fn incremented(&self, attribute: usize) -> Self {
        let mut next = self.clone();
        next.counts[attribute] += 1;
        next
    }

    pub fn same_counts(&self, other: &RepeatVector) -> bool {
        self.counts == other.counts
    }
}

pub(crate) fn validate_costs(costs: &[f64]) -> Result<()> {
    if let Some((a, c)) = costs.iter().enumerate().find(|(_, c)| !(c.is_finite() && **c > 0.0)) {
        return Err(Error::InvalidRepeatVector(format!(
            "cost of attribute {a} must be positive and finite, got {c}"
        )));
    }
    Ok(())
}

/// Labeled objects with a ragged list of judgments per attribute.
///
/// Every object carries exactly `repeats.count(a)` judgments of attribute `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgmentDataset {
    object_ids: Vec<u64>,
    labels: Vec<f64>,
    // judgments[i][a] holds the judgments of attribute a on object i.
    judgments: Vec<Vec<Vec<f64>>>,
    repeats: RepeatVector,
}

impl JudgmentDataset {
    /// Objects are numbered `0..m`.
    pub fn new(labels: Vec<f64>, judgments: Vec<Vec<Vec<f64>>>, repeats: RepeatVector) -> Result<Self> {
        let ids = (0..labels.len() as u64).collect();
        Self::with_ids(ids, labels, judgments, repeats)
    }

    pub fn with_ids(
        object_ids: Vec<u64>,
        labels: Vec<f64>,
        judgments: Vec<Vec<Vec<f64>>>,
        repeats: RepeatVector,
    ) -> Result<Self> {
        let m = labels.len();
        if m == 0 {
            return Err(Error::InvalidDataset("dataset has no objects".into()));
        }
        if repeats.is_empty() {
            return Err(Error::InvalidDataset("dataset has no attributes".into()));
        }
        if object_ids.len() != m || judgments.len() != m {
            return Err(Error::InvalidDataset(format!(
                "{m} labels but {} object ids and {} judgment rows",
                object_ids.len(),
                judgments.len()
            )));
        }
        if let Some(i) = labels.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidDataset(format!("label of object {i} is not finite")));
        }
        let d = repeats.len();
        for (i, row) in judgments.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidDataset(format!(
                    "object {i} has {} attributes, expected {d}",
                    row.len()
                )));
            }
            for (a, values) in row.iter().enumerate() {
                if values.len() != repeats.count(a) as usize {
                    return Err(Error::InvalidDataset(format!(
                        "object {i} has {} judgments of attribute {a}, expected {}",
                        values.len(),
                        repeats.count(a)
                    )));
                }
                if values.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidDataset(format!(
                        "object {i} has a non-finite judgment of attribute {a}"
                    )));
                }
            }
        }
        Ok(Self {
            object_ids,
            labels,
            judgments,
            repeats,
        })
    }

    pub fn num_objects(&self) -> usize {
        self.labels.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.repeats.len()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn object_ids(&self) -> &[u64] {
        &self.object_ids
    }

    pub fn repeats(&self) -> &RepeatVector {
        &self.repeats
    }

    pub fn judgments(&self, object: usize, attribute: usize) -> &[f64] {
        &self.judgments[object][attribute]
    }

    pub(crate) fn object_judgments(&self, object: usize) -> &[Vec<f64>] {
        &self.judgments[object]
    }

    /// Replaces the per-attribute costs without touching judgments.
    pub fn priced(mut self, costs: &[f64]) -> Result<Self> {
        self.repeats = self.repeats.priced(costs)?;
        Ok(self)
    }

    /// Objects at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::with_ids(
            indices.iter().map(|&i| self.object_ids[i]).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.judgments[i].clone()).collect(),
            self.repeats.clone(),
        )
    }

    /// Keeps only the first `target.count(a)` judgments of every attribute.
    pub fn truncated(&self, target: &RepeatVector) -> Result<Self> {
        self.check_width(target)?;
        for a in 0..target.len() {
            if target.count(a) > self.repeats.count(a) {
                return Err(Error::InsufficientJudgments {
                    attribute: a,
                    available: self.repeats.count(a),
                    required: target.count(a),
                });
            }
        }
        let judgments = self
            .judgments
            .iter()
            .map(|row| {
                row.iter()
                    .zip(target.counts())
                    .map(|(values, &n)| values[..n as usize].to_vec())
                    .collect()
            })
            .collect();
        Self::with_ids(self.object_ids.clone(), self.labels.clone(), judgments, target.clone())
    }

    pub(crate) fn check_width(&self, r: &RepeatVector) -> Result<()> {
        if r.len() != self.num_attributes() {
            return Err(Error::DimensionMismatch {
                expected: self.num_attributes(),
                actual: r.len(),
                context: "repeat vector length vs dataset attributes",
            });
        }
        Ok(())
    }
}

/// Per-object averages of judgments, one row per object.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedDesign {
    rows: DMatrix<f64>,
    bias_included: bool,
}

impl AveragedDesign {
    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn bias_included(&self) -> bool {
        self.bias_included
    }

    pub fn num_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.rows.row(i).iter().copied().collect()
    }

    /// Columns at `indices`, in that order.
    pub fn columns(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.nrows(), indices.len(), |i, j| self.rows[(i, indices[j])])
    }

    /// Appends an all-ones column.
    pub fn with_bias(&self) -> Self {
        if self.bias_included {
            return self.clone();
        }
        let (m, d) = self.rows.shape();
        let rows = self.rows.clone().insert_column(d, 1.0);
        debug_assert_eq!(rows.shape(), (m, d + 1));
        Self {
            rows,
            bias_included: true,
        }
    }
}

/// Mean of each (object, attribute) cell; 0 for attributes with no judgments.
pub fn average_judgments(data: &JudgmentDataset) -> AveragedDesign {
    let m = data.num_objects();
    let d = data.num_attributes();
    let rows = DMatrix::from_fn(m, d, |i, a| mean_or_zero(data.judgments(i, a)));
    AveragedDesign {
        rows,
        bias_included: false,
    }
}

// Sums in sorted order so that the mean is exactly invariant to the order
// in which judgments were collected.
pub(crate) fn mean_or_zero(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 | 2 => values.iter().sum::<f64>() / values.len() as f64,
        n => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted.iter().sum::<f64>() / n as f64
        }
    }
}

pub fn squared_loss(y: f64, y_hat: f64) -> f64 {
    let e = y - y_hat;
    e * e
}

/// Moment estimates computed from a k-repeated training set.
///
/// When `bias_feature` is set, the last attribute is an always-one feature
/// that is never budgeted: it has zero internal variance and is treated as
/// judged once for every repeat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    /// Correlation of each attribute's average with the label.
    pub b_hat: Vec<f64>,
    /// Internal (inter-rater) variance per attribute.
    pub v_hat: Vec<f64>,
    /// External variance per attribute, clamped at zero.
    pub sigma2_hat: Vec<f64>,
    /// External covariance, projected to the PSD cone.
    pub sigma_hat: SymmetricMatrix,
    /// External covariance before the PSD correction.
    pub sigma_raw: SymmetricMatrix,
    /// Mean of the squared (centered, when `centered`) labels.
    pub mean_y2: f64,
    /// Repeat counts of the training set the estimates came from.
    pub k_source: Vec<u32>,
    /// Empirical means of the averaged judgments.
    pub feature_means: Vec<f64>,
    /// Empirical mean of the labels.
    pub label_mean: f64,
    pub centered: bool,
    pub bias_feature: bool,
}

impl MomentEstimates {
    /// Estimates assembled directly from their parts, with no bias feature.
    ///
    /// `sigma` is PSD-corrected; the uncorrected copy is kept in `sigma_raw`.
    pub fn from_parts(
        b_hat: Vec<f64>,
        v_hat: Vec<f64>,
        sigma2_hat: Vec<f64>,
        sigma: SymmetricMatrix,
        mean_y2: f64,
    ) -> Result<Self> {
        let d = b_hat.len();
        for (len, context) in [
            (v_hat.len(), "v_hat length"),
            (sigma2_hat.len(), "sigma2_hat length"),
            (sigma.order(), "sigma order"),
        ] {
            if len != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: len,
                    context,
                });
            }
        }
        if v_hat.iter().chain(&sigma2_hat).any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidMatrix(
                "variances must be finite and non-negative".into(),
            ));
        }
        let sigma_hat = crate::linalg::make_psd(&sigma)?;
        Ok(Self {
            b_hat,
            v_hat,
            sigma2_hat,
            sigma_hat,
            sigma_raw: sigma,
            mean_y2,
            k_source: vec![0; d],
            feature_means: vec![0.0; d],
            label_mean: 0.0,
            centered: true,
            bias_feature: false,
        })
    }

    /// Number of selectable attributes (excludes the bias feature).
    pub fn num_attributes(&self) -> usize {
        self.b_hat.len() - usize::from(self.bias_feature)
    }
}

/// Linear predictor over averaged judgments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub repeat_vector: RepeatVector,
}

impl LinearPredictor {
    /// Bias-only predictor.
    pub fn constant(bias: f64, repeat_vector: RepeatVector) -> Self {
        Self {
            weights: vec![0.0; repeat_vector.len()],
            bias,
            repeat_vector,
        }
    }

    pub fn predict(&self, averaged_row: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(averaged_row)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }
}
