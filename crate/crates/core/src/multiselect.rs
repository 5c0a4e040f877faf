//! Repeat-vector objectives and the greedy budget allocation loop.
//!
//! Both objectives estimate `E[Y²] - ℓ(r)`, the share of the label's second
//! moment that a linear predictor on `r`-averaged judgments can explain.
//! The scoring objective assumes uncorrelated attributes and decomposes into
//! independent per-attribute terms; the full objective uses the whole
//! external covariance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{estimate_moments, with_bias_feature};
use crate::linalg::pseudo_inverse;
use crate::model::{validate_costs, within_budget, JudgmentDataset, MomentEstimates, RepeatVector};

/// Feasible repeat vectors enumerated by [`brute_force_select`] are capped at this many.
pub const ENUMERATION_LIMIT: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Scoring,
    Full,
}

impl Algorithm {
    pub fn objective(self, est: &MomentEstimates, r: &RepeatVector) -> Result<f64> {
        match self {
            Algorithm::Scoring => Ok(scoring_objective(est, r)),
            Algorithm::Full => full_objective(est, r),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Scoring => "scoring",
            Algorithm::Full => "full",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scoring" => Ok(Algorithm::Scoring),
            "full" => Ok(Algorithm::Full),
            other => Err(Error::InvalidConfig(format!(
                "unknown algorithm `{other}` (expected `scoring` or `full`)"
            ))),
        }
    }
}

/// Output of a selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub repeat_vector: RepeatVector,
    /// Objective after each greedy increment.
    pub objective_trace: Vec<f64>,
    /// Objective at the returned repeat vector.
    pub objective: f64,
    pub algorithm: Algorithm,
}

fn check_width(est: &MomentEstimates, r: &RepeatVector) {
    assert_eq!(
        r.len(),
        est.num_attributes(),
        "repeat vector length must match the number of estimated attributes"
    );
}

/// `Σ_{a: r[a] > 0} b̂[a]² / (σ̂²[a] + v̂[a] / r[a])`.
///
/// A term whose denominator is exactly zero contributes 0.
pub fn scoring_objective(est: &MomentEstimates, r: &RepeatVector) -> f64 {
    check_width(est, r);
    r.counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(a, &c)| {
            let denom = est.sigma2_hat[a] + est.v_hat[a] / f64::from(c);
            if denom == 0.0 {
                0.0
            } else {
                est.b_hat[a] * est.b_hat[a] / denom
            }
        })
        .sum()
}

/// `sub_r(b̂)ᵀ M_r⁺ sub_r(b̂)` with `M_r = sub_r(Σ̂ + Diag(v̂ / r))`.
///
/// The bias feature, when present, is always part of the support.
pub fn full_objective(est: &MomentEstimates, r: &RepeatVector) -> Result<f64> {
    check_width(est, r);
    let mut support = r.support();
    let mut inv_counts: Vec<f64> = support.iter().map(|&a| 1.0 / f64::from(r.count(a))).collect();
    if est.bias_feature {
        support.push(est.num_attributes());
        inv_counts.push(1.0);
    }
    if support.is_empty() {
        return Ok(0.0);
    }
    let noise: Vec<f64> = support
        .iter()
        .zip(&inv_counts)
        .map(|(&a, inv)| est.v_hat[a] * inv)
        .collect();
    let m = est.sigma_hat.submatrix(&support).add_diagonal(&noise);
    let m_pinv = pseudo_inverse(&m, None)?;
    let b: Vec<f64> = support.iter().map(|&a| est.b_hat[a]).collect();
    let n = b.len();
    let mut value = 0.0;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| m_pinv.get(i, j) * b[j]).sum();
        value += b[i] * row;
    }
    Ok(value)
}

/// Estimated projected loss `ℓ(r) ≈ mean_y2 − objective(r)`.
pub fn projected_loss(est: &MomentEstimates, r: &RepeatVector, algorithm: Algorithm) -> Result<f64> {
    Ok(est.mean_y2 - algorithm.objective(est, r)?)
}

/// Estimates in the form each algorithm consumes: centered for scoring,
/// centered plus the free bias feature for full.
pub fn prepare_estimates(data: &JudgmentDataset, algorithm: Algorithm) -> Result<MomentEstimates> {
    let est = estimate_moments(data, true)?;
    match algorithm {
        Algorithm::Scoring => Ok(est),
        Algorithm::Full => with_bias_feature(&est),
    }
}

fn check_inputs(est: &MomentEstimates, budget: f64, costs: &[f64]) -> Result<()> {
    if costs.len() != est.num_attributes() {
        return Err(Error::DimensionMismatch {
            expected: est.num_attributes(),
            actual: costs.len(),
            context: "costs vs estimated attributes",
        });
    }
    validate_costs(costs)?;
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "budget must be finite and non-negative, got {budget}"
        )));
    }
    Ok(())
}

/// Greedy multi-selection.
///
/// Starting from no judgments, repeatedly adds the single affordable judgment
/// whose incremented repeat vector has the largest objective, until nothing
/// else fits in the budget. Ties go to the lowest attribute index.
pub fn greedy_select(
    est: &MomentEstimates,
    budget: f64,
    costs: &[f64],
    algorithm: Algorithm,
) -> Result<SelectionResult> {
    check_inputs(est, budget, costs)?;
    let mut r = RepeatVector::zeros(costs.len()).priced(costs)?;
    let mut spent = 0.0;
    let mut trace = Vec::new();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (a, &cost) in costs.iter().enumerate() {
            if !within_budget(spent + cost, budget) {
                continue;
            }
            let value = algorithm.objective(est, &r.incremented(a))?;
            if best.is_none_or(|(_, v)| value > v) {
                best = Some((a, value));
            }
        }
        let Some((a, value)) = best else { break };
        r = r.incremented(a);
        spent = r.total_cost();
        trace.push(value);
    }
    let objective = match trace.last() {
        Some(&v) => v,
        None => algorithm.objective(est, &r)?,
    };
    Ok(SelectionResult {
        repeat_vector: r,
        objective_trace: trace,
        objective,
        algorithm,
    })
}

fn count_feasible(costs: &[f64], budget: f64, limit: usize) -> Option<usize> {
    fn go(costs: &[f64], idx: usize, spent: f64, budget: f64, limit: usize, acc: &mut usize) -> bool {
        if idx == costs.len() {
            *acc += 1;
            return *acc <= limit;
        }
        let mut n = 0u32;
        while within_budget(spent + f64::from(n) * costs[idx], budget) {
            if !go(costs, idx + 1, spent + f64::from(n) * costs[idx], budget, limit, acc) {
                return false;
            }
            n += 1;
        }
        true
    }
    let mut acc = 0;
    go(costs, 0, 0.0, budget, limit, &mut acc).then_some(acc)
}

fn visit_feasible(costs: &[f64], budget: f64, mut f: impl FnMut(&[u32])) {
    fn go(costs: &[f64], idx: usize, spent: f64, budget: f64, counts: &mut Vec<u32>, f: &mut dyn FnMut(&[u32])) {
        if idx == costs.len() {
            f(counts);
            return;
        }
        let mut n = 0;
        while within_budget(spent + f64::from(n) * costs[idx], budget) {
            counts[idx] = n;
            go(costs, idx + 1, spent + f64::from(n) * costs[idx], budget, counts, f);
            n += 1;
        }
        counts[idx] = 0;
    }
    let mut counts = vec![0; costs.len()];
    go(costs, 0, 0.0, budget, &mut counts, &mut f);
}

/// All budget-feasible repeat vectors in lexicographic order.
pub fn enumerate_feasible(costs: &[f64], budget: f64) -> Result<Vec<RepeatVector>> {
    validate_costs(costs)?;
    let total = count_feasible(costs, budget, ENUMERATION_LIMIT)
        .ok_or(Error::EnumerationTooLarge { limit: ENUMERATION_LIMIT })?;
    let mut out = Vec::with_capacity(total);
    visit_feasible(costs, budget, |c| {
        out.push(RepeatVector::with_costs(c.to_vec(), costs.to_vec()).expect("costs validated"))
    });
    Ok(out)
}

/// Exhaustive search over every feasible repeat vector.
///
/// Ties go to the lexicographically smallest vector.
pub fn brute_force_select(
    est: &MomentEstimates,
    budget: f64,
    costs: &[f64],
    algorithm: Algorithm,
) -> Result<SelectionResult> {
    check_inputs(est, budget, costs)?;
    count_feasible(costs, budget, ENUMERATION_LIMIT).ok_or(Error::EnumerationTooLarge { limit: ENUMERATION_LIMIT })?;
    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut failure = None;
    visit_feasible(costs, budget, |counts| {
        if failure.is_some() {
            return;
        }
        let r = RepeatVector::new(counts.to_vec());
        match algorithm.objective(est, &r) {
            Ok(value) => {
                if best.as_ref().is_none_or(|(_, v)| value > *v) {
                    best = Some((counts.to_vec(), value));
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let (counts, objective) = best.expect("the zero vector is always feasible");
    Ok(SelectionResult {
        repeat_vector: RepeatVector::with_costs(counts, costs.to_vec())?,
        objective_trace: vec![objective],
        objective,
        algorithm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymmetricMatrix;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag_est(b: &[f64], v: &[f64], s2: &[f64]) -> MomentEstimates {
        MomentEstimates::from_parts(
            b.to_vec(),
            v.to_vec(),
            s2.to_vec(),
            SymmetricMatrix::from_diagonal(s2),
            10.0,
        )
        .unwrap()
    }

    fn random_diag_est(rng: &mut ChaCha8Rng, d: usize) -> MomentEstimates {
        let b: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..3.0)).collect();
        let s: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..2.0)).collect();
        diag_est(&b, &v, &s)
    }

    fn random_full_est(rng: &mut ChaCha8Rng, d: usize) -> MomentEstimates {
        let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let sigma = SymmetricMatrix::new(&g * g.transpose()).unwrap();
        let b: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..3.0)).collect();
        MomentEstimates::from_parts(b, v, sigma.diagonal(), sigma, 10.0).unwrap()
    }

    /// Independent re-statement of the scoring formula.
    fn scoring_reference(b: &[f64], v: &[f64], s2: &[f64], r: &[u32]) -> f64 {
        let mut total = 0.0;
        for a in 0..b.len() {
            if r[a] == 0 {
                continue;
            }
            let var = s2[a] + v[a] / r[a] as f64;
            if var > 0.0 {
                total += b[a].powi(2) / var;
            }
        }
        total
    }

    #[test]
    fn scoring_examples() {
        let est = diag_est(&[1.0], &[1.0], &[1.0]);
        assert_eq!(scoring_objective(&est, &RepeatVector::new(vec![0])), 0.0);
        assert_eq!(scoring_objective(&est, &RepeatVector::new(vec![1])), 0.5);
        assert!((scoring_objective(&est, &RepeatVector::new(vec![2])) - 2.0 / 3.0).abs() < 1e-15);
        let zero = diag_est(&[0.0], &[0.0], &[0.0]);
        assert_eq!(scoring_objective(&zero, &RepeatVector::new(vec![3])), 0.0);
    }

    #[test]
    fn scoring_matches_reference_on_all_small_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let est = random_diag_est(&mut rng, 3);
            for r in enumerate_feasible(&[1.0; 3], 4.0).unwrap() {
                let expect = scoring_reference(&est.b_hat, &est.v_hat, &est.sigma2_hat, r.counts());
                assert!((scoring_objective(&est, &r) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn full_examples() {
        let est = MomentEstimates::from_parts(vec![2.0], vec![0.0], vec![4.0], SymmetricMatrix::from_diagonal(&[4.0]), 5.0).unwrap();
        assert_eq!(full_objective(&est, &RepeatVector::new(vec![0])).unwrap(), 0.0);
        assert!((full_objective(&est, &RepeatVector::new(vec![1])).unwrap() - 1.0).abs() < 1e-15);
        assert!((projected_loss(&est, &RepeatVector::new(vec![1]), Algorithm::Full).unwrap() - 4.0).abs() < 1e-15);
        assert_eq!(projected_loss(&est, &RepeatVector::new(vec![0]), Algorithm::Full).unwrap(), 5.0);
    }

    #[test]
    fn full_equals_scoring_when_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let est = random_diag_est(&mut rng, 2);
            for r in enumerate_feasible(&[1.0; 2], 5.0).unwrap() {
                let s = scoring_objective(&est, &r);
                let f = full_objective(&est, &r).unwrap();
                assert!((s - f).abs() < 1e-9, "{s} vs {f} at {:?}", r.counts());
            }
        }
    }

    #[test]
    fn full_handles_singular_blocks() {
        // Two identical attributes with no noise: M is rank one.
        let sigma = SymmetricMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let est = MomentEstimates::from_parts(vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0, 1.0], sigma, 2.0).unwrap();
        let one = full_objective(&est, &RepeatVector::new(vec![1, 0])).unwrap();
        let both = full_objective(&est, &RepeatVector::new(vec![1, 1])).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        assert!((both - 1.0).abs() < 1e-9);
    }

    #[test]
    fn enumeration_small_case() {
        let all: Vec<Vec<u32>> = enumerate_feasible(&[1.0, 1.0], 2.0)
            .unwrap()
            .into_iter()
            .map(|r| r.counts().to_vec())
            .collect();
        assert_eq!(all.len(), 6);
        for expect in [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]] {
            assert!(all.contains(&expect.to_vec()));
        }
        assert!(matches!(
            enumerate_feasible(&[1.0; 12], 60.0),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn greedy_zero_budget() {
        let est = diag_est(&[1.0, 2.0], &[1.0, 1.0], &[1.0, 1.0]);
        let sel = greedy_select(&est, 0.0, &[1.0, 1.0], Algorithm::Scoring).unwrap();
        assert_eq!(sel.repeat_vector.counts(), &[0, 0]);
        assert!(sel.objective_trace.is_empty());
        assert_eq!(sel.objective, 0.0);
    }

    #[test]
    fn greedy_ignores_uncorrelated_attribute() {
        let est = diag_est(&[1.0, 0.0], &[0.5, 0.1], &[0.3, 2.0]);
        let sel = greedy_select(&est, 7.0, &[1.0, 1.0], Algorithm::Scoring).unwrap();
        assert_eq!(sel.repeat_vector.counts(), &[7, 0]);
    }

    #[test]
    fn greedy_breaks_ties_by_lowest_index() {
        let est = diag_est(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]);
        let sel = greedy_select(&est, 1.0, &[1.0, 1.0], Algorithm::Scoring).unwrap();
        assert_eq!(sel.repeat_vector.counts(), &[1, 0]);
        let sel = greedy_select(&est, 3.0, &[1.0, 1.0], Algorithm::Full).unwrap();
        assert_eq!(sel.repeat_vector.counts(), &[2, 1]);
    }

    #[test]
    fn greedy_respects_costs() {
        let est = diag_est(&[2.0, 1.0], &[0.1, 0.1], &[1.0, 1.0]);
        let sel = greedy_select(&est, 6.0, &[4.0, 1.0], Algorithm::Scoring).unwrap();
        assert!(sel.repeat_vector.is_feasible(6.0));
        assert_eq!(sel.repeat_vector.counts(), &[1, 2]);
        assert_eq!(sel.repeat_vector.costs(), &[4.0, 1.0]);
        // Budget 3 cannot afford the expensive attribute at all.
        let sel = greedy_select(&est, 3.0, &[4.0, 1.0], Algorithm::Scoring).unwrap();
        assert_eq!(sel.repeat_vector.counts(), &[0, 3]);
    }

    #[test]
    fn greedy_rejects_bad_inputs() {
        let est = diag_est(&[1.0], &[1.0], &[1.0]);
        assert!(greedy_select(&est, 1.0, &[0.0], Algorithm::Scoring).is_err());
        assert!(greedy_select(&est, 1.0, &[1.0, 1.0], Algorithm::Scoring).is_err());
        assert!(greedy_select(&est, -1.0, &[1.0], Algorithm::Scoring).is_err());
        assert!(greedy_select(&est, f64::NAN, &[1.0], Algorithm::Scoring).is_err());
    }

    #[test]
    fn brute_force_single_judgment_picks_best_attribute() {
        let est = diag_est(&[0.5, 2.0, 1.0], &[1.0, 1.0, 0.0], &[1.0, 1.0, 1.0]);
        let sel = brute_force_select(&est, 1.0, &[1.0; 3], Algorithm::Scoring).unwrap();
        assert_eq!(sel.repeat_vector.counts(), &[0, 1, 0]);
    }

    #[test]
    fn greedy_scoring_is_optimal_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let est = random_diag_est(&mut rng, 4);
            let g = greedy_select(&est, 6.0, &[1.0; 4], Algorithm::Scoring).unwrap();
            let b = brute_force_select(&est, 6.0, &[1.0; 4], Algorithm::Scoring).unwrap();
            assert!((g.objective - b.objective).abs() <= 1e-12);
        }
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in [Algorithm::Scoring, Algorithm::Full] {
            assert_eq!(alg.to_string().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("lasso".parse::<Algorithm>().is_err());
    }

    fn map_attribute(data: &JudgmentDataset, attribute: usize, f: impl Fn(f64) -> f64) -> JudgmentDataset {
        let judgments = (0..data.num_objects())
            .map(|i| {
                (0..data.num_attributes())
                    .map(|a| {
                        let v = data.judgments(i, a);
                        if a == attribute { v.iter().map(|&x| f(x)).collect() } else { v.to_vec() }
                    })
                    .collect()
            })
            .collect();
        JudgmentDataset::new(data.labels().to_vec(), judgments, data.repeats().clone()).unwrap()
    }

    fn simulated(seed: u64, m: usize) -> JudgmentDataset {
        let model = crate::simulate::GenerativeModel::gaussian(
            vec![vec![1.0, 0.6, 0.1], vec![0.6, 1.0, 0.2], vec![0.1, 0.2, 1.0]],
            vec![0.8, 0.4, -0.6],
            0.5,
            &[1.0, 0.6, 0.9],
        )
        .with_seed(seed);
        crate::simulate::sample_dataset(&model, m, &RepeatVector::uniform(3, 2)).unwrap()
    }

    proptest! {
        #[test]
        fn objectives_are_monotone_in_repeats(seed in any::<u64>(), counts in proptest::collection::vec(0u32..4, 4)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let full = random_full_est(&mut rng, 4);
            let diag = random_diag_est(&mut rng, 4);
            let r = RepeatVector::new(counts);
            for a in 0..4 {
                let next = r.incremented(a);
                prop_assert!(scoring_objective(&diag, &next) >= scoring_objective(&diag, &r) - 1e-10);
                prop_assert!(full_objective(&full, &next).unwrap() >= full_objective(&full, &r).unwrap() - 1e-10);
            }
        }

        #[test]
        fn greedy_trace_is_nondecreasing_and_saturates(seed in any::<u64>(), budget in 0u32..10, full in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (est, alg) = if full {
                (random_full_est(&mut rng, 3), Algorithm::Full)
            } else {
                (random_diag_est(&mut rng, 3), Algorithm::Scoring)
            };
            let sel = greedy_select(&est, f64::from(budget), &[1.0; 3], alg).unwrap();
            prop_assert!(sel.repeat_vector.is_feasible(f64::from(budget)));
            prop_assert_eq!(sel.repeat_vector.total_count(), u64::from(budget));
            prop_assert_eq!(sel.objective_trace.len(), budget as usize);
            for w in sel.objective_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-10);
            }
            let loss = projected_loss(&est, &sel.repeat_vector, alg).unwrap();
            prop_assert!((loss + sel.objective - est.mean_y2).abs() <= 1e-12 * est.mean_y2.abs().max(1.0));
        }

        #[test]
        fn full_trace_ignores_attribute_shifts(seed in any::<u64>(), attribute in 0usize..3, c in -20.0f64..20.0) {
            let data = simulated(seed, 60);
            let shifted = map_attribute(&data, attribute, |x| x + c);
            let run = |d| greedy_select(&prepare_estimates(d, Algorithm::Full).unwrap(), 6.0, &[1.0; 3], Algorithm::Full).unwrap();
            let (a, b) = (run(&data), run(&shifted));
            prop_assert_eq!(a.objective_trace.len(), b.objective_trace.len());
            for (x, y) in a.objective_trace.iter().zip(&b.objective_trace) {
                prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0), "{} vs {}", x, y);
            }
        }

        #[test]
        fn scoring_ignores_attribute_scale(seed in any::<u64>(), attribute in 0usize..3, c in 0.1f64..10.0) {
            let data = simulated(seed, 60);
            let scaled = map_attribute(&data, attribute, |x| x * c);
            let run = |d| greedy_select(&prepare_estimates(d, Algorithm::Scoring).unwrap(), 6.0, &[1.0; 3], Algorithm::Scoring).unwrap();
            let (a, b) = (run(&data), run(&scaled));
            prop_assert_eq!(a.repeat_vector.counts(), b.repeat_vector.counts());
            for (x, y) in a.objective_trace.iter().zip(&b.objective_trace) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{} vs {}", x, y);
            }
        }
    }
}
