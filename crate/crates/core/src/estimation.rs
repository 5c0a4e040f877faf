//! Moment estimates from a training set in which every attribute was judged
//! at least twice per object.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{make_psd, SymmetricMatrix};
use crate::model::{average_judgments, JudgmentDataset, MomentEstimates};

/// Unbiased sample variance (divisor `n - 1`).
pub fn var_est(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientRepeats(n));
    }
    // Shifting by the first value makes constant inputs give exactly zero.
    let shifted: Vec<f64> = values.iter().map(|x| x - values[0]).collect();
    let mean = shifted.iter().sum::<f64>() / n as f64;
    let ss: f64 = shifted.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok(ss / (n - 1) as f64)
}

/// Estimates `b`, `v`, `σ²` and `Σ` from `data`.
///
/// With `center` set, the empirical mean of every averaged attribute and of
/// the labels is subtracted before second moments and correlations are taken.
/// Each attribute uses its own repeat count `k[a]` in the `v / k` correction.
pub fn estimate_moments(data: &JudgmentDataset, center: bool) -> Result<MomentEstimates> {
    let d = data.num_attributes();
    let m = data.num_objects();
    let k: Vec<u32> = data.repeats().counts().to_vec();
    if let Some(a) = k.iter().position(|&c| c < 2) {
        return Err(Error::AttributeUnderRepeated {
            attribute: a,
            repeats: k[a],
        });
    }
    let mf = m as f64;

    let design = average_judgments(data);
    let xbar = design.rows();

    let mut v_hat = vec![0.0; d];
    for i in 0..m {
        for (a, v) in v_hat.iter_mut().enumerate() {
            *v += var_est(data.judgments(i, a))?;
        }
    }
    v_hat.iter_mut().for_each(|v| *v /= mf);

    let feature_means: Vec<f64> = (0..d).map(|a| xbar.column(a).sum() / mf).collect();
    let label_mean = data.labels().iter().sum::<f64>() / mf;

    let (x, y): (DMatrix<f64>, Vec<f64>) = if center {
        let x = DMatrix::from_fn(m, d, |i, a| xbar[(i, a)] - feature_means[a]);
        let y = data.labels().iter().map(|y| y - label_mean).collect();
        (x, y)
    } else {
        (xbar.clone(), data.labels().to_vec())
    };

    let mut b_hat = vec![0.0; d];
    let mut second = DMatrix::<f64>::zeros(d, d);
    for i in 0..m {
        for a in 0..d {
            let xa = x[(i, a)];
            b_hat[a] += y[i] * xa;
            for c in a..d {
                second[(a, c)] += xa * x[(i, c)];
            }
        }
    }
    b_hat.iter_mut().for_each(|b| *b /= mf);
    for a in 0..d {
        for c in a..d {
            let s = second[(a, c)] / mf;
            second[(a, c)] = s;
            second[(c, a)] = s;
        }
        second[(a, a)] -= v_hat[a] / f64::from(k[a]);
    }
    let mean_y2 = y.iter().map(|y| y * y).sum::<f64>() / mf;

    let sigma_raw = SymmetricMatrix::new(second)?;
    let sigma2_hat = sigma_raw.diagonal().into_iter().map(|s| s.max(0.0)).collect();
    let sigma_hat = make_psd(&sigma_raw)?;

    Ok(MomentEstimates {
        b_hat,
        v_hat,
        sigma2_hat,
        sigma_hat,
        sigma_raw,
        mean_y2,
        k_source: k,
        feature_means,
        label_mean,
        centered: center,
        bias_feature: false,
    })
}

/// Appends the always-one bias feature to `est`.
///
/// From centered estimates the augmented covariance is rebuilt from the
/// already-corrected `Σ̂` and the feature means, which keeps it PSD and makes
/// the result exactly invariant to shifting any attribute. From uncentered
/// estimates the raw augmented second-moment matrix is projected as a whole.
pub fn with_bias_feature(est: &MomentEstimates) -> Result<MomentEstimates> {
    if est.bias_feature {
        return Err(Error::InvalidConfig("estimates already carry a bias feature".into()));
    }
    let d = est.b_hat.len();
    let mu = &est.feature_means;
    let ybar = est.label_mean;

    let augment = |inner: &SymmetricMatrix, add_outer: bool| -> Result<SymmetricMatrix> {
        let m = DMatrix::from_fn(d + 1, d + 1, |i, j| match (i < d, j < d) {
            (true, true) => inner.get(i, j) + if add_outer { mu[i] * mu[j] } else { 0.0 },
            (true, false) => mu[i],
            (false, true) => mu[j],
            (false, false) => 1.0,
        });
        SymmetricMatrix::new(m)
    };

    let (b_hat, sigma_raw, sigma_hat, mean_y2) = if est.centered {
        let b = est.b_hat.iter().zip(mu).map(|(b, m)| b + m * ybar).chain([ybar]).collect();
        let raw = augment(&est.sigma_raw, true)?;
        let corrected = augment(&est.sigma_hat, true)?;
        (b, raw, corrected, est.mean_y2 + ybar * ybar)
    } else {
        let b = est.b_hat.iter().copied().chain([ybar]).collect();
        let raw = augment(&est.sigma_raw, false)?;
        let corrected = make_psd(&raw)?;
        (b, raw, corrected, est.mean_y2)
    };

    Ok(MomentEstimates {
        b_hat,
        v_hat: est.v_hat.iter().copied().chain([0.0]).collect(),
        sigma2_hat: sigma_hat.diagonal(),
        sigma_hat,
        sigma_raw,
        mean_y2,
        k_source: est.k_source.iter().copied().chain([1]).collect(),
        feature_means: mu.iter().copied().chain([1.0]).collect(),
        label_mean: ybar,
        centered: est.centered,
        bias_feature: true,
    })
}
