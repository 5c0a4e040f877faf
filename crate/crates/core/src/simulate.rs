//! Synthetic judgment generation with known population moments.
//!
//! Each object has a latent mean vector `μ_O ~ N(mean, Σ)` and a label
//! `y = ⟨w*, μ_O⟩ + bias* + noise`. A judgment of attribute `a` on `O` is drawn
//! independently given the object, centered at `μ_O[a]`, either with gaussian
//! noise or by picking uniformly among a small per-object set of values (the
//! collapsed-histogram construction).
//!
//! Every random draw comes from a stream keyed by `(seed, object, attribute,
//! judgment index)`, so a dataset can be extended later with exactly the
//! judgments a larger sample would have contained.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, psd_slack, pseudo_inverse, SymmetricMatrix};
use crate::model::{JudgmentDataset, RepeatVector};

const OBJECT_STREAM: u64 = 0x6f62_6a65_6374;
const VALUES_STREAM: u64 = 0x7661_6c75_6573;
const JUDGMENT_STREAM: u64 = 0x6a75_6467_6521;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let key = parts.iter().fold(splitmix64(seed), |h, &p| splitmix64(h ^ p));
    ChaCha8Rng::seed_from_u64(key)
}

/// How judgments scatter around an object's latent value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentNoise {
    /// `μ_O[a] + sd · N(0, 1)`.
    Gaussian { sd: f64 },
    /// Uniform pick among `values` per-object values whose mean is `μ_O[a]`.
    /// The offsets are gaussian with standard deviation `spread`, then centered.
    UniformChoice { values: usize, spread: f64 },
}

impl JudgmentNoise {
    /// Expected within-object variance of a single judgment.
    pub fn internal_variance(&self) -> f64 {
        match *self {
            JudgmentNoise::Gaussian { sd } => sd * sd,
            JudgmentNoise::UniformChoice { values, spread } => {
                spread * spread * (values as f64 - 1.0) / values as f64
            }
        }
    }
}

fn default_noise() -> Vec<JudgmentNoise> {
    Vec::new()
}

/// Simulator specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerativeModel {
    /// Mean of the latent vectors; zero when absent.
    #[serde(default)]
    pub latent_mean: Option<Vec<f64>>,
    pub latent_covariance: Vec<Vec<f64>>,
    pub label_weights: Vec<f64>,
    #[serde(default)]
    pub label_bias: f64,
    #[serde(default)]
    pub label_noise_sd: f64,
    #[serde(default = "default_noise")]
    pub judgment_noise: Vec<JudgmentNoise>,
    /// Clip every judgment to `[-1, 1]`.
    #[serde(default)]
    pub clip: bool,
    #[serde(default)]
    pub seed: u64,
}

impl GenerativeModel {
    /// Zero-mean model with gaussian judgment noise.
    pub fn gaussian(covariance: Vec<Vec<f64>>, label_weights: Vec<f64>, label_noise_sd: f64, judgment_sd: &[f64]) -> Self {
        Self {
            latent_mean: None,
            latent_covariance: covariance,
            label_weights,
            label_bias: 0.0,
            label_noise_sd,
            judgment_noise: judgment_sd.iter().map(|&sd| JudgmentNoise::Gaussian { sd }).collect(),
            clip: false,
            seed: 0,
        }
    }

    /// Collapsed-histogram model: every attribute is judged by picking one of
    /// `bins` per-object values.
    pub fn bin_collapsed(covariance: Vec<Vec<f64>>, label_weights: Vec<f64>, label_noise_sd: f64, bins: usize, spreads: &[f64]) -> Self {
        Self {
            judgment_noise: spreads
                .iter()
                .map(|&spread| JudgmentNoise::UniformChoice { values: bins, spread })
                .collect(),
            ..Self::gaussian(covariance, label_weights, label_noise_sd, &[])
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn num_attributes(&self) -> usize {
        self.label_weights.len()
    }

    pub fn covariance(&self) -> Result<SymmetricMatrix> {
        SymmetricMatrix::from_rows(&self.latent_covariance).map_err(|e| Error::InvalidModel(e.to_string()))
    }

    pub fn mean(&self) -> Vec<f64> {
        self.latent_mean.clone().unwrap_or_else(|| vec![0.0; self.num_attributes()])
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.num_attributes();
        if d == 0 {
            return Err(Error::InvalidModel("model has no attributes".into()));
        }
        if self.latent_covariance.len() != d {
            return Err(Error::InvalidModel(format!(
                "latent_covariance has {} rows for {d} attributes",
                self.latent_covariance.len()
            )));
        }
        if self.judgment_noise.len() != d {
            return Err(Error::InvalidModel(format!(
                "judgment_noise has {} entries for {d} attributes",
                self.judgment_noise.len()
            )));
        }
        if let Some(mean) = &self.latent_mean {
            if mean.len() != d {
                return Err(Error::InvalidModel(format!("latent_mean has {} entries for {d} attributes", mean.len())));
            }
        }
        let finite = self
            .label_weights
            .iter()
            .chain(self.latent_mean.iter().flatten())
            .chain([&self.label_bias, &self.label_noise_sd])
            .all(|x| x.is_finite());
        if !finite || self.label_noise_sd < 0.0 {
            return Err(Error::InvalidModel("weights, means and noise levels must be finite; noise sd non-negative".into()));
        }
        for (a, noise) in self.judgment_noise.iter().enumerate() {
            let ok = match *noise {
                JudgmentNoise::Gaussian { sd } => sd.is_finite() && sd >= 0.0,
                JudgmentNoise::UniformChoice { values, spread } => values >= 1 && spread.is_finite() && spread >= 0.0,
            };
            if !ok {
                return Err(Error::InvalidModel(format!("invalid judgment noise for attribute {a}")));
            }
        }
        let cov = self.covariance()?;
        let min = cov.min_eigenvalue()?;
        if min < -psd_slack(min) * cov.frobenius_norm().max(1.0) {
            return Err(Error::InvalidModel(format!(
                "latent_covariance is not positive semi-definite (min eigenvalue {min})"
            )));
        }
        Ok(())
    }
}

struct LatentObject {
    mu: Vec<f64>,
    label: f64,
}

/// Validated model with a precomputed covariance square root.
struct Simulator<'a> {
    model: &'a GenerativeModel,
    mean: Vec<f64>,
    factor: DMatrix<f64>,
}

impl<'a> Simulator<'a> {
    fn new(model: &'a GenerativeModel) -> Result<Self> {
        model.validate()?;
        let eig = eig_sym(&model.covariance()?)?;
        let mut factor = eig.eigenvectors.clone();
        for (j, &l) in eig.eigenvalues.iter().enumerate() {
            let s = l.max(0.0).sqrt();
            factor.column_mut(j).scale_mut(s);
        }
        Ok(Self {
            model,
            mean: model.mean(),
            factor,
        })
    }

    fn object(&self, id: u64) -> LatentObject {
        let d = self.mean.len();
        let mut rng = stream(self.model.seed, &[OBJECT_STREAM, id]);
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise: f64 = rng.sample(StandardNormal);
        let latent = &self.factor * z;
        let mu: Vec<f64> = (0..d).map(|a| self.mean[a] + latent[a]).collect();
        let label = self.model.label_bias
            + self.model.label_weights.iter().zip(&mu).map(|(w, m)| w * m).sum::<f64>()
            + self.model.label_noise_sd * noise;
        LatentObject { mu, label }
    }

    fn judgments(&self, id: u64, object: &LatentObject, attribute: usize, range: std::ops::Range<u32>) -> Vec<f64> {
        let seed = self.model.seed;
        let center = object.mu[attribute];
        let a = attribute as u64;
        let values = match self.model.judgment_noise[attribute] {
            JudgmentNoise::UniformChoice { values, spread } if !range.is_empty() => {
                let mut rng = stream(seed, &[VALUES_STREAM, id, a]);
                let offsets: Vec<f64> = (0..values).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect();
                let mean = offsets.iter().sum::<f64>() / values as f64;
                offsets.iter().map(|o| center + o - mean).collect()
            }
            _ => Vec::new(),
        };
        range
            .map(|j| {
                let mut rng = stream(seed, &[JUDGMENT_STREAM, id, a, u64::from(j)]);
                let x = match self.model.judgment_noise[attribute] {
                    JudgmentNoise::Gaussian { sd } => center + sd * rng.sample::<f64, _>(StandardNormal),
                    JudgmentNoise::UniformChoice { .. } => values[rng.random_range(0..values.len())],
                };
                if self.model.clip {
                    x.clamp(-1.0, 1.0)
                } else {
                    x
                }
            })
            .collect()
    }
}

/// Draws objects `0..m`, each with `repeats.count(a)` judgments of attribute `a`.
pub fn sample_dataset(model: &GenerativeModel, m: usize, repeats: &RepeatVector) -> Result<JudgmentDataset> {
    let ids: Vec<u64> = (0..m as u64).collect();
    sample_objects(model, &ids, repeats)
}

/// Draws the objects with the given ids.
pub fn sample_objects(model: &GenerativeModel, ids: &[u64], repeats: &RepeatVector) -> Result<JudgmentDataset> {
    let sim = Simulator::new(model)?;
    if repeats.len() != model.num_attributes() {
        return Err(Error::DimensionMismatch {
            expected: model.num_attributes(),
            actual: repeats.len(),
            context: "repeat vector length vs model attributes",
        });
    }
    if ids.is_empty() {
        return Err(Error::InvalidDataset("at least one object is required".into()));
    }
    let mut labels = Vec::with_capacity(ids.len());
    let mut judgments = Vec::with_capacity(ids.len());
    for &id in ids {
        let object = sim.object(id);
        judgments.push(
            (0..repeats.len())
                .map(|a| sim.judgments(id, &object, a, 0..repeats.count(a)))
                .collect(),
        );
        labels.push(object.label);
    }
    JudgmentDataset::with_ids(ids.to_vec(), labels, judgments, repeats.clone())
}

/// Extends `data` to `target` judgments per attribute.
///
/// Existing judgments are kept and fresh ones appended; attributes with a
/// target of zero lose their judgments. The appended judgments are exactly
/// the ones [`sample_objects`] would have produced at the larger count.
pub fn top_up(data: &JudgmentDataset, model: &GenerativeModel, target: &RepeatVector) -> Result<JudgmentDataset> {
    let sim = Simulator::new(model)?;
    data.check_width(target)?;
    if target.len() != model.num_attributes() {
        return Err(Error::DimensionMismatch {
            expected: model.num_attributes(),
            actual: target.len(),
            context: "repeat vector length vs model attributes",
        });
    }
    for a in 0..target.len() {
        let (existing, wanted) = (data.repeats().count(a), target.count(a));
        if wanted > 0 && wanted < existing {
            return Err(Error::TopUpBelowExisting {
                attribute: a,
                existing,
                target: wanted,
            });
        }
    }
    let mut judgments = Vec::with_capacity(data.num_objects());
    for (i, &id) in data.object_ids().iter().enumerate() {
        let object = sim.object(id);
        let row = data
            .object_judgments(i)
            .iter()
            .enumerate()
            .map(|(a, current)| {
                let wanted = target.count(a);
                if wanted == 0 {
                    return Vec::new();
                }
                let have = current.len() as u32;
                let mut values = current.clone();
                values.extend(sim.judgments(id, &object, a, have..wanted));
                values
            })
            .collect();
        judgments.push(row);
    }
    JudgmentDataset::with_ids(data.object_ids().to_vec(), data.labels().to_vec(), judgments, target.clone())
}

/// Exact population quantities of a model, for a predictor with a free intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticTruth {
    /// `Cov(μ_O, Y) = Σ w*`.
    pub b: Vec<f64>,
    /// Internal variance per attribute.
    pub v: Vec<f64>,
    /// External covariance `Σ`.
    pub sigma: SymmetricMatrix,
    pub mean_y: f64,
    pub var_y: f64,
    /// `E[Y²]`.
    pub mean_y2: f64,
}

impl AnalyticTruth {
    /// `ℓ(r) = Var(Y) − bᵀ Σ_r⁺ b` on the support of `r`, with
    /// `Σ_r = Σ + Diag(v / r)`.
    pub fn projected_loss(&self, r: &RepeatVector) -> Result<f64> {
        if r.len() != self.b.len() {
            return Err(Error::DimensionMismatch {
                expected: self.b.len(),
                actual: r.len(),
                context: "repeat vector length vs model attributes",
            });
        }
        let support = r.support();
        if support.is_empty() {
            return Ok(self.var_y);
        }
        let noise: Vec<f64> = support.iter().map(|&a| self.v[a] / f64::from(r.count(a))).collect();
        let m = pseudo_inverse(&self.sigma.submatrix(&support).add_diagonal(&noise), None)?;
        let b: Vec<f64> = support.iter().map(|&a| self.b[a]).collect();
        let quad: f64 = (0..b.len())
            .map(|i| b[i] * (0..b.len()).map(|j| m.get(i, j) * b[j]).sum::<f64>())
            .sum();
        Ok(self.var_y - quad)
    }

    /// `E[Y²] − ℓ(r)`, the quantity both selection objectives estimate.
    pub fn objective(&self, r: &RepeatVector) -> Result<f64> {
        Ok(self.mean_y2 - self.projected_loss(r)?)
    }
}

/// Closed-form truth for gaussian-latent models without clipping.
pub fn analytic_truth(model: &GenerativeModel) -> Result<AnalyticTruth> {
    model.validate()?;
    if model.clip {
        return Err(Error::IntractableModel("clipped judgments have no closed-form moments".into()));
    }
    let sigma = model.covariance()?;
    let w = DVector::from_column_slice(&model.label_weights);
    let b_vec = sigma.as_matrix() * &w;
    let mean = model.mean();
    let mean_y = model.label_bias + model.label_weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
    let var_y = w.dot(&b_vec) + model.label_noise_sd * model.label_noise_sd;
    Ok(AnalyticTruth {
        b: b_vec.iter().copied().collect(),
        v: model.judgment_noise.iter().map(JudgmentNoise::internal_variance).collect(),
        sigma,
        mean_y,
        var_y,
        mean_y2: var_y + mean_y * mean_y,
    })
}
