//! Seeded experiment pipelines and their tabular reports.
//!
//! One trial of a method at a budget runs the whole protocol: sample the
//! training objects with `k` judgments per attribute, choose a repeat vector,
//! bring the training judgments to that vector, fit, then score the predictor
//! on fresh test objects judged at the same repeat vector.
//!
//! Trial `t` uses seed `seed ^ t` for both the object split and the
//! simulator, so trials are independent and may run in parallel.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{averages_select, copies_select, direct_estimate_baseline};
use crate::error::{Error, Result};
use crate::model::{validate_costs, within_budget, JudgmentDataset, LinearPredictor, RepeatVector};
use crate::multiselect::{greedy_select, prepare_estimates, Algorithm};
use crate::regression::{evaluate, fit};
use crate::simulate::{sample_objects, top_up, GenerativeModel};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "MULTISELECT_THREADS";

/// Test objects in the tradeoff experiment get ids from here up, clear of any training pool.
const TEST_ID_OFFSET: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Full,
    Scoring,
    Averages,
    Copies,
    Direct,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Scoring => "scoring",
            Method::Averages => "averages",
            Method::Copies => "copies",
            Method::Direct => "direct",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Method::Full),
            "scoring" => Ok(Method::Scoring),
            "averages" => Ok(Method::Averages),
            "copies" => Ok(Method::Copies),
            "direct" => Ok(Method::Direct),
            other => Err(Error::InvalidConfig(format!(
                "unknown method `{other}` (expected full, scoring, averages, copies or direct)"
            ))),
        }
    }
}

/// Settings shared by every run of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub k: u32,
    pub costs: Vec<f64>,
    /// Attribute averaged by the direct-estimate baseline.
    pub direct_attribute: Option<usize>,
}

/// Outcome of one method at one budget in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub method: Method,
    pub budget: f64,
    pub k: u32,
    pub m: usize,
    pub trial: usize,
    pub test_mse: f64,
    pub repeat_vector: RepeatVector,
}

/// Brings `train` to exactly `target` judgments per attribute, dropping
/// surplus judgments and simulating missing ones.
pub fn adjust_training(train: &JudgmentDataset, model: &GenerativeModel, target: &RepeatVector) -> Result<JudgmentDataset> {
    let kept: Vec<u32> = train
        .repeats()
        .counts()
        .iter()
        .zip(target.counts())
        .map(|(&have, &want)| have.min(want))
        .collect();
    let trimmed = train.truncated(&RepeatVector::with_costs(kept, target.costs().to_vec())?)?;
    top_up(&trimmed, model, target)
}

fn direct_repeats(settings: &RunSettings, budget: f64) -> Result<(usize, RepeatVector)> {
    let attr = settings
        .direct_attribute
        .ok_or_else(|| Error::InvalidConfig("the direct method needs a designated attribute".into()))?;
    let d = settings.costs.len();
    if attr >= d {
        return Err(Error::InvalidConfig(format!("direct attribute {attr} out of range for {d} attributes")));
    }
    let cost = settings.costs[attr];
    let mut n = 0u32;
    while within_budget(f64::from(n + 1) * cost, budget) {
        n += 1;
    }
    let mut counts = vec![0; d];
    counts[attr] = n;
    Ok((attr, RepeatVector::new(counts)))
}

/// Runs one method on an already-sampled training set and returns the
/// fitted predictor.
pub fn train_method(
    method: Method,
    train_k: &JudgmentDataset,
    model: &GenerativeModel,
    budget: f64,
    settings: &RunSettings,
) -> Result<LinearPredictor> {
    let costs = &settings.costs;
    match method {
        Method::Full | Method::Scoring => {
            let algorithm = if method == Method::Full { Algorithm::Full } else { Algorithm::Scoring };
            let est = prepare_estimates(train_k, algorithm)?;
            let r = greedy_select(&est, budget, costs, algorithm)?.repeat_vector;
            fit(&adjust_training(train_k, model, &r)?, &r)
        }
        Method::Averages => Ok(averages_select(train_k, budget, costs)?.predictor),
        Method::Copies => Ok(copies_select(train_k, budget, costs)?.predictor),
        Method::Direct => {
            let (attr, r) = direct_repeats(settings, budget)?;
            let train = adjust_training(train_k, model, &r.priced(costs)?)?;
            Ok(direct_estimate_baseline(&train, budget, attr, costs[attr])?.predictor)
        }
    }
}

/// Full protocol for one method and budget on fixed object sets.
pub fn run_once(
    method: Method,
    model: &GenerativeModel,
    train_ids: &[u64],
    test_ids: &[u64],
    budget: f64,
    settings: &RunSettings,
) -> Result<(f64, RepeatVector)> {
    let d = model.num_attributes();
    let train_k = sample_objects(model, train_ids, &RepeatVector::uniform(d, settings.k).priced(&settings.costs)?)?;
    let predictor = train_method(method, &train_k, model, budget, settings)?;
    let test = sample_objects(model, test_ids, &predictor.repeat_vector)?;
    Ok((evaluate(&predictor, &test)?, predictor.repeat_vector))
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker threads: {e}")))
}

fn run_trials<F>(trials: usize, f: F) -> Result<Vec<TrialRecord>>
where
    F: Fn(usize) -> Result<Vec<TrialRecord>> + Sync,
{
    let per_trial: Vec<Result<Vec<TrialRecord>>> = thread_pool()?.install(|| (0..trials).into_par_iter().map(&f).collect());
    let mut records = Vec::new();
    for r in per_trial {
        records.extend(r?);
    }
    Ok(records)
}

fn resolve_costs(model: &GenerativeModel, costs: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    let d = model.num_attributes();
    let costs = costs.clone().unwrap_or_else(|| vec![1.0; d]);
    if costs.len() != d {
        return Err(Error::InvalidConfig(format!("{} costs given for {d} attributes", costs.len())));
    }
    validate_costs(&costs)?;
    Ok(costs)
}

fn check_budgets(budgets: &[f64]) -> Result<()> {
    if budgets.is_empty() {
        return Err(Error::InvalidConfig("at least one budget is required".into()));
    }
    if let Some(b) = budgets.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(Error::InvalidConfig(format!("budget must be finite and non-negative, got {b}")));
    }
    Ok(())
}

fn default_methods() -> Vec<Method> {
    vec![Method::Full, Method::Scoring, Method::Averages, Method::Copies]
}
fn default_k() -> u32 {
    2
}
fn default_split() -> f64 {
    0.5
}
fn default_trials() -> usize {
    50
}
fn default_test_objects() -> usize {
    1000
}

/// Algorithm comparison over random train/test splits of a simulated pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub model: GenerativeModel,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub budgets: Vec<f64>,
    #[serde(default)]
    pub costs: Option<Vec<f64>>,
    #[serde(default = "default_k")]
    pub k: u32,
    /// Size of the object pool that is split into train and test.
    pub objects: usize,
    /// Fraction of the pool used for training.
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub direct_attribute: Option<usize>,
}

impl CompareConfig {
    pub fn train_size(&self) -> usize {
        (self.split * self.objects as f64).round() as usize
    }

    fn validate(&self) -> Result<RunSettings> {
        self.model.validate()?;
        check_budgets(&self.budgets)?;
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("at least one method is required".into()));
        }
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("k must be at least 2, got {}", self.k)));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::InvalidConfig(format!("split must lie strictly between 0 and 1, got {}", self.split)));
        }
        let train = self.train_size();
        if train == 0 || train >= self.objects {
            return Err(Error::InvalidConfig(format!(
                "{} objects split at {} leaves an empty train or test set",
                self.objects, self.split
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be positive".into()));
        }
        let settings = RunSettings {
            k: self.k,
            costs: resolve_costs(&self.model, &self.costs)?,
            direct_attribute: self.direct_attribute,
        };
        if self.methods.contains(&Method::Direct) {
            direct_repeats(&settings, 0.0)?;
        }
        Ok(settings)
    }
}

/// Runs every (method, budget) pair on each trial's split.
pub fn run_compare(config: &CompareConfig) -> Result<Report> {
    let settings = config.validate()?;
    let train_size = config.train_size();
    let records = run_trials(config.trials, |trial| {
        let seed = config.seed ^ trial as u64;
        let model = config.model.clone().with_seed(seed);
        let mut ids: Vec<u64> = (0..config.objects as u64).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (train_ids, test_ids) = ids.split_at(train_size);
        let mut out = Vec::new();
        for &budget in &config.budgets {
            for &method in &config.methods {
                let (test_mse, repeat_vector) = run_once(method, &model, train_ids, test_ids, budget, &settings)?;
                out.push(TrialRecord {
                    method,
                    budget,
                    k: config.k,
                    m: train_size,
                    trial,
                    test_mse,
                    repeat_vector,
                });
            }
        }
        Ok(out)
    })?;
    Ok(Report::new(records))
}

/// Fixed total of training judgments traded between repeats and objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffConfig {
    pub model: GenerativeModel,
    #[serde(default = "tradeoff_methods")]
    pub methods: Vec<Method>,
    pub budget: f64,
    #[serde(default)]
    pub costs: Option<Vec<f64>>,
    /// Total training judgments `M`; each `k` trains on `M / (k · d)` objects.
    pub total_judgments: usize,
    pub ks: Vec<u32>,
    #[serde(default = "default_test_objects")]
    pub test_objects: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

fn tradeoff_methods() -> Vec<Method> {
    vec![Method::Full]
}

impl TradeoffConfig {
    pub fn train_size(&self, k: u32) -> usize {
        self.total_judgments / (k as usize * self.model.num_attributes())
    }

    fn validate(&self) -> Result<RunSettings> {
        self.model.validate()?;
        check_budgets(&[self.budget])?;
        if self.methods.is_empty() || self.methods.contains(&Method::Direct) {
            return Err(Error::InvalidConfig("tradeoff needs one or more of full, scoring, averages, copies".into()));
        }
        if self.ks.is_empty() {
            return Err(Error::InvalidConfig("at least one k is required".into()));
        }
        for &k in &self.ks {
            if k < 2 {
                return Err(Error::InvalidConfig(format!("k must be at least 2, got {k}")));
            }
            if self.train_size(k) == 0 {
                return Err(Error::InvalidConfig(format!(
                    "{} total judgments cannot cover one object at k = {k}",
                    self.total_judgments
                )));
            }
        }
        if self.test_objects == 0 || self.trials == 0 {
            return Err(Error::InvalidConfig("test_objects and trials must be positive".into()));
        }
        Ok(RunSettings {
            k: 0,
            costs: resolve_costs(&self.model, &self.costs)?,
            direct_attribute: None,
        })
    }
}

pub fn run_tradeoff(config: &TradeoffConfig) -> Result<Report> {
    let base = config.validate()?;
    let test_ids: Vec<u64> = (0..config.test_objects as u64).map(|i| TEST_ID_OFFSET + i).collect();
    let records = run_trials(config.trials, |trial| {
        let seed = config.seed ^ trial as u64;
        let model = config.model.clone().with_seed(seed);
        let mut out = Vec::new();
        for &k in &config.ks {
            let m = config.train_size(k);
            let train_ids: Vec<u64> = (0..m as u64).collect();
            let settings = RunSettings { k, ..base.clone() };
            for &method in &config.methods {
                let (test_mse, repeat_vector) = run_once(method, &model, &train_ids, &test_ids, config.budget, &settings)?;
                out.push(TrialRecord {
                    method,
                    budget: config.budget,
                    k,
                    m,
                    trial,
                    test_mse,
                    repeat_vector,
                });
            }
        }
        Ok(out)
    })?;
    Ok(Report::new(records))
}

/// Mean and standard error of one (method, budget, k, m) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub budget: f64,
    pub k: u32,
    pub m: usize,
    pub trials: usize,
    pub mean_test_mse: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl Report {
    /// Summary rows follow the order in which cells first appear in `records`.
    pub fn new(records: Vec<TrialRecord>) -> Self {
        let mut order: Vec<(Method, u64, u32, usize)> = Vec::new();
        let mut cells: BTreeMap<(Method, u64, u32, usize), Vec<f64>> = BTreeMap::new();
        for r in &records {
            let key = (r.method, r.budget.to_bits(), r.k, r.m);
            cells
                .entry(key)
                .or_insert_with(|| {
                    order.push(key);
                    Vec::new()
                })
                .push(r.test_mse);
        }
        let summary = order
            .iter()
            .map(|key| {
                let values = &cells[key];
                let n = values.len();
                let mean = values.iter().sum::<f64>() / n as f64;
                let std_error = if n > 1 {
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (var / n as f64).sqrt()
                } else {
                    0.0
                };
                SummaryRow {
                    method: key.0,
                    budget: f64::from_bits(key.1),
                    k: key.2,
                    m: key.3,
                    trials: n,
                    mean_test_mse: mean,
                    std_error,
                }
            })
            .collect();
        Self { records, summary }
    }

    pub fn cell(&self, method: Method, budget: f64, k: u32) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.budget.to_bits() == budget.to_bits() && s.k == k)
    }

    /// `algorithm,budget,k,m,trial,test_mse`
    pub fn write_trials<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["algorithm", "budget", "k", "m", "trial", "test_mse"])?;
        for r in &self.records {
            w.write_record([
                r.method.to_string(),
                r.budget.to_string(),
                r.k.to_string(),
                r.m.to_string(),
                r.trial.to_string(),
                r.test_mse.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `algorithm,budget,k,m,trials,mean_test_mse,std_error`
    pub fn write_summary<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["algorithm", "budget", "k", "m", "trials", "mean_test_mse", "std_error"])?;
        for s in &self.summary {
            w.write_record([
                s.method.to_string(),
                s.budget.to_string(),
                s.k.to_string(),
                s.m.to_string(),
                s.trials.to_string(),
                s.mean_test_mse.to_string(),
                s.std_error.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
