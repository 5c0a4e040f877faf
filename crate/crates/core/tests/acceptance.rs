//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its own PASS/FAIL line; exits nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use multiselect::harness::{run_compare, run_tradeoff, CompareConfig, Method, TradeoffConfig};
use multiselect::linalg::{eig_sym, make_psd, SymmetricMatrix};
use multiselect::multiselect::{enumerate_feasible, prepare_estimates};
use multiselect::{
    analytic_truth, brute_force_select, estimate_moments, full_objective, greedy_select, sample_dataset,
    scoring_objective, Algorithm, GenerativeModel, MomentEstimates, RepeatVector,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_estimates(rng: &mut ChaCha8Rng, d: usize, diagonal: bool) -> MomentEstimates {
    let b: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..3.0)).collect();
    let s2: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..2.0)).collect();
    let sigma = if diagonal {
        SymmetricMatrix::from_diagonal(&s2)
    } else {
        let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        SymmetricMatrix::new(&g * g.transpose()).unwrap()
    };
    MomentEstimates::from_parts(b, v, s2, sigma, 10.0).unwrap()
}

fn scoring_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let costs = [1.0; 5];
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let est = random_estimates(&mut rng, 5, false);
        let greedy = greedy_select(&est, 8.0, &costs, Algorithm::Scoring).unwrap();
        let brute = brute_force_select(&est, 8.0, &costs, Algorithm::Scoring).unwrap();
        worst = worst.max((greedy.objective - brute.objective).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && elapsed < Duration::from_secs(10),
        format!("max |greedy - brute force| = {worst:.2e}, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn full_diagonal_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vectors = enumerate_feasible(&[1.0; 5], 5.0).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let est = random_estimates(&mut rng, 5, true);
        for r in &vectors {
            let diff = full_objective(&est, r).unwrap() - scoring_objective(&est, r);
            worst = worst.max(diff.abs());
        }
    }
    outcome(worst <= 1e-9, format!("{} vectors per set, max difference {worst:.2e}", vectors.len()))
}

fn centered_model() -> GenerativeModel {
    GenerativeModel::gaussian(
        vec![vec![1.0, 0.5, 0.2], vec![0.5, 1.0, 0.3], vec![0.2, 0.3, 1.0]],
        vec![1.0, -0.5, 0.8],
        0.5,
        &[1.0, 0.7, 0.5],
    )
}

fn consistency_model() -> GenerativeModel {
    let mut model = centered_model();
    model.latent_mean = Some(vec![0.5, -0.3, 1.0]);
    model.label_bias = 0.2;
    model
}

fn objective_consistency() -> Outcome {
    let start = Instant::now();
    let model = centered_model();
    let truth = analytic_truth(&model).unwrap();
    let r = RepeatVector::new(vec![3, 2, 1]);
    let target = truth.objective(&r).unwrap();
    // Smallest eigenvalue of Σ on the support, which governs the convergence rate.
    let lambda = truth.sigma.submatrix(&r.support()).min_eigenvalue().unwrap();
    let k = RepeatVector::uniform(3, 2);
    let mut errors_large = Vec::new();
    let mut better = 0;
    for seed in 0..20 {
        let data = sample_dataset(&model.clone().with_seed(seed), 10_000, &k).unwrap();
        let small = data.subset(&(0..400).collect::<Vec<_>>()).unwrap();
        let err = |d| (full_objective(&prepare_estimates(d, Algorithm::Full).unwrap(), &r).unwrap() - target).abs();
        let (e_large, e_small) = (err(&data), err(&small));
        errors_large.push(e_large);
        better += usize::from(e_large < e_small);
    }
    let mean_err = errors_large.iter().sum::<f64>() / 20.0;
    let elapsed = start.elapsed();
    outcome(
        mean_err <= 0.02 && better >= 18 && elapsed < Duration::from_secs(60),
        format!(
            "mean |error| at m=10000 {mean_err:.4}, smaller than m=400 in {better}/20 seeds, lambda_min {lambda:.3}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn unbiasedness() -> Outcome {
    let model = consistency_model();
    let truth = analytic_truth(&model).unwrap();
    let n = 200;
    let k = RepeatVector::uniform(3, 2);
    let mut b = vec![Vec::new(); 3];
    let mut v = vec![Vec::new(); 3];
    for seed in 0..n as u64 {
        let data = sample_dataset(&model.clone().with_seed(1000 + seed), 2000, &k).unwrap();
        let est = estimate_moments(&data, true).unwrap();
        for a in 0..3 {
            b[a].push(est.b_hat[a]);
            v[a].push(est.v_hat[a]);
        }
    }
    let z = |xs: &[f64], t: f64| {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        (mean - t) / (var / xs.len() as f64).sqrt()
    };
    let zb: Vec<f64> = (0..3).map(|a| z(&b[a], truth.b[a])).collect();
    let zv: Vec<f64> = (0..3).map(|a| z(&v[a], truth.v[a])).collect();
    let pass = zb.iter().chain(&zv).all(|z| z.abs() <= 3.0);
    outcome(pass, format!("z-scores b {zb:.2?}, v {zv:.2?}"))
}

fn noisy_model(d: usize) -> GenerativeModel {
    let cov: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.3 }).collect()).collect();
    let weights = [1.0, 0.8, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];
    GenerativeModel::gaussian(cov, weights[..d].to_vec(), 0.5, &vec![1.0; d])
}

fn tradeoff() -> Outcome {
    let start = Instant::now();
    let config = TradeoffConfig {
        model: noisy_model(8),
        methods: vec![Method::Full],
        budget: 12.0,
        costs: None,
        total_judgments: 4096,
        ks: vec![2, 8],
        test_objects: 2000,
        trials: 20,
        seed: 3,
    };
    let report = run_tradeoff(&config).unwrap();
    let k2 = report.cell(Method::Full, 12.0, 2).unwrap();
    let k8 = report.cell(Method::Full, 12.0, 8).unwrap();
    let elapsed = start.elapsed();
    outcome(
        k2.m == 256 && k8.m == 64 && k2.mean_test_mse <= k8.mean_test_mse && elapsed < Duration::from_secs(300),
        format!(
            "k=2 (m={}) {:.4} ± {:.4}, k=8 (m={}) {:.4} ± {:.4}, {:.1} s",
            k2.m,
            k2.mean_test_mse,
            k2.std_error,
            k8.m,
            k8.mean_test_mse,
            k8.std_error,
            elapsed.as_secs_f64()
        ),
    )
}

fn baseline_ordering() -> Outcome {
    let d = 6;
    let mut cov = vec![vec![0.0; d]; d];
    for (a, row) in cov.iter_mut().enumerate() {
        row[a] = 1.0;
    }
    let weights = vec![1.0, 0.15, 0.15, 0.15, 0.15, 0.15];
    let model = GenerativeModel::gaussian(cov, weights, 0.3, &[2.0, 0.3, 0.3, 0.3, 0.3, 0.3]);
    let config = CompareConfig {
        model,
        methods: vec![Method::Full, Method::Averages],
        budgets: vec![8.0],
        costs: None,
        k: 2,
        objects: 2400,
        split: 1.0 / 6.0,
        trials: 50,
        seed: 4,
        direct_attribute: None,
    };
    let report = run_compare(&config).unwrap();
    let full: Vec<_> = report.records.iter().filter(|r| r.method == Method::Full).collect();
    let averages: Vec<_> = report.records.iter().filter(|r| r.method == Method::Averages).collect();
    let wins = full.iter().zip(&averages).filter(|(f, a)| f.test_mse < a.test_mse).count();
    let repeats = full.iter().filter(|f| f.repeat_vector.count(0) >= 3).count();
    outcome(
        full[0].m == 400 && wins >= 40 && repeats >= 40,
        format!("Full beats Averages in {wins}/50 trials, >=3 repeats on the noisy attribute in {repeats}/50"),
    )
}

fn frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

fn make_psd_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 6;
    let comparators: Vec<DMatrix<f64>> = (0..1000)
        .map(|i| {
            let rank = 1 + i % n;
            let g = DMatrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
            &g * g.transpose() / rank as f64
        })
        .collect();
    let (mut min_eig, mut idem, mut ident, mut violations) = (f64::INFINITY, 0.0f64, 0.0f64, 0usize);
    for _ in 0..1000 {
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = SymmetricMatrix::new((&g + g.transpose()) / 2.0).unwrap();
        let p = make_psd(&a).unwrap();
        min_eig = min_eig.min(*eig_sym(&p).unwrap().eigenvalues.last().unwrap());
        idem = idem.max(frobenius(make_psd(&p).unwrap().as_matrix(), p.as_matrix()));
        let own = frobenius(p.as_matrix(), a.as_matrix());
        violations += comparators.iter().filter(|c| frobenius(c, a.as_matrix()) < own).count();

        let psd = SymmetricMatrix::new(&g * g.transpose()).unwrap();
        ident = ident.max(frobenius(make_psd(&psd).unwrap().as_matrix(), psd.as_matrix()));
    }
    outcome(
        min_eig >= -1e-10 && idem <= 1e-12 && ident <= 1e-10 && violations == 0,
        format!(
            "min eigenvalue {min_eig:.2e}, idempotence {idem:.2e}, PSD identity {ident:.2e}, {violations} closer comparators"
        ),
    )
}

fn cli(dir: &Path, threads: &str, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_multiselect"))
        .current_dir(dir)
        .env("MULTISELECT_THREADS", threads)
        .args(args)
        .status()
        .unwrap();
    assert!(status.success(), "multiselect {args:?} failed");
}

fn cli_determinism() -> Outcome {
    let outputs = ["data.csv", "repeats.json", "trace.json", "topped.csv", "predictor.json", "cmp.csv", "cmp_summary.csv", "trade.csv", "trade_summary.csv"];
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        std::fs::write(p.join("model.json"), multiselect::io::to_json(&consistency_model().with_seed(9)).unwrap()).unwrap();
        cli(p, threads, &["simulate", "--model", "model.json", "--objects", "300", "--repeats", "2", "--seed", "7", "--out", "data.csv"]);
        cli(p, threads, &["select", "--algorithm", "full", "--budget", "8", "--train", "data.csv", "--trace", "trace.json", "--out", "repeats.json"]);
        cli(p, threads, &["topup", "--train", "data.csv", "--model", "model.json", "--seed", "7", "--repeats", "repeats.json", "--out", "topped.csv"]);
        cli(p, threads, &["fit", "--train", "topped.csv", "--repeats", "repeats.json", "--out", "predictor.json"]);
        cli(p, threads, &[
            "experiment", "compare", "--model", "model.json", "--budgets", "0,4,8", "--objects", "200", "--trials", "6", "--seed", "5",
            "--out", "cmp.csv", "--summary", "cmp_summary.csv",
        ]);
        cli(p, threads, &[
            "experiment", "tradeoff", "--model", "model.json", "--total-judgments", "1200", "--k", "2,4", "--budget", "6",
            "--test-objects", "200", "--trials", "4", "--seed", "1", "--out", "trade.csv", "--summary", "trade_summary.csv",
        ]);
        let files: Vec<Vec<u8>> = outputs.iter().map(|f| std::fs::read(p.join(f)).unwrap()).collect();
        files
    };
    let first = run("1");
    let second = run("1");
    let threaded = run("4");
    let same = outputs.iter().enumerate().filter(|&(i, _)| first[i] == second[i] && first[i] == threaded[i]).count();
    outcome(same == outputs.len(), format!("{same}/{} output files byte-identical across 3 runs", outputs.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 scoring optimality", scoring_optimality),
        ("2 full/diagonal agreement", full_diagonal_agreement),
        ("3 objective consistency", objective_consistency),
        ("4 estimator unbiasedness", unbiasedness),
        ("5 repeats vs objects tradeoff", tradeoff),
        ("6 full vs averages", baseline_ordering),
        ("7 PSD projection", make_psd_properties),
        ("8 CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = check();
        println!("{} criterion {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
        failed += usize::from(!result.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
