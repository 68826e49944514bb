//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.
//!
//! Runs the desk-scale protocol: N in {64, 128, 256, 512}, M = 10N, 20 seeded trials.

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use overfit_lab::cli_io;
use overfit_lab::experiments::{run, Experiment, ExperimentConfig, ExperimentReport, Field, SpectrumSpec};
use overfit_lab::features::{sample_design, DesignMatrix, FeatureLaw};
use overfit_lab::linalg::{assemble_kernel, min_norm_solve, KernelMatrix};
use overfit_lab::regression::{
    empirical_test_error, fit_ridgeless, synthesize_labels, variance_closed_form, TargetModel,
};
use overfit_lab::spectra::{DecayFamily, Spectrum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GRID: [usize; 4] = [64, 128, 256, 512];
const TRIALS: usize = 20;

type Outcome = Result<String, String>;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of `value(record)` per N for one series.
fn medians(report: &ExperimentReport, series: &str, value: impl Fn(usize, f64) -> f64, field: Field) -> BTreeMap<usize, f64> {
    let mut cells: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in report.records.iter().filter(|r| r.series == series) {
        cells.entry(r.n).or_default().push(value(r.n, r.get(field).expect("field recorded")));
    }
    cells.into_iter().map(|(n, v)| (n, median(v))).collect()
}

fn spread(m: &BTreeMap<usize, f64>) -> f64 {
    let hi = m.values().cloned().fold(f64::MIN, f64::max);
    let lo = m.values().cloned().fold(f64::MAX, f64::min);
    hi / lo
}

fn show(m: &BTreeMap<usize, f64>) -> String {
    m.iter().map(|(n, v)| format!("N={n}:{v:.4e}")).collect::<Vec<_>>().join(" ")
}

fn config(e: Experiment) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(e);
    c.n_grid = GRID.to_vec();
    c.trials = TRIALS;
    c.master_seed = 20240501;
    c
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn condnum_criteria() -> (Outcome, Outcome) {
    let mut c = config(Experiment::Condnum);
    c.spectra = vec![
        SpectrumSpec::new(DecayFamily::Polynomial, 1.0),
        SpectrumSpec::new(DecayFamily::Exponential, 1.0),
    ];
    c.laws = vec![FeatureLaw::Gaussian];
    let report = match run(&c) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    // λ_k = k^-2 and λ_k = e^-k
    let poly = medians(&report, "poly:1/gaussian", |n, k| k / (n as f64).powi(2), Field::ConditionNumber);
    let exp = medians(
        &report,
        "exp:1/gaussian",
        |n, k| k / (n as f64 * ((n - 1) as f64).exp()),
        Field::ConditionNumber,
    );
    let (sp, se) = (spread(&poly), spread(&exp));
    (
        check(sp <= 2.0, format!("max/min of median ratio = {sp:.3} (limit 2); {}", show(&poly))),
        check(se <= 3.0, format!("max/min of median ratio = {se:.3} (limit 3); {}", show(&exp))),
    )
}

fn learning_curve_criteria() -> (Outcome, Outcome) {
    let mut c = config(Experiment::LearningCurve);
    c.spectra = vec![
        SpectrumSpec::new(DecayFamily::Polynomial, 1.0),
        SpectrumSpec::new(DecayFamily::Exponential, 1.0),
    ];
    c.laws = vec![FeatureLaw::Gaussian];
    c.sigma = 1.0;
    let report = match run(&c) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let poly = medians(&report, "poly:1/gaussian", |_, v| v, Field::Mse);
    let exp = medians(&report, "exp:1/gaussian", |_, v| v, Field::Mse);
    let sp = spread(&poly);
    let growth = exp[&512] / exp[&64];
    (
        check(sp <= 5.0, format!("max/min of median MSE = {sp:.3} (limit 5); {}", show(&poly))),
        check(growth >= 4.0, format!("median MSE N=512 / N=64 = {growth:.2} (need >= 4); {}", show(&exp))),
    )
}

fn smin_criteria() -> (Outcome, Outcome) {
    let mut c = config(Experiment::SminStudy);
    c.spectra = vec![SpectrumSpec::new(DecayFamily::Polynomial, 1.0)];
    c.laws = vec![FeatureLaw::Gaussian, FeatureLaw::UniformSubgaussian, FeatureLaw::COSINE];
    let report = match run(&c) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let normalized = |n: usize, s: f64| s * n as f64; // s_min / (N · N^-2)
    let label = |law: FeatureLaw| format!("poly:1/{law}");
    let cos = medians(&report, &label(FeatureLaw::COSINE), normalized, Field::SMin);
    let gauss = medians(&report, &label(FeatureLaw::Gaussian), normalized, Field::SMin);
    let collapse = cos[&512] / cos[&64];
    let sg = spread(&gauss);
    let six = check(
        collapse <= 0.5 && sg <= 2.0,
        format!(
            "cosine N=512/N=64 = {collapse:.3e} (need <= 0.5), gaussian spread = {sg:.3} (limit 2); cosine {}",
            show(&cos)
        ),
    );
    let raw_g = medians(&report, &label(FeatureLaw::Gaussian), |_, s| s, Field::SMin);
    let raw_u = medians(&report, &label(FeatureLaw::UniformSubgaussian), |_, s| s, Field::SMin);
    let worst = GRID
        .iter()
        .map(|n| {
            let r = raw_u[n] / raw_g[n];
            r.max(1.0 / r)
        })
        .fold(1.0, f64::max);
    let seven = check(
        worst <= 2.0,
        format!("worst uniform/gaussian median s_min factor = {worst:.4} (limit 2)"),
    );
    (six, seven)
}

fn noise(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn variance_monte_carlo() -> Outcome {
    const DRAWS: usize = 2000;
    let n = 64;
    let instances = [
        (DecayFamily::Polynomial, 11u64),
        (DecayFamily::Polynomial, 12),
        (DecayFamily::Polynomial, 13),
        (DecayFamily::Exponential, 14),
        (DecayFamily::Exponential, 15),
    ];
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (family, seed) in instances {
        let m = 10 * n;
        let s = Spectrum::generate(family, 1.0, m).map_err(|e| e.to_string())?;
        let d = sample_design(FeatureLaw::Gaussian, m, n, seed).map_err(|e| e.to_string())?;
        let k = assemble_kernel(s, d).map_err(|e| e.to_string())?;
        let closed = variance_closed_form(&k, 1.0).map_err(|e| e.to_string())?.value;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut total = 0.0;
        for _ in 0..DRAWS {
            let f = fit_ridgeless(&k, &noise(n, &mut rng)).map_err(|e| e.to_string())?;
            total += f.feature_coefficients().expect("Mercer fit").norm_squared();
        }
        let mc = total / DRAWS as f64;
        let rel = (mc - closed).abs() / closed;
        worst = worst.max(rel);
        lines.push(format!("{family}#{seed}: closed={closed:.4e} mc={mc:.4e} rel={rel:.4}"));
    }
    check(worst <= 0.05, format!("worst relative gap = {worst:.4} (limit 0.05); {}", lines.join("; ")))
}

fn truncation_inequality() -> Outcome {
    let mut c = ExperimentConfig::defaults(Experiment::Truncation);
    c.spectra = vec![SpectrumSpec::new(DecayFamily::Polynomial, 1.0)];
    c.laws = vec![FeatureLaw::Gaussian];
    c.n_grid = vec![64];
    c.trials = TRIALS;
    c.m_ratios = vec![10.0];
    c.sigma = 1.0;
    c.master_seed = 20240501;
    let report = run(&c).map_err(|e| e.to_string())?;
    let n = 64.0;
    let held = report
        .records
        .iter()
        .filter(|r| {
            let (vm, v) = (r.get(Field::VTruncated).unwrap(), r.get(Field::VFull).unwrap());
            (v - vm).abs() <= 3.0 * vm + 1.0 / n
        })
        .count();
    check(
        held >= 19 && report.records.len() == TRIALS,
        format!("inequality held in {held}/{} trials (need >= 19)", report.records.len()),
    )
}

fn exact_recovery() -> Outcome {
    let mut worst: f64 = 0.0;
    for (n, seed) in [(16, 1u64), (32, 2), (64, 3), (64, 4), (128, 5)] {
        let s = Spectrum::generate(DecayFamily::Polynomial, 1.0, n).map_err(|e| e.to_string())?;
        let d = sample_design(FeatureLaw::Gaussian, n, n, seed).map_err(|e| e.to_string())?;
        let t = TargetModel::sample(n, 0.0, seed + 100).map_err(|e| e.to_string())?;
        let y = synthesize_labels(&d, &s, &t, seed + 200).map_err(|e| e.to_string())?;
        let k = assemble_kernel(s, d).map_err(|e| e.to_string())?;
        let f = fit_ridgeless(&k, &y).map_err(|e| e.to_string())?;
        let test = sample_design(FeatureLaw::Gaussian, n, 1000, seed + 300).map_err(|e| e.to_string())?;
        worst = worst.max(empirical_test_error(&f, &t, &test).map_err(|e| e.to_string())?);
    }
    check(worst <= 1e-8, format!("worst test MSE = {worst:.3e} (limit 1e-8)"))
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Orthogonal projector onto the column space of `b`, from its SVD.
fn range_projector(b: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = b.clone().svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
        .collect();
    let u = u.select_columns(&cols);
    &u * u.transpose()
}

fn pinv_contracts(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    let mut cases: Vec<(KernelMatrix, DMatrix<f64>)> = Vec::new();
    for (n, r) in [(30, 12), (40, 1), (25, 24)] {
        let b = gaussian_matrix(n, r, rng);
        let k = KernelMatrix::from_entries(&b * b.transpose()).map_err(|e| e.to_string())?;
        cases.push((k, range_projector(&b)));
    }
    // Mercer kernel with fewer features than points
    let s = Spectrum::generate(DecayFamily::Polynomial, 1.0, 15).map_err(|e| e.to_string())?;
    let d = sample_design(FeatureLaw::Gaussian, 15, 40, 77).map_err(|e| e.to_string())?;
    let p = range_projector(&d.entries().transpose());
    cases.push((assemble_kernel(s, d).map_err(|e| e.to_string())?, p));

    for (k, p) in &cases {
        let n = k.n();
        let y = noise(n, rng);
        let sol = min_norm_solve(k, &y).map_err(|e| e.to_string())?;
        let a = &sol.alpha;
        let py = p * &y;
        let ident = DMatrix::<f64>::identity(n, n);
        worst = worst
            .max((k.entries() * a - &py).norm() / y.norm())
            .max(((&ident - p) * a).norm() / a.norm());
        if !sol.inconsistent {
            return Err("generic labels outside the range were not flagged".into());
        }
        let consistent = min_norm_solve(k, &py).map_err(|e| e.to_string())?;
        if consistent.inconsistent {
            return Err("labels in the range were flagged".into());
        }
        worst = worst.max((&consistent.alpha - a).norm() / a.norm());
    }
    Ok(worst)
}

fn gram_factor(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for (family, m, n) in [
        (DecayFamily::Polynomial, 200, 20),
        (DecayFamily::Exponential, 300, 40),
        (DecayFamily::LinearPolylog, 120, 120),
        (DecayFamily::Polynomial, 10, 30),
    ] {
        let s = Spectrum::generate(family, 1.0, m).map_err(|e| e.to_string())?;
        let psi = gaussian_matrix(m, n, rng);
        let mut g = psi.clone();
        for (i, l) in s.eigenvalues().iter().enumerate() {
            g.row_mut(i).scale_mut(l.sqrt());
        }
        let reference = g.transpose() * &g;
        let d = DesignMatrix::from_entries(psi, FeatureLaw::Gaussian).map_err(|e| e.to_string())?;
        let k = assemble_kernel(s, d).map_err(|e| e.to_string())?;
        let scale = reference.amax();
        worst = worst.max((k.entries() - &reference).amax() / scale);
    }
    Ok(worst)
}

fn deterministic_csv() -> Result<bool, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("run{i}.csv"));
        let args: Vec<String> = [
            "learning-curve",
            "--n-grid",
            "16,32",
            "--trials",
            "3",
            "--n-test",
            "200",
            "--master-seed",
            "99",
            "--out",
        ]
        .iter()
        .map(|s| s.to_string())
        .chain([out.display().to_string()])
        .collect();
        if cli_io::main_with(&args, None) != 0 {
            return Err("CLI run failed".into());
        }
        let records = fs::read(&out).map_err(|e| e.to_string())?;
        let summary = fs::read(cli_io::sibling(&out, "summary.csv")).map_err(|e| e.to_string())?;
        outputs.push((records, summary));
    }
    Ok(outputs[0] == outputs[1] && !outputs[0].0.is_empty())
}

fn linalg_contracts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let pinv = pinv_contracts(&mut rng)?;
    let gram = gram_factor(&mut rng)?;
    let same = deterministic_csv()?;
    check(
        pinv <= 1e-8 && gram <= 1e-12 && same,
        format!("pinv residual {pinv:.2e} (limit 1e-8), Gram factor {gram:.2e} (limit 1e-12), byte-identical CSV: {same}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let t = Instant::now();
    let (c1, c2) = condnum_criteria();
    let dt = t.elapsed().as_secs_f64();
    results.push((1, "condition number, polynomial", c1, dt));
    results.push((2, "condition number, exponential", c2, 0.0));
    let t = Instant::now();
    let (c3, c4) = learning_curve_criteria();
    let dt = t.elapsed().as_secs_f64();
    results.push((3, "tempered overfitting", c3, dt));
    results.push((4, "catastrophic overfitting", c4, 0.0));
    let t = Instant::now();
    results.push((5, "variance closed form vs Monte Carlo", variance_monte_carlo(), t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let (c6, c7) = smin_criteria();
    let dt = t.elapsed().as_secs_f64();
    results.push((6, "dependent-feature collapse", c6, dt));
    results.push((7, "sub-Gaussian equivalence", c7, 0.0));
    let t = Instant::now();
    results.push((8, "finite-rank inequality", truncation_inequality(), t.elapsed().as_secs_f64()));
    let t = Instant::now();
    results.push((9, "exact recovery", exact_recovery(), t.elapsed().as_secs_f64()));
    let t = Instant::now();
    results.push((10, "linear-algebra contracts", linalg_contracts(), t.elapsed().as_secs_f64()));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, name, outcome, secs) in &results {
        let timing = if *secs > 0.0 { format!(" [{secs:.1}s]") } else { String::new() };
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}{timing}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail}{timing}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
