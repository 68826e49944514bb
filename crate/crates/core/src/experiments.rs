//! End-to-end experiment drivers: seeded trials over an `N` grid, one record per trial,
//! and median/quartile aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{kernel_gram, rng, sample_design, sample_inputs, AnalyticKernel, FeatureLaw, InputDomain, Inputs};
use crate::linalg::{assemble_kernel, row_norm_diagnostics, singular_extremes};
use crate::regression::{evaluate_risk, fit_ridgeless, truncation_study, TargetModel};
use crate::spectra::{DecayFamily, Spectrum};

/// Number of kernel sections in the analytic-kernel target function.
pub const ANCHORS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Condnum,
    LearningCurve,
    SminStudy,
    KernelInterp,
    Truncation,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Condnum,
        Experiment::LearningCurve,
        Experiment::SminStudy,
        Experiment::KernelInterp,
        Experiment::Truncation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Condnum => "condnum",
            Experiment::LearningCurve => "learning_curve",
            Experiment::SminStudy => "smin_study",
            Experiment::KernelInterp => "kernel_interp",
            Experiment::Truncation => "truncation",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().replace('-', "_");
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown experiment `{s}`")))
    }
}

/// A decay family with its parameter, written `family:a` (e.g. `poly:1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSpec {
    pub family: DecayFamily,
    pub a: f64,
}

impl SpectrumSpec {
    pub fn new(family: DecayFamily, a: f64) -> Self {
        SpectrumSpec { family, a }
    }

    /// Spectrum length used for `N` samples at ratio `eta`. Exponential spectra stop where
    /// eigenvalues would fall below the representable floor.
    pub fn length_for(&self, n: usize, eta: f64) -> usize {
        let m = (eta * n as f64).round() as usize;
        match self.family {
            DecayFamily::Exponential => m.min(Spectrum::max_exponential_len(self.a)),
            _ => m,
        }
    }

    pub fn generate(&self, m: usize) -> Result<Spectrum> {
        Spectrum::generate(self.family, self.a, m)
    }
}

impl fmt::Display for SpectrumSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family, self.a)
    }
}

impl FromStr for SpectrumSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, a) = match s.trim().split_once(':') {
            Some((f, a)) => (
                f.parse()?,
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad decay parameter `{a}`")))?,
            ),
            None => (s.parse()?, 1.0),
        };
        Ok(SpectrumSpec { family, a })
    }
}

/// Everything a run depends on. Identical configs give byte-identical output.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub spectra: Vec<SpectrumSpec>,
    pub laws: Vec<FeatureLaw>,
    /// `M / N`
    pub eta: f64,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub n_test: usize,
    pub sigma: f64,
    pub master_seed: u64,
    pub kernel: AnalyticKernel,
    pub input_domain: InputDomain,
    /// Put the target's anchor points first in every training set.
    pub include_anchors: bool,
    /// Truncation levels as multiples of `N`.
    pub m_ratios: Vec<f64>,
    /// Full spectrum length as a multiple of `N` in the truncation study.
    pub m_full_ratio: f64,
    /// Spectrum length for plain spectrum dumps.
    pub m: usize,
    pub dump_singular_values: bool,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for one experiment family.
    pub fn defaults(experiment: Experiment) -> Self {
        let poly = SpectrumSpec::new(DecayFamily::Polynomial, 1.0);
        let exp = SpectrumSpec::new(DecayFamily::Exponential, 1.0);
        let (spectra, laws, n_grid) = match experiment {
            Experiment::Condnum | Experiment::LearningCurve => {
                (vec![poly, exp], vec![FeatureLaw::Gaussian], vec![32, 64, 128, 256, 512])
            }
            Experiment::SminStudy => (
                vec![poly],
                vec![
                    FeatureLaw::Gaussian,
                    FeatureLaw::UniformSubgaussian,
                    FeatureLaw::COSINE,
                    FeatureLaw::SINE,
                ],
                vec![32, 64, 128, 256, 512],
            ),
            Experiment::KernelInterp => (vec![poly], vec![FeatureLaw::Gaussian], vec![32, 64, 128, 256, 512]),
            Experiment::Truncation => (vec![poly], vec![FeatureLaw::Gaussian], vec![32, 64, 128]),
        };
        ExperimentConfig {
            experiment,
            spectra,
            laws,
            eta: 10.0,
            n_grid,
            trials: 20,
            n_test: 1000,
            sigma: 1.0,
            master_seed: 0,
            kernel: AnalyticKernel::Laplacian,
            input_domain: InputDomain::StdNormal1d,
            include_anchors: false,
            m_ratios: vec![10.0],
            m_full_ratio: 100.0,
            m: 500,
            dump_singular_values: false,
            out: None,
        }
    }

    /// First violated invariant as `(key, message)`.
    pub fn violation(&self) -> Option<(&'static str, String)> {
        if !(self.eta.is_finite() && self.eta >= 2.0) {
            return Some(("eta", format!("must be a finite number >= 2, got {}", self.eta)));
        }
        if self.trials == 0 {
            return Some(("trials", "must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return Some(("n_grid", "must be a non-empty list of positive sizes".into()));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Some(("n_grid", "must be strictly increasing".into()));
        }
        if self.n_test == 0 {
            return Some(("n_test", "must be at least 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Some(("sigma", format!("must be finite and >= 0, got {}", self.sigma)));
        }
        if self.spectra.is_empty() {
            return Some(("spectra", "must name at least one spectrum".into()));
        }
        if let Some(s) = self.spectra.iter().find(|s| !(s.a > 0.0 && s.a.is_finite())) {
            return Some(("spectra", format!("decay parameter must be positive in `{s}`")));
        }
        if self.laws.is_empty() {
            return Some(("laws", "must name at least one feature law".into()));
        }
        if let AnalyticKernel::GaussianRbf { bandwidth } = self.kernel {
            if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                return Some(("bandwidth", format!("must be positive, got {bandwidth}")));
            }
        }
        if let InputDomain::UniformInterval { lo, hi } = self.input_domain {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Some(("input_domain", "interval needs finite lo < hi".into()));
            }
        }
        if self.kernel == AnalyticKernel::Ntk && self.input_domain.dim() < 2 {
            return Some(("input_domain", "the NTK needs inputs of dimension >= 2".into()));
        }
        if !(self.m_full_ratio > 1.0 && self.m_full_ratio.is_finite()) {
            return Some(("m_full_ratio", format!("must exceed 1, got {}", self.m_full_ratio)));
        }
        if self.m_ratios.is_empty() {
            return Some(("m_ratios", "must list at least one ratio".into()));
        }
        if let Some(r) = self.m_ratios.iter().find(|&&r| !(r > 1.0 && r <= self.m_full_ratio)) {
            return Some(("m_ratios", format!("ratio {r} must lie in (1, m_full_ratio]")));
        }
        if self.m == 0 {
            return Some(("m", "must be at least 1".into()));
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        match self.violation() {
            Some((key, msg)) => Err(Error::invalid(format!("{key}: {msg}"))),
            None => Ok(()),
        }
    }
}

/// Every per-trial quantity an experiment may record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    SMax,
    SMin,
    ConditionNumber,
    RatioToTheory,
    /// `s_min(K) / (N λ_N)`
    SminRatio,
    /// `s_min(K / N)`
    SminOverN,
    MinPSquared,
    Mse,
    Bias,
    Variance,
    VTruncated,
    VFull,
    Gap,
    Bound,
    Slack,
}

impl Field {
    pub const ALL: [Field; 15] = [
        Field::SMax,
        Field::SMin,
        Field::ConditionNumber,
        Field::RatioToTheory,
        Field::SminRatio,
        Field::SminOverN,
        Field::MinPSquared,
        Field::Mse,
        Field::Bias,
        Field::Variance,
        Field::VTruncated,
        Field::VFull,
        Field::Gap,
        Field::Bound,
        Field::Slack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::SMax => "s_max",
            Field::SMin => "s_min",
            Field::ConditionNumber => "condition_number",
            Field::RatioToTheory => "ratio_to_theory",
            Field::SminRatio => "smin_ratio",
            Field::SminOverN => "smin_over_n",
            Field::MinPSquared => "min_p_squared",
            Field::Mse => "mse",
            Field::Bias => "bias",
            Field::Variance => "variance",
            Field::VTruncated => "v_truncated",
            Field::VFull => "v_full",
            Field::Gap => "gap",
            Field::Bound => "bound",
            Field::Slack => "slack",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::PlotField(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Spectrum/law (or kernel) label of the curve this trial belongs to.
    pub series: String,
    pub n: usize,
    pub m: Option<usize>,
    pub trial: usize,
    pub seed: u64,
    values: [Option<f64>; Field::ALL.len()],
}

impl TrialRecord {
    pub fn new(series: impl Into<String>, n: usize, m: Option<usize>, trial: usize, seed: u64) -> Self {
        TrialRecord {
            series: series.into(),
            n,
            m,
            trial,
            seed,
            values: [None; Field::ALL.len()],
        }
    }

    pub fn get(&self, field: Field) -> Option<f64> {
        self.values[field as usize]
    }

    pub fn set(&mut self, field: Field, value: f64) -> &mut Self {
        self.values[field as usize] = Some(value);
        self
    }

    pub fn populated(&self) -> impl Iterator<Item = Field> + '_ {
        Field::ALL.into_iter().filter(|f| self.get(*f).is_some())
    }
}

/// Median and quartiles of one field over the trials of one `(series, N)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub series: String,
    pub n: usize,
    pub field: Field,
    pub count: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Full singular-value list of one kernel, kept for spectrum panels.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularValueDump {
    pub series: String,
    pub n: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
    pub singular_values: Vec<SingularValueDump>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || sorted[lo] == sorted[lo + 1] {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac
    }
}

/// Median and quartiles per `(series, N, field)`, ordered by series label, then `N`, then field.
pub fn aggregate(records: &[TrialRecord]) -> Result<Vec<Aggregate>> {
    if records.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut cells: BTreeMap<(&str, usize, Field), Vec<f64>> = BTreeMap::new();
    for r in records {
        for f in r.populated() {
            cells
                .entry((r.series.as_str(), r.n, f))
                .or_default()
                .push(r.get(f).expect("populated"));
        }
    }
    Ok(cells
        .into_iter()
        .map(|((series, n, field), mut v)| {
            v.sort_by(|a, b| a.total_cmp(b));
            Aggregate {
                series: series.to_string(),
                n,
                field,
                count: v.len(),
                median: quantile(&v, 0.5),
                q25: quantile(&v, 0.25),
                q75: quantile(&v, 0.75),
            }
        })
        .collect())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seed from the master seed and a path of labels (FNV-1a, then a splitmix finalizer).
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&master.to_le_bytes());
    for p in parts {
        eat(p.as_bytes());
        eat(&[0xff]);
    }
    splitmix64(h)
}

/// Independent sub-stream of a trial seed.
fn stream(seed: u64, k: u64) -> u64 {
    splitmix64(seed ^ k.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

const DESIGN: u64 = 1;
const NOISE: u64 = 2;
const TEST: u64 = 3;

struct Task<'a> {
    series: String,
    spectrum: Option<SpectrumSpec>,
    law: FeatureLaw,
    n: usize,
    trial: usize,
    seed: u64,
    cfg: &'a ExperimentConfig,
}

fn tasks<'a>(cfg: &'a ExperimentConfig, pairs: &[(String, Option<SpectrumSpec>, FeatureLaw)]) -> Vec<Task<'a>> {
    let mut out = Vec::new();
    for &n in &cfg.n_grid {
        for (series, spectrum, law) in pairs {
            for trial in 0..cfg.trials {
                let seed = derive_seed(
                    cfg.master_seed,
                    &[cfg.experiment.name(), series, &n.to_string(), &trial.to_string()],
                );
                out.push(Task {
                    series: series.clone(),
                    spectrum: *spectrum,
                    law: *law,
                    n,
                    trial,
                    seed,
                    cfg,
                });
            }
        }
    }
    out
}

fn spectrum_law_pairs(cfg: &ExperimentConfig) -> Vec<(String, Option<SpectrumSpec>, FeatureLaw)> {
    let mut out = Vec::new();
    for s in &cfg.spectra {
        for law in &cfg.laws {
            out.push((format!("{s}/{law}"), Some(*s), *law));
        }
    }
    out
}

type TaskOutput = (Vec<TrialRecord>, Option<SingularValueDump>);

#[cfg(feature = "parallel")]
fn execute<F>(tasks: &[Task<'_>], f: F) -> Result<Vec<TaskOutput>>
where
    F: Fn(&Task<'_>) -> Result<TaskOutput> + Sync + Send,
{
    use rayon::prelude::*;
    tasks.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn execute<F>(tasks: &[Task<'_>], f: F) -> Result<Vec<TaskOutput>>
where
    F: Fn(&Task<'_>) -> Result<TaskOutput>,
{
    tasks.iter().map(f).collect()
}

fn finish(cfg: &ExperimentConfig, outputs: Vec<TaskOutput>) -> Result<ExperimentReport> {
    let mut records = Vec::new();
    let mut singular_values = Vec::new();
    for (r, sv) in outputs {
        records.extend(r);
        singular_values.extend(sv);
    }
    let aggregates = if records.is_empty() { Vec::new() } else { aggregate(&records)? };
    Ok(ExperimentReport {
        config: cfg.clone(),
        records,
        aggregates,
        singular_values,
    })
}

fn expect(cfg: &ExperimentConfig, e: Experiment) -> Result<()> {
    cfg.validate()?;
    if cfg.experiment != e {
        return Err(Error::invalid(format!("config is for `{}`, not `{e}`", cfg.experiment)));
    }
    Ok(())
}

/// Dispatches on `cfg.experiment`.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.experiment {
        Experiment::Condnum => run_condnum(cfg),
        Experiment::LearningCurve => run_learning_curve(cfg),
        Experiment::SminStudy => run_smin_study(cfg),
        Experiment::KernelInterp => run_kernel_interp(cfg),
        Experiment::Truncation => run_truncation(cfg),
    }
}

/// Condition number of `K` and its ratio to the predicted scale, per trial.
pub fn run_condnum(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    expect(cfg, Experiment::Condnum)?;
    let tasks = tasks(cfg, &spectrum_law_pairs(cfg));
    let out = execute(&tasks, |t| {
        let spec = t.spectrum.expect("spectrum series");
        let m = spec.length_for(t.n, t.cfg.eta);
        let s = Arc::new(spec.generate(m)?);
        let d = sample_design(t.law, m, t.n, stream(t.seed, DESIGN))?;
        let k = assemble_kernel(s.clone(), d)?;
        let summary = singular_extremes(&k)?;
        let theory = s.theoretical_condition_ratio(t.n.min(m), s.regime())?;
        let mut r = TrialRecord::new(&t.series, t.n, Some(m), t.trial, t.seed);
        r.set(Field::SMax, summary.s_max)
            .set(Field::SMin, summary.s_min)
            .set(Field::ConditionNumber, summary.condition_number)
            .set(Field::RatioToTheory, summary.condition_number / theory);
        let dump = (t.cfg.dump_singular_values && t.trial == 0).then(|| SingularValueDump {
            series: t.series.clone(),
            n: t.n,
            values: summary.singular_values.clone().unwrap_or_default(),
        });
        Ok((vec![r], dump))
    })?;
    finish(cfg, out)
}

/// Test error, bias and variance of the ridgeless interpolant with `θ*` fixed per `N`.
pub fn run_learning_curve(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    expect(cfg, Experiment::LearningCurve)?;
    let tasks = tasks(cfg, &spectrum_law_pairs(cfg));
    let out = execute(&tasks, |t| {
        let spec = t.spectrum.expect("spectrum series");
        let m = spec.length_for(t.n, t.cfg.eta);
        let s = Arc::new(spec.generate(m)?);
        let theta_seed = derive_seed(
            t.cfg.master_seed,
            &[t.cfg.experiment.name(), &t.series, &t.n.to_string(), "theta"],
        );
        let target = TargetModel::sample(m, t.cfg.sigma, theta_seed)?;
        let d = sample_design(t.law, m, t.n, stream(t.seed, DESIGN))?;
        let test = sample_design(t.law, m, t.cfg.n_test, stream(t.seed, TEST))?;
        let k = assemble_kernel(s, d)?;
        let risk = evaluate_risk(&k, &target, stream(t.seed, NOISE), &test)?;
        let mut r = TrialRecord::new(&t.series, t.n, Some(m), t.trial, t.seed);
        r.set(Field::Mse, risk.empirical_mse)
            .set(Field::Bias, risk.bias)
            .set(Field::Variance, risk.variance);
        Ok((vec![r], None))
    })?;
    finish(cfg, out)
}

/// Smallest singular value under each feature law, raw and normalized, with the
/// tail-row diagnostic.
pub fn run_smin_study(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    expect(cfg, Experiment::SminStudy)?;
    let tasks = tasks(cfg, &spectrum_law_pairs(cfg));
    let out = execute(&tasks, |t| {
        let spec = t.spectrum.expect("spectrum series");
        let m = spec.length_for(t.n, t.cfg.eta);
        let s = Arc::new(spec.generate(m)?);
        let d = Arc::new(sample_design(t.law, m, t.n, stream(t.seed, DESIGN))?);
        let k = assemble_kernel(s.clone(), d.clone())?;
        let summary = singular_extremes(&k)?;
        let nf = t.n as f64;
        let mut r = TrialRecord::new(&t.series, t.n, Some(m), t.trial, t.seed);
        r.set(Field::SMax, summary.s_max)
            .set(Field::SMin, summary.s_min)
            .set(Field::ConditionNumber, summary.condition_number)
            .set(Field::SminRatio, summary.s_min / (nf * s.eigenvalues()[t.n.min(m) - 1]))
            .set(Field::SminOverN, summary.s_min / nf);
        if m > t.n {
            r.set(Field::MinPSquared, row_norm_diagnostics(&d, t.n)?.min_p_squared);
        }
        let dump = (t.cfg.dump_singular_values && t.trial == 0).then(|| SingularValueDump {
            series: t.series.clone(),
            n: t.n,
            values: summary.singular_values.clone().unwrap_or_default(),
        });
        Ok((vec![r], dump))
    })?;
    finish(cfg, out)
}

/// Anchor points and unit-norm weights of the analytic-kernel target `Σ_j c_j k(·, z_j)`.
pub fn interp_target(cfg: &ExperimentConfig) -> Result<(Inputs, DVector<f64>)> {
    let seed = derive_seed(cfg.master_seed, &[Experiment::KernelInterp.name(), "anchors"]);
    let anchors = draw_points(cfg, ANCHORS, stream(seed, DESIGN))?;
    let mut r = rng(stream(seed, NOISE));
    let c = DVector::<f64>::from_fn(ANCHORS, |_, _| StandardNormal.sample(&mut r));
    let norm = c.norm();
    Ok((anchors, c / norm))
}

fn draw_points(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Inputs> {
    let x = sample_inputs(cfg.input_domain, n, seed)?;
    if cfg.kernel == AnalyticKernel::Ntk {
        x.project_to_sphere()
    } else {
        Ok(x)
    }
}

/// Interpolation with an analytic kernel against a fixed target built from kernel sections.
pub fn run_kernel_interp(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    expect(cfg, Experiment::KernelInterp)?;
    if cfg.include_anchors && cfg.n_grid[0] < ANCHORS {
        return Err(Error::invalid(format!(
            "include_anchors needs every N >= {ANCHORS}, got {}",
            cfg.n_grid[0]
        )));
    }
    let (anchors, weights) = interp_target(cfg)?;
    let target = |x: &Inputs| -> Result<DVector<f64>> { Ok(cfg.kernel.cross_gram(x, &anchors)? * &weights) };
    let series = format!("{}/{}", cfg.kernel.name(), cfg.input_domain);
    let tasks = tasks(cfg, &[(series, None, FeatureLaw::Gaussian)]);
    let out = execute(&tasks, |t| {
        let x = if t.cfg.include_anchors {
            if t.n == ANCHORS {
                anchors.clone()
            } else {
                anchors.concat(&draw_points(t.cfg, t.n - ANCHORS, stream(t.seed, DESIGN))?)?
            }
        } else {
            draw_points(t.cfg, t.n, stream(t.seed, DESIGN))?
        };
        let mut y = target(&x)?;
        if t.cfg.sigma > 0.0 {
            let mut r = rng(stream(t.seed, NOISE));
            for v in y.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut r);
                *v += t.cfg.sigma * e;
            }
        }
        let k = kernel_gram(t.cfg.kernel, &x)?;
        let summary = singular_extremes(&k)?;
        let f = fit_ridgeless(&k, &y)?;
        let test = draw_points(t.cfg, t.cfg.n_test, stream(t.seed, TEST))?;
        let pred = f.predict_inputs(&test)?;
        let truth = target(&test)?;
        let mse = (pred - truth).norm_squared() / t.cfg.n_test as f64;
        let mut r = TrialRecord::new(&t.series, t.n, None, t.trial, t.seed);
        r.set(Field::SMax, summary.s_max)
            .set(Field::SMin, summary.s_min)
            .set(Field::ConditionNumber, summary.condition_number)
            .set(Field::SminOverN, summary.s_min / t.n as f64)
            .set(Field::Mse, mse);
        Ok((vec![r], None))
    })?;
    finish(cfg, out)
}

/// Variance of truncated kernels against the full-length variance.
pub fn run_truncation(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    expect(cfg, Experiment::Truncation)?;
    let tasks = tasks(cfg, &spectrum_law_pairs(cfg));
    let out = execute(&tasks, |t| {
        let spec = t.spectrum.expect("spectrum series");
        let m_full = spec.length_for(t.n, t.cfg.m_full_ratio);
        let m_list: Vec<usize> = t
            .cfg
            .m_ratios
            .iter()
            .map(|&r| spec.length_for(t.n, r))
            .collect();
        let s = spec.generate(m_full)?;
        let d = sample_design(t.law, m_full, t.n, stream(t.seed, DESIGN))?;
        let rows = truncation_study(&s, &d, t.cfg.sigma, &m_list)?;
        let records = rows
            .iter()
            .zip(&t.cfg.m_ratios)
            .map(|(row, ratio)| {
                let mut r = TrialRecord::new(format!("{}/m={ratio}N", t.series), t.n, Some(row.m), t.trial, t.seed);
                r.set(Field::VTruncated, row.v_truncated)
                    .set(Field::VFull, row.v_full)
                    .set(Field::Gap, row.gap)
                    .set(Field::Bound, row.bound)
                    .set(Field::Slack, row.slack());
                r
            })
            .collect();
        Ok((records, None))
    })?;
    finish(cfg, out)
}
