//! Label synthesis, the minimum-norm interpolant, test error and its bias/variance split,
//! and the finite-rank truncation comparison.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::cli_io::format_float;
use crate::error::{Error, Result};
use crate::features::{rng, AnalyticKernel, DesignMatrix, Inputs};
use crate::linalg::{assemble_kernel, min_norm_solve, KernelMatrix, Provenance, PINV_CUTOFF_REL};
use crate::spectra::Spectrum;

/// Ground truth `f*(x) = θ*ᵀ Λ^{1/2} ψ(x)` plus label noise level `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub theta_star: DVector<f64>,
    pub sigma: f64,
}

impl TargetModel {
    pub fn new(theta_star: DVector<f64>, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        if theta_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite coefficient in theta*"));
        }
        Ok(TargetModel { theta_star, sigma })
    }

    /// `θ* ~ N(0, I_m)`.
    pub fn sample(m: usize, sigma: f64, seed: u64) -> Result<Self> {
        let mut r = rng(seed);
        let theta = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut r));
        TargetModel::new(theta, sigma)
    }

    /// `Λ^{1/2} θ*`, the target's coefficients against raw features.
    pub fn feature_weights(&self, s: &Spectrum) -> Result<DVector<f64>> {
        if s.len() != self.theta_star.len() {
            return Err(Error::shape(format!(
                "theta* has length {} but the spectrum has {} eigenvalues",
                self.theta_star.len(),
                s.len()
            )));
        }
        Ok(DVector::from_fn(s.len(), |k, _| s.eigenvalues()[k].sqrt() * self.theta_star[k]))
    }

    /// Noise-free targets `f*(x_i)` for every column of `d`.
    pub fn evaluate(&self, s: &Spectrum, d: &DesignMatrix) -> Result<DVector<f64>> {
        let w = self.feature_weights(s)?;
        if d.rows() != w.len() {
            return Err(Error::shape(format!(
                "design has {} feature rows, target has {}",
                d.rows(),
                w.len()
            )));
        }
        Ok(d.entries().tr_mul(&w))
    }
}

/// `y_i = θ*ᵀ Λ^{1/2} Ψ_i + ε_i` with `ε_i ~ N(0, σ²)`.
pub fn synthesize_labels(d: &DesignMatrix, s: &Spectrum, t: &TargetModel, seed: u64) -> Result<DVector<f64>> {
    let mut y = t.evaluate(s, d)?;
    if t.sigma > 0.0 {
        let mut r = rng(seed);
        for v in y.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut r);
            *v += t.sigma * e;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone)]
enum Basis {
    /// `f̂(x) = ψ(x)ᵀ c` with `c = Λ Ψ α`.
    Features {
        spectrum: Arc<Spectrum>,
        coefficients: DVector<f64>,
    },
    Kernel {
        kernel: AnalyticKernel,
        points: Arc<Inputs>,
    },
    /// Only the coefficient vector is known.
    Opaque,
}

/// The minimum-norm interpolant `f̂ = Σ α_i k(·, x_i)`.
#[derive(Debug, Clone)]
pub struct Interpolant {
    alpha: DVector<f64>,
    inconsistent: bool,
    basis: Basis,
}

impl Interpolant {
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// True when the labels had a component outside the numerical range of `K`.
    pub fn inconsistent(&self) -> bool {
        self.inconsistent
    }

    /// Feature-space coefficients `c = Λ Ψ α` (Mercer kernels only).
    pub fn feature_coefficients(&self) -> Option<&DVector<f64>> {
        match &self.basis {
            Basis::Features { coefficients, .. } => Some(coefficients),
            _ => None,
        }
    }

    pub fn spectrum(&self) -> Option<&Spectrum> {
        match &self.basis {
            Basis::Features { spectrum, .. } => Some(spectrum),
            _ => None,
        }
    }

    /// Predictions at the columns of a test design, `K_xᵀ α = ψ(x)ᵀ c`.
    pub fn predict(&self, test: &DesignMatrix) -> Result<DVector<f64>> {
        match &self.basis {
            Basis::Features { coefficients, .. } => {
                if test.rows() != coefficients.len() {
                    return Err(Error::shape(format!(
                        "test design has {} feature rows, interpolant has {}",
                        test.rows(),
                        coefficients.len()
                    )));
                }
                Ok(test.entries().tr_mul(coefficients))
            }
            _ => Err(Error::invalid("interpolant was not fit on a Mercer kernel")),
        }
    }

    /// Predictions at raw inputs, `[k(x, x_i)]ᵀ α` (analytic kernels only).
    pub fn predict_inputs(&self, x: &Inputs) -> Result<DVector<f64>> {
        match &self.basis {
            Basis::Kernel { kernel, points } => Ok(kernel.cross_gram(x, points)? * &self.alpha),
            _ => Err(Error::invalid("interpolant was not fit on an analytic kernel")),
        }
    }
}

/// Fits `α = K⁺ y`.
///
/// For a full-rank Mercer kernel the feature coefficients come straight from the graded
/// factorization, which keeps predictions accurate when `K` itself is far too ill-conditioned
/// to be inverted explicitly.
pub fn fit_ridgeless(k: &KernelMatrix, y: &DVector<f64>) -> Result<Interpolant> {
    let solved = min_norm_solve(k, y)?;
    let basis = match k.provenance() {
        Provenance::Mercer { spectrum, design } => {
            let coefficients = match k.factor() {
                Some(f) if f.is_full_rank() => f.feature_coefficients(y.as_slice())?,
                _ => {
                    let mut c = design.entries() * &solved.alpha;
                    for (v, l) in c.iter_mut().zip(spectrum.eigenvalues()) {
                        *v *= l;
                    }
                    c
                }
            };
            Basis::Features {
                spectrum: spectrum.clone(),
                coefficients,
            }
        }
        Provenance::Analytic { kernel, points } => Basis::Kernel {
            kernel: *kernel,
            points: points.clone(),
        },
        Provenance::Explicit => Basis::Opaque,
    };
    Ok(Interpolant {
        alpha: solved.alpha,
        inconsistent: solved.inconsistent,
        basis,
    })
}

/// Free-function form of [`Interpolant::predict`].
pub fn predict(f: &Interpolant, test: &DesignMatrix) -> Result<DVector<f64>> {
    f.predict(test)
}

fn mean_squared_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.len();
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64
}

/// Mean squared error between `f̂` and the noise-free `f*` over the test columns.
pub fn empirical_test_error(f: &Interpolant, t: &TargetModel, test: &DesignMatrix) -> Result<f64> {
    if test.cols() == 0 {
        return Err(Error::invalid("need at least one test point"));
    }
    let s = f
        .spectrum()
        .ok_or_else(|| Error::invalid("test error against θ* needs a Mercer interpolant"))?;
    let truth = t.evaluate(s, test)?;
    Ok(mean_squared_diff(&f.predict(test)?, &truth))
}

/// The closed-form variance together with whether it had to fall back to a pseudo-inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub value: f64,
    /// `K` was numerically singular and `K⁺` replaced `K⁻¹`.
    pub rank_deficient: bool,
}

/// `V = σ² tr[(ΨᵀΛ²Ψ)(ΨᵀΛΨ)⁻²]`, evaluated as `σ² ‖Λ Ψ K⁻¹‖_F²`.
pub fn variance_closed_form(k: &KernelMatrix, sigma: f64) -> Result<VarianceEstimate> {
    let (spectrum, design) = match k.provenance() {
        Provenance::Mercer { spectrum, design } => (spectrum, design),
        _ => return Err(Error::invalid("closed-form variance needs a Mercer kernel")),
    };
    let s2 = sigma * sigma;
    if let Some(f) = k.factor().filter(|f| f.is_full_rank()) {
        return Ok(VarianceEstimate {
            value: s2 * f.variance_trace()?,
            rank_deficient: false,
        });
    }
    let kp = pseudo_inverse(k.entries())?;
    let mut c = design.entries() * kp;
    for (mut row, l) in c.row_iter_mut().zip(spectrum.eigenvalues()) {
        row *= *l;
    }
    Ok(VarianceEstimate {
        value: s2 * c.norm_squared(),
        rank_deficient: true,
    })
}

fn pseudo_inverse(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = k.clone().symmetric_eigen();
    let s_max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let n = k.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > PINV_CUTOFF_REL * s_max && lam > 0.0 {
            let v = eig.eigenvectors.column(i);
            out.ger(1.0 / lam, &v, &v, 1.0);
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("pseudo-inverse produced non-finite entries"));
    }
    Ok(out)
}

/// `B = E_x[(f*(x) - f̂₀(x))²]` where `f̂₀` interpolates the noise-free targets.
pub fn bias_monte_carlo(k: &KernelMatrix, t: &TargetModel, test: &DesignMatrix) -> Result<f64> {
    let (spectrum, design) = match k.provenance() {
        Provenance::Mercer { spectrum, design } => (spectrum, design),
        _ => return Err(Error::invalid("bias against θ* needs a Mercer kernel")),
    };
    let clean = t.evaluate(spectrum, design)?;
    let f0 = fit_ridgeless(k, &clean)?;
    empirical_test_error(&f0, t, test)
}

/// Test error together with its bias/variance split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskReport {
    pub empirical_mse: f64,
    pub bias: f64,
    pub variance: f64,
    pub n_test: usize,
}

impl RiskReport {
    pub const CSV_HEADER: &'static str = "experiment,seed,N,M,mse,bias,variance";

    pub fn csv_row(&self, experiment: &str, seed: u64, n: usize, m: usize) -> String {
        format!(
            "{experiment},{seed},{n},{m},{},{},{}",
            format_float(self.empirical_mse),
            format_float(self.bias),
            format_float(self.variance)
        )
    }
}

/// Draws labels with `noise_seed`, fits, and evaluates risk, bias and variance on `test`.
pub fn evaluate_risk(
    k: &KernelMatrix,
    t: &TargetModel,
    noise_seed: u64,
    test: &DesignMatrix,
) -> Result<RiskReport> {
    let (spectrum, design) = match k.provenance() {
        Provenance::Mercer { spectrum, design } => (spectrum, design),
        _ => return Err(Error::invalid("risk against θ* needs a Mercer kernel")),
    };
    let y = synthesize_labels(design, spectrum, t, noise_seed)?;
    let f = fit_ridgeless(k, &y)?;
    Ok(RiskReport {
        empirical_mse: empirical_test_error(&f, t, test)?,
        bias: bias_monte_carlo(k, t, test)?,
        variance: variance_closed_form(k, t.sigma)?.value,
        n_test: test.cols(),
    })
}

/// One row of the finite-rank comparison at truncation level `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationRecord {
    pub m: usize,
    /// `V(M)`, the variance of the rank-`M` truncated kernel.
    pub v_truncated: f64,
    /// `V`, the variance at full length.
    pub v_full: f64,
    /// `|V - V(M)|`
    pub gap: f64,
    /// `3 V(M) + σ²/N`
    pub bound: f64,
}

impl TruncationRecord {
    /// `bound - gap`; non-negative when the inequality holds.
    pub fn slack(&self) -> f64 {
        self.bound - self.gap
    }

    pub fn holds(&self) -> bool {
        self.gap <= self.bound
    }
}

/// Compares `V(M)` against the full-length variance for every `M` in `m_list`.
pub fn truncation_study(
    s_full: &Spectrum,
    d_full: &DesignMatrix,
    sigma: f64,
    m_list: &[usize],
) -> Result<Vec<TruncationRecord>> {
    let n = d_full.cols();
    let m_full = d_full.rows();
    if s_full.len() != m_full {
        return Err(Error::shape(format!(
            "spectrum has {} eigenvalues but the design has {} feature rows",
            s_full.len(),
            m_full
        )));
    }
    for &m in m_list {
        if m <= n || m > m_full {
            return Err(Error::invalid(format!(
                "truncation level M = {m} must satisfy N = {n} < M <= {m_full}"
            )));
        }
    }
    let v_full = variance_closed_form(&assemble_kernel(s_full.clone(), d_full.clone())?, sigma)?.value;
    m_list
        .iter()
        .map(|&m| {
            let v_truncated = if m == m_full {
                v_full
            } else {
                let k = assemble_kernel(s_full.truncate(m)?, d_full.truncate_rows(m)?)?;
                variance_closed_form(&k, sigma)?.value
            };
            Ok(TruncationRecord {
                m,
                v_truncated,
                v_full,
                gap: (v_full - v_truncated).abs(),
                bound: 3.0 * v_truncated + sigma * sigma / n as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{sample_design, FeatureLaw};
    use crate::spectra::DecayFamily;
    use nalgebra::{dmatrix, dvector};

    fn design(m: DMatrix<f64>) -> DesignMatrix {
        DesignMatrix::from_entries(m, FeatureLaw::Gaussian).unwrap()
    }

    #[test]
    fn labels_trivial_cases() {
        let s = Spectrum::custom(vec![4.0]).unwrap();
        let d = design(dmatrix![1.0, 1.0]);
        let t = TargetModel::new(dvector![3.0], 0.0).unwrap();
        assert_eq!(synthesize_labels(&d, &s, &t, 1).unwrap(), dvector![6.0, 6.0]);

        let s5 = Spectrum::generate(DecayFamily::Polynomial, 1.0, 5).unwrap();
        let d5 = sample_design(FeatureLaw::Gaussian, 5, 4, 2).unwrap();
        let zero = TargetModel::new(DVector::zeros(5), 0.0).unwrap();
        assert_eq!(synthesize_labels(&d5, &s5, &zero, 9).unwrap(), DVector::zeros(4));

        let noisy = TargetModel::sample(5, 1.0, 3).unwrap();
        assert_eq!(
            synthesize_labels(&d5, &s5, &noisy, 11).unwrap(),
            synthesize_labels(&d5, &s5, &noisy, 11).unwrap()
        );
        let short = TargetModel::sample(4, 1.0, 3).unwrap();
        assert!(matches!(synthesize_labels(&d5, &s5, &short, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn single_point_interpolation() {
        // K = [[2]]: λ = 2, ψ = 1
        let s = Spectrum::custom(vec![2.0]).unwrap();
        let d = design(dmatrix![1.0]);
        let k = assemble_kernel(s, d.clone()).unwrap();
        let f = fit_ridgeless(&k, &dvector![4.0]).unwrap();
        assert!((f.predict(&d).unwrap()[0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn zero_labels_give_zero_interpolant() {
        let s = Spectrum::generate(DecayFamily::Polynomial, 1.0, 30).unwrap();
        let d = sample_design(FeatureLaw::Gaussian, 30, 6, 4).unwrap();
        let k = assemble_kernel(s, d).unwrap();
        let f = fit_ridgeless(&k, &DVector::zeros(6)).unwrap();
        assert_eq!(f.alpha(), &DVector::zeros(6));
        let test = sample_design(FeatureLaw::Gaussian, 30, 20, 5).unwrap();
        assert_eq!(f.predict(&test).unwrap(), DVector::zeros(20));
    }

    #[test]
    fn rank_one_prediction_is_linear() {
        let s = Spectrum::custom(vec![4.0]).unwrap();
        let d = design(dmatrix![1.0, 2.0]);
        let k = assemble_kernel(s, d).unwrap();
        let f = fit_ridgeless(&k, &dvector![1.0, 2.0]).unwrap();
        let p = f.predict(&design(dmatrix![1.0, 3.0, -2.0])).unwrap();
        assert!((p[1] - 3.0 * p[0]).abs() < 1e-13 && (p[2] + 2.0 * p[0]).abs() < 1e-13);
        assert!(!f.inconsistent());
    }

    #[test]
    fn training_points_are_interpolated() {
        for (family, a) in [(DecayFamily::Polynomial, 1.0), (DecayFamily::Exponential, 1.0)] {
            let n = 40;
            let s = Spectrum::generate(family, a, 400).unwrap();
            let d = sample_design(FeatureLaw::Gaussian, 400, n, 6).unwrap();
            let t = TargetModel::sample(400, 1.0, 7).unwrap();
            let y = synthesize_labels(&d, &s, &t, 8).unwrap();
            let k = assemble_kernel(s, d.clone()).unwrap();
            let f = fit_ridgeless(&k, &y).unwrap();
            let err = (f.predict(&d).unwrap() - &y).amax();
            assert!(err <= 1e-6 * (1.0 + y.amax()), "{family}: {err}");
        }
    }

    #[test]
    fn exact_recovery_with_square_design() {
        let m = 24;
        let s = Spectrum::generate(DecayFamily::Polynomial, 1.0, m).unwrap();
        let d = sample_design(FeatureLaw::Gaussian, m, m, 10).unwrap();
        let t = TargetModel::sample(m, 0.0, 11).unwrap();
        let y = synthesize_labels(&d, &s, &t, 0).unwrap();
        let k = assemble_kernel(s.clone(), d).unwrap();
        let f = fit_ridgeless(&k, &y).unwrap();
        let test = sample_design(FeatureLaw::Gaussian, m, 200, 12).unwrap();
        let truth = t.evaluate(&s, &test).unwrap();
        let pred = f.predict(&test).unwrap();
        assert!((pred - &truth).norm() <= 1e-6 * truth.norm());
        assert!(bias_monte_carlo(&k, &t, &test).unwrap() <= 1e-10);
    }

    #[test]
    fn test_error_trivial_cases() {
        let m = 12;
        let s = Spectrum::generate(DecayFamily::Polynomial, 1.0, m).unwrap();
        let d = sample_design(FeatureLaw::Gaussian, m, m, 1).unwrap();
        let t = TargetModel::sample(m, 0.0, 2).unwrap();
        let y = synthesize_labels(&d, &s, &t, 0).unwrap();
        let k = assemble_kernel(s.clone(), d).unwrap();
        let f = fit_ridgeless(&k, &y).unwrap();
        let test = sample_design(FeatureLaw::Gaussian, m, 50, 3).unwrap();
        assert!(empirical_test_error(&f, &t, &test).unwrap() < 1e-20);

        // a constant offset c: add a feature row that is identically 1 with weight c
        let ones = DMatrix::from_element(1, 50, 1.0);
        let offset_test = design(ones.clone());
        let offset_s = Spectrum::custom(vec![1.0]).unwrap();
        let offset_train = design(DMatrix::from_element(1, 1, 1.0));
        let kf = assemble_kernel(offset_s, offset_train).unwrap();
        let fc = fit_ridgeless(&kf, &dvector![0.5]).unwrap();
        let zero = TargetModel::new(dvector![0.0], 0.0).unwrap();
        assert!((empirical_test_error(&fc, &zero, &offset_test).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn variance_trivial_cases() {
        let k = assemble_kernel(Spectrum::custom(vec![0.3]).unwrap(), design(dmatrix![1.0])).unwrap();
        let v = variance_closed_form(&k, 2.0).unwrap();
        assert!((v.value - 4.0).abs() < 1e-14 && !v.rank_deficient);

        // Λ = I with orthonormal columns: V = σ² N
        let q = sample_design(FeatureLaw::Gaussian, 10, 4, 3).unwrap().entries().clone().qr().q();
        let k = assemble_kernel(Spectrum::custom(vec![1.0; 10]).unwrap(), design(q)).unwrap();
        let v = variance_closed_form(&k, 1.5).unwrap();
        assert!((v.value - 1.5 * 1.5 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn variance_matches_explicit_trace() {
        let (m, n) = (60, 12);
        let s = Spectrum::generate(DecayFamily::Polynomial, 1.0, m).unwrap();
        let d = sample_design(FeatureLaw::Gaussian, m, n, 4).unwrap();
        // oracle: tr[(ΨᵀΛ²Ψ)(ΨᵀΛΨ)⁻²] with dense matrices
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(s.eigenvalues()));
        let psi = d.entries();
        let k = psi.transpose() * &lam * psi;
        let kinv = k.clone().try_inverse().unwrap();
        let trace = (psi.transpose() * &lam * &lam * psi * &kinv * &kinv).trace();
        let km = assemble_kernel(s, d).unwrap();
        let v = variance_closed_form(&km, 0.7).unwrap().value;
        assert!((v - 0.49 * trace).abs() <= 1e-9 * trace);
    }

    #[test]
    fn rank_deficient_variance_is_flagged() {
        let s = Spectrum::custom(vec![1.0, 0.5]).unwrap();
        let d = design(dmatrix![1.0, 1.0, 0.0; 0.0, 0.0, 1.0]);
        let k = assemble_kernel(s, d).unwrap();
        let v = variance_closed_form(&k, 1.0).unwrap();
        assert!(v.rank_deficient);
        assert!(v.value.is_finite() && v.value > 0.0);
    }

    #[test]
    fn zero_target_has_zero_bias() {
        let s = Spectrum::generate(DecayFamily::Exponential, 1.0, 80).unwrap();
        let d = sample_design(FeatureLaw::Gaussian, 80, 10, 1).unwrap();
        let k = assemble_kernel(s, d).unwrap();
        let t = TargetModel::new(DVector::zeros(80), 1.0).unwrap();
        let test = sample_design(FeatureLaw::Gaussian, 80, 100, 2).unwrap();
        assert_eq!(bias_monte_carlo(&k, &t, &test).unwrap(), 0.0);
    }

    #[test]
    fn truncation_at_full_length_has_zero_gap() {
        let s = Spectrum::generate(DecayFamily::Polynomial, 1.0, 200).unwrap();
        let d = sample_design(FeatureLaw::Gaussian, 200, 10, 3).unwrap();
        let rec = truncation_study(&s, &d, 1.0, &[200]).unwrap();
        assert_eq!(rec[0].gap, 0.0);
        assert_eq!(rec[0].slack(), rec[0].bound);
        assert!(matches!(truncation_study(&s, &d, 1.0, &[10]), Err(Error::InvalidParameter(_))));
        assert!(matches!(truncation_study(&s, &d, 1.0, &[201]), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn csv_row_layout() {
        let r = RiskReport {
            empirical_mse: 0.5,
            bias: 0.25,
            variance: 0.125,
            n_test: 10,
        };
        assert_eq!(r.csv_row("learning_curve", 7, 64, 640), "learning_curve,7,64,640,0.5,0.25,0.125");
        assert_eq!(RiskReport::CSV_HEADER.split(',').count(), 7);
    }
}
