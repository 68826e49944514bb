//! Kernel matrices, their extreme singular values, the minimum-norm solve and the tail-row
//! dependence diagnostic.
//!
//! Mercer kernels `K = ΨᵀΛΨ` are never inverted or eigendecomposed in their explicit form.
//! Everything goes through the factor `G = Λ^{1/2} Ψ` (see [`graded`]), since forming `K`
//! squares the condition number and loses `s_min` entirely under exponential decay.
//! Explicit and analytic Gram matrices use a symmetric eigendecomposition.

pub mod graded;

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::features::{AnalyticKernel, DesignMatrix, Inputs};
use crate::spectra::Spectrum;

pub use graded::GradedFactor;

/// Singular values below this fraction of `s_max` are reported as zero (eigendecomposition route).
pub const ZERO_SINGULAR_REL: f64 = 1e-13;
/// Eigenvalues below this fraction of `s_max` are dropped by the pseudo-inverse.
pub const PINV_CUTOFF_REL: f64 = 1e-12;
/// A label vector whose component outside the numerical range exceeds this fraction of
/// `‖y‖` is flagged as inconsistent.
pub const INCONSISTENCY_REL: f64 = 1e-8;
const SYMMETRY_REL: f64 = 1e-12;
const PSD_REL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub enum Provenance {
    Mercer {
        spectrum: Arc<Spectrum>,
        design: Arc<DesignMatrix>,
    },
    Analytic {
        kernel: AnalyticKernel,
        points: Arc<Inputs>,
    },
    Explicit,
}

/// Symmetric PSD `N × N` kernel matrix.
///
/// For Mercer provenance the explicit entries are only formed on request.
#[derive(Debug)]
pub struct KernelMatrix {
    n: usize,
    provenance: Provenance,
    entries: OnceLock<DMatrix<f64>>,
    factor: OnceLock<GradedFactor>,
}

impl KernelMatrix {
    /// Wraps explicit entries after checking finiteness and symmetry.
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self> {
        let (r, c) = entries.shape();
        if r != c || r == 0 {
            return Err(Error::shape(format!("kernel matrix must be square and non-empty, got {r} x {c}")));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite kernel entry"));
        }
        let scale = entries.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for j in 0..r {
            for i in 0..j {
                if (entries[(i, j)] - entries[(j, i)]).abs() > SYMMETRY_REL * scale {
                    return Err(Error::InvariantViolation(format!(
                        "kernel matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(KernelMatrix {
            n: r,
            provenance: Provenance::Explicit,
            entries: OnceLock::from(entries),
            factor: OnceLock::new(),
        })
    }

    pub(crate) fn analytic(entries: DMatrix<f64>, kernel: AnalyticKernel, points: Arc<Inputs>) -> Self {
        KernelMatrix {
            n: entries.nrows(),
            provenance: Provenance::Analytic { kernel, points },
            entries: OnceLock::from(entries),
            factor: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Explicit entries; for Mercer kernels computed as `GᵀG` on first access.
    pub fn entries(&self) -> &DMatrix<f64> {
        self.entries.get_or_init(|| match &self.provenance {
            Provenance::Mercer { spectrum, design } => {
                let psi = design.entries();
                let mut lpsi = psi.clone();
                for (k, l) in spectrum.eigenvalues().iter().enumerate() {
                    lpsi.row_mut(k).iter_mut().for_each(|v| *v *= l);
                }
                let mut k = psi.tr_mul(&lpsi);
                for j in 0..self.n {
                    for i in 0..j {
                        k[(j, i)] = k[(i, j)];
                    }
                }
                k
            }
            _ => unreachable!("non-Mercer kernels are built with entries"),
        })
    }

    /// The graded factorization of `Λ^{1/2}Ψ`, for Mercer kernels.
    pub fn factor(&self) -> Option<&GradedFactor> {
        match &self.provenance {
            Provenance::Mercer { spectrum, design } => Some(self.factor.get_or_init(|| {
                let w: Vec<f64> = spectrum.eigenvalues().iter().map(|l| l.sqrt()).collect();
                GradedFactor::new(&w, design.entries()).expect("inputs validated at assembly")
            })),
            _ => None,
        }
    }
}

/// `K = ΨᵀΛΨ` for a spectrum of length `M` and an `M × N` design.
pub fn assemble_kernel(
    spectrum: impl Into<Arc<Spectrum>>,
    design: impl Into<Arc<DesignMatrix>>,
) -> Result<KernelMatrix> {
    let spectrum = spectrum.into();
    let design = design.into();
    if spectrum.len() != design.rows() {
        return Err(Error::shape(format!(
            "spectrum has {} eigenvalues but the design has {} feature rows",
            spectrum.len(),
            design.rows()
        )));
    }
    Ok(KernelMatrix {
        n: design.cols(),
        provenance: Provenance::Mercer { spectrum, design },
        entries: OnceLock::new(),
        factor: OnceLock::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSummary {
    pub s_max: f64,
    /// Zero when the matrix is numerically singular.
    pub s_min: f64,
    /// `s_max / s_min`, `+∞` when `s_min` is zero.
    pub condition_number: f64,
    pub singular_values: Option<Vec<f64>>,
}

impl SpectrumSummary {
    fn from_sorted(values: Vec<f64>, s_min: f64) -> Self {
        let s_max = values.first().copied().unwrap_or(0.0);
        let condition_number = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
        SpectrumSummary {
            s_max,
            s_min,
            condition_number,
            singular_values: Some(values),
        }
    }

    /// CSV with header `index,singular_value` (1-based index, decreasing values).
    pub fn singular_values_csv(&self) -> Option<String> {
        self.singular_values.as_ref().map(|sv| {
            let mut out = String::from("index,singular_value\n");
            for (i, s) in sv.iter().enumerate() {
                out.push_str(&format!("{},{}\n", i + 1, crate::cli_io::format_float(*s)));
            }
            out
        })
    }
}

/// Largest and smallest singular values of `K` plus the full decreasing list.
pub fn singular_extremes(k: &KernelMatrix) -> Result<SpectrumSummary> {
    if let Some(f) = k.factor() {
        let values: Vec<f64> = f.singular_values().into_iter().map(|s| s * s).collect();
        let s_min = if f.is_full_rank() { values[k.n - 1] } else { 0.0 };
        return Ok(SpectrumSummary::from_sorted(values, s_min));
    }
    let eig = checked_eigen(k.entries())?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let s_max = values[0];
    let s_min = match values.last() {
        Some(&s) if s >= ZERO_SINGULAR_REL * s_max && s > 0.0 => s,
        _ => 0.0,
    };
    Ok(SpectrumSummary::from_sorted(values, s_min))
}

fn checked_eigen(k: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite kernel entry"));
    }
    let eig = SymmetricEigen::try_new(k.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numeric("symmetric eigendecomposition did not converge"))?;
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let lowest = eig.eigenvalues.min();
    if lowest < -PSD_REL * scale {
        return Err(Error::InvariantViolation(format!(
            "kernel matrix is not PSD: eigenvalue {lowest:e} against scale {scale:e}"
        )));
    }
    Ok(eig)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowNormDiagnostics {
    /// `P_i = sqrt(Σ_{k>N} ψ_{ki}² / (M - N))`, one per sample.
    pub p_values: Vec<f64>,
    pub min_p_squared: f64,
}

/// Tail-row norms of the design beyond the first `n` feature rows.
pub fn row_norm_diagnostics(design: &DesignMatrix, n: usize) -> Result<RowNormDiagnostics> {
    let m = design.rows();
    if m <= n {
        return Err(Error::InsufficientTail { m, n });
    }
    let tail = design.entries().rows(n, m - n);
    let p_values: Vec<f64> = tail
        .column_iter()
        .map(|c| (c.norm_squared() / (m - n) as f64).sqrt())
        .collect();
    let min_p_squared = p_values.iter().map(|p| p * p).fold(f64::INFINITY, f64::min);
    Ok(RowNormDiagnostics {
        p_values,
        min_p_squared,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// `K⁺ y`
    pub alpha: DVector<f64>,
    /// `y` has a component outside the numerical range of `K`.
    pub inconsistent: bool,
    /// Numerical rank used by the solve.
    pub rank: usize,
}

/// Minimum-norm solution `α = K⁺ y`.
///
/// Full-rank Mercer kernels are solved exactly through the graded factor. Everything else
/// uses an eigendecomposition pseudo-inverse with cutoff `1e-12 · s_max`.
pub fn min_norm_solve(k: &KernelMatrix, y: &DVector<f64>) -> Result<SolveResult> {
    if y.len() != k.n {
        return Err(Error::shape(format!("{} labels for an {} x {} kernel", y.len(), k.n, k.n)));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite label"));
    }
    if let Some(f) = k.factor() {
        if f.is_full_rank() {
            return Ok(SolveResult {
                alpha: f.solve_kernel(y.as_slice())?,
                inconsistent: false,
                rank: k.n,
            });
        }
    }
    pinv_solve(k.entries(), y)
}

fn pinv_solve(k: &DMatrix<f64>, y: &DVector<f64>) -> Result<SolveResult> {
    let eig = checked_eigen(k)?;
    let s_max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cutoff = PINV_CUTOFF_REL * s_max;
    let n = y.len();
    let mut alpha = DVector::zeros(n);
    let mut range = DVector::zeros(n);
    let mut rank = 0;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cutoff && lam > 0.0 {
            let v = eig.eigenvectors.column(i);
            let coef = v.dot(y);
            alpha.axpy(coef / lam, &v, 1.0);
            range.axpy(coef, &v, 1.0);
            rank += 1;
        }
    }
    let residual = (y - &range).norm();
    Ok(SolveResult {
        alpha,
        inconsistent: residual > INCONSISTENCY_REL * y.norm(),
        rank,
    })
}
