//! Eigenvalue spectra of Mercer kernels.
//!
//! A [`Spectrum`] is the diagonal of `Λ`: strictly positive, non-increasing,
//! and finite-rank (`M` entries). The generated families are
//!
//! * polynomial: `λ_k = k^{-1-a}`
//! * exponential: `λ_k = e^{-a k}`
//! * linear poly-log: `λ_k = (k+1)^{-1} ln^{-a}(k+1)` (index shifted so `ln > 0` at `k = 1`)
//!
//! Indices `k` are 1-based in formulas and 0-based in storage.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Eigenvalues below this are not representable for our purposes.
pub const EIGENVALUE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecayFamily {
    Polynomial,
    Exponential,
    LinearPolylog,
}

impl DecayFamily {
    pub fn name(self) -> &'static str {
        match self {
            DecayFamily::Polynomial => "poly",
            DecayFamily::Exponential => "exp",
            DecayFamily::LinearPolylog => "polylog",
        }
    }
}

impl fmt::Display for DecayFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecayFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "poly" | "polynomial" => Ok(DecayFamily::Polynomial),
            "exp" | "exponential" => Ok(DecayFamily::Exponential),
            "polylog" | "linear_polylog" => Ok(DecayFamily::LinearPolylog),
            other => Err(Error::invalid(format!("unknown decay family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumKind {
    Polynomial(f64),
    Exponential(f64),
    LinearPolylog(f64),
    Custom,
}

impl SpectrumKind {
    pub fn decay_parameter(&self) -> Option<f64> {
        match *self {
            SpectrumKind::Polynomial(a)
            | SpectrumKind::Exponential(a)
            | SpectrumKind::LinearPolylog(a) => Some(a),
            SpectrumKind::Custom => None,
        }
    }
}

/// Which closed-form condition-number scaling applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `s_max / s_min ≍ λ_1 / λ_N`
    Polynomial,
    /// `s_max / s_min ≍ N λ_1 / λ_N`
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    kind: SpectrumKind,
}

impl Spectrum {
    /// Generates the first `m` eigenvalues of a decay family.
    pub fn generate(family: DecayFamily, a: f64, m: usize) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::invalid(format!("decay parameter must be positive, got {a}")));
        }
        if m == 0 {
            return Err(Error::invalid("spectrum length M must be at least 1"));
        }
        let (eigenvalues, kind) = match family {
            DecayFamily::Polynomial => (
                (1..=m).map(|k| (k as f64).powf(-1.0 - a)).collect(),
                SpectrumKind::Polynomial(a),
            ),
            DecayFamily::Exponential => {
                let max_len = Self::max_exponential_len(a);
                if m > max_len {
                    return Err(Error::Truncation {
                        index: max_len + 1,
                        max_len,
                        floor: EIGENVALUE_FLOOR,
                    });
                }
                (
                    (1..=m).map(|k| (-a * k as f64).exp()).collect(),
                    SpectrumKind::Exponential(a),
                )
            }
            DecayFamily::LinearPolylog => (
                (1..=m)
                    .map(|k| {
                        let t = (k + 1) as f64;
                        1.0 / (t * t.ln().powf(a))
                    })
                    .collect(),
                SpectrumKind::LinearPolylog(a),
            ),
        };
        let spectrum = Spectrum { eigenvalues, kind };
        spectrum.check()?;
        Ok(spectrum)
    }

    /// Wraps a user-supplied eigenvalue list, validating positivity and ordering.
    pub fn custom(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("spectrum length M must be at least 1"));
        }
        let spectrum = Spectrum {
            eigenvalues,
            kind: SpectrumKind::Custom,
        };
        spectrum.check()?;
        Ok(spectrum)
    }

    /// Largest `M` for which `e^{-a M}` stays above [`EIGENVALUE_FLOOR`].
    pub fn max_exponential_len(a: f64) -> usize {
        (-EIGENVALUE_FLOOR.ln() / a).floor() as usize
    }

    fn check(&self) -> Result<()> {
        for (i, &l) in self.eigenvalues.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvariantViolation(format!(
                    "eigenvalue lambda_{} = {l} is not strictly positive",
                    i + 1
                )));
            }
        }
        if let Some(i) = self.eigenvalues.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::InvariantViolation(format!(
                "eigenvalues must be non-increasing: lambda_{} = {} < lambda_{} = {}",
                i + 1,
                self.eigenvalues[i],
                i + 2,
                self.eigenvalues[i + 1]
            )));
        }
        Ok(())
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `λ_k` with 1-based `k`.
    pub fn lambda(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.len() {
            return Err(Error::Index {
                index: k,
                limit: self.len(),
            });
        }
        Ok(self.eigenvalues[k - 1])
    }

    /// Leading `m` eigenvalues as a new spectrum of the same kind.
    pub fn truncate(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.len() {
            return Err(Error::Index {
                index: m,
                limit: self.len(),
            });
        }
        Ok(Spectrum {
            eigenvalues: self.eigenvalues[..m].to_vec(),
            kind: self.kind,
        })
    }

    /// The regime whose condition-number law applies to this spectrum.
    /// Anything that is not exponential is treated as polynomial-like.
    pub fn regime(&self) -> Regime {
        match self.kind {
            SpectrumKind::Exponential(_) => Regime::Exponential,
            _ => Regime::Polynomial,
        }
    }

    /// Normalized effective rank `ρ_l = (Σ_{k>l} λ_k) / (N λ_{l+1})`, summed over the stored tail.
    pub fn effective_rank(&self, l: usize, n: usize) -> Result<f64> {
        if l >= self.len() {
            return Err(Error::Index {
                index: l,
                limit: self.len(),
            });
        }
        if n == 0 {
            return Err(Error::invalid("sample size N must be at least 1"));
        }
        // smallest terms first
        let tail: f64 = self.eigenvalues[l..].iter().rev().sum();
        Ok(tail / (n as f64 * self.eigenvalues[l]))
    }

    /// Predicted condition-number scale: `λ_1/λ_N` (polynomial) or `N λ_1/λ_N` (exponential).
    pub fn theoretical_condition_ratio(&self, n: usize, regime: Regime) -> Result<f64> {
        if n == 0 || n > self.len() {
            return Err(Error::Index {
                index: n,
                limit: self.len(),
            });
        }
        let ratio = self.eigenvalues[0] / self.eigenvalues[n - 1];
        Ok(match regime {
            Regime::Polynomial => ratio,
            Regime::Exponential => ratio * n as f64,
        })
    }

    /// CSV with header `k,lambda_k`, one row per eigenvalue.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,lambda_k\n");
        for (i, l) in self.eigenvalues.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, crate::cli_io::format_float(*l)));
        }
        out
    }
}
