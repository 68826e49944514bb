//! Design matrices `Ψ` under the feature laws studied here, input sampling, and analytic
//! kernels (Laplacian, Gaussian RBF, one-hidden-layer ReLU NTK).

use std::f64::consts::{PI, SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::KernelMatrix;

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Where scalar or vector inputs `x` are drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputDomain {
    StdNormal1d,
    /// Uniform over the closed unit disk in `R²`.
    UnitDisk2d,
    UniformInterval { lo: f64, hi: f64 },
}

impl InputDomain {
    /// Input law used by the cosine and sine features: the uniform angle on `[0, 2π)`.
    pub const ANGLE: InputDomain = InputDomain::UniformInterval { lo: 0.0, hi: TAU };

    pub fn dim(&self) -> usize {
        match self {
            InputDomain::UnitDisk2d => 2,
            _ => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if let InputDomain::UniformInterval { lo, hi } = *self {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("interval needs lo < hi, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for InputDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputDomain::StdNormal1d => f.write_str("std_normal_1d"),
            InputDomain::UnitDisk2d => f.write_str("unit_disk_2d"),
            InputDomain::UniformInterval { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

impl FromStr for InputDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "std_normal_1d" => return Ok(InputDomain::StdNormal1d),
            "unit_disk_2d" => return Ok(InputDomain::UnitDisk2d),
            "angle" => return Ok(InputDomain::ANGLE),
            _ => {}
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() == 3 && parts[0] == "uniform" {
            let lo: f64 = parts[1]
                .parse()
                .map_err(|_| Error::invalid(format!("bad interval bound `{}`", parts[1])))?;
            let hi: f64 = parts[2]
                .parse()
                .map_err(|_| Error::invalid(format!("bad interval bound `{}`", parts[2])))?;
            let d = InputDomain::UniformInterval { lo, hi };
            d.validate()?;
            return Ok(d);
        }
        Err(Error::invalid(format!("unknown input domain `{s}`")))
    }
}

/// `N` points of dimension `dim`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    dim: usize,
    coords: Vec<f64>,
}

impl Inputs {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::shape(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::numeric("non-finite input coordinate"));
        }
        Ok(Inputs { dim, coords })
    }

    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Inputs::new(1, xs.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Rescales every point to unit Euclidean norm (points at the origin are rejected).
    pub fn project_to_sphere(&self) -> Result<Inputs> {
        let mut coords = self.coords.clone();
        for p in coords.chunks_exact_mut(self.dim) {
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Domain("cannot project the origin onto the sphere".into()));
            }
            p.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(Inputs {
            dim: self.dim,
            coords,
        })
    }

    /// Concatenates two point sets of the same dimension.
    pub fn concat(&self, other: &Inputs) -> Result<Inputs> {
        if self.dim != other.dim {
            return Err(Error::shape("point dimensions differ"));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(Inputs {
            dim: self.dim,
            coords,
        })
    }
}

/// Draws `n` points from `domain`; deterministic in `seed`.
pub fn sample_inputs(domain: InputDomain, n: usize, seed: u64) -> Result<Inputs> {
    domain.validate()?;
    if n == 0 {
        return Err(Error::invalid("need at least one input point"));
    }
    let mut rng = rng(seed);
    let coords = draw_inputs(domain, n, &mut rng);
    Inputs::new(domain.dim(), coords)
}

fn draw_inputs<R: Rng>(domain: InputDomain, n: usize, rng: &mut R) -> Vec<f64> {
    match domain {
        InputDomain::StdNormal1d => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
        InputDomain::UniformInterval { lo, hi } => {
            let u = Uniform::new(lo, hi).expect("validated interval");
            (0..n).map(|_| u.sample(rng)).collect()
        }
        InputDomain::UnitDisk2d => {
            let mut out = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let r: f64 = rng.random::<f64>().sqrt();
                let theta = TAU * rng.random::<f64>();
                out.push(r * theta.cos());
                out.push(r * theta.sin());
            }
            out
        }
    }
}

/// Law of the feature vector `ψ(x) ∈ R^M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureLaw {
    /// i.i.d. `N(0, 1)` entries.
    Gaussian,
    /// i.i.d. `Uniform[-√3, √3]` entries (unit variance).
    UniformSubgaussian,
    /// `ψ_k(x) = √2 cos(k x)` with scalar `x` from `domain`.
    Cosine { domain: InputDomain },
    /// `ψ_k(x) = √2 sin(k x)`.
    Sine { domain: InputDomain },
}

impl FeatureLaw {
    pub const COSINE: FeatureLaw = FeatureLaw::Cosine {
        domain: InputDomain::ANGLE,
    };
    pub const SINE: FeatureLaw = FeatureLaw::Sine {
        domain: InputDomain::ANGLE,
    };

    pub fn name(&self) -> &'static str {
        match self {
            FeatureLaw::Gaussian => "gaussian",
            FeatureLaw::UniformSubgaussian => "uniform",
            FeatureLaw::Cosine { .. } => "cosine",
            FeatureLaw::Sine { .. } => "sine",
        }
    }

    /// Whether the coordinates of one feature vector are mutually independent.
    pub fn has_independent_entries(&self) -> bool {
        matches!(self, FeatureLaw::Gaussian | FeatureLaw::UniformSubgaussian)
    }
}

impl fmt::Display for FeatureLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" => Ok(FeatureLaw::Gaussian),
            "uniform" | "uniform_subgaussian" => Ok(FeatureLaw::UniformSubgaussian),
            "cosine" => Ok(FeatureLaw::COSINE),
            "sine" => Ok(FeatureLaw::SINE),
            other => Err(Error::invalid(format!("unknown feature law `{other}`"))),
        }
    }
}

/// A realized `M × N` design block; column `i` is the feature vector of sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    entries: DMatrix<f64>,
    law: FeatureLaw,
    seed: u64,
}

impl DesignMatrix {
    /// Wraps explicit entries (used for hand-built designs in tests and demos).
    pub fn from_entries(entries: DMatrix<f64>, law: FeatureLaw) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::shape("design must be at least 1 x 1"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite design entry"));
        }
        Ok(DesignMatrix {
            entries,
            law,
            seed: 0,
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn law(&self) -> FeatureLaw {
        self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Feature dimension `M`.
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    /// Sample count `N`.
    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    /// The leading `m` feature rows.
    pub fn truncate_rows(&self, m: usize) -> Result<DesignMatrix> {
        if m == 0 || m > self.rows() {
            return Err(Error::Index {
                index: m,
                limit: self.rows(),
            });
        }
        Ok(DesignMatrix {
            entries: self.entries.rows(0, m).into_owned(),
            law: self.law,
            seed: self.seed,
        })
    }
}

/// Samples an `m × n` design under `law`; bit-identical for identical arguments.
pub fn sample_design(law: FeatureLaw, m: usize, n: usize, seed: u64) -> Result<DesignMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::invalid(format!("design dimensions must be positive, got {m} x {n}")));
    }
    let mut rng = rng(seed);
    let entries = match law {
        FeatureLaw::Gaussian => DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng)),
        FeatureLaw::UniformSubgaussian => {
            let s3 = 3f64.sqrt();
            let u = Uniform::new_inclusive(-s3, s3).expect("finite bounds");
            DMatrix::from_fn(m, n, |_, _| u.sample(&mut rng))
        }
        FeatureLaw::Cosine { domain } | FeatureLaw::Sine { domain } => {
            if domain.dim() != 1 {
                return Err(Error::invalid("trigonometric features need scalar inputs"));
            }
            domain.validate()?;
            let xs = draw_inputs(domain, n, &mut rng);
            trig_design(law, m, &xs)
        }
    };
    Ok(DesignMatrix { entries, law, seed })
}

/// Trigonometric design at explicit inputs: column `i` is `(√2 cos(k x_i))_{k=1..m}` (or sine).
pub fn trig_design_at(law: FeatureLaw, m: usize, xs: &[f64]) -> Result<DesignMatrix> {
    if !matches!(law, FeatureLaw::Cosine { .. } | FeatureLaw::Sine { .. }) {
        return Err(Error::invalid(format!("{law} features are not input-driven")));
    }
    if m == 0 || xs.is_empty() {
        return Err(Error::invalid("design dimensions must be positive"));
    }
    Ok(DesignMatrix {
        entries: trig_design(law, m, xs),
        law,
        seed: 0,
    })
}

fn trig_design(law: FeatureLaw, m: usize, xs: &[f64]) -> DMatrix<f64> {
    let cosine = matches!(law, FeatureLaw::Cosine { .. });
    DMatrix::from_fn(m, xs.len(), |k, i| {
        let arg = (k + 1) as f64 * xs[i];
        SQRT_2 * if cosine { arg.cos() } else { arg.sin() }
    })
}

/// `κ₀(t) = 1 - arccos(t)/π`
pub fn ntk_kappa0(t: f64) -> Result<f64> {
    check_unit_interval(t)?;
    Ok(1.0 - t.acos() / PI)
}

/// `κ₁(t) = (t(π - arccos t) + sqrt(1 - t²)) / π`
pub fn ntk_kappa1(t: f64) -> Result<f64> {
    check_unit_interval(t)?;
    Ok((t * (PI - t.acos()) + (1.0 - t * t).max(0.0).sqrt()) / PI)
}

fn check_unit_interval(t: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("arc-cosine argument {t} outside [-1, 1]")));
    }
    Ok(())
}

/// Tolerance on `|‖x‖ - 1|` for NTK inputs.
const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticKernel {
    /// `exp(-‖x - z‖₂)`
    Laplacian,
    /// `exp(-‖x - z‖² / (2 h²))`
    GaussianRbf { bandwidth: f64 },
    /// `t κ₀(t) + κ₁(t)` with `t = xᵀz`, defined on the unit sphere.
    Ntk,
}

impl AnalyticKernel {
    pub fn name(&self) -> &'static str {
        match self {
            AnalyticKernel::Laplacian => "laplacian",
            AnalyticKernel::GaussianRbf { .. } => "gaussian_rbf",
            AnalyticKernel::Ntk => "ntk",
        }
    }

    /// Checks that every point is admissible for this kernel.
    pub fn check_inputs(&self, x: &Inputs) -> Result<()> {
        match self {
            AnalyticKernel::Ntk => {
                for (i, p) in x.iter().enumerate() {
                    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if (norm - 1.0).abs() > UNIT_NORM_TOL {
                        return Err(Error::Domain(format!(
                            "NTK input {i} has norm {norm}; inputs must lie on the unit sphere"
                        )));
                    }
                }
                Ok(())
            }
            AnalyticKernel::GaussianRbf { bandwidth } if !(bandwidth.is_finite() && *bandwidth > 0.0) => {
                Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")))
            }
            _ => Ok(()),
        }
    }

    /// Kernel value for two admissible points.
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            AnalyticKernel::Laplacian => (-sq_dist(x, z).sqrt()).exp(),
            AnalyticKernel::GaussianRbf { bandwidth } => {
                (-sq_dist(x, z) / (2.0 * bandwidth * bandwidth)).exp()
            }
            AnalyticKernel::Ntk => {
                let t: f64 = x.iter().zip(z).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
                let k0 = 1.0 - t.acos() / PI;
                let k1 = (t * (PI - t.acos()) + (1.0 - t * t).max(0.0).sqrt()) / PI;
                t * k0 + k1
            }
        }
    }

    /// `rows.len() × cols.len()` matrix of kernel values.
    pub fn cross_gram(&self, rows: &Inputs, cols: &Inputs) -> Result<DMatrix<f64>> {
        if rows.dim() != cols.dim() {
            return Err(Error::shape("point dimensions differ"));
        }
        self.check_inputs(rows)?;
        self.check_inputs(cols)?;
        Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.eval(rows.point(i), cols.point(j))
        }))
    }
}

fn sq_dist(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Gram matrix `[k(x_i, x_j)]` of an analytic kernel, exactly symmetric.
pub fn kernel_gram(kernel: AnalyticKernel, x: &Inputs) -> Result<KernelMatrix> {
    if x.is_empty() {
        return Err(Error::invalid("need at least one point"));
    }
    kernel.check_inputs(x)?;
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = kernel.eval(x.point(i), x.point(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(KernelMatrix::analytic(k, kernel, Arc::new(x.clone())))
}
