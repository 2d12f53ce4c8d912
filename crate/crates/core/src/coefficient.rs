//! Separable diffusion coefficients `a(x) = Σ_k Π_ℓ a_ℓ^{(k)}(x_ℓ)` and the
//! uniform Dirichlet grids they are sampled on.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Number of equispaced points used for the positivity check.
const POSITIVITY_SAMPLES: usize = 4097;

/// Closed-form univariate factors used by the built-in test problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// `1`
    One,
    /// `x + 2`
    XPlus2,
    /// `5x² + 2`
    FiveXSquaredPlus2,
    /// `sin(x)·cos(x) + 1`
    SinCosPlus1,
    /// `sin(4πx) + 2`
    Sin4PiXPlus2,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::One,
        Preset::XPlus2,
        Preset::FiveXSquaredPlus2,
        Preset::SinCosPlus1,
        Preset::Sin4PiXPlus2,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Preset::One => "one",
            Preset::XPlus2 => "x+2",
            Preset::FiveXSquaredPlus2 => "5x^2+2",
            Preset::SinCosPlus1 => "sin(x)cos(x)+1",
            Preset::Sin4PiXPlus2 => "sin(4pi x)+2",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.id() == id)
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Preset::One => 1.0,
            Preset::XPlus2 => x + 2.0,
            Preset::FiveXSquaredPlus2 => 5.0 * x * x + 2.0,
            Preset::SinCosPlus1 => x.sin() * x.cos() + 1.0,
            Preset::Sin4PiXPlus2 => (4.0 * PI * x).sin() + 2.0,
        }
    }
}

/// A univariate coefficient factor on `[0, 1]`.
#[derive(Clone)]
pub enum Univariate {
    Constant(f64),
    Preset(Preset),
    /// Polynomial with ascending coefficients `c0 + c1 x + ...`.
    Polynomial(Vec<f64>),
    /// Values at `m ≥ 2` equispaced points `0, 1/(m-1), ..., 1`, linearly
    /// interpolated.
    Sampled(Vec<f64>),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Univariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Univariate::Constant(c) => write!(f, "Constant({c})"),
            Univariate::Preset(p) => write!(f, "Preset({})", p.id()),
            Univariate::Polynomial(c) => write!(f, "Polynomial({c:?})"),
            Univariate::Sampled(s) => write!(f, "Sampled({} points)", s.len()),
            Univariate::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Univariate {
    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Univariate::Custom(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Univariate::Constant(c) => *c,
            Univariate::Preset(p) => p.eval(x),
            Univariate::Polynomial(c) => c.iter().rev().fold(0.0, |acc, ci| acc * x + ci),
            Univariate::Sampled(s) => interpolate(s, x),
            Univariate::Custom(f) => f(x),
        }
    }

    /// Values at `m` equispaced points including both endpoints.
    pub fn sample(&self, m: usize) -> Vec<f64> {
        if m == 1 {
            return vec![self.eval(0.5)];
        }
        (0..m)
            .map(|i| self.eval(i as f64 / (m - 1) as f64))
            .collect()
    }
}

fn interpolate(samples: &[f64], x: f64) -> f64 {
    match samples.len() {
        0 => f64::NAN,
        1 => samples[0],
        m => {
            let t = x.clamp(0.0, 1.0) * (m - 1) as f64;
            let i = (t.floor() as usize).min(m - 2);
            let frac = t - i as f64;
            samples[i] * (1.0 - frac) + samples[i + 1] * frac
        }
    }
}

/// Rank-`R` separable coefficient in `d ∈ {2, 3}` dimensions.
/// `factors[k][ℓ]` is `a_ℓ^{(k)}`.
#[derive(Clone, Debug)]
pub struct SeparableCoefficient {
    d: usize,
    factors: Vec<Vec<Univariate>>,
}

impl SeparableCoefficient {
    pub fn new(d: usize, factors: Vec<Vec<Univariate>>) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(Error::InvalidArgument(format!("dimension {d} is not 2 or 3")));
        }
        if factors.is_empty() {
            return Err(Error::InvalidCoefficient("empty factor list".into()));
        }
        for (k, term) in factors.iter().enumerate() {
            if term.len() != d {
                return Err(Error::InvalidCoefficient(format!(
                    "term {k} has {} factors, expected {d}",
                    term.len()
                )));
            }
            for (l, f) in term.iter().enumerate() {
                if let Univariate::Sampled(s) = f {
                    if s.len() < 2 {
                        return Err(Error::InvalidCoefficient(format!(
                            "term {k}, dim {l}: sampled factor needs at least 2 points"
                        )));
                    }
                    if let Some((i, v)) = s.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                        return Err(Error::NonPositiveCoefficient {
                            term: k,
                            dim: l,
                            x: i as f64 / (s.len() - 1) as f64,
                            value: *v,
                        });
                    }
                }
                check_positive(f, k, l)?;
            }
        }
        Ok(Self { d, factors })
    }

    /// All factors `≡ 1` with three terms: `a = 3` in 2D.
    pub fn test1() -> Self {
        let one = || Univariate::Preset(Preset::One);
        Self::new(2, vec![vec![one(), one()], vec![one(), one()], vec![one(), one()]])
            .expect("valid preset")
    }

    /// Three-term variable coefficient used for the anisotropic experiments.
    pub fn test2() -> Self {
        use Preset::*;
        let p = Univariate::Preset;
        Self::new(
            2,
            vec![
                vec![p(XPlus2), p(FiveXSquaredPlus2)],
                vec![p(SinCosPlus1), p(One)],
                vec![p(One), p(Sin4PiXPlus2)],
            ],
        )
        .expect("valid preset")
    }

    /// Single-term unit coefficient: the plain Laplacian.
    pub fn unit(d: usize) -> Result<Self> {
        Self::new(d, vec![vec![Univariate::Constant(1.0); d]])
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn factor(&self, term: usize, dim: usize) -> &Univariate {
        &self.factors[term][dim]
    }

    pub fn factors(&self) -> &[Vec<Univariate>] {
        &self.factors
    }

    /// `a(x) = Σ_k Π_ℓ a_ℓ^{(k)}(x_ℓ)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.factors
            .iter()
            .map(|term| term.iter().zip(x).map(|(f, xi)| f.eval(*xi)).product::<f64>())
            .sum()
    }
}

fn check_positive(f: &Univariate, term: usize, dim: usize) -> Result<()> {
    for i in 0..POSITIVITY_SAMPLES {
        let x = i as f64 / (POSITIVITY_SAMPLES - 1) as f64;
        let value = f.eval(x);
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveCoefficient { term, dim, x, value });
        }
    }
    Ok(())
}

/// Uniform grid on `(0,1)^d` with `n_ℓ` interior nodes per dimension and
/// homogeneous Dirichlet boundary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridSpec {
    n: Vec<usize>,
}

impl GridSpec {
    pub fn new(n: &[usize]) -> Result<Self> {
        if !(2..=3).contains(&n.len()) {
            return Err(Error::InvalidArgument(format!(
                "grid dimension {} is not 2 or 3",
                n.len()
            )));
        }
        if n.contains(&0) {
            return Err(Error::InvalidArgument("grid needs n ≥ 1 in every dimension".into()));
        }
        Ok(Self { n: n.to_vec() })
    }

    pub fn square(d: usize, n: usize) -> Result<Self> {
        Self::new(&vec![n; d])
    }

    /// Ladder level `L`: `n = 2^L − 1` in every dimension.
    pub fn level(d: usize, level: u32) -> Result<Self> {
        if level == 0 || level > 24 {
            return Err(Error::InvalidArgument(format!("level {level} out of range 1..=24")));
        }
        Self::square(d, (1usize << level) - 1)
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.n
    }

    pub fn n(&self, dim: usize) -> usize {
        self.n[dim]
    }

    pub fn h(&self, dim: usize) -> f64 {
        mesh_size(self.n[dim])
    }

    /// Interior nodes `x_i = i·h`, `i = 1..n`.
    pub fn nodes(&self, dim: usize) -> Vec<f64> {
        let h = self.h(dim);
        (1..=self.n[dim]).map(|i| i as f64 * h).collect()
    }

    pub fn unknowns(&self) -> usize {
        self.n.iter().product()
    }
}

pub fn mesh_size(n: usize) -> f64 {
    1.0 / (n as f64 + 1.0)
}
