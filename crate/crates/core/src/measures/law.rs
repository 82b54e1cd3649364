//! Probability laws used as jump kernels, with exact samplers and expectations.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{gauss_legendre, integrate_split};

/// How an expectation was computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Finite sum, or Gauss–Legendre on pieces where the integrand is polynomial.
    Exact,
    /// Fixed Gauss–Legendre rule on a smooth but non-polynomial integrand.
    GaussLegendre,
}

impl Quadrature {
    pub fn worst(self, other: Quadrature) -> Quadrature {
        if self == Quadrature::Exact && other == Quadrature::Exact {
            Quadrature::Exact
        } else {
            Quadrature::GaussLegendre
        }
    }
}

/// A probability law on the real line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Law1D {
    Atoms { values: Vec<f64>, weights: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
    /// Density proportional to `x^exponent` on `[lo, hi]`, `lo >= 0`.
    TruncatedPower { lo: f64, hi: f64, exponent: f64 },
}

impl Law1D {
    pub fn dirac(value: f64) -> Self {
        Law1D::Atoms { values: vec![value], weights: vec![1.0] }
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let law = Law1D::Uniform { lo, hi };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Law1D::Atoms { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return invalid("atom law needs matching, non-empty values and weights");
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return invalid("atom values must be finite");
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return invalid("atom weights must be >= 0");
                }
                let s: f64 = weights.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return invalid(format!("atom weights sum to {s}, not 1"));
                }
            }
            Law1D::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return invalid(format!("uniform law needs finite lo < hi, got [{lo}, {hi}]"));
                }
            }
            Law1D::TruncatedPower { lo, hi, exponent } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo < hi) {
                    return invalid("truncated power law needs 0 <= lo < hi");
                }
                if !exponent.is_finite() || *exponent <= -1.0 {
                    return invalid("truncated power exponent must exceed -1");
                }
            }
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            Law1D::Atoms { values, weights } => values
                .iter()
                .zip(weights)
                .filter(|(_, w)| **w > 0.0)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| (lo.min(*v), hi.max(*v))),
            Law1D::Uniform { lo, hi } | Law1D::TruncatedPower { lo, hi, .. } => (*lo, *hi),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Law1D::Atoms { values, weights } => values.iter().zip(weights).map(|(v, w)| v * w).sum(),
            Law1D::Uniform { lo, hi } => 0.5 * (lo + hi),
            Law1D::TruncatedPower { lo, hi, exponent } => {
                let k = *exponent;
                (k + 1.0) / (k + 2.0) * (hi.powf(k + 2.0) - lo.powf(k + 2.0))
                    / (hi.powf(k + 1.0) - lo.powf(k + 1.0))
            }
        }
    }

    fn power_quantile(lo: f64, hi: f64, k: f64, u: f64) -> f64 {
        let a = lo.powf(k + 1.0);
        let b = hi.powf(k + 1.0);
        (a + u * (b - a)).powf(1.0 / (k + 1.0)).clamp(lo, hi)
    }

    fn power_cdf(lo: f64, hi: f64, k: f64, x: f64) -> f64 {
        let a = lo.powf(k + 1.0);
        let b = hi.powf(k + 1.0);
        ((x.clamp(lo, hi).powf(k + 1.0) - a) / (b - a)).clamp(0.0, 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law1D::Atoms { values, weights } => {
                if values.len() == 1 {
                    return values[0];
                }
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, w) in values.iter().zip(weights) {
                    acc += w;
                    if u < acc && *w > 0.0 {
                        return *v;
                    }
                }
                // round-off: last atom with positive weight
                values
                    .iter()
                    .zip(weights)
                    .rev()
                    .find(|(_, w)| **w > 0.0)
                    .map(|(v, _)| *v)
                    .unwrap_or(values[values.len() - 1])
            }
            Law1D::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Law1D::TruncatedPower { lo, hi, exponent } => {
                Self::power_quantile(*lo, *hi, *exponent, rng.random::<f64>())
            }
        }
    }

    /// `E[f(X)]`. `breaks` lists points where `f` may have kinks; splitting
    /// there keeps uniform-law expectations of piecewise polynomials exact.
    pub fn expect(&self, f: impl Fn(f64) -> f64, breaks: &[f64]) -> (f64, Quadrature) {
        match self {
            Law1D::Atoms { values, weights } => (
                values.iter().zip(weights).map(|(v, w)| if *w > 0.0 { w * f(*v) } else { 0.0 }).sum(),
                Quadrature::Exact,
            ),
            Law1D::Uniform { lo, hi } => {
                (integrate_split(*lo, *hi, breaks, &f) / (hi - lo), Quadrature::Exact)
            }
            Law1D::TruncatedPower { lo, hi, exponent } => {
                let (lo, hi, k) = (*lo, *hi, *exponent);
                if k >= 0.0 {
                    let norm = (k + 1.0) / (hi.powf(k + 1.0) - lo.powf(k + 1.0));
                    let v = integrate_split(lo, hi, breaks, |x| f(x) * norm * x.powf(k));
                    return (v, Quadrature::GaussLegendre);
                }
                let ubreaks: Vec<f64> = breaks.iter().map(|b| Self::power_cdf(lo, hi, k, *b)).collect();
                let v = integrate_split(0.0, 1.0, &ubreaks, |u| f(Self::power_quantile(lo, hi, k, u)));
                (v, Quadrature::GaussLegendre)
            }
        }
    }
}

fn cached_rule(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static R12: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R32: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R6: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match n {
        64 => gauss_legendre(),
        32 => R32.get_or_init(|| crate::numerics::legendre_rule(32)),
        12 => R12.get_or_init(|| crate::numerics::legendre_rule(12)),
        _ => R6.get_or_init(|| crate::numerics::legendre_rule(6)),
    }
}

/// A probability law on `R^dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VecLaw {
    Atoms { points: Vec<Vec<f64>>, weights: Vec<f64> },
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl VecLaw {
    pub fn dim(&self) -> usize {
        match self {
            VecLaw::Atoms { points, .. } => points.first().map_or(0, Vec::len),
            VecLaw::UniformBox { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            VecLaw::Atoms { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return invalid("vector atom law needs matching, non-empty points and weights");
                }
                let d = points[0].len();
                if d == 0 || points.iter().any(|p| p.len() != d || p.iter().any(|v| !v.is_finite())) {
                    return invalid("vector atoms must share a positive dimension and be finite");
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return invalid("atom weights must be >= 0");
                }
                let s: f64 = weights.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return invalid(format!("atom weights sum to {s}, not 1"));
                }
            }
            VecLaw::UniformBox { lower, upper } => {
                if lower.is_empty()
                    || lower.len() != upper.len()
                    || lower.iter().zip(upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
                {
                    return invalid("uniform box needs lower < upper in every coordinate");
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            VecLaw::Atoms { points, weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (p, w) in points.iter().zip(weights) {
                    acc += w;
                    if u < acc && *w > 0.0 {
                        return p.clone();
                    }
                }
                points
                    .iter()
                    .zip(weights)
                    .rev()
                    .find(|(_, w)| **w > 0.0)
                    .map(|(p, _)| p.clone())
                    .unwrap_or_else(|| points[points.len() - 1].clone())
            }
            VecLaw::UniformBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect(),
        }
    }

    /// `E[f(X)]`. In one dimension `breaks` are kink locations of `f`;
    /// boxes in higher dimension use a tensor Gauss–Legendre rule.
    pub fn expect(&self, f: impl Fn(&[f64]) -> f64, breaks: &[f64]) -> (f64, Quadrature) {
        match self {
            VecLaw::Atoms { points, weights } => (
                points.iter().zip(weights).map(|(p, w)| if *w > 0.0 { w * f(p) } else { 0.0 }).sum(),
                Quadrature::Exact,
            ),
            VecLaw::UniformBox { lower, upper } if lower.len() == 1 => {
                let v = integrate_split(lower[0], upper[0], breaks, |x| f(&[x]));
                (v / (upper[0] - lower[0]), Quadrature::Exact)
            }
            VecLaw::UniformBox { lower, upper } => {
                let d = lower.len();
                let n = match d {
                    2 => 32,
                    3 => 12,
                    _ => 6,
                };
                let (nodes, weights) = cached_rule(n);
                let mut idx = vec![0usize; d];
                let mut x = vec![0.0; d];
                let mut total = 0.0;
                loop {
                    let mut w = 1.0;
                    for k in 0..d {
                        let half = 0.5 * (upper[k] - lower[k]);
                        x[k] = lower[k] + half * (1.0 + nodes[idx[k]]);
                        w *= 0.5 * weights[idx[k]];
                    }
                    total += w * f(&x);
                    let mut k = 0;
                    loop {
                        idx[k] += 1;
                        if idx[k] < n {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                        if k == d {
                            return (total, Quadrature::GaussLegendre);
                        }
                    }
                }
            }
        }
    }
}

/// Birth law `b` on `[0, inf)`: where a renewing individual restarts.
#[derive(Clone, Debug, PartialEq)]
pub struct BirthLaw(pub Law1D);

/// Spatial jump noise `k` on `R^dim` scaled by `epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialNoise {
    pub law: VecLaw,
    pub scale: f64,
}

/// Fragment ratio law `beta` on `[0, 1]` and its mean.
#[derive(Clone, Debug, PartialEq)]
pub struct FragmentRatio {
    pub law: Law1D,
    pub mean_r: f64,
}

/// Mixing law `h` on `[0, 1]` of the mating kernel with mean `theta` and cost exponent `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatingMix {
    pub law: Law1D,
    pub theta: f64,
    pub p: f64,
}

impl BirthLaw {
    pub fn new(law: Law1D) -> Result<Self> {
        law.validate()?;
        if law.support().0 < 0.0 {
            return invalid("birth law must live on [0, inf)");
        }
        Ok(Self(law))
    }
}

impl SpatialNoise {
    pub fn new(law: VecLaw, scale: f64) -> Result<Self> {
        law.validate()?;
        if !(scale.is_finite() && scale > 0.0) {
            return invalid("noise scale epsilon must be > 0");
        }
        Ok(Self { law, scale })
    }
}

impl FragmentRatio {
    pub fn new(law: Law1D) -> Result<Self> {
        law.validate()?;
        let (lo, hi) = law.support();
        if lo < 0.0 || hi > 1.0 {
            return invalid("fragment ratio law must live on [0, 1]");
        }
        let mean_r = law.mean();
        if mean_r >= 1.0 {
            return invalid(format!("fragment ratio mean {mean_r} must lie in [0, 1)"));
        }
        Ok(Self { law, mean_r })
    }
}

impl MatingMix {
    /// Mixing law with `theta` taken as the exact mean of `law`.
    pub fn new(law: Law1D, p: f64) -> Result<Self> {
        law.validate()?;
        let (lo, hi) = law.support();
        if lo < 0.0 || hi > 1.0 {
            return invalid("mixing law must live on [0, 1]");
        }
        let theta = law.mean();
        if !(theta > 0.0 && theta < 1.0) {
            return invalid(format!("mixing mean theta={theta} must lie in (0, 1)"));
        }
        if !(p.is_finite() && p >= 1.0) {
            return invalid("cost exponent p must be >= 1");
        }
        Ok(Self { law, theta, p })
    }

    /// As [`MatingMix::new`] but also checks a declared `theta` against the law mean.
    pub fn with_theta(law: Law1D, theta: f64, p: f64) -> Result<Self> {
        let mix = Self::new(law, p)?;
        if (mix.theta - theta).abs() > 1e-10 {
            return invalid(format!("declared theta {theta} differs from the law mean {}", mix.theta));
        }
        Ok(mix)
    }
}

/// The kernel families attached to a model.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    BirthLaw(BirthLaw),
    SpatialNoise(SpatialNoise),
    FragmentRatio(FragmentRatio),
    MatingMix(MatingMix),
}
