use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::state::StatePoint;
use crate::error::{invalid, Result};

/// Monotonicity declared for a rate function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    /// Non-decreasing in every rate coordinate.
    IncreasingInEachCoordinate,
    None,
}

/// One term `coef * coord^power` of a separable rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTerm {
    pub coord: usize,
    pub coef: f64,
    pub power: f64,
}

type EvalFn = Arc<dyn Fn(&StatePoint) -> f64 + Send + Sync>;
type BoundFn = Arc<dyn Fn(&StatePoint, &StatePoint) -> f64 + Send + Sync>;

/// A user-supplied rate with its own flow-segment bound.
#[derive(Clone)]
pub struct CustomRate {
    pub label: String,
    pub eval: EvalFn,
    pub bound: BoundFn,
    pub monotone: Monotonicity,
}

impl fmt::Debug for CustomRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomRate")
            .field("label", &self.label)
            .field("monotone", &self.monotone)
            .finish()
    }
}

/// Jump rate `d` on a state space.
///
/// `interval_bound(p, q)` must dominate the rate along the flow segment from
/// `p` to `q`. For the separable presets the rate is non-decreasing in each
/// coordinate and every coordinate moves monotonically under the flows used
/// here, so evaluating at the coordinatewise maximum is a valid bound.
#[derive(Clone, Debug)]
pub enum RateFunction {
    Constant(f64),
    /// `alpha + sum_k coef_k * coord_k^power_k` over [`StatePoint::rate_coords`].
    Separable { alpha: f64, terms: Vec<PowerTerm> },
    /// One rate per torus state, indexed `1..=I`.
    PerState(Vec<RateFunction>),
    Custom(CustomRate),
}

impl RateFunction {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return invalid(format!("constant rate {value} must be finite and >= 0"));
        }
        Ok(RateFunction::Constant(value))
    }

    /// `alpha + beta * x^p` on the first rate coordinate.
    pub fn power(alpha: f64, beta: f64, p: f64) -> Result<Self> {
        Self::separable(alpha, vec![PowerTerm { coord: 0, coef: beta, power: p }])
    }

    pub fn separable(alpha: f64, terms: Vec<PowerTerm>) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return invalid("rate intercept alpha must be >= 0");
        }
        for t in &terms {
            if !(t.coef.is_finite() && t.coef >= 0.0) {
                return invalid("separable rate coefficients must be >= 0");
            }
            if !(t.power.is_finite() && t.power > 0.0) {
                return invalid("separable rate powers must be > 0");
            }
        }
        Ok(RateFunction::Separable { alpha, terms })
    }

    pub fn per_state(rates: Vec<RateFunction>) -> Result<Self> {
        if rates.is_empty() {
            return invalid("per-state rate needs at least one state");
        }
        if rates.iter().any(|r| matches!(r, RateFunction::PerState(_))) {
            return invalid("per-state rates cannot nest");
        }
        Ok(RateFunction::PerState(rates))
    }

    /// Custom rate; `bound(p, q)` must dominate the rate along the flow from `p` to `q`.
    pub fn custom(
        label: impl Into<String>,
        eval: impl Fn(&StatePoint) -> f64 + Send + Sync + 'static,
        bound: impl Fn(&StatePoint, &StatePoint) -> f64 + Send + Sync + 'static,
        monotone: Monotonicity,
    ) -> Self {
        RateFunction::Custom(CustomRate {
            label: label.into(),
            eval: Arc::new(eval),
            bound: Arc::new(bound),
            monotone,
        })
    }

    /// Number of rate coordinates this function reads, if it is a preset.
    pub fn coords_needed(&self) -> usize {
        match self {
            RateFunction::Constant(_) | RateFunction::Custom(_) => 0,
            RateFunction::Separable { terms, .. } => terms.iter().map(|t| t.coord + 1).max().unwrap_or(0),
            RateFunction::PerState(v) => v.iter().map(Self::coords_needed).max().unwrap_or(0),
        }
    }

    fn separable_at(alpha: f64, terms: &[PowerTerm], c: &[f64]) -> f64 {
        alpha
            + terms
                .iter()
                .map(|t| t.coef * c.get(t.coord).copied().unwrap_or(0.0).max(0.0).powf(t.power))
                .sum::<f64>()
    }

    pub fn evaluate(&self, s: &StatePoint) -> f64 {
        match self {
            RateFunction::Constant(v) => *v,
            RateFunction::Separable { alpha, terms } => Self::separable_at(*alpha, terms, &s.rate_coords()),
            RateFunction::PerState(v) => match s {
                StatePoint::AgeState { state, .. } => {
                    v[(*state as usize - 1) % v.len()].evaluate(s)
                }
                _ => v[0].evaluate(s),
            },
            RateFunction::Custom(c) => (c.eval)(s),
        }
    }

    /// Upper bound of the rate along the flow segment between `p` and `q`.
    pub fn interval_bound(&self, p: &StatePoint, q: &StatePoint) -> f64 {
        match self {
            RateFunction::Constant(v) => *v,
            RateFunction::Separable { alpha, terms } => {
                let cp = p.rate_coords();
                let cq = q.rate_coords();
                let hi: Vec<f64> = cp.iter().zip(&cq).map(|(a, b)| a.max(*b)).collect();
                Self::separable_at(*alpha, terms, &hi)
            }
            RateFunction::PerState(v) => match p {
                StatePoint::AgeState { state, .. } => {
                    v[(*state as usize - 1) % v.len()].interval_bound(p, q)
                }
                _ => v[0].interval_bound(p, q),
            },
            RateFunction::Custom(c) => (c.bound)(p, q),
        }
    }

    pub fn monotone_tag(&self) -> Monotonicity {
        match self {
            RateFunction::Constant(_) | RateFunction::Separable { .. } => {
                Monotonicity::IncreasingInEachCoordinate
            }
            RateFunction::PerState(v) => {
                if v.iter().all(|r| r.monotone_tag() == Monotonicity::IncreasingInEachCoordinate) {
                    Monotonicity::IncreasingInEachCoordinate
                } else {
                    Monotonicity::None
                }
            }
            RateFunction::Custom(c) => c.monotone,
        }
    }
}

type GrowthFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Growth field `g` of a scalar structure variable.
#[derive(Clone)]
pub enum GrowthFunction {
    Constant(f64),
    /// `g(x) = intercept + slope * x`.
    Affine { intercept: f64, slope: f64 },
    Custom {
        label: String,
        f: GrowthFn,
        nonincreasing: bool,
        /// `sup |g|`, when known.
        speed_bound: Option<f64>,
    },
}

impl fmt::Debug for GrowthFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthFunction::Constant(c) => write!(f, "Constant({c})"),
            GrowthFunction::Affine { intercept, slope } => write!(f, "Affine({intercept} + {slope} x)"),
            GrowthFunction::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

/// Finite-difference slack allowed when validating a non-increasing `g`.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-12;

/// Fixed step of the fourth-order integrator for custom growth fields.
pub const FLOW_STEP: f64 = 0.01;

impl GrowthFunction {
    pub fn custom(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        nonincreasing: bool,
        speed_bound: Option<f64>,
    ) -> Self {
        GrowthFunction::Custom { label: label.into(), f: Arc::new(f), nonincreasing, speed_bound }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match self {
            GrowthFunction::Constant(c) => *c,
            GrowthFunction::Affine { intercept, slope } => intercept + slope * x,
            GrowthFunction::Custom { f, .. } => f(x),
        }
    }

    pub fn is_nonincreasing(&self) -> bool {
        match self {
            GrowthFunction::Constant(_) => true,
            GrowthFunction::Affine { slope, .. } => *slope <= 0.0,
            GrowthFunction::Custom { nonincreasing, .. } => *nonincreasing,
        }
    }

    /// `sup_{x >= 0} |g(x)|` when it is finite and known.
    pub fn speed_bound(&self) -> Option<f64> {
        match self {
            GrowthFunction::Constant(c) => Some(c.abs()),
            GrowthFunction::Affine { intercept, slope } if *slope == 0.0 => Some(intercept.abs()),
            GrowthFunction::Affine { .. } => None,
            GrowthFunction::Custom { speed_bound, .. } => *speed_bound,
        }
    }

    /// Checks `g(0) >= 0` and, when flagged, non-increase on `grid`.
    pub fn validate(&self, grid: &[f64]) -> Result<()> {
        let g0 = self.evaluate(0.0);
        if !(g0.is_finite() && g0 >= 0.0) {
            return invalid(format!("growth field must satisfy g(0) >= 0, got {g0}"));
        }
        if self.is_nonincreasing() {
            for w in grid.windows(2) {
                let diff = self.evaluate(w[1]) - self.evaluate(w[0]);
                if w[1] > w[0] && diff > MONOTONICITY_TOLERANCE {
                    return invalid(format!(
                        "growth field flagged non-increasing but g({}) - g({}) = {diff}",
                        w[1], w[0]
                    ));
                }
            }
        }
        Ok(())
    }

    /// Solution at time `dt` of `x' = g(x)` started at `x0`. Exact for
    /// constant and affine fields, fixed-step RK4 otherwise.
    pub fn flow(&self, x0: f64, dt: f64) -> f64 {
        if dt == 0.0 {
            return x0;
        }
        let x = match self {
            GrowthFunction::Constant(c) => x0 + c * dt,
            GrowthFunction::Affine { intercept, slope } => {
                if *slope == 0.0 {
                    x0 + intercept * dt
                } else {
                    x0 + (x0 * slope + intercept) * (slope * dt).exp_m1() / slope
                }
            }
            GrowthFunction::Custom { f, .. } => {
                let steps = (dt.abs() / FLOW_STEP).ceil().max(1.0) as usize;
                let h = dt / steps as f64;
                let mut x = x0;
                for _ in 0..steps {
                    let k1 = f(x);
                    let k2 = f(x + 0.5 * h * k1);
                    let k3 = f(x + 0.5 * h * k2);
                    let k4 = f(x + h * k3);
                    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                }
                x
            }
        };
        // g(0) >= 0 keeps the exact flow on the half-line; strip round-off only.
        if x0 >= 0.0 && dt > 0.0 {
            x.max(0.0)
        } else {
            x
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_rate_and_bound() {
        let d = RateFunction::power(1.0, 2.0, 2.0).unwrap();
        assert_eq!(d.evaluate(&StatePoint::Age(3.0)), 19.0);
        let b = d.interval_bound(&StatePoint::Age(1.0), &StatePoint::Age(2.0));
        assert_eq!(b, 9.0);
        assert!(b >= d.evaluate(&StatePoint::Age(1.0)));
    }

    #[test]
    fn per_state_dispatch() {
        let d = RateFunction::per_state(vec![
            RateFunction::constant(1.0).unwrap(),
            RateFunction::constant(2.0).unwrap(),
        ])
        .unwrap();
        assert_eq!(d.evaluate(&StatePoint::AgeState { age: 0.0, state: 2 }), 2.0);
    }

    #[test]
    fn separable_rate_on_time_pair() {
        let d = RateFunction::separable(
            1.0,
            vec![
                PowerTerm { coord: 0, coef: 0.5, power: 1.0 },
                PowerTerm { coord: 1, coef: 0.25, power: 1.0 },
            ],
        )
        .unwrap();
        assert_eq!(d.evaluate(&StatePoint::TimePair { x1: 2.0, x2: 4.0 }), 3.0);
    }

    #[test]
    fn rejects_negative_rates() {
        assert!(RateFunction::constant(-1.0).is_err());
        assert!(RateFunction::power(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn affine_flow_is_exact() {
        let g = GrowthFunction::Affine { intercept: 1.0, slope: -1.0 };
        let x = g.flow(3.0, 0.7);
        assert!((x - (1.0 + 2.0 * (-0.7f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn rk4_flow_semigroup() {
        let g = GrowthFunction::custom("1/(1+x)", |x| 1.0 / (1.0 + x), true, Some(1.0));
        let a = g.flow(g.flow(0.5, 0.3), 0.45);
        let b = g.flow(0.5, 0.75);
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        // exact: (1+x)^2 / 2 grows linearly
        let exact = ((1.5f64).powi(2) + 2.0 * 0.75).sqrt() - 1.0;
        assert!((b - exact).abs() < 1e-10);
    }

    #[test]
    fn growth_validation() {
        assert!(GrowthFunction::Constant(-1.0).validate(&[0.0, 1.0]).is_err());
        let bad = GrowthFunction::custom("x", |x| x, true, None);
        assert!(bad.validate(&[0.0, 0.5, 1.0]).is_err());
        assert!(GrowthFunction::Affine { intercept: 1.0, slope: -0.2 }
            .validate(&[0.0, 1.0, 2.0])
            .is_ok());
    }
}
