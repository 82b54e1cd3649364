//! Backward dual problem of the renewal equation with `b = delta_0`:
//!
//! `-dt psi - g dx psi + d psi = psi(0, t) d + S`, `psi(., T) = 0`,
//!
//! solved along characteristics. The boundary trace `psi(0, .)` satisfies a
//! Volterra equation of convolution type (from `x = 0` every characteristic
//! is a time shift of the same curve), solved by backward trapezoidal
//! marching. Off the boundary, `psi` follows from one quadrature along the
//! characteristic through `(x, t)`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::measures::{EmpiricalMeasure, GrowthFunction, Law1D, RateFunction, StatePoint, FLOW_STEP};
use crate::models::{Dynamics, ModelSpec};
use crate::numerics::{legendre_rule, mean_and_stderr};
use crate::pdmp::{stream, thinning_next_event, DEFAULT_LOOKAHEAD};

/// Tolerance below zero before a characteristic counts as leaving the half-line.
pub const NONNEGATIVITY_TOLERANCE: f64 = 1e-9;

type SourceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Source term `S(x, t)`.
#[derive(Clone)]
pub struct SourceTerm {
    pub label: String,
    f: SourceFn,
    /// `S(x, t) = 0` for `x >= x_support`, when known.
    pub x_support: Option<f64>,
}

impl fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceTerm").field("label", &self.label).field("x_support", &self.x_support).finish()
    }
}

fn cos_bump(u: f64, centre: f64, radius: f64) -> f64 {
    let z = (u - centre) / radius;
    if z.abs() >= 1.0 {
        0.0
    } else {
        (0.5 * std::f64::consts::PI * z).cos().powi(2)
    }
}

impl SourceTerm {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        x_support: Option<f64>,
    ) -> Self {
        Self { label: label.into(), f: Arc::new(f), x_support }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, _| 0.0, Some(0.0))
    }

    /// `amplitude * c((x - x0)/rx) * c((t - t0)/rt)` with `c(z) = cos^2(pi z / 2)` on `|z| < 1`:
    /// continuously differentiable with compact support.
    pub fn bump(x0: f64, rx: f64, t0: f64, rt: f64, amplitude: f64) -> Result<Self> {
        if !(rx > 0.0 && rt > 0.0 && x0.is_finite() && t0.is_finite() && amplitude.is_finite()) {
            return invalid("bump needs positive radii and finite centre and amplitude");
        }
        Ok(Self::new(
            format!("bump(x0={x0}, rx={rx}, t0={t0}, rt={rt}, amp={amplitude})"),
            move |x, t| amplitude * cos_bump(x, x0, rx) * cos_bump(t, t0, rt),
            Some(x0 + rx),
        ))
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        (self.f)(x, t)
    }
}

/// The dual problem on `[0, horizon]`.
#[derive(Clone, Debug)]
pub struct DualProblem {
    pub g: GrowthFunction,
    pub d: RateFunction,
    pub source: SourceTerm,
    pub horizon: f64,
}

impl DualProblem {
    pub fn new(g: GrowthFunction, d: RateFunction, source: SourceTerm, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return invalid("dual horizon must be > 0");
        }
        let g0 = g.evaluate(0.0);
        if !(g0 >= 0.0) {
            return invalid(format!("growth field must satisfy g(0) >= 0, got {g0}"));
        }
        Ok(Self { g, d, source, horizon })
    }

    fn rate(&self, x: f64) -> f64 {
        self.d.evaluate(&StatePoint::Age(x))
    }

    /// One RK4 step of `(X, I)' = (g(X), d(X))`.
    fn rk4(&self, x: f64, i: f64, h: f64) -> (f64, f64) {
        let g = |v: f64| self.g.evaluate(v);
        let d = |v: f64| self.rate(v.max(0.0));
        let (k1x, k1i) = (g(x), d(x));
        let x2 = x + 0.5 * h * k1x;
        let (k2x, k2i) = (g(x2), d(x2));
        let x3 = x + 0.5 * h * k2x;
        let (k3x, k3i) = (g(x3), d(x3));
        let x4 = x + h * k3x;
        let (k4x, k4i) = (g(x4), d(x4));
        (
            x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
            i + h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i),
        )
    }

    /// Advances `(X, int d(X))` by `dt` with RK4 sub-steps no longer than `max_step`.
    fn advance(&self, x: f64, i: f64, s: f64, dt: f64, max_step: f64) -> Result<(f64, f64)> {
        if dt <= 0.0 {
            return Ok((x, i));
        }
        let n = (dt / max_step).ceil().max(1.0) as usize;
        let h = dt / n as f64;
        let (mut x, mut i) = (x, i);
        for k in 0..n {
            let (nx, ni) = self.rk4(x, i, h);
            if nx < -NONNEGATIVITY_TOLERANCE {
                return Err(Error::Nonnegativity { value: nx, time: s + (k + 1) as f64 * h });
            }
            x = nx.max(0.0);
            i = ni;
        }
        Ok((x, i))
    }
}

/// Characteristic `X_s` of `X' = g(X)`, `X_t = x`, at the sorted times `s_grid >= t`.
pub fn characteristics(g: &GrowthFunction, x: f64, t: f64, s_grid: &[f64]) -> Result<Vec<f64>> {
    if x < 0.0 {
        return invalid("characteristics start on the half-line");
    }
    if s_grid.iter().any(|s| *s < t) || s_grid.windows(2).any(|w| w[1] < w[0]) {
        return invalid("characteristic times must be sorted and >= t");
    }
    let p = DualProblem {
        g: g.clone(),
        d: RateFunction::Constant(0.0),
        source: SourceTerm::zero(),
        horizon: 1.0,
    };
    let exact = matches!(g, GrowthFunction::Constant(_) | GrowthFunction::Affine { .. });
    let mut out = Vec::with_capacity(s_grid.len());
    let (mut cur, mut at) = (x, t);
    for &s in s_grid {
        cur = if exact { g.flow(cur, s - at) } else { p.advance(cur, 0.0, at, s - at, FLOW_STEP)?.0 };
        at = s;
        out.push(cur);
    }
    Ok(out)
}

/// Boundary trace `psi(0, .)` on a uniform grid.
#[derive(Clone, Debug, Serialize)]
pub struct DualSolution {
    pub step: f64,
    pub times: Vec<f64>,
    pub psi0: Vec<f64>,
    /// `psi(x, t) = 0` for `x >= support_radius`. Only certified when `d` is
    /// identically zero: otherwise individuals far out still jump to 0 and
    /// feel the source, so `psi` has no compact support.
    pub support_radius: Option<f64>,
    /// Observed `sup |psi(0, .)| / sup |S|` over the grid (diagnostic).
    pub stability_ratio: f64,
}

/// Solves the boundary Volterra equation with step close to `h_t`.
pub fn solve_volterra(problem: &DualProblem, h_t: f64) -> Result<DualSolution> {
    let horizon = problem.horizon;
    if !(h_t > 0.0 && h_t <= horizon) {
        return invalid(format!("time step {h_t} must lie in (0, {horizon}]"));
    }
    let n = (horizon / h_t).round().max(1.0) as usize;
    let h = horizon / n as f64;
    let inner = h.min(FLOW_STEP);
    // characteristic from the boundary and its survival weight
    let mut y = Vec::with_capacity(n + 1);
    let mut e = Vec::with_capacity(n + 1);
    let (mut yk, mut ik) = (0.0, 0.0);
    for k in 0..=n {
        if k > 0 {
            (yk, ik) = problem.advance(yk, ik, (k - 1) as f64 * h, h, inner)?;
        }
        y.push(yk);
        e.push((-ik).exp());
    }
    let kernel: Vec<f64> = (0..=n).map(|k| problem.rate(y[k]) * e[k]).collect();
    if kernel.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow(format!("renewal kernel is not finite on [0, {horizon}]")));
    }
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
    let src = |m: usize, k: usize| problem.source.eval(y[m - k], times[m]) * e[m - k];
    let diag = 1.0 - 0.5 * h * kernel[0];
    if diag <= 0.0 {
        return invalid(format!("time step {h} too large for the rate at 0 (need h * d(0) < 2)"));
    }
    let mut psi0 = vec![0.0; n + 1];
    for k in (0..n).rev() {
        let mut acc = 0.5 * src(k, k) + 0.5 * (psi0[n] * kernel[n - k] + src(n, k));
        for m in (k + 1)..n {
            acc += psi0[m] * kernel[m - k] + src(m, k);
        }
        psi0[k] = h * acc / diag;
        if !psi0[k].is_finite() {
            return Err(Error::Overflow(format!("boundary trace diverged at t={}", times[k])));
        }
    }
    let mut sup_s: f64 = 0.0;
    for (m, t) in times.iter().enumerate() {
        for k in 0..=m {
            sup_s = sup_s.max(problem.source.eval(y[m - k], *t).abs());
        }
    }
    let sup_psi = psi0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let support_radius = match (&problem.d, problem.source.x_support, problem.g.speed_bound()) {
        (RateFunction::Constant(c), Some(rs), Some(speed)) if *c == 0.0 => Some(rs + horizon * speed),
        _ => None,
    };
    Ok(DualSolution {
        step: h,
        times,
        psi0,
        support_radius,
        stability_ratio: if sup_s > 0.0 { sup_psi / sup_s } else { 0.0 },
    })
}

impl DualSolution {
    fn psi0_at(&self, t: f64) -> f64 {
        let n = self.times.len() - 1;
        let pos = (t / self.step).clamp(0.0, n as f64);
        let k = (pos.floor() as usize).min(n.saturating_sub(1));
        let w = pos - k as f64;
        if n == 0 {
            return self.psi0[0];
        }
        (1.0 - w) * self.psi0[k] + w * self.psi0[k + 1]
    }
}

/// `psi(x, t)` by trapezoidal quadrature along the characteristic from `(x, t)`
/// on the nodes `{t} U {grid times > t}`.
pub fn evaluate_psi(problem: &DualProblem, solution: &DualSolution, x: f64, t: f64) -> Result<f64> {
    let hi = *solution.times.last().expect("non-empty grid");
    if !(t >= 0.0 && t <= hi) {
        return Err(Error::Extrapolation { t, lo: 0.0, hi });
    }
    if x < 0.0 {
        return invalid("psi lives on the half-line");
    }
    if t == hi {
        return Ok(0.0);
    }
    if let Some(r) = solution.support_radius {
        if x >= r {
            return Ok(0.0);
        }
    }
    let inner = solution.step.min(FLOW_STEP);
    let mut nodes = vec![t];
    nodes.extend(solution.times.iter().copied().filter(|s| *s > t));
    let integrand = |s: f64, xs: f64, is: f64, p0: f64| (p0 * problem.rate(xs) + problem.source.eval(xs, s)) * (-is).exp();
    let (mut xs, mut is) = (x, 0.0);
    let first = solution.psi0_at(t);
    let mut prev = integrand(t, xs, is, first);
    let mut total = 0.0;
    for w in nodes.windows(2) {
        (xs, is) = problem.advance(xs, is, w[0], w[1] - w[0], inner)?;
        let k = (w[1] / solution.step).round() as usize;
        let cur = integrand(w[1], xs, is, solution.psi0[k]);
        total += 0.5 * (w[1] - w[0]) * (prev + cur);
        prev = cur;
    }
    Ok(total)
}

/// Result of [`duality_crosscheck`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DualityCheck {
    /// Monte Carlo estimate of `E int_0^T S(X_t, t) dt`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `int psi(x, 0) u0(dx)` from the finer of two dual solves.
    pub rhs: f64,
    /// `|rhs(h) - rhs(h/2)|`, a conservative bound on the discretisation error.
    pub discretisation_budget: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub stability_ratio: f64,
}

const PATH_GL_NODES: usize = 8;

fn path_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(PATH_GL_NODES))
}

fn segment_integral(model: &ModelSpec, s: &StatePoint, t0: f64, len: f64, source: &SourceTerm) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    let (nodes, weights) = path_rule();
    let half = 0.5 * len;
    let mut acc = 0.0;
    for (z, w) in nodes.iter().zip(weights) {
        let tau = half * (1.0 + z);
        let StatePoint::Age(x) = model.flow(s, tau) else { unreachable!() };
        acc += w * source.eval(x, t0 + tau);
    }
    half * acc
}

fn path_functional<R: Rng + ?Sized>(
    model: &ModelSpec,
    start: StatePoint,
    horizon: f64,
    source: &SourceTerm,
    rng: &mut R,
) -> Result<f64> {
    let mut s = start;
    let mut t = 0.0;
    let mut total = 0.0;
    while t < horizon {
        let w = DEFAULT_LOOKAHEAD.min(horizon - t);
        match thinning_next_event(model, &s, t, w, rng)? {
            Some(tau) => {
                total += segment_integral(model, &s, t, tau, source);
                let pre = model.flow(&s, tau);
                s = model.marginal_jump(&pre, rng);
                t += tau;
            }
            None => {
                total += segment_integral(model, &s, t, w, source);
                s = model.flow(&s, w);
                t = if w == horizon - t { horizon } else { t + w };
            }
        }
    }
    Ok(total)
}

/// Compares `E int_0^T S(X_t, t) dt` over simulated renewal paths started from
/// `u0` with `int psi(x, 0) u0(dx)` from the dual solver.
pub fn duality_crosscheck(
    model: &ModelSpec,
    u0: &EmpiricalMeasure,
    source: &SourceTerm,
    horizon: f64,
    n_particles: usize,
    h_t: f64,
    seed: u64,
) -> Result<DualityCheck> {
    let Dynamics::Renewal { g, d, birth } = model.dynamics() else {
        return invalid("the duality check applies to the renewal model");
    };
    if birth.0 != Law1D::dirac(0.0) {
        return invalid("the duality check needs births at age 0");
    }
    if n_particles == 0 {
        return invalid("need at least one particle");
    }
    let problem = DualProblem::new(g.clone(), d.clone(), source.clone(), horizon)?;
    let values: Vec<f64> = (0..n_particles)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let start = u0.atoms()[u0.index_for(rng.random::<f64>())].clone();
            path_functional(model, start, horizon, source, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let (lhs, lhs_stderr) = mean_and_stderr(&values);
    let rhs_at = |h: f64| -> Result<(f64, f64)> {
        let sol = solve_volterra(&problem, h)?;
        let mut acc = 0.0;
        for (a, w) in u0.atoms().iter().zip(u0.weights()) {
            let StatePoint::Age(x) = a else { return invalid("initial law must live on ages") };
            acc += w * evaluate_psi(&problem, &sol, *x, 0.0)?;
        }
        Ok((acc, sol.stability_ratio))
    };
    let (coarse, _) = rhs_at(h_t)?;
    let (rhs, stability_ratio) = rhs_at(0.5 * h_t)?;
    let discretisation_budget = (coarse - rhs).abs();
    let tolerance = 3.0 * lhs_stderr + discretisation_budget + 1e-12;
    Ok(DualityCheck {
        lhs,
        lhs_stderr,
        rhs,
        discretisation_budget,
        tolerance,
        passed: (lhs - rhs).abs() <= tolerance,
        stability_ratio,
    })
}
