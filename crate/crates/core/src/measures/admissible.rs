//! Numerical certificate for the truncation level `a`.
//!
//! The condition is `a <= factor * inf sep(p,q) * max(d(p),d(q)) / |d(p)-d(q)|`
//! over pairs whose constraint distance is at most `a`. The infimum is
//! estimated on a user-declared grid, augmented with near-diagonal pairs (to
//! capture the local limit `d / |grad d|`) and refined around the worst pair.

use serde::{Deserialize, Serialize};

use super::rate::RateFunction;
use super::state::{Space, StatePoint};
use crate::error::{invalid, Error, Result};

/// Safety factor applied by [`suggest_a`].
pub const SUGGEST_SAFETY: f64 = 0.9;

const REFINE_ROUNDS: usize = 6;
const REL_TOL: f64 = 1e-12;

/// Distance on the rate coordinates of two points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `|x - y|` on the first coordinate.
    Abs,
    /// Sum of coordinate distances.
    L1,
    /// `2|x1 - y1| + |x2 - y2|`.
    DoubledFirst,
}

impl Metric {
    fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Abs => (a[0] - b[0]).abs(),
            Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::DoubledFirst => 2.0 * (a[0] - b[0]).abs() + (a[1] - b[1]).abs(),
        }
    }
}

/// Which pairs enter the infimum and how their ratio is formed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityRule {
    /// Pairs with `constraint <= a` are examined.
    pub constraint: Metric,
    /// Separation appearing in the numerator of the ratio.
    pub numerator: Metric,
    /// Multiplier of the infimum (`1 - mean_r` for fragmentation kernels).
    pub factor: f64,
    /// Only compare points sharing the torus index.
    pub per_state: bool,
}

impl AdmissibilityRule {
    pub fn scalar() -> Self {
        Self { constraint: Metric::Abs, numerator: Metric::Abs, factor: 1.0, per_state: false }
    }

    pub fn per_state() -> Self {
        Self { per_state: true, ..Self::scalar() }
    }

    pub fn two_time() -> Self {
        Self { constraint: Metric::DoubledFirst, numerator: Metric::L1, factor: 1.0, per_state: false }
    }

    pub fn fragmentation(mean_r: f64) -> Self {
        Self { factor: 1.0 - mean_r, ..Self::scalar() }
    }

    pub fn age_size(mean_r: f64) -> Self {
        Self { constraint: Metric::L1, numerator: Metric::L1, factor: 1.0 - mean_r, per_state: false }
    }
}

/// Validation grid over the rate coordinates of a space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points: Vec<usize>) -> Self {
        Self { lower, upper, points }
    }

    pub fn uniform_1d(lo: f64, hi: f64, n: usize) -> Self {
        Self::new(vec![lo], vec![hi], vec![n])
    }

    fn validate(&self, dims: usize) -> Result<()> {
        if self.lower.len() != dims || self.upper.len() != dims || self.points.len() != dims {
            return invalid(format!("grid must have {dims} coordinate ranges"));
        }
        if self.points.contains(&0) {
            return invalid("validation grid is empty");
        }
        for (l, u) in self.lower.iter().zip(&self.upper) {
            if !(l.is_finite() && u.is_finite() && l <= u && *l >= 0.0) {
                return invalid("grid ranges must satisfy 0 <= lower <= upper");
            }
        }
        Ok(())
    }

    fn spacing(&self, k: usize) -> f64 {
        if self.points[k] > 1 {
            (self.upper[k] - self.lower[k]) / (self.points[k] - 1) as f64
        } else {
            1.0
        }
    }

    fn axis(&self, k: usize) -> Vec<f64> {
        let n = self.points[k];
        (0..n)
            .map(|i| if n == 1 { self.lower[k] } else { self.lower[k] + self.spacing(k) * i as f64 })
            .collect()
    }
}

/// Outcome of [`admissible_a`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Admissibility {
    Valid {
        /// Smallest `factor * ratio` seen, `None` when every rate difference vanished.
        worst_ratio: Option<f64>,
        pairs_examined: usize,
    },
    Violated(Witness),
}

impl Admissibility {
    pub fn is_valid(&self) -> bool {
        matches!(self, Admissibility::Valid { .. })
    }
}

/// A pair on which `a <= factor * ratio` fails, with both sides.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub first: StatePoint,
    pub second: StatePoint,
    /// Left side: the candidate `a`.
    pub candidate: f64,
    /// Right side: `factor * sep * max / |diff|` at the pair.
    pub bound: f64,
}

#[derive(Clone)]
struct Node {
    point: StatePoint,
    coords: Vec<f64>,
    rate: f64,
    state: u32,
}

#[derive(Clone)]
struct Worst {
    ratio: f64,
    p: Node,
    q: Node,
}

struct Scanner<'a> {
    rate: &'a RateFunction,
    space: Space,
    rule: AdmissibilityRule,
    grid: &'a GridSpec,
    threshold: f64,
    examined: usize,
    worst: Option<Worst>,
}

fn rate_dims(space: Space) -> Result<usize> {
    match space {
        Space::Age | Space::AgeState { .. } | Space::AgePosition { .. } => Ok(1),
        Space::TimePair | Space::AgeSize => Ok(2),
        Space::Trait { .. } => Err(Error::InvalidParameter(
            "trait space carries no jump rate; admissibility does not apply".into(),
        )),
    }
}

impl<'a> Scanner<'a> {
    fn make(&self, c: &[f64], state: u32) -> Option<Node> {
        let inside = c
            .iter()
            .enumerate()
            .all(|(k, v)| *v >= self.grid.lower[k] - 1e-15 && *v <= self.grid.upper[k] + 1e-15 && *v >= 0.0);
        if !inside {
            return None;
        }
        let point = match self.space {
            Space::Age => StatePoint::Age(c[0]),
            Space::AgeState { .. } => StatePoint::AgeState { age: c[0], state },
            Space::AgePosition { dim } => StatePoint::AgePosition { age: c[0], pos: vec![0.0; dim] },
            Space::TimePair => {
                if c[1] <= c[0] {
                    return None;
                }
                StatePoint::TimePair { x1: c[0], x2: c[1] }
            }
            Space::AgeSize => StatePoint::AgeSize { age: c[0], size: c[1] },
            Space::Trait { .. } => return None,
        };
        let rate = self.rate.evaluate(&point);
        Some(Node { point, coords: c.to_vec(), rate, state })
    }

    fn visit(&mut self, p: &Node, q: &Node) {
        if self.rule.per_state && p.state != q.state {
            return;
        }
        let c = self.rule.constraint.eval(&p.coords, &q.coords);
        if c > self.threshold * (1.0 + REL_TOL) || c == 0.0 {
            return;
        }
        self.examined += 1;
        let max = p.rate.max(q.rate);
        let diff = (p.rate - q.rate).abs();
        if diff == 0.0 || diff <= f64::EPSILON * max {
            return;
        }
        let ratio = self.rule.factor * self.rule.numerator.eval(&p.coords, &q.coords) * max / diff;
        if self.worst.as_ref().is_none_or(|w| ratio < w.ratio) {
            self.worst = Some(Worst { ratio, p: p.clone(), q: q.clone() });
        }
    }

    fn states(&self) -> Vec<u32> {
        match self.space {
            Space::AgeState { states } => (1..=states).collect(),
            _ => vec![0],
        }
    }

    fn run(&mut self) {
        let dims = self.grid.points.len();
        let axes: Vec<Vec<f64>> = (0..dims).map(|k| self.grid.axis(k)).collect();
        let mut nodes = Vec::new();
        for state in self.states() {
            let mut idx = vec![0usize; dims];
            loop {
                let c: Vec<f64> = (0..dims).map(|k| axes[k][idx[k]]).collect();
                if let Some(n) = self.make(&c, state) {
                    nodes.push(n);
                }
                let mut k = 0;
                while k < dims {
                    idx[k] += 1;
                    if idx[k] < axes[k].len() {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == dims {
                    break;
                }
            }
        }
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                self.visit(&nodes[i], &nodes[j]);
            }
        }
        // near-diagonal pairs
        for n in &nodes {
            for k in 0..dims {
                let delta = self.grid.spacing(k).min(self.threshold) / 64.0;
                for sign in [1.0, -1.0] {
                    let mut c = n.coords.clone();
                    c[k] += sign * delta;
                    if let Some(m) = self.make(&c, n.state) {
                        self.visit(n, &m);
                    }
                }
            }
        }
        // local refinement around the current minimiser
        for round in 1..=REFINE_ROUNDS {
            let Some(w) = self.worst.clone() else { break };
            let mut local = Vec::new();
            for centre in [&w.p, &w.q] {
                let h: Vec<f64> = (0..dims)
                    .map(|k| self.grid.spacing(k).min(self.threshold) / (1u64 << round) as f64 / 4.0)
                    .collect();
                let mut off = vec![-4i32; dims];
                loop {
                    let c: Vec<f64> =
                        (0..dims).map(|k| centre.coords[k] + off[k] as f64 * h[k]).collect();
                    if let Some(m) = self.make(&c, centre.state) {
                        local.push(m);
                    }
                    let mut k = 0;
                    while k < dims {
                        off[k] += 1;
                        if off[k] <= 4 {
                            break;
                        }
                        off[k] = -4;
                        k += 1;
                    }
                    if k == dims {
                        break;
                    }
                }
            }
            for i in 0..local.len() {
                for j in (i + 1)..local.len() {
                    self.visit(&local[i], &local[j]);
                }
            }
        }
    }
}

fn scan(
    rate: &RateFunction,
    space: Space,
    rule: AdmissibilityRule,
    grid: &GridSpec,
    threshold: f64,
) -> Result<(Option<Worst>, usize)> {
    grid.validate(rate_dims(space)?)?;
    if !(rule.factor > 0.0 && rule.factor <= 1.0) {
        return invalid(format!("admissibility factor {} must lie in (0, 1]", rule.factor));
    }
    let mut s = Scanner { rate, space, rule, grid, threshold, examined: 0, worst: None };
    s.run();
    Ok((s.worst, s.examined))
}

/// Checks `candidate_a` against the admissibility condition on `grid`.
pub fn admissible_a(
    rate: &RateFunction,
    space: Space,
    rule: AdmissibilityRule,
    candidate_a: f64,
    grid: &GridSpec,
) -> Result<Admissibility> {
    if !(candidate_a.is_finite() && candidate_a > 0.0) {
        return invalid(format!("candidate a must be > 0, got {candidate_a}"));
    }
    let (worst, examined) = scan(rate, space, rule, grid, candidate_a)?;
    Ok(match worst {
        Some(w) if candidate_a > w.ratio * (1.0 + REL_TOL) => Admissibility::Violated(Witness {
            first: w.p.point,
            second: w.q.point,
            candidate: candidate_a,
            bound: w.ratio,
        }),
        w => Admissibility::Valid { worst_ratio: w.map(|w| w.ratio), pairs_examined: examined },
    })
}

/// Grid estimate of `a0` over pairs within constraint distance 1, returned as
/// `0.9 * min(a0, 1)`.
pub fn suggest_a(rate: &RateFunction, space: Space, rule: AdmissibilityRule, grid: &GridSpec) -> Result<f64> {
    let (worst, _) = scan(rate, space, rule, grid, 1.0)?;
    let a0 = worst.map_or(f64::INFINITY, |w| w.ratio);
    if a0 <= 0.0 {
        return invalid("admissibility infimum is zero on the grid; no positive truncation level exists");
    }
    Ok(SUGGEST_SAFETY * a0.min(1.0))
}
