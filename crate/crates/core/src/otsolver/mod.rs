//! Exact optimal transport between finitely supported measures for truncated
//! costs, plus an exhaustive oracle for small instances.

mod flow;
mod hungarian;

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::{EmpiricalMeasure, Space, StatePoint};

/// Default bound on the number of atoms per measure.
pub const DEFAULT_CAP: usize = 4096;

/// Largest size accepted by [`brute_force_cost`].
pub const BRUTE_FORCE_MAX: usize = 8;

/// Pair cost on a state space.
///
/// All truncated variants are bounded by `a`. `TruncAbsState` and
/// `TruncWeighted` are metrics; `Power` with `p > 1` is not.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostFunction {
    /// `min(a, |x - y|)`, Euclidean on all coordinates except a torus index.
    TruncAbs { a: f64 },
    /// `min(a, |x - y|)` on equal torus indices, `a` otherwise.
    TruncAbsState { a: f64 },
    /// `min(a, |x - y| + |z - r|)`: first coordinate plus Euclidean remainder.
    TruncSum { a: f64 },
    /// `min(a, 2|x1 - y1| + |x2 - y2|)`.
    TruncWeighted { a: f64 },
    /// `|x - y|^p`, untruncated.
    Power { p: f64 },
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl CostFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CostFunction::TruncAbs { a }
            | CostFunction::TruncAbsState { a }
            | CostFunction::TruncSum { a }
            | CostFunction::TruncWeighted { a } => {
                if !(a > 0.0) {
                    return invalid(format!("truncation level must be > 0, got {a}"));
                }
            }
            CostFunction::Power { p } => {
                if !(p.is_finite() && p > 0.0) {
                    return invalid(format!("power exponent must be > 0, got {p}"));
                }
            }
        }
        Ok(())
    }

    /// Truncation level, `+inf` for the power cost.
    pub fn truncation(&self) -> f64 {
        match *self {
            CostFunction::TruncAbs { a }
            | CostFunction::TruncAbsState { a }
            | CostFunction::TruncSum { a }
            | CostFunction::TruncWeighted { a } => a,
            CostFunction::Power { .. } => f64::INFINITY,
        }
    }

    /// Same variant with a different truncation level (identity for `Power`).
    pub fn with_truncation(self, a: f64) -> Self {
        match self {
            CostFunction::TruncAbs { .. } => CostFunction::TruncAbs { a },
            CostFunction::TruncAbsState { .. } => CostFunction::TruncAbsState { a },
            CostFunction::TruncSum { .. } => CostFunction::TruncSum { a },
            CostFunction::TruncWeighted { .. } => CostFunction::TruncWeighted { a },
            p @ CostFunction::Power { .. } => p,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostFunction::TruncAbs { .. } => "trunc_abs",
            CostFunction::TruncAbsState { .. } => "trunc_abs_state",
            CostFunction::TruncSum { .. } => "trunc_sum",
            CostFunction::TruncWeighted { .. } => "trunc_weighted",
            CostFunction::Power { .. } => "power",
        }
    }

    /// Rejects variants that make no sense on `space`.
    pub fn check_space(&self, space: Space) -> Result<()> {
        let ok = match self {
            CostFunction::TruncAbsState { .. } => matches!(space, Space::AgeState { .. }),
            CostFunction::TruncWeighted { .. } => matches!(space, Space::TimePair),
            CostFunction::TruncSum { .. } => {
                matches!(space, Space::AgePosition { .. } | Space::AgeSize | Space::TimePair)
            }
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(format!("cost {} is not defined on {} space", self.name(), space.name())))
        }
    }

    pub fn evaluate(&self, x: &StatePoint, y: &StatePoint) -> f64 {
        match *self {
            CostFunction::TruncAbs { a } => a.min(euclid(&plain_coords(x), &plain_coords(y))),
            CostFunction::TruncAbsState { a } => match (x, y) {
                (StatePoint::AgeState { age: u, state: i }, StatePoint::AgeState { age: v, state: j }) => {
                    if i == j {
                        a.min((u - v).abs())
                    } else {
                        a
                    }
                }
                _ => a.min(euclid(&x.coords(), &y.coords())),
            },
            CostFunction::TruncSum { a } => {
                let (p, q) = (x.coords(), y.coords());
                let head = (p[0] - q[0]).abs();
                let tail = if p.len() > 1 { euclid(&p[1..], &q[1..]) } else { 0.0 };
                a.min(head + tail)
            }
            CostFunction::TruncWeighted { a } => {
                let (p, q) = (x.coords(), y.coords());
                a.min(2.0 * (p[0] - q[0]).abs() + (p[1] - q[1]).abs())
            }
            CostFunction::Power { p } => {
                let d = euclid(&x.coords(), &y.coords());
                if p == 1.0 {
                    d
                } else {
                    d.powf(p)
                }
            }
        }
    }
}

/// Coordinates entering the plain distance: everything but a torus index.
fn plain_coords(p: &StatePoint) -> Vec<f64> {
    match p {
        StatePoint::AgeState { age, .. } => vec![*age],
        other => other.coords(),
    }
}

/// Finitely supported coupling between two measures.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransportPlan {
    /// `(source index, target index, mass)` in lexicographic index order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

impl TransportPlan {
    /// Maximum deviation of the plan's marginals from the given weights.
    pub fn marginal_error(&self, source: &[f64], target: &[f64]) -> f64 {
        let mut rows = vec![0.0; source.len()];
        let mut cols = vec![0.0; target.len()];
        for (i, j, m) in &self.pairs {
            rows[*i] += m;
            cols[*j] += m;
        }
        let r = rows.iter().zip(source).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let c = cols.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        r.max(c)
    }

    /// Plan with source and target exchanged.
    pub fn transposed(&self) -> Self {
        let mut pairs: Vec<_> = self.pairs.iter().map(|(i, j, m)| (*j, *i, *m)).collect();
        pairs.sort_by_key(|p| (p.0, p.1));
        Self { pairs, cost: self.cost }
    }
}

/// Sum that does not depend on the order of its terms.
fn order_free_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn cmp_measures(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        for ((pa, wa), (pb, wb)) in a.atoms().iter().zip(a.weights()).zip(b.atoms().iter().zip(b.weights())) {
            for (x, y) in pa.coords().iter().zip(pb.coords()) {
                match x.total_cmp(&y) {
                    Ordering::Equal => {}
                    o => return o,
                }
            }
            match wa.total_cmp(wb) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        Ordering::Equal
    })
}

/// Exact `T(mu, nu)` with the default atom cap.
pub fn transport_cost(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: CostFunction) -> Result<TransportPlan> {
    transport_cost_capped(mu, nu, cost, DEFAULT_CAP)
}

/// Exact `T(mu, nu)`: Hungarian assignment for equal-size equal-weight inputs,
/// successive shortest paths otherwise.
///
/// The problem is always solved in a canonical orientation of the two inputs,
/// so swapping them returns the transposed plan and a bit-identical cost.
pub fn transport_cost_capped(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    cost: CostFunction,
    cap: usize,
) -> Result<TransportPlan> {
    cost.validate()?;
    if mu.space() != nu.space() {
        return Err(Error::SpaceMismatch(format!(
            "{} measure against {} measure",
            mu.space().name(),
            nu.space().name()
        )));
    }
    cost.check_space(mu.space())?;
    for m in [mu, nu] {
        if m.len() > cap {
            return Err(Error::CapExceeded { count: m.len(), cap });
        }
    }
    if cmp_measures(mu, nu) == Ordering::Greater {
        return Ok(solve_oriented(nu, mu, cost).transposed());
    }
    Ok(solve_oriented(mu, nu, cost))
}

fn solve_oriented(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: CostFunction) -> TransportPlan {
    let (n, m) = (mu.len(), nu.len());
    let mut matrix = vec![0.0; n * m];
    for (i, x) in mu.atoms().iter().enumerate() {
        for (j, y) in nu.atoms().iter().enumerate() {
            matrix[i * m + j] = cost.evaluate(x, y);
        }
    }
    let mut pairs = Vec::new();
    if n == m && mu.has_equal_weights() && nu.has_equal_weights() {
        let assignment = hungarian::solve(&matrix, n);
        for (i, j) in assignment.into_iter().enumerate() {
            pairs.push((i, j, mu.weights()[i]));
        }
    } else {
        let flow = flow::solve(&matrix, mu.weights(), nu.weights());
        for i in 0..n {
            for j in 0..m {
                if flow[i * m + j] > 0.0 {
                    pairs.push((i, j, flow[i * m + j]));
                }
            }
        }
    }
    pairs.sort_by_key(|p| (p.0, p.1));
    let value = order_free_sum(pairs.iter().map(|(i, j, w)| w * matrix[i * m + j]).collect());
    TransportPlan { pairs, cost: value }
}

/// Minimum over all assignments of two equal-weight measures of equal size.
pub fn brute_force_cost(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: CostFunction) -> Result<f64> {
    let n = mu.len();
    if n != nu.len() || !mu.has_equal_weights() || !nu.has_equal_weights() {
        return invalid("brute force needs two equal-weight measures with the same atom count");
    }
    if n > BRUTE_FORCE_MAX {
        return Err(Error::CapExceeded { count: n, cap: BRUTE_FORCE_MAX });
    }
    let mut c = vec![0.0; n * n];
    for (i, x) in mu.atoms().iter().enumerate() {
        for (j, y) in nu.atoms().iter().enumerate() {
            c[i * n + j] = cost.evaluate(x, y);
        }
    }
    // Heap's algorithm over column permutations
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |p: &[usize]| order_free_sum(p.iter().enumerate().map(|(i, j)| c[i * n + j]).collect());
    let mut best = total(&perm);
    let mut stack = vec![0usize; n];
    let mut k = 1;
    while k < n {
        if stack[k] < k {
            if k % 2 == 0 {
                perm.swap(0, k);
            } else {
                perm.swap(stack[k], k);
            }
            best = best.min(total(&perm));
            stack[k] += 1;
            k = 1;
        } else {
            stack[k] = 0;
            k += 1;
        }
    }
    Ok(best / n as f64)
}

/// `n` i.i.d. pairs drawn from the plan's mass.
pub fn sample_plan<R: Rng + ?Sized>(
    plan: &TransportPlan,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(StatePoint, StatePoint)>> {
    if plan.pairs.is_empty() {
        return invalid("plan has no pairs");
    }
    if plan.pairs.iter().any(|(i, j, _)| *i >= mu.len() || *j >= nu.len()) {
        return invalid("plan indices do not fit the given measures");
    }
    let mut acc = 0.0;
    let cumulative: Vec<f64> = plan
        .pairs
        .iter()
        .map(|(_, _, m)| {
            acc += m;
            acc
        })
        .collect();
    let total = acc;
    Ok((0..n)
        .map(|_| {
            let target = rng.random::<f64>() * total;
            let mut k = cumulative.partition_point(|c| *c <= target).min(plan.pairs.len() - 1);
            while plan.pairs[k].2 == 0.0 && k > 0 {
                k -= 1;
            }
            let (i, j, _) = plan.pairs[k];
            (mu.atoms()[i].clone(), nu.atoms()[j].clone())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(Space::Age, xs.iter().map(|x| StatePoint::Age(*x)).collect()).unwrap()
    }

    #[test]
    fn dirac_pair() {
        let p = transport_cost(&line(&[0.0]), &line(&[3.0]), CostFunction::TruncAbs { a: 1.0 }).unwrap();
        assert_eq!(p.cost, 1.0);
        assert_eq!(p.pairs, vec![(0, 0, 1.0)]);
    }

    #[test]
    fn identical_measures_cost_nothing() {
        let mu = line(&[0.3, 1.0, 4.0, 2.5]);
        let p = transport_cost(&mu, &mu, CostFunction::TruncAbs { a: 1.0 }).unwrap();
        assert_eq!(p.cost, 0.0);
        assert!(p.pairs.iter().all(|(i, j, _)| i == j));
    }

    #[test]
    fn worked_examples() {
        let c = CostFunction::TruncAbs { a: 1.0 };
        let p = transport_cost(&line(&[0.0, 2.0]), &line(&[0.5, 2.1]), c).unwrap();
        assert!((p.cost - 0.3).abs() < 1e-15);
        let c = CostFunction::TruncAbs { a: 2.0 };
        let p = transport_cost(&line(&[0.0, 1.0]), &line(&[0.9, 10.0]), c).unwrap();
        assert!((p.cost - 1.05).abs() < 1e-15);
        assert_eq!(p.pairs.iter().map(|(i, j, _)| (*i, *j)).collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn unequal_weights_use_flow() {
        let mu = EmpiricalMeasure::new(Space::Age, vec![StatePoint::Age(0.0), StatePoint::Age(1.0)], vec![0.25, 0.75])
            .unwrap();
        let nu = line(&[0.0, 1.0, 2.0]);
        let p = transport_cost(&mu, &nu, CostFunction::TruncAbs { a: 10.0 }).unwrap();
        assert!(p.marginal_error(mu.weights(), nu.weights()) < 1e-12);
        // 1/4 stays at 0, 1/12 of the mass at 0 comes from 1, 1/3 moves 1 -> 2
        assert!((p.cost - (1.0 / 12.0 + 1.0 / 3.0)).abs() < 1e-12, "{}", p.cost);
    }

    #[test]
    fn symmetric_bitwise() {
        let mu = line(&[0.1, 0.7, 3.3, 5.0, 9.1]);
        let nu = line(&[0.2, 2.2, 2.9, 6.0, 8.0]);
        let c = CostFunction::TruncAbs { a: 1.0 };
        let a = transport_cost(&mu, &nu, c).unwrap();
        let b = transport_cost(&nu, &mu, c).unwrap();
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
        assert_eq!(a.pairs, b.transposed().pairs);
    }

    #[test]
    fn rejects_mismatch_and_cap() {
        let mu = line(&[0.0]);
        let nu = EmpiricalMeasure::dirac(Space::AgeSize, StatePoint::AgeSize { age: 0.0, size: 1.0 }).unwrap();
        assert!(matches!(transport_cost(&mu, &nu, CostFunction::TruncAbs { a: 1.0 }), Err(Error::SpaceMismatch(_))));
        let big = line(&[0.0, 1.0, 2.0]);
        assert!(matches!(
            transport_cost_capped(&big, &big, CostFunction::TruncAbs { a: 1.0 }, 2),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn brute_force_examples() {
        let c = CostFunction::TruncAbs { a: 1.0 };
        assert!((brute_force_cost(&line(&[0.0, 2.0]), &line(&[0.5, 2.1]), c).unwrap() - 0.3).abs() < 1e-15);
        let c = CostFunction::TruncAbs { a: 2.0 };
        assert!((brute_force_cost(&line(&[0.0, 1.0]), &line(&[0.9, 10.0]), c).unwrap() - 1.05).abs() < 1e-15);
        let single = brute_force_cost(&line(&[1.0]), &line(&[1.4]), c).unwrap();
        assert_eq!(single, c.evaluate(&StatePoint::Age(1.0), &StatePoint::Age(1.4)));
        assert!(brute_force_cost(&line(&[0.0; 9]), &line(&[0.0; 9]), c).is_err());
    }

    #[test]
    fn state_cost_penalises_index_mismatch() {
        let c = CostFunction::TruncAbsState { a: 0.5 };
        let p = StatePoint::AgeState { age: 1.0, state: 1 };
        let q = StatePoint::AgeState { age: 1.0, state: 2 };
        assert_eq!(c.evaluate(&p, &q), 0.5);
        assert_eq!(c.evaluate(&p, &p), 0.0);
    }

    #[test]
    fn plan_sampling_frequencies() {
        let mu = line(&[0.0, 2.0]);
        let nu = line(&[0.5, 2.1]);
        let plan = transport_cost(&mu, &nu, CostFunction::TruncAbs { a: 1.0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pairs = sample_plan(&plan, &mu, &nu, 100_000, &mut rng).unwrap();
        let hits = pairs.iter().filter(|(x, y)| *x == StatePoint::Age(0.0) && *y == StatePoint::Age(0.5)).count();
        assert!((hits as f64 / 1e5 - 0.5).abs() < 0.01);
        assert!(pairs.iter().all(|(x, _)| *x == StatePoint::Age(0.0) || *x == StatePoint::Age(2.0)));
    }
}
