//! Pointwise sign checks used by the contraction estimates. Kernel integrals
//! are exact for atom and uniform laws (split at the kinks of the truncated
//! cost) and Gauss–Legendre otherwise; the rule used is reported.

use serde::Serialize;

use super::{Dynamics, ModelSpec};
use crate::error::{invalid, Result};
use crate::measures::{Law1D, MatingMix, Quadrature, StatePoint};

/// A signed margin (non-negative when the inequality holds).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Margin {
    pub value: f64,
    pub quadrature: Quadrature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedSign {
    NonNegative,
    NonPositive,
}

/// A drift quantity together with the sign the estimate needs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaCheck {
    pub value: f64,
    pub expected: ExpectedSign,
    pub quadrature: Quadrature,
}

impl DeltaCheck {
    /// The value oriented so that `>= 0` means the expected sign holds.
    pub fn margin(&self) -> f64 {
        match self.expected {
            ExpectedSign::NonNegative => self.value,
            ExpectedSign::NonPositive => -self.value,
        }
    }
}

fn pos(v: f64) -> f64 {
    v.max(0.0)
}

/// `rho(x, y) - I(x, y)` for the renewal model, with
/// `I = [(d(x)-d(y))+ E rho(Z, y) + (d(y)-d(x))+ E rho(x, Z)] / max(d(x), d(y))`.
pub fn check_i_inequality(model: &ModelSpec, x: &StatePoint, y: &StatePoint) -> Result<Margin> {
    let Dynamics::Renewal { d, birth, .. } = model.dynamics() else {
        return invalid("the I-inequality is specific to the renewal model");
    };
    let cost = model.cost();
    let a = model.a();
    let rho = cost.evaluate(x, y);
    let (dx, dy) = (d.evaluate(x), d.evaluate(y));
    let top = dx.max(dy);
    if top == 0.0 {
        return Ok(Margin { value: rho, quadrature: Quadrature::Exact });
    }
    let (StatePoint::Age(xv), StatePoint::Age(yv)) = (x, y) else {
        return invalid("renewal states are scalar ages");
    };
    let mut q = Quadrature::Exact;
    let mut i = 0.0;
    if dx > dy {
        let (v, qq) = birth.0.expect(|z| a.min((z - yv).abs()), &[yv - a, *yv, yv + a]);
        i += (dx - dy) / top * v;
        q = q.worst(qq);
    }
    if dy > dx {
        let (v, qq) = birth.0.expect(|z| a.min((xv - z).abs()), &[xv - a, *xv, xv + a]);
        i += (dy - dx) / top * v;
        q = q.worst(qq);
    }
    Ok(Margin { value: rho - i, quadrature: q })
}

fn expect_ratio(law: &Law1D, f: impl Fn(f64) -> f64, breaks: &[f64]) -> (f64, Quadrature) {
    let clean: Vec<f64> = breaks.iter().copied().filter(|b| b.is_finite()).collect();
    law.expect(f, &clean)
}

/// The drift quantity of each model's contraction estimate at a pair.
///
/// * renewal: `-max d * rho + (dx-dy)+ E rho(Z,y) + (dy-dx)+ E rho(x,Z)`, non-positive;
/// * renewal system, equal phases: `max d_i * min(|x-y|, a) - |d_i(x) - d_i(y)| a`,
///   non-negative; different phases: the two independent-jump terms, non-positive;
/// * space-age, two-time, growth-fragmentation: the jump part of the coupled
///   generator applied to the cost, non-positive;
/// * age-size: `max d * rho - min d * E min(a, r|z - z'|) - a |d - d'|`, non-negative.
pub fn check_delta_sign(model: &ModelSpec, x: &StatePoint, y: &StatePoint) -> Result<DeltaCheck> {
    let cost = model.cost();
    let a = model.a();
    let rho = cost.evaluate(x, y);
    let non_pos = |value, quadrature| DeltaCheck { value, expected: ExpectedSign::NonPositive, quadrature };
    match model.dynamics() {
        Dynamics::Renewal { d, .. } => {
            let m = check_i_inequality(model, x, y)?;
            let top = d.evaluate(x).max(d.evaluate(y));
            Ok(non_pos(-top * m.value, m.quadrature))
        }
        Dynamics::RenewalSystem { d, states, .. } => {
            let (
                StatePoint::AgeState { age: u, state: i },
                StatePoint::AgeState { age: v, state: j },
            ) = (x, y)
            else {
                return invalid("renewal-system states carry a phase");
            };
            let (dx, dy) = (d.evaluate(x), d.evaluate(y));
            if i == j {
                let value = dx.max(dy) * (u - v).abs().min(a) - (dx - dy).abs() * a;
                return Ok(DeltaCheck { value, expected: ExpectedSign::NonNegative, quadrature: Quadrature::Exact });
            }
            let jx = StatePoint::AgeState { age: 0.0, state: i % states + 1 };
            let jy = StatePoint::AgeState { age: 0.0, state: j % states + 1 };
            let value = dx * (cost.evaluate(&jx, y) - rho) + dy * (cost.evaluate(x, &jy) - rho);
            Ok(non_pos(value, Quadrature::Exact))
        }
        Dynamics::SpaceAge { d, noise } => {
            let (StatePoint::AgePosition { age: xa, pos: z }, StatePoint::AgePosition { age: ya, pos: r }) = (x, y)
            else {
                return invalid("space-age states carry a position");
            };
            let eps = noise.scale;
            let (dx, dy) = (d.evaluate(x), d.evaluate(y));
            let zr: Vec<f64> = z.iter().zip(r).map(|(p, q)| p - q).collect();
            let spread = zr.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut q = Quadrature::Exact;
            // common jump: ages reset, the shared eta cancels in z - r
            let mut value = dx.min(dy) * (a.min(spread) - rho);
            // solo jumps: E min(a, |other age| + |z - r - s eps eta|) with s = +-1
            let solo = |other_age: f64, sign: f64| {
                let f = |eta: &[f64]| {
                    let n = zr.iter().zip(eta).map(|(w, e)| (w - sign * eps * e).powi(2)).sum::<f64>().sqrt();
                    a.min(other_age + n)
                };
                let breaks = if zr.len() == 1 {
                    let w = zr[0];
                    let slack = a - other_age;
                    vec![w / (sign * eps), (w - slack) / (sign * eps), (w + slack) / (sign * eps)]
                } else {
                    Vec::new()
                };
                noise.law.expect(f, &breaks)
            };
            if dx > dy {
                let (v, qq) = solo(*ya, 1.0);
                value += (dx - dy) * (v - rho);
                q = q.worst(qq);
            }
            if dy > dx {
                let (v, qq) = solo(*xa, -1.0);
                value += (dy - dx) * (v - rho);
                q = q.worst(qq);
            }
            Ok(non_pos(value, q))
        }
        Dynamics::TwoTime { d } => {
            let (StatePoint::TimePair { x1, x2 }, StatePoint::TimePair { x1: y1, x2: y2 }) = (x, y) else {
                return invalid("two-time states are time pairs");
            };
            let (dx, dy) = (d.evaluate(x), d.evaluate(y));
            let value = -dx.max(dy) * (2.0 * (x1 - y1).abs() + (x2 - y2).abs()).min(a)
                + dx.min(dy) * (x1 - y1).abs().min(a)
                + pos(dx - dy) * (2.0 * y1.abs() + (x1 - y2).abs()).min(a)
                + pos(dy - dx) * (2.0 * x1.abs() + (y1 - x2).abs()).min(a);
            Ok(non_pos(value, Quadrature::Exact))
        }
        Dynamics::GrowthFragmentation { d, ratio, .. } => {
            let (StatePoint::Age(xv), StatePoint::Age(yv)) = (x, y) else {
                return invalid("growth-fragmentation states are scalar sizes");
            };
            let (xv, yv) = (*xv, *yv);
            let (dx, dy) = (d.evaluate(x), d.evaluate(y));
            let gap = (xv - yv).abs();
            let (common, mut q) = expect_ratio(&ratio.law, |r| a.min(r * gap), &[a / gap]);
            let mut value = -dx.max(dy) * rho + dx.min(dy) * common;
            if dx > dy {
                let (v, qq) =
                    expect_ratio(&ratio.law, |r| a.min((r * xv - yv).abs()), &[yv / xv, (yv - a) / xv, (yv + a) / xv]);
                value += (dx - dy) * v;
                q = q.worst(qq);
            }
            if dy > dx {
                let (v, qq) =
                    expect_ratio(&ratio.law, |r| a.min((xv - r * yv).abs()), &[xv / yv, (xv - a) / yv, (xv + a) / yv]);
                value += (dy - dx) * v;
                q = q.worst(qq);
            }
            Ok(non_pos(value, q))
        }
        Dynamics::AgeSize { d, ratio, .. } => {
            let (StatePoint::AgeSize { size: z, .. }, StatePoint::AgeSize { size: zt, .. }) = (x, y) else {
                return invalid("age-size states are (age, size) pairs");
            };
            let (dx, dy) = (d.evaluate(x), d.evaluate(y));
            let gap = (z - zt).abs();
            let (v, q) = expect_ratio(&ratio.law, |r| a.min(r * gap), &[a / gap]);
            let value = dx.max(dy) * rho - dx.min(dy) * v - a * (dx - dy).abs();
            Ok(DeltaCheck { value, expected: ExpectedSign::NonNegative, quadrature: q })
        }
        Dynamics::Sexual { .. } => invalid("the mean-field model is checked with check_sexual_convexity"),
    }
}

fn norm_p(v: &[f64], p: f64) -> f64 {
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if p == 1.0 {
        n
    } else if p == 2.0 {
        n * n
    } else {
        n.powf(p)
    }
}

/// `theta |x'-y'|^p + (1-theta) |x*-y*|^p - E |sigma (x'-y') + (1-sigma)(x*-y*)|^p`.
pub fn check_sexual_convexity(
    mix: &MatingMix,
    x: &[f64],
    x_star: &[f64],
    y: &[f64],
    y_star: &[f64],
) -> Result<Margin> {
    let dim = x.len();
    if x_star.len() != dim || y.len() != dim || y_star.len() != dim {
        return invalid("all trait vectors must share one dimension");
    }
    let a: Vec<f64> = x.iter().zip(y).map(|(u, v)| u - v).collect();
    let b: Vec<f64> = x_star.iter().zip(y_star).map(|(u, v)| u - v).collect();
    let p = mix.p;
    let rhs = mix.theta * norm_p(&a, p) + (1.0 - mix.theta) * norm_p(&b, p);
    // sigma a + (1 - sigma) b = b + sigma (a - b); its norm is smallest at sigma*
    let diff: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
    let dd: f64 = diff.iter().map(|c| c * c).sum();
    let breaks = if dd > 0.0 { vec![-b.iter().zip(&diff).map(|(u, v)| u * v).sum::<f64>() / dd] } else { vec![] };
    let (lhs, q) = mix.law.expect(
        |s| {
            let v: Vec<f64> = b.iter().zip(&diff).map(|(u, w)| u + s * w).collect();
            norm_p(&v, p)
        },
        &breaks,
    );
    Ok(Margin { value: rhs - lhs, quadrature: q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{BirthLaw, FragmentRatio, GrowthFunction, RateFunction, SpatialNoise, VecLaw};

    fn renewal(d: RateFunction, birth: Law1D, a: f64) -> ModelSpec {
        ModelSpec::new(
            Dynamics::Renewal { g: GrowthFunction::Constant(1.0), d, birth: BirthLaw::new(birth).unwrap() },
            a,
        )
        .unwrap()
    }

    #[test]
    fn i_inequality_trivial_cases() {
        let m = renewal(RateFunction::constant(2.0).unwrap(), Law1D::dirac(0.0), 1.0);
        let v = check_i_inequality(&m, &StatePoint::Age(0.2), &StatePoint::Age(0.9)).unwrap();
        assert!((v.value - 0.7).abs() < 1e-15);
        let m = renewal(RateFunction::power(1.0, 1.0, 1.0).unwrap(), Law1D::dirac(0.0), 1.0);
        let v = check_i_inequality(&m, &StatePoint::Age(3.0), &StatePoint::Age(3.0)).unwrap();
        assert_eq!(v.value, 0.0);
        let z = renewal(RateFunction::constant(0.0).unwrap(), Law1D::dirac(0.0), 1.0);
        let v = check_i_inequality(&z, &StatePoint::Age(0.0), &StatePoint::Age(5.0)).unwrap();
        assert_eq!(v.value, 1.0);
    }

    #[test]
    fn i_inequality_closed_form() {
        // d = 1 + x, b = delta_0, a = 1, x = 0.5, y = 0.2: I = 0.3/1.5 * min(1, 0.2)
        let m = renewal(RateFunction::power(1.0, 1.0, 1.0).unwrap(), Law1D::dirac(0.0), 1.0);
        let v = check_i_inequality(&m, &StatePoint::Age(0.5), &StatePoint::Age(0.2)).unwrap();
        assert!((v.value - (0.3 - 0.2 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn renewal_system_diagonal_is_zero() {
        let m = ModelSpec::new(
            Dynamics::RenewalSystem {
                g: vec![GrowthFunction::Constant(1.0)],
                d: RateFunction::power(1.0, 1.0, 1.0).unwrap(),
                states: 2,
            },
            1.0,
        )
        .unwrap();
        let p = StatePoint::AgeState { age: 1.3, state: 2 };
        let c = check_delta_sign(&m, &p, &p).unwrap();
        assert_eq!(c.value, 0.0);
        assert_eq!(c.expected, ExpectedSign::NonNegative);
    }

    #[test]
    fn space_age_constant_rate_form() {
        let m = ModelSpec::new(
            Dynamics::SpaceAge {
                d: RateFunction::constant(2.0).unwrap(),
                noise: SpatialNoise::new(VecLaw::UniformBox { lower: vec![-1.0], upper: vec![1.0] }, 0.3).unwrap(),
            },
            1.0,
        )
        .unwrap();
        let x = StatePoint::AgePosition { age: 0.2, pos: vec![0.1] };
        let y = StatePoint::AgePosition { age: 0.5, pos: vec![0.4] };
        let c = check_delta_sign(&m, &x, &y).unwrap();
        let expected = -2.0 * (0.3f64 + 0.3).min(1.0) + 2.0 * 0.3f64.min(1.0);
        assert!((c.value - expected).abs() < 1e-14);
    }

    #[test]
    fn growth_fragmentation_uniform_closed_form() {
        // d = 1 + x, beta uniform, a = 0.5, x = 1, y = 1.2:
        // common E min(a, 0.2 r) = 0.1; solo E min(a, |r - 1.2| * 1.2)... computed by exact quadrature
        let m = ModelSpec::new(
            Dynamics::GrowthFragmentation {
                g: GrowthFunction::Constant(1.0),
                d: RateFunction::power(1.0, 1.0, 1.0).unwrap(),
                ratio: FragmentRatio::new(Law1D::uniform(0.0, 1.0).unwrap()).unwrap(),
            },
            0.5,
        )
        .unwrap();
        let c = check_delta_sign(&m, &StatePoint::Age(1.0), &StatePoint::Age(1.2)).unwrap();
        // solo second: E min(0.5, |1 - 1.2 r|) over r in [0,1]:
        // |1 - 1.2 r| >= 0.5 for r <= 5/12; below 0.5 on (5/12, 1]
        let solo = 0.5 * 5.0 / 12.0 + {
            // integral of |1 - 1.2 r| on [5/12, 1]: pieces around r = 5/6
            let f = |r: f64| r - 0.6 * r * r;
            (f(5.0 / 6.0) - f(5.0 / 12.0)) - (f(1.0) - f(5.0 / 6.0))
        };
        let expected = -2.2 * 0.2 + 2.0 * 0.1 + 0.2 * solo;
        assert!((c.value - expected).abs() < 1e-14, "{} vs {}", c.value, expected);
        assert!(c.margin() >= 0.0);
    }

    #[test]
    fn convexity_trivial_cases() {
        let mix = MatingMix::new(Law1D::dirac(0.3), 1.0).unwrap();
        // parallel, same orientation: equality
        let m = check_sexual_convexity(&mix, &[2.0, 0.0], &[5.0, 0.0], &[1.0, 0.0], &[3.0, 0.0]).unwrap();
        assert!(m.value.abs() < 1e-15);
        let m = check_sexual_convexity(&mix, &[2.0, 1.0], &[0.0, 3.0], &[2.0, 1.0], &[0.0, 3.0]).unwrap();
        assert_eq!(m.value, 0.0);
    }

    #[test]
    fn convexity_uniform_quadratic_closed_form() {
        let mix = MatingMix::new(Law1D::uniform(0.0, 1.0).unwrap(), 2.0).unwrap();
        let (a, b) = ([1.0, -2.0, 0.5], [0.3, 0.7, -1.1]);
        let zero = [0.0; 3];
        let m = check_sexual_convexity(&mix, &a, &b, &zero, &zero).unwrap();
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
        let integral = (dot(&a, &a) + dot(&b, &b) + dot(&a, &b)) / 3.0;
        let rhs = 0.5 * dot(&a, &a) + 0.5 * dot(&b, &b);
        assert!((m.value - (rhs - integral)).abs() < 1e-14);
    }
}
