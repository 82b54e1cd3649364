use std::f64::consts::PI;

use popcoupling::dual::{duality_crosscheck, evaluate_psi, solve_volterra, DualProblem, SourceTerm};
use popcoupling::measures::{BirthLaw, EmpiricalMeasure, GrowthFunction, Law1D, Monotonicity, RateFunction, Space, StatePoint};
use popcoupling::models::{Dynamics, ModelSpec};

const T: f64 = 1.0;
const L: f64 = 20.0;

fn exact(x: f64, t: f64) -> f64 {
    let b = if x < L { (PI * x / (2.0 * L)).cos().powi(4) } else { 0.0 };
    (PI * (T - t) / (2.0 * T)).sin() * b
}

fn manufactured() -> DualProblem {
    let g = |x: f64| 1.0 / (1.0 + x);
    let d = |x: f64| 1.0 + 0.5 * x.sin();
    let source = move |x: f64, t: f64| {
        let a = (PI * (T - t) / (2.0 * T)).sin();
        let da = -PI / (2.0 * T) * (PI * (T - t) / (2.0 * T)).cos();
        let u = PI * x / (2.0 * L);
        let (b, db) = if x < L { (u.cos().powi(4), -4.0 * u.cos().powi(3) * u.sin() * PI / (2.0 * L)) } else { (0.0, 0.0) };
        -da * b - g(x) * a * db + d(x) * a * (b - 1.0)
    };
    DualProblem::new(
        GrowthFunction::custom("1/(1+x)", g, true, Some(1.0)),
        RateFunction::custom(
            "1+sin/2",
            move |s| if let StatePoint::Age(x) = s { d(*x) } else { 1.0 },
            |_, _| 1.5,
            Monotonicity::None,
        ),
        SourceTerm::new("manufactured", source, None),
        T,
    )
    .unwrap()
}

fn boundary_error(p: &DualProblem, h: f64) -> f64 {
    let sol = solve_volterra(p, h).unwrap();
    sol.times.iter().zip(&sol.psi0).map(|(t, v)| (v - exact(0.0, *t)).abs()).fold(0.0, f64::max)
}

#[test]
fn manufactured_solution_converges_at_second_order() {
    let p = manufactured();
    let errs: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|h| boundary_error(&p, *h)).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.7..=2.3).contains(&order), "errors {errs:?}");
    }
    let sol = solve_volterra(&p, 0.01).unwrap();
    for (x, t) in [(0.5, 0.0), (2.0, 0.3), (5.0, 0.77)] {
        let v = evaluate_psi(&p, &sol, x, t).unwrap();
        assert!((v - exact(x, t)).abs() < 1e-3, "{x} {t} {v} {}", exact(x, t));
    }
}

#[test]
fn crosscheck_matches_simulation() {
    let model = ModelSpec::new(
        Dynamics::Renewal {
            g: GrowthFunction::Constant(1.0),
            d: RateFunction::power(1.0, 1.0, 1.0).unwrap(),
            birth: BirthLaw::new(Law1D::dirac(0.0)).unwrap(),
        },
        1.0,
    )
    .unwrap();
    let u0 = EmpiricalMeasure::uniform(Space::Age, vec![StatePoint::Age(0.0), StatePoint::Age(0.7), StatePoint::Age(2.0)]).unwrap();
    let s = SourceTerm::bump(0.6, 0.5, 1.0, 0.8, 1.0).unwrap();
    let c = duality_crosscheck(&model, &u0, &s, 2.0, 40_000, 0.02, 7).unwrap();
    assert!(c.passed, "{c:?}");
    assert!(c.lhs > 0.05);
}

fn pure_ageing(source: SourceTerm, horizon: f64) -> (ModelSpec, DualProblem) {
    let model = ModelSpec::new(
        Dynamics::Renewal {
            g: GrowthFunction::Constant(1.0),
            d: RateFunction::constant(0.0).unwrap(),
            birth: BirthLaw::new(Law1D::dirac(0.0)).unwrap(),
        },
        1.0,
    )
    .unwrap();
    let p = DualProblem::new(GrowthFunction::Constant(1.0), RateFunction::constant(0.0).unwrap(), source, horizon).unwrap();
    (model, p)
}

#[test]
fn deterministic_ageing_reduces_to_a_line_integral() {
    // Without deaths an individual born at 0 has age t at time t.
    let s = SourceTerm::new("sin", |x, t| (1.0 + x).sin() * (t + 0.5), None);
    let (model, _) = pure_ageing(s.clone(), 1.5);
    let u0 = EmpiricalMeasure::uniform(Space::Age, vec![StatePoint::Age(0.0)]).unwrap();
    let c = duality_crosscheck(&model, &u0, &s, 1.5, 200, 0.01, 3).unwrap();
    // int_0^T sin(1+t)(t+1/2) dt
    let anti = |t: f64| -(t + 0.5) * (1.0 + t).cos() + (1.0 + t).sin();
    let exact = anti(1.5) - anti(0.0);
    assert!((c.lhs - exact).abs() < 1e-9, "{} {exact}", c.lhs);
    assert!((c.rhs - exact).abs() < 1e-4, "{} {exact}", c.rhs);
    assert!(c.passed);
}

#[test]
fn solution_vanishes_beyond_the_support_radius() {
    let s = SourceTerm::bump(1.0, 0.5, 0.5, 0.3, 2.0).unwrap();
    let (_, p) = pure_ageing(s, 1.0);
    let sol = solve_volterra(&p, 0.01).unwrap();
    let r = sol.support_radius.expect("compact source with no death rate");
    assert!((r - 2.5).abs() < 1e-12);
    for t in [0.0, 0.3, 0.9] {
        assert_eq!(evaluate_psi(&p, &sol, r + 0.1, t).unwrap(), 0.0);
        assert_eq!(evaluate_psi(&p, &sol, 1.6, t).unwrap(), 0.0);
    }
    assert!(evaluate_psi(&p, &sol, 0.6, 0.0).unwrap() > 0.0);
}
