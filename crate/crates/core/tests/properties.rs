use proptest::prelude::*;

use popcoupling::dual::{evaluate_psi, solve_volterra, DualProblem, SourceTerm};
use popcoupling::measures::{
    admissible_a, suggest_a, AdmissibilityRule, BirthLaw, EmpiricalMeasure, GridSpec, GrowthFunction, Law1D,
    Monotonicity, RateFunction, Space, StatePoint,
};
use popcoupling::models::{check_delta_sign, check_i_inequality, Dynamics, ModelSpec};
use popcoupling::otsolver::{brute_force_cost, transport_cost, CostFunction};
use popcoupling::pdmp::{simulate_coupled, SimConfig};

fn ages(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..10.0f64, 1..=max_len)
}

fn cloud(xs: &[f64]) -> EmpiricalMeasure {
    EmpiricalMeasure::uniform(Space::Age, xs.iter().map(|x| StatePoint::Age(*x)).collect()).unwrap()
}

fn weighted(xs: &[f64], raw: &[f64]) -> EmpiricalMeasure {
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    EmpiricalMeasure::new(Space::Age, xs.iter().map(|x| StatePoint::Age(*x)).collect(), w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn transport_is_symmetric_bounded_and_zero_on_the_diagonal(
        xs in ages(12), ys in ages(12), a in 0.1..3.0f64,
    ) {
        let cost = CostFunction::TruncAbs { a };
        let (mu, nu) = (cloud(&xs), cloud(&ys));
        let fwd = transport_cost(&mu, &nu, cost).unwrap();
        let back = transport_cost(&nu, &mu, cost).unwrap();
        prop_assert_eq!(fwd.cost.to_bits(), back.cost.to_bits());
        prop_assert!(fwd.cost <= a + 1e-12);
        prop_assert_eq!(transport_cost(&mu, &mu, cost).unwrap().cost, 0.0);
        prop_assert!(fwd.marginal_error(mu.weights(), nu.weights()) < 1e-9);
    }

    #[test]
    fn truncated_cost_satisfies_the_triangle_inequality(
        xs in ages(6), ys in ages(6), zs in ages(6), a in 0.1..3.0f64,
    ) {
        let cost = CostFunction::TruncAbs { a };
        let (mu, nu, la) = (cloud(&xs), cloud(&ys), cloud(&zs));
        let direct = transport_cost(&mu, &la, cost).unwrap().cost;
        let via = transport_cost(&mu, &nu, cost).unwrap().cost + transport_cost(&nu, &la, cost).unwrap().cost;
        prop_assert!(direct <= via + 1e-9);
    }

    #[test]
    fn unequal_weights_never_beat_any_feasible_coupling(
        pts in prop::collection::vec((0.0..10.0f64, 0.05..1.0f64), 1..10),
        qts in prop::collection::vec((0.0..10.0f64, 0.05..1.0f64), 1..10),
        a in 0.1..3.0f64,
    ) {
        let (xs, wx): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let (ys, wy): (Vec<f64>, Vec<f64>) = qts.into_iter().unzip();
        let (mu, nu) = (weighted(&xs, &wx), weighted(&ys, &wy));
        let cost = CostFunction::TruncAbs { a };
        let plan = transport_cost(&mu, &nu, cost).unwrap();
        prop_assert!(plan.marginal_error(mu.weights(), nu.weights()) < 1e-9);
        // the independent coupling is feasible
        let mut independent = 0.0;
        for (x, p) in mu.atoms().iter().zip(mu.weights()) {
            for (y, q) in nu.atoms().iter().zip(nu.weights()) {
                independent += p * q * cost.evaluate(x, y);
            }
        }
        prop_assert!(plan.cost <= independent + 1e-9);
    }

    #[test]
    fn exact_matches_brute_force_on_power_costs(xs in ages(7), shift in 0.0..2.0f64, p in 1.0..3.0f64) {
        let ys: Vec<f64> = xs.iter().rev().map(|x| x + shift).collect();
        let cost = CostFunction::Power { p };
        let (mu, nu) = (cloud(&xs), cloud(&ys));
        let exact = transport_cost(&mu, &nu, cost).unwrap().cost;
        let brute = brute_force_cost(&mu, &nu, cost).unwrap();
        prop_assert!((exact - brute).abs() <= 1e-10 * (1.0 + brute));
    }

    #[test]
    fn admissibility_is_nested_in_a(alpha in 0.2..2.0f64, beta in 0.1..2.0f64, p in 1.0..2.0f64, scale in 0.1..1.0f64) {
        let d = RateFunction::power(alpha, beta, p).unwrap();
        let grid = GridSpec::uniform_1d(0.0, 5.0, 101);
        let a = suggest_a(&d, Space::Age, AdmissibilityRule::scalar(), &grid).unwrap();
        for cand in [a, a * scale] {
            prop_assert!(admissible_a(&d, Space::Age, AdmissibilityRule::scalar(), cand, &grid).unwrap().is_valid());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn renewal_drift_has_the_contraction_sign(
        alpha in 0.2..2.0f64, beta in 0.1..2.0f64, p in 1.0..2.0f64, hi in 0.1..3.0f64,
        pairs in prop::collection::vec((0.0..5.0f64, 0.0..5.0f64), 50),
    ) {
        let d = RateFunction::power(alpha, beta, p).unwrap();
        let grid = GridSpec::uniform_1d(0.0, 5.0, 201);
        let a = suggest_a(&d, Space::Age, AdmissibilityRule::scalar(), &grid).unwrap();
        let model = ModelSpec::new(
            Dynamics::Renewal { g: GrowthFunction::Constant(1.0), d, birth: BirthLaw::new(Law1D::uniform(0.0, hi).unwrap()).unwrap() },
            a,
        ).unwrap();
        for (x, y) in pairs {
            let (x, y) = (StatePoint::Age(x), StatePoint::Age(y));
            prop_assert!(check_i_inequality(&model, &x, &y).unwrap().value >= -1e-10);
            prop_assert!(check_delta_sign(&model, &x, &y).unwrap().margin() >= -1e-10);
        }
    }

    #[test]
    fn diagonal_pairs_never_separate(start in prop::collection::vec(0.0..3.0f64, 20), seed in any::<u64>()) {
        let model = ModelSpec::new(
            Dynamics::GrowthFragmentation {
                g: GrowthFunction::Constant(1.0),
                d: RateFunction::power(1.0, 1.0, 1.0).unwrap(),
                ratio: popcoupling::measures::FragmentRatio::new(Law1D::uniform(0.0, 1.0).unwrap()).unwrap(),
            },
            0.4,
        ).unwrap();
        let pairs: Vec<_> = start.iter().map(|x| (StatePoint::Age(*x), StatePoint::Age(*x))).collect();
        let cfg = SimConfig::new(model, pairs.len(), 3.0, vec![1.0, 3.0], seed).unwrap();
        let run = simulate_coupled(&cfg, &pairs).unwrap();
        for s in &run.summaries {
            prop_assert_eq!(s.mean_cost, 0.0);
            prop_assert_eq!(s.solo_events, 0);
        }
    }

    #[test]
    fn same_seed_same_trajectories(seed in any::<u64>()) {
        let model = ModelSpec::new(
            Dynamics::TwoTime { d: RateFunction::power(1.0, 0.5, 1.0).unwrap() },
            0.3,
        ).unwrap();
        let pairs = vec![
            (StatePoint::TimePair { x1: 0.0, x2: 1.0 }, StatePoint::TimePair { x1: 0.5, x2: 2.0 });
            30
        ];
        let cfg = SimConfig::new(model, 30, 2.0, vec![2.0], seed).unwrap();
        let a = simulate_coupled(&cfg, &pairs).unwrap();
        let b = simulate_coupled(&cfg, &pairs).unwrap();
        prop_assert_eq!(a.clouds, b.clouds);
    }
}

fn bump_rate(base: f64, delta: f64) -> RateFunction {
    RateFunction::custom(
        "regularised",
        move |s| base + delta * (s.coords()[0]).sin().powi(2),
        move |_, _| base + delta,
        Monotonicity::None,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Perturbing d by at most delta moves psi by at most T sup|psi| delta when S >= 0.
    #[test]
    fn dual_solution_is_stable_under_rate_perturbation(
        base in 0.5..2.0f64, delta in 0.01..0.3f64, x0 in 0.3..2.0f64, t0 in 0.3..1.5f64,
    ) {
        let horizon = 2.0;
        let source = SourceTerm::bump(x0, 0.4, t0, 0.3, 1.0).unwrap();
        let g = GrowthFunction::Constant(1.0);
        let plain = DualProblem::new(g.clone(), bump_rate(base, 0.0), source.clone(), horizon).unwrap();
        let moved = DualProblem::new(g, bump_rate(base, delta), source, horizon).unwrap();
        let (sp, sm) = (solve_volterra(&plain, 0.01).unwrap(), solve_volterra(&moved, 0.01).unwrap());
        let pts: Vec<(f64, f64)> = (0..=10).flat_map(|i| (0..=5).map(move |j| (0.4 * i as f64, 0.39 * j as f64))).collect();
        let mut sup = 0.0f64;
        let mut gap = 0.0f64;
        for (x, t) in pts {
            let a = evaluate_psi(&plain, &sp, x, t).unwrap();
            let b = evaluate_psi(&moved, &sm, x, t).unwrap();
            prop_assert!(a >= -1e-12);
            sup = sup.max(a.abs());
            gap = gap.max((a - b).abs());
        }
        prop_assert!(gap <= 1.05 * horizon * sup * delta + 1e-9, "gap {} bound {}", gap, horizon * sup * delta);
    }
}
