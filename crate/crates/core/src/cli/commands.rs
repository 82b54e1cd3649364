//! Subcommand pipelines, callable without the argument parser.

use rand::Rng;
use serde::Serialize;

use super::config::{ExperimentConfig, InitialConfig, Keyword, Truncation};
use crate::dual::{duality_crosscheck, solve_volterra, DualProblem, DualityCheck};
use crate::error::{Error, Result};
use crate::measures::{admissible_a, suggest_a, Admissibility, EmpiricalMeasure, GridSpec, Space, StatePoint};
use crate::models::{check_delta_sign, check_i_inequality, check_sexual_convexity, Dynamics, ModelSpec};
use crate::otsolver::{sample_plan, transport_cost};
use crate::pdmp::{simulate_coupled, simulate_coupled_replicas, stream, CheckpointSummary, CoupledPair, SimConfig};

/// Slack of the coupling upper bound `exact_ot <= mean cost`.
pub const COUPLING_BOUND_SLACK: f64 = 1e-10;
/// Worst margin accepted by the inequality sweep.
pub const SWEEP_TOLERANCE: f64 = -1e-10;
pub const DEFAULT_OT_SUBSAMPLE: usize = 512;
pub const DEFAULT_CHECKPOINTS: usize = 10;

const INIT_STREAM: u64 = u64::MAX;

fn missing(key: &str, command: &str) -> Error {
    Error::Config(format!("`{key}` is required by {command}"))
}

fn default_grid(space: Space) -> GridSpec {
    match space {
        Space::TimePair | Space::AgeSize => GridSpec::new(vec![0.0, 0.0], vec![10.0, 10.0], vec![41, 41]),
        _ => GridSpec::uniform_1d(0.0, 10.0, 401),
    }
}

/// A model with its truncation level resolved and checked.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub model: ModelSpec,
    /// `None` for the untruncated mean-field cost.
    pub a: Option<f64>,
    pub auto: bool,
    pub grid: Option<GridSpec>,
    pub admissibility: Option<Admissibility>,
}

impl Resolved {
    pub fn admissible(&self) -> bool {
        self.admissibility.as_ref().is_none_or(Admissibility::is_valid)
    }
}

/// Builds the model, resolving `"auto"` through `suggest_a` and re-validating
/// every truncation level on the grid.
pub fn resolve(cfg: &ExperimentConfig) -> Result<Resolved> {
    let dynamics = cfg.model.build()?;
    let probe = ModelSpec::new(dynamics.clone(), 1.0)?;
    let (Some(rule), Some(rate)) = (probe.admissibility_rule(), probe.rate()) else {
        return Ok(Resolved { model: probe, a: None, auto: false, grid: None, admissibility: None });
    };
    let space = probe.space();
    let grid = cfg.grid.clone().unwrap_or_else(|| default_grid(space));
    let (a, auto) = match cfg.a.ok_or_else(|| missing("a", "this model"))? {
        Truncation::Value(v) => (v, false),
        Truncation::Keyword(Keyword::Auto) => (suggest_a(rate, space, rule, &grid)?, true),
    };
    let admissibility = admissible_a(rate, space, rule, a, &grid)?;
    Ok(Resolved { model: ModelSpec::new(dynamics, a)?, a: Some(a), auto, grid: Some(grid), admissibility: Some(admissibility) })
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidateReport {
    pub model: String,
    pub a: Option<f64>,
    pub auto: bool,
    pub grid: Option<GridSpec>,
    pub admissibility: Option<Admissibility>,
    pub passed: bool,
}

pub fn run_validate_a(cfg: &ExperimentConfig) -> Result<ValidateReport> {
    let r = resolve(cfg)?;
    Ok(ValidateReport {
        model: r.model.name().to_string(),
        a: r.a,
        auto: r.auto,
        passed: r.admissible(),
        grid: r.grid,
        admissibility: r.admissibility,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContractRow {
    pub time: f64,
    /// Exact transport cost between the marginals of the first `ot_subsample` coupled pairs.
    pub exact_ot: f64,
    pub mean_coupled_cost: f64,
    pub stderr: f64,
    /// Mean cost of the same pairs whose marginals enter `exact_ot`.
    pub subsample_coupled_cost: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractReport {
    pub model: String,
    pub a: Option<f64>,
    pub auto: bool,
    pub admissible: bool,
    pub n_pairs: usize,
    pub replicas: usize,
    pub ot_subsample: usize,
    /// Transport cost between the two initial clouds (replica 0).
    pub initial_transport_cost: f64,
    pub rows: Vec<ContractRow>,
    pub summaries: Vec<CheckpointSummary>,
    /// Fraction of pairs with at least one event by the horizon.
    pub touched_at_horizon: f64,
    pub coupling_bound_ok: bool,
    /// Mean cost non-increasing between consecutive checkpoints within 3 sigma.
    pub stepwise_contraction_ok: bool,
    /// Mean cost never above its initial value by more than 3 sigma.
    pub contraction_from_start_ok: bool,
    pub passed: bool,
}

fn initial_pairs<R: Rng + ?Sized>(
    init: &InitialConfig,
    model: &ModelSpec,
    m: usize,
    n: usize,
    rng: &mut R,
) -> Result<(f64, Vec<(StatePoint, StatePoint)>)> {
    let space = model.space();
    let mu = init.first.to_measure(space, m, rng)?;
    let nu = init.second.to_measure(space, m, rng)?;
    let plan = transport_cost(&mu, &nu, model.cost())?;
    let pairs = sample_plan(&plan, &mu, &nu, n, rng)?;
    Ok((plan.cost, pairs))
}

fn subsample_row(model: &ModelSpec, summary: &CheckpointSummary, cloud: &[CoupledPair], m: usize) -> Result<ContractRow> {
    let head = &cloud[..m.min(cloud.len())];
    let space = model.space();
    let cost = model.cost();
    let mu = EmpiricalMeasure::uniform(space, head.iter().map(|p| p.first.clone()).collect())?;
    let nu = EmpiricalMeasure::uniform(space, head.iter().map(|p| p.second.clone()).collect())?;
    let exact_ot = transport_cost(&mu, &nu, cost)?.cost;
    let mut costs: Vec<f64> = head.iter().map(|p| cost.evaluate(&p.first, &p.second)).collect();
    costs.sort_by(f64::total_cmp);
    Ok(ContractRow {
        time: summary.time,
        exact_ot,
        mean_coupled_cost: summary.mean_cost,
        stderr: summary.stderr,
        subsample_coupled_cost: costs.iter().sum::<f64>() / costs.len() as f64,
    })
}

fn within_3_sigma(later: &CheckpointSummary, earlier: &CheckpointSummary) -> bool {
    later.mean_cost <= earlier.mean_cost + 3.0 * earlier.stderr.hypot(later.stderr)
}

/// Samples both initial clouds, couples them optimally, runs the coupled
/// dynamics and compares the coupled cost with exact transport at every
/// checkpoint.
pub fn run_contract(cfg: &ExperimentConfig) -> Result<ContractReport> {
    const CMD: &str = "contract";
    let resolved = resolve(cfg)?;
    let model = resolved.model.clone();
    let init = cfg.initial.as_ref().ok_or_else(|| missing("initial", CMD))?;
    let n = cfg.n_particles.ok_or_else(|| missing("n_particles", CMD))?;
    let horizon = cfg.horizon.ok_or_else(|| missing("horizon", CMD))?;
    let count = cfg.checkpoints.unwrap_or(DEFAULT_CHECKPOINTS);
    let m = cfg.ot_subsample.unwrap_or(DEFAULT_OT_SUBSAMPLE);
    let replicas = cfg.replicas.unwrap_or(1);
    if count == 0 || m == 0 || replicas == 0 || n == 0 {
        return Err(Error::Config("checkpoints, ot_subsample, replicas and n_particles must be >= 1".into()));
    }
    let mut sim = SimConfig::new(model.clone(), n, horizon, SimConfig::evenly_spaced(horizon, count), cfg.seed)?;
    if let Some(w) = cfg.lookahead {
        sim = sim.with_lookahead(w)?;
    }
    let mut rng = stream(cfg.seed, INIT_STREAM);
    let mut starts = Vec::with_capacity(replicas);
    let mut initial_transport_cost = 0.0;
    for r in 0..replicas {
        let (c, pairs) = initial_pairs(init, &model, m, n, &mut rng)?;
        if r == 0 {
            initial_transport_cost = c;
        }
        starts.push(pairs);
    }
    let (summaries, first_run) = if replicas == 1 {
        let run = simulate_coupled(&sim, &starts[0])?;
        (run.summaries.clone(), run)
    } else {
        let mut rr = simulate_coupled_replicas(&sim, &starts)?;
        (rr.summaries, rr.runs.swap_remove(0))
    };
    let rows = summaries
        .iter()
        .zip(&first_run.clouds)
        .map(|(s, cloud)| subsample_row(&model, s, cloud, m))
        .collect::<Result<Vec<_>>>()?;
    let coupling_bound_ok = rows.iter().all(|r| r.exact_ot <= r.subsample_coupled_cost + COUPLING_BOUND_SLACK);
    let stepwise_contraction_ok = summaries.windows(2).all(|w| within_3_sigma(&w[1], &w[0]));
    let contraction_from_start_ok = summaries.iter().all(|s| within_3_sigma(s, &summaries[0]));
    let admissible = resolved.admissible();
    Ok(ContractReport {
        model: model.name().to_string(),
        a: resolved.a,
        auto: resolved.auto,
        admissible,
        n_pairs: n,
        replicas,
        ot_subsample: m,
        initial_transport_cost,
        touched_at_horizon: summaries.last().map_or(0.0, |s| s.touched),
        rows,
        summaries,
        coupling_bound_ok,
        stepwise_contraction_ok,
        contraction_from_start_ok,
        passed: admissible && coupling_bound_ok && stepwise_contraction_ok && contraction_from_start_ok,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub check: String,
    pub samples: usize,
    pub worst_margin: f64,
    /// Sample attaining the worst margin.
    pub witness: String,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub model: String,
    pub a: Option<f64>,
    pub admissible: bool,
    pub entries: Vec<SweepEntry>,
    pub passed: bool,
}

struct Sampler<'a> {
    space: Space,
    lower: &'a [f64],
    upper: &'a [f64],
}

impl Sampler<'_> {
    fn coords<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.lower.len())
            .map(|k| match self.space {
                Space::AgeState { states } if k == 1 => rng.random_range(1..=states) as f64,
                _ => self.lower[k] + (self.upper[k] - self.lower[k]) * rng.random::<f64>(),
            })
            .collect()
    }

    /// A uniform point, or with probability 1/2 a point within 5% of the box of `near`.
    fn partner<R: Rng + ?Sized>(&self, near: &[f64], rng: &mut R) -> Vec<f64> {
        if rng.random::<bool>() {
            return self.coords(rng);
        }
        near.iter()
            .enumerate()
            .map(|(k, c)| match self.space {
                Space::AgeState { .. } if k == 1 => *c,
                _ => {
                    let w = self.upper[k] - self.lower[k];
                    (c + 0.1 * w * (rng.random::<f64>() - 0.5)).clamp(self.lower[k], self.upper[k])
                }
            })
            .collect()
    }

    /// Rejection step for spaces with constraints between coordinates.
    fn valid<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        mut draw: impl FnMut(&mut R) -> Vec<f64>,
    ) -> Result<(Vec<f64>, StatePoint)> {
        for _ in 0..MAX_REJECTIONS {
            let c = draw(rng);
            if let Ok(p) = self.space.point(&c) {
                return Ok((c, p));
            }
        }
        Err(Error::Config(format!("sweep box yields no valid {} points", self.space.name())))
    }
}

const MAX_REJECTIONS: usize = 1000;

fn fmt_point(c: &[f64]) -> String {
    let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(", "))
}

#[derive(Default)]
struct Worst {
    margin: Option<f64>,
    witness: String,
}

impl Worst {
    fn offer(&mut self, margin: f64, witness: impl FnOnce() -> String) {
        if self.margin.is_none_or(|m| margin < m || margin.is_nan()) {
            self.margin = Some(margin);
            self.witness = witness();
        }
    }

    fn entry(self, check: &str, samples: usize) -> SweepEntry {
        let worst_margin = self.margin.unwrap_or(f64::INFINITY);
        SweepEntry {
            check: check.to_string(),
            samples,
            worst_margin,
            witness: self.witness,
            passed: worst_margin >= SWEEP_TOLERANCE,
        }
    }
}

/// Randomised evaluation of the model's contraction inequalities.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let resolved = resolve(cfg)?;
    let model = &resolved.model;
    let sweep = cfg.sweep.as_ref().ok_or_else(|| missing("sweep", "sweep"))?;
    let space = model.space();
    let len = space.coord_len();
    if sweep.lower.len() != len || sweep.upper.len() != len {
        return Err(Error::Config(format!("sweep box needs {len} coordinate ranges for the {} space", space.name())));
    }
    if sweep.lower.iter().zip(&sweep.upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::Config("sweep box needs lower <= upper".into()));
    }
    let sampler = Sampler { space, lower: &sweep.lower, upper: &sweep.upper };
    let mut rng = stream(cfg.seed, 0);
    let n = sweep.samples;
    let mut entries = Vec::new();
    if let Dynamics::Sexual { mix, .. } = model.dynamics() {
        let mut worst = Worst::default();
        for _ in 0..n {
            let x = sampler.coords(&mut rng);
            let xs = sampler.coords(&mut rng);
            let y = sampler.partner(&x, &mut rng);
            let ys = sampler.partner(&xs, &mut rng);
            let m = check_sexual_convexity(mix, &x, &xs, &y, &ys)?;
            worst.offer(m.value, || {
                format!("x={} x*={} y={} y*={}", fmt_point(&x), fmt_point(&xs), fmt_point(&y), fmt_point(&ys))
            });
        }
        entries.push(worst.entry("convexity", n));
    } else {
        let renewal = matches!(model.dynamics(), Dynamics::Renewal { .. });
        let (mut w_i, mut w_delta) = (Worst::default(), Worst::default());
        for _ in 0..n {
            let (xc, x) = sampler.valid(&mut rng, |r| sampler.coords(r))?;
            let (_, y) = sampler.valid(&mut rng, |r| sampler.partner(&xc, r))?;
            let wit = || format!("x={x} y={y}");
            if renewal {
                w_i.offer(check_i_inequality(model, &x, &y)?.value, wit);
            }
            w_delta.offer(check_delta_sign(model, &x, &y)?.margin(), wit);
        }
        if renewal {
            entries.push(w_i.entry("i_inequality", n));
        }
        entries.push(w_delta.entry("delta", n));
    }
    let admissible = resolved.admissible();
    Ok(SweepReport {
        model: model.name().to_string(),
        a: resolved.a,
        admissible,
        passed: admissible && entries.iter().all(|e| e.passed),
        entries,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DualReport {
    pub check: DualityCheck,
    pub source: String,
    pub h_t: f64,
    pub horizon: f64,
    pub n_particles: usize,
    /// Boundary trace on the finer grid, `(t, psi(0, t))`.
    #[serde(skip)]
    pub trace: Vec<(f64, f64)>,
}

/// Duality cross-check between simulated renewal paths and the dual solver.
pub fn run_dual_check(cfg: &ExperimentConfig) -> Result<DualReport> {
    const CMD: &str = "dual-check";
    let dual = cfg.dual.as_ref().ok_or_else(|| missing("dual", CMD))?;
    let horizon = cfg.horizon.ok_or_else(|| missing("horizon", CMD))?;
    let n = cfg.n_particles.ok_or_else(|| missing("n_particles", CMD))?;
    let dynamics = cfg.model.build()?;
    let Dynamics::Renewal { g, d, .. } = &dynamics else {
        return Err(Error::Config("dual-check needs the renewal model".into()));
    };
    let model = ModelSpec::new(dynamics.clone(), 1.0)?;
    let source = dual.source.build()?;
    let mut rng = stream(cfg.seed, INIT_STREAM);
    let u0 = dual.initial.to_measure(Space::Age, DEFAULT_OT_SUBSAMPLE, &mut rng)?;
    let check = duality_crosscheck(&model, &u0, &source, horizon, n, dual.h_t, cfg.seed)?;
    let problem = DualProblem::new(g.clone(), d.clone(), source.clone(), horizon)?;
    let sol = solve_volterra(&problem, 0.5 * dual.h_t)?;
    Ok(DualReport {
        check,
        source: source.label,
        h_t: dual.h_t,
        horizon,
        n_particles: n,
        trace: sol.times.into_iter().zip(sol.psi0).collect(),
    })
}
