//! Simulation of single and coupled jump-flow processes by thinning, and the
//! event-driven interacting system of the mean-field model.
//!
//! Every particle (or pair) owns a ChaCha stream derived from the seed and its
//! index, so results do not depend on how rayon schedules the work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::measures::{EmpiricalMeasure, StatePoint};
use crate::models::{Dynamics, EventClass, ModelSpec};
use crate::numerics::mean_and_stderr;

/// Default thinning lookahead.
pub const DEFAULT_LOOKAHEAD: f64 = 0.1;

/// Relative slack before a rate above its envelope counts as a violation.
const ENVELOPE_SLACK: f64 = 1e-12;

/// Simulation settings.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub n_particles: usize,
    pub horizon: f64,
    /// Sorted times in `[0, horizon]` at which states are recorded.
    pub checkpoints: Vec<f64>,
    pub seed: u64,
    pub lookahead: f64,
}

impl SimConfig {
    pub fn new(model: ModelSpec, n_particles: usize, horizon: f64, checkpoints: Vec<f64>, seed: u64) -> Result<Self> {
        let cfg = Self { model, n_particles, horizon, checkpoints, seed, lookahead: DEFAULT_LOOKAHEAD };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `count` equally spaced checkpoints ending at the horizon, plus time 0.
    pub fn evenly_spaced(horizon: f64, count: usize) -> Vec<f64> {
        (0..=count).map(|k| horizon * k as f64 / count as f64).collect()
    }

    pub fn with_lookahead(mut self, lookahead: f64) -> Result<Self> {
        self.lookahead = lookahead;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return invalid("need at least one particle");
        }
        if matches!(self.model.dynamics(), Dynamics::Sexual { .. }) && self.n_particles < 2 {
            return invalid("the mean-field model needs at least two particles");
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return invalid("horizon must be > 0");
        }
        if !(self.lookahead.is_finite() && self.lookahead > 0.0) {
            return invalid("thinning lookahead must be > 0");
        }
        if self.checkpoints.is_empty() {
            return invalid("need at least one checkpoint");
        }
        if self.checkpoints.iter().any(|c| !(*c >= 0.0 && *c <= self.horizon)) {
            return invalid("checkpoints must lie in [0, horizon]");
        }
        if self.checkpoints.windows(2).any(|w| w[1] < w[0]) {
            return invalid("checkpoints must be sorted");
        }
        Ok(())
    }
}

/// Random stream of particle `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn exp_sample<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1]
    -(1.0 - rng.random::<f64>()).ln() / rate
}

fn violation(time: f64, rate: f64, bound: f64, state: String) -> Error {
    Error::EnvelopeViolation { time, rate, bound, state }
}

/// Time until the next jump of a single particle within `window`, or `None`.
/// `t` is the absolute time, used only in diagnostics.
pub fn thinning_next_event<R: Rng + ?Sized>(
    model: &ModelSpec,
    s: &StatePoint,
    t: f64,
    window: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    let end = model.flow(s, window);
    let bound = model.rate_bound(s, &end);
    if bound <= 0.0 {
        return Ok(None);
    }
    let mut tau = 0.0;
    loop {
        tau += exp_sample(bound, rng);
        if tau > window {
            return Ok(None);
        }
        let c = model.flow(s, tau);
        let r = model.jump_rate(&c);
        if r > bound * (1.0 + ENVELOPE_SLACK) {
            return Err(violation(t + tau, r, bound, c.to_string()));
        }
        if rng.random::<f64>() * bound < r {
            return Ok(Some(tau));
        }
    }
}

/// Time and class of the next event of a coupled pair within `window`.
pub fn thinning_next_pair_event<R: Rng + ?Sized>(
    model: &ModelSpec,
    x: &StatePoint,
    y: &StatePoint,
    t: f64,
    window: f64,
    rng: &mut R,
) -> Result<Option<(f64, EventClass)>> {
    let (xe, ye) = (model.flow(x, window), model.flow(y, window));
    let (bx, by) = (model.rate_bound(x, &xe), model.rate_bound(y, &ye));
    let bound = if model.aligned(x, y) { bx.max(by) } else { bx + by };
    if bound <= 0.0 {
        return Ok(None);
    }
    let mut tau = 0.0;
    loop {
        tau += exp_sample(bound, rng);
        if tau > window {
            return Ok(None);
        }
        let (cx, cy) = (model.flow(x, tau), model.flow(y, tau));
        let rates = model.event_rates(&cx, &cy);
        let total = rates.total();
        if total > bound * (1.0 + ENVELOPE_SLACK) {
            return Err(violation(t + tau, total, bound, format!("{cx} / {cy}")));
        }
        let u = rng.random::<f64>() * bound;
        if u < total {
            return Ok(Some((tau, rates.pick(u))));
        }
    }
}

/// One particle's path sampled at the checkpoints, with its jump count.
fn run_single<R: Rng + ?Sized>(
    model: &ModelSpec,
    start: StatePoint,
    checkpoints: &[f64],
    lookahead: f64,
    rng: &mut R,
) -> Result<(Vec<StatePoint>, u64)> {
    let mut s = start;
    let mut t = 0.0;
    let mut jumps = 0;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &cp in checkpoints {
        while t < cp {
            let w = lookahead.min(cp - t);
            match thinning_next_event(model, &s, t, w, rng)? {
                Some(tau) => {
                    let pre = model.flow(&s, tau);
                    s = model.marginal_jump(&pre, rng);
                    jumps += 1;
                    t += tau;
                }
                None => {
                    s = model.flow(&s, w);
                    t = if w == cp - t { cp } else { t + w };
                }
            }
        }
        out.push(s.clone());
    }
    Ok((out, jumps))
}

/// Counters of a coupled pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub common: u64,
    pub solo: u64,
}

/// A pair evolved under the coupled dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPair {
    pub first: StatePoint,
    pub second: StatePoint,
    pub counts: EventCounts,
}

fn run_pair<R: Rng + ?Sized>(
    model: &ModelSpec,
    start: (StatePoint, StatePoint),
    checkpoints: &[f64],
    lookahead: f64,
    rng: &mut R,
) -> Result<Vec<CoupledPair>> {
    let (mut x, mut y) = start;
    let mut t = 0.0;
    let mut counts = EventCounts::default();
    let mut out = Vec::with_capacity(checkpoints.len());
    for &cp in checkpoints {
        while t < cp {
            let w = lookahead.min(cp - t);
            match thinning_next_pair_event(model, &x, &y, t, w, rng)? {
                Some((tau, class)) => {
                    let (px, py) = (model.flow(&x, tau), model.flow(&y, tau));
                    let (nx, ny) = model.coupled_jump((&px, &py), class, rng);
                    x = nx;
                    y = ny;
                    match class {
                        EventClass::Common => counts.common += 1,
                        _ => counts.solo += 1,
                    }
                    t += tau;
                }
                None => {
                    x = model.flow(&x, w);
                    y = model.flow(&y, w);
                    t = if w == cp - t { cp } else { t + w };
                }
            }
        }
        out.push(CoupledPair { first: x.clone(), second: y.clone(), counts });
    }
    Ok(out)
}

/// Population clouds at each checkpoint, with the number of particles that jumped.
#[derive(Clone, Debug)]
pub struct PopulationRun {
    pub clouds: Vec<EmpiricalMeasure>,
    /// Per checkpoint: particles with at least one jump so far.
    pub jumped: Vec<usize>,
}

/// Simulates `cfg.n_particles` particles started from `init` (interacting for
/// the mean-field model) and returns their empirical laws at the checkpoints.
pub fn simulate_population(cfg: &SimConfig, init: &EmpiricalMeasure) -> Result<PopulationRun> {
    cfg.validate()?;
    let model = &cfg.model;
    if init.space() != model.space() {
        return Err(Error::SpaceMismatch(format!(
            "initial law on {} space for the {} model",
            init.space().name(),
            model.name()
        )));
    }
    if let Dynamics::Sexual { .. } = model.dynamics() {
        let mut rng = stream(cfg.seed, 0);
        let start = init.sample(cfg.n_particles, &mut rng)?;
        let (paths, touched) = run_mean_field(model, start, &cfg.checkpoints, &mut rng)?;
        let clouds =
            paths.into_iter().map(|v| EmpiricalMeasure::uniform(model.space(), v)).collect::<Result<Vec<_>>>()?;
        return Ok(PopulationRun { clouds, jumped: touched });
    }
    let paths: Vec<(Vec<StatePoint>, Vec<u64>)> = (0..cfg.n_particles)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, i as u64);
            let start = init.atoms()[init.index_for(rng.random::<f64>())].clone();
            let mut jumps_at = Vec::with_capacity(cfg.checkpoints.len());
            let mut out = Vec::with_capacity(cfg.checkpoints.len());
            let mut s = start;
            let mut prev = 0.0;
            let mut total = 0;
            for &cp in &cfg.checkpoints {
                let (v, j) = run_single(model, s, &[cp - prev], cfg.lookahead, &mut rng)?;
                s = v.into_iter().next().expect("one checkpoint");
                total += j;
                jumps_at.push(total);
                out.push(s.clone());
                prev = cp;
            }
            Ok((out, jumps_at))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = cfg.checkpoints.len();
    let mut clouds = Vec::with_capacity(k);
    let mut jumped = Vec::with_capacity(k);
    for c in 0..k {
        let atoms: Vec<StatePoint> = paths.iter().map(|(p, _)| p[c].clone()).collect();
        clouds.push(EmpiricalMeasure::uniform(model.space(), atoms)?);
        jumped.push(paths.iter().filter(|(_, j)| j[c] > 0).count());
    }
    Ok(PopulationRun { clouds, jumped })
}

/// Summary of a coupled cloud at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CheckpointSummary {
    pub time: f64,
    pub mean_cost: f64,
    pub stderr: f64,
    pub n_pairs: usize,
    /// Cumulative common events over all pairs.
    pub common_events: u64,
    /// Cumulative solo events over all pairs.
    pub solo_events: u64,
    /// Fraction of pairs with at least one event so far.
    pub touched: f64,
}

/// Output of [`simulate_coupled`].
#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub summaries: Vec<CheckpointSummary>,
    pub clouds: Vec<Vec<CoupledPair>>,
}

fn summarize(model: &ModelSpec, time: f64, cloud: &[CoupledPair]) -> CheckpointSummary {
    let cost = model.cost();
    let costs: Vec<f64> = cloud.iter().map(|p| cost.evaluate(&p.first, &p.second)).collect();
    let (mean_cost, stderr) = mean_and_stderr(&costs);
    CheckpointSummary {
        time,
        mean_cost,
        stderr,
        n_pairs: cloud.len(),
        common_events: cloud.iter().map(|p| p.counts.common).sum(),
        solo_events: cloud.iter().map(|p| p.counts.solo).sum(),
        touched: cloud.iter().filter(|p| p.counts.common + p.counts.solo > 0).count() as f64 / cloud.len() as f64,
    }
}

/// Evolves `init_pairs` under the coupled dynamics and reports the mean cost
/// and its standard error at every checkpoint. `cfg.n_particles` is ignored;
/// the number of pairs is `init_pairs.len()`.
pub fn simulate_coupled(cfg: &SimConfig, init_pairs: &[(StatePoint, StatePoint)]) -> Result<CoupledRun> {
    cfg.validate()?;
    let model = &cfg.model;
    if init_pairs.is_empty() {
        return invalid("no initial pairs");
    }
    let space = model.space();
    for (x, y) in init_pairs {
        space.check(x)?;
        space.check(y)?;
    }
    let clouds: Vec<Vec<CoupledPair>> = if let Dynamics::Sexual { .. } = model.dynamics() {
        if init_pairs.len() < 2 {
            return invalid("the mean-field model needs at least two pairs");
        }
        let mut rng = stream(cfg.seed, 0);
        run_mean_field_coupled(model, init_pairs.to_vec(), &cfg.checkpoints, &mut rng)?
    } else {
        let per_pair: Vec<Vec<CoupledPair>> = init_pairs
            .par_iter()
            .enumerate()
            .map(|(i, (x, y))| {
                let mut rng = stream(cfg.seed, i as u64);
                run_pair(model, (x.clone(), y.clone()), &cfg.checkpoints, cfg.lookahead, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        (0..cfg.checkpoints.len()).map(|c| per_pair.iter().map(|p| p[c].clone()).collect()).collect()
    };
    let summaries = cfg.checkpoints.iter().zip(&clouds).map(|(t, c)| summarize(model, *t, c)).collect();
    Ok(CoupledRun { summaries, clouds })
}

/// Output of [`simulate_coupled_replicas`].
#[derive(Clone, Debug)]
pub struct ReplicaRun {
    /// Pooled summaries; the standard error is taken across replica means.
    pub summaries: Vec<CheckpointSummary>,
    pub runs: Vec<CoupledRun>,
}

/// Independent replicas of [`simulate_coupled`], replica `r` seeded with
/// [`replica_seed`]. Used for the interacting model, whose pairs are not
/// independent.
pub fn simulate_coupled_replicas(cfg: &SimConfig, replicas: &[Vec<(StatePoint, StatePoint)>]) -> Result<ReplicaRun> {
    if replicas.is_empty() {
        return invalid("need at least one replica");
    }
    let runs: Vec<CoupledRun> = replicas
        .par_iter()
        .enumerate()
        .map(|(r, pairs)| {
            let mut c = cfg.clone();
            c.seed = replica_seed(cfg.seed, r as u64);
            simulate_coupled(&c, pairs)
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = (0..cfg.checkpoints.len())
        .map(|k| {
            let at: Vec<&CheckpointSummary> = runs.iter().map(|r| &r.summaries[k]).collect();
            let means: Vec<f64> = at.iter().map(|s| s.mean_cost).collect();
            let (mean_cost, stderr) = mean_and_stderr(&means);
            let n_pairs: usize = at.iter().map(|s| s.n_pairs).sum();
            CheckpointSummary {
                time: cfg.checkpoints[k],
                mean_cost,
                stderr,
                n_pairs,
                common_events: at.iter().map(|s| s.common_events).sum(),
                solo_events: at.iter().map(|s| s.solo_events).sum(),
                touched: at.iter().map(|s| s.touched * s.n_pairs as f64).sum::<f64>() / n_pairs as f64,
            }
        })
        .collect();
    Ok(ReplicaRun { summaries, runs })
}

/// Seed of replica `r`, decorrelated from the base seed by a splitmix step.
pub fn replica_seed(seed: u64, r: u64) -> u64 {
    let mut z = seed ^ r.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn partner<R: Rng + ?Sized>(n: usize, i: usize, rng: &mut R) -> usize {
    let k = rng.random_range(0..n - 1);
    if k >= i {
        k + 1
    } else {
        k
    }
}

/// Event-driven mean-field system: total rate `n`, a uniform individual is
/// replaced by its offspring with a uniform other partner.
fn run_mean_field<R: Rng + ?Sized>(
    model: &ModelSpec,
    mut pop: Vec<StatePoint>,
    checkpoints: &[f64],
    rng: &mut R,
) -> Result<(Vec<Vec<StatePoint>>, Vec<usize>)> {
    let mix = model.mating_mix().expect("mean-field model");
    let n = pop.len();
    let mut touched = vec![false; n];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut counts = Vec::with_capacity(checkpoints.len());
    let mut next = t + exp_sample(n as f64, rng);
    for &cp in checkpoints {
        while next <= cp {
            t = next;
            let i = rng.random_range(0..n);
            let k = partner(n, i, rng);
            let sigma = mix.law.sample(rng);
            pop[i] = ModelSpec::mate(&pop[i], &pop[k], sigma);
            touched[i] = true;
            next = t + exp_sample(n as f64, rng);
        }
        out.push(pop.clone());
        counts.push(touched.iter().filter(|b| **b).count());
    }
    Ok((out, counts))
}

/// Coupled mean-field system: the chosen pair mates with one partner pair and
/// both components share `sigma`.
fn run_mean_field_coupled<R: Rng + ?Sized>(
    model: &ModelSpec,
    init: Vec<(StatePoint, StatePoint)>,
    checkpoints: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<CoupledPair>>> {
    let mix = model.mating_mix().expect("mean-field model");
    let n = init.len();
    let mut pairs: Vec<CoupledPair> = init
        .into_iter()
        .map(|(first, second)| CoupledPair { first, second, counts: EventCounts::default() })
        .collect();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = t + exp_sample(n as f64, rng);
    for &cp in checkpoints {
        while next <= cp {
            t = next;
            let i = rng.random_range(0..n);
            let k = partner(n, i, rng);
            let sigma = mix.law.sample(rng);
            let first = ModelSpec::mate(&pairs[i].first, &pairs[k].first, sigma);
            let second = ModelSpec::mate(&pairs[i].second, &pairs[k].second, sigma);
            pairs[i].first = first;
            pairs[i].second = second;
            pairs[i].counts.common += 1;
            next = t + exp_sample(n as f64, rng);
        }
        out.push(pairs.clone());
    }
    Ok(out)
}
