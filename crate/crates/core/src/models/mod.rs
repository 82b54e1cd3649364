//! The seven structured-population models as jump-flow processes, their
//! coupled versions, and the sign checks behind the contraction estimates.

mod checks;

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::measures::{
    AdmissibilityRule, BirthLaw, FragmentRatio, GrowthFunction, MatingMix, RateFunction, Space, SpatialNoise,
    StatePoint,
};
use crate::otsolver::CostFunction;

pub use checks::{
    check_delta_sign, check_i_inequality, check_sexual_convexity, DeltaCheck, ExpectedSign, Margin,
};

/// Kind of event in a coupled pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    /// Both components jump, sharing the jump randomness.
    Common,
    SoloFirst,
    SoloSecond,
}

/// Rates of the three event classes of a coupled pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EventRates {
    pub common: f64,
    pub solo_first: f64,
    pub solo_second: f64,
}

impl EventRates {
    pub fn total(&self) -> f64 {
        self.common + self.solo_first + self.solo_second
    }

    /// Class selected by a uniform variate `u` in [0, total).
    pub fn pick(&self, u: f64) -> EventClass {
        if u < self.common {
            EventClass::Common
        } else if u < self.common + self.solo_first {
            EventClass::SoloFirst
        } else {
            EventClass::SoloSecond
        }
    }
}

/// Model-specific ingredients.
#[derive(Clone, Debug)]
pub enum Dynamics {
    /// Age `x' = g(x)`, rate `d(x)`, restart at `Z ~ b`.
    Renewal { g: GrowthFunction, d: RateFunction, birth: BirthLaw },
    /// Age with a phase on the torus `1..=states`; jump `(x, i) -> (0, i + 1)`.
    RenewalSystem { g: Vec<GrowthFunction>, d: RateFunction, states: u32 },
    /// Age clock sped up by `epsilon^-2`; jump `(x, z) -> (0, z - epsilon * eta)`.
    SpaceAge { d: RateFunction, noise: SpatialNoise },
    /// Ages of the last two events; jump `(x1, x2) -> (0, x1)`.
    TwoTime { d: RateFunction },
    /// Size `x' = g(x)`, rate `d(x)`, jump `x -> r x` with `r ~ beta`.
    GrowthFragmentation { g: GrowthFunction, d: RateFunction, ratio: FragmentRatio },
    /// Age and size; jump `(x, z) -> (0, r z)`.
    AgeSize { g: GrowthFunction, d: RateFunction, ratio: FragmentRatio },
    /// Mean-field mating: every individual is replaced at rate 1 by
    /// `sigma X + (1 - sigma) X*` with `X*` a uniformly chosen partner.
    Sexual { mix: MatingMix, dim: usize },
}

/// A model with its transport cost.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    dynamics: Dynamics,
    cost: CostFunction,
}

const GROWTH_CHECK_GRID: usize = 2001;
const GROWTH_CHECK_MAX: f64 = 100.0;

fn check_growth(g: &GrowthFunction) -> Result<()> {
    let grid: Vec<f64> =
        (0..GROWTH_CHECK_GRID).map(|i| GROWTH_CHECK_MAX * i as f64 / (GROWTH_CHECK_GRID - 1) as f64).collect();
    g.validate(&grid)?;
    if !g.is_nonincreasing() {
        return invalid("contraction models need a non-increasing growth field");
    }
    Ok(())
}

impl ModelSpec {
    /// Builds a model; `a` is the truncation level (ignored by the sexual model,
    /// whose cost is `|x - y|^p`).
    pub fn new(dynamics: Dynamics, a: f64) -> Result<Self> {
        let cost = match &dynamics {
            Dynamics::Renewal { g, .. } | Dynamics::GrowthFragmentation { g, .. } => {
                check_growth(g)?;
                CostFunction::TruncAbs { a }
            }
            Dynamics::RenewalSystem { g, d, states } => {
                if *states < 1 {
                    return invalid("torus needs at least one state");
                }
                if g.len() != 1 && g.len() != *states as usize {
                    return invalid("give one growth field or one per state");
                }
                if let RateFunction::PerState(v) = d {
                    if v.len() != *states as usize {
                        return invalid("per-state rate count must match the torus size");
                    }
                }
                for gi in g {
                    check_growth(gi)?;
                }
                CostFunction::TruncAbsState { a }
            }
            Dynamics::SpaceAge { .. } => CostFunction::TruncSum { a },
            Dynamics::TwoTime { .. } => CostFunction::TruncWeighted { a },
            Dynamics::AgeSize { g, .. } => {
                check_growth(g)?;
                CostFunction::TruncSum { a }
            }
            Dynamics::Sexual { mix, dim } => {
                if *dim == 0 {
                    return invalid("trait dimension must be >= 1");
                }
                CostFunction::Power { p: mix.p }
            }
        };
        cost.validate()?;
        Ok(Self { dynamics, cost })
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn cost(&self) -> CostFunction {
        self.cost
    }

    /// Truncation level `a` (infinite for the power cost).
    pub fn a(&self) -> f64 {
        self.cost.truncation()
    }

    /// Same model with another truncation level.
    pub fn with_a(&self, a: f64) -> Result<Self> {
        Self::new(self.dynamics.clone(), a)
    }

    pub fn name(&self) -> &'static str {
        match self.dynamics {
            Dynamics::Renewal { .. } => "renewal",
            Dynamics::RenewalSystem { .. } => "renewal_system",
            Dynamics::SpaceAge { .. } => "space_age",
            Dynamics::TwoTime { .. } => "two_time",
            Dynamics::GrowthFragmentation { .. } => "growth_fragmentation",
            Dynamics::AgeSize { .. } => "age_size",
            Dynamics::Sexual { .. } => "sexual",
        }
    }

    pub fn space(&self) -> Space {
        match &self.dynamics {
            Dynamics::Renewal { .. } | Dynamics::GrowthFragmentation { .. } => Space::Age,
            Dynamics::RenewalSystem { states, .. } => Space::AgeState { states: *states },
            Dynamics::SpaceAge { noise, .. } => Space::AgePosition { dim: noise.law.dim() },
            Dynamics::TwoTime { .. } => Space::TimePair,
            Dynamics::AgeSize { .. } => Space::AgeSize,
            Dynamics::Sexual { dim, .. } => Space::Trait { dim: *dim },
        }
    }

    /// Speed-up of the simulated clock: `epsilon^-2` for the space-age model, 1 otherwise.
    pub fn time_scale(&self) -> f64 {
        match &self.dynamics {
            Dynamics::SpaceAge { noise, .. } => noise.scale.powi(-2),
            _ => 1.0,
        }
    }

    /// The unscaled jump rate `d`, absent for the mean-field model.
    pub fn rate(&self) -> Option<&RateFunction> {
        match &self.dynamics {
            Dynamics::Renewal { d, .. }
            | Dynamics::RenewalSystem { d, .. }
            | Dynamics::SpaceAge { d, .. }
            | Dynamics::TwoTime { d }
            | Dynamics::GrowthFragmentation { d, .. }
            | Dynamics::AgeSize { d, .. } => Some(d),
            Dynamics::Sexual { .. } => None,
        }
    }

    pub fn admissibility_rule(&self) -> Option<AdmissibilityRule> {
        Some(match &self.dynamics {
            Dynamics::Renewal { .. } | Dynamics::SpaceAge { .. } => AdmissibilityRule::scalar(),
            Dynamics::RenewalSystem { .. } => AdmissibilityRule::per_state(),
            Dynamics::TwoTime { .. } => AdmissibilityRule::two_time(),
            Dynamics::GrowthFragmentation { ratio, .. } => AdmissibilityRule::fragmentation(ratio.mean_r),
            Dynamics::AgeSize { ratio, .. } => AdmissibilityRule::age_size(ratio.mean_r),
            Dynamics::Sexual { .. } => return None,
        })
    }

    /// Jump rate on the simulated clock.
    pub fn jump_rate(&self, s: &StatePoint) -> f64 {
        match self.rate() {
            Some(d) => self.time_scale() * d.evaluate(s),
            None => 1.0,
        }
    }

    /// Bound of [`ModelSpec::jump_rate`] along the flow segment from `p` to `q`.
    pub fn rate_bound(&self, p: &StatePoint, q: &StatePoint) -> f64 {
        match self.rate() {
            Some(d) => self.time_scale() * d.interval_bound(p, q),
            None => 1.0,
        }
    }

    fn growth(&self, state: u32) -> &GrowthFunction {
        match &self.dynamics {
            Dynamics::Renewal { g, .. } | Dynamics::GrowthFragmentation { g, .. } | Dynamics::AgeSize { g, .. } => g,
            Dynamics::RenewalSystem { g, .. } => {
                if g.len() == 1 {
                    &g[0]
                } else {
                    &g[(state as usize - 1) % g.len()]
                }
            }
            _ => unreachable!("model has no growth field"),
        }
    }

    /// Deterministic motion over `dt` units of simulated time.
    pub fn flow(&self, s: &StatePoint, dt: f64) -> StatePoint {
        if dt == 0.0 {
            return s.clone();
        }
        match (&self.dynamics, s) {
            (Dynamics::Renewal { g, .. } | Dynamics::GrowthFragmentation { g, .. }, StatePoint::Age(x)) => {
                StatePoint::Age(g.flow(*x, dt))
            }
            (Dynamics::RenewalSystem { .. }, StatePoint::AgeState { age, state }) => {
                StatePoint::AgeState { age: self.growth(*state).flow(*age, dt), state: *state }
            }
            (Dynamics::SpaceAge { .. }, StatePoint::AgePosition { age, pos }) => {
                StatePoint::AgePosition { age: age + self.time_scale() * dt, pos: pos.clone() }
            }
            (Dynamics::TwoTime { .. }, StatePoint::TimePair { x1, x2 }) => {
                StatePoint::TimePair { x1: x1 + dt, x2: x2 + dt }
            }
            (Dynamics::AgeSize { g, .. }, StatePoint::AgeSize { age, size }) => {
                StatePoint::AgeSize { age: age + dt, size: g.flow(*size, dt) }
            }
            (Dynamics::Sexual { .. }, p) => p.clone(),
            (_, p) => panic!("state {p:?} does not belong to the {} model", self.name()),
        }
    }

    /// Post-jump state for a given draw of the jump randomness.
    pub fn apply_jump(&self, s: &StatePoint, draw: &JumpDraw) -> StatePoint {
        match (&self.dynamics, s, draw) {
            (Dynamics::Renewal { .. }, _, JumpDraw::Birth(z)) => StatePoint::Age(*z),
            (Dynamics::RenewalSystem { states, .. }, StatePoint::AgeState { state, .. }, _) => {
                StatePoint::AgeState { age: 0.0, state: state % states + 1 }
            }
            (Dynamics::SpaceAge { noise, .. }, StatePoint::AgePosition { pos, .. }, JumpDraw::Noise(eta)) => {
                StatePoint::AgePosition {
                    age: 0.0,
                    pos: pos.iter().zip(eta).map(|(z, e)| z - noise.scale * e).collect(),
                }
            }
            (Dynamics::TwoTime { .. }, StatePoint::TimePair { x1, .. }, _) => StatePoint::TimePair { x1: 0.0, x2: *x1 },
            (Dynamics::GrowthFragmentation { .. }, StatePoint::Age(x), JumpDraw::Ratio(r)) => StatePoint::Age(r * x),
            (Dynamics::AgeSize { .. }, StatePoint::AgeSize { size, .. }, JumpDraw::Ratio(r)) => {
                StatePoint::AgeSize { age: 0.0, size: r * size }
            }
            (_, p, d) => panic!("jump draw {d:?} does not apply to {p:?} in the {} model", self.name()),
        }
    }

    /// Draws the randomness of one jump.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> JumpDraw {
        match &self.dynamics {
            Dynamics::Renewal { birth, .. } => JumpDraw::Birth(birth.0.sample(rng)),
            Dynamics::SpaceAge { noise, .. } => JumpDraw::Noise(noise.law.sample(rng)),
            Dynamics::GrowthFragmentation { ratio, .. } | Dynamics::AgeSize { ratio, .. } => {
                JumpDraw::Ratio(ratio.law.sample(rng))
            }
            Dynamics::Sexual { mix, .. } => JumpDraw::Mix(mix.law.sample(rng)),
            Dynamics::RenewalSystem { .. } | Dynamics::TwoTime { .. } => JumpDraw::None,
        }
    }

    /// One jump of a single individual (not the mean-field model).
    pub fn marginal_jump<R: Rng + ?Sized>(&self, s: &StatePoint, rng: &mut R) -> StatePoint {
        let d = self.draw(rng);
        self.apply_jump(s, &d)
    }

    /// One coupled jump. Common events share a single draw; solo events move
    /// one component with a fresh draw.
    pub fn coupled_jump<R: Rng + ?Sized>(
        &self,
        pair: (&StatePoint, &StatePoint),
        class: EventClass,
        rng: &mut R,
    ) -> (StatePoint, StatePoint) {
        let (x, y) = pair;
        match class {
            EventClass::Common => {
                let d = self.draw(rng);
                (self.apply_jump(x, &d), self.apply_jump(y, &d))
            }
            EventClass::SoloFirst => (self.marginal_jump(x, rng), y.clone()),
            EventClass::SoloSecond => (x.clone(), self.marginal_jump(y, rng)),
        }
    }

    /// Whether a pair is in the regime where the two rates are split into a
    /// common part and positive differences. Only the renewal system has a
    /// misaligned regime (different torus phases).
    pub fn aligned(&self, x: &StatePoint, y: &StatePoint) -> bool {
        match (x, y) {
            (StatePoint::AgeState { state: i, .. }, StatePoint::AgeState { state: j, .. }) => i == j,
            _ => true,
        }
    }

    /// Rates of common and solo events on the simulated clock.
    pub fn event_rates(&self, x: &StatePoint, y: &StatePoint) -> EventRates {
        let (dx, dy) = (self.jump_rate(x), self.jump_rate(y));
        if let Dynamics::Sexual { .. } = self.dynamics {
            return EventRates { common: 1.0, solo_first: 0.0, solo_second: 0.0 };
        }
        if self.aligned(x, y) {
            EventRates { common: dx.min(dy), solo_first: (dx - dy).max(0.0), solo_second: (dy - dx).max(0.0) }
        } else {
            EventRates { common: 0.0, solo_first: dx, solo_second: dy }
        }
    }

    /// Offspring `sigma x + (1 - sigma) partner` of the mean-field model.
    pub fn mate(x: &StatePoint, partner: &StatePoint, sigma: f64) -> StatePoint {
        match (x, partner) {
            (StatePoint::Trait(a), StatePoint::Trait(b)) => {
                StatePoint::Trait(a.iter().zip(b).map(|(u, v)| sigma * u + (1.0 - sigma) * v).collect())
            }
            _ => panic!("mating applies to trait points only"),
        }
    }

    /// Mixing law of the mean-field model.
    pub fn mating_mix(&self) -> Option<&MatingMix> {
        match &self.dynamics {
            Dynamics::Sexual { mix, .. } => Some(mix),
            _ => None,
        }
    }
}

/// Randomness consumed by one jump.
#[derive(Clone, Debug, PartialEq)]
pub enum JumpDraw {
    Birth(f64),
    Noise(Vec<f64>),
    Ratio(f64),
    Mix(f64),
    None,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{Law1D, VecLaw};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn renewal(d: RateFunction) -> ModelSpec {
        let dyn_ = Dynamics::Renewal {
            g: GrowthFunction::Constant(1.0),
            d,
            birth: BirthLaw::new(Law1D::dirac(0.0)).unwrap(),
        };
        ModelSpec::new(dyn_, 1.0).unwrap()
    }

    #[test]
    fn rate_split_examples() {
        let m = renewal(RateFunction::constant(2.5).unwrap());
        let r = m.event_rates(&StatePoint::Age(0.3), &StatePoint::Age(7.0));
        assert_eq!((r.common, r.solo_first, r.solo_second), (2.5, 0.0, 0.0));
        let m = renewal(RateFunction::power(1.0, 1.0, 1.0).unwrap());
        let r = m.event_rates(&StatePoint::Age(0.0), &StatePoint::Age(2.0));
        assert_eq!((r.common, r.solo_first, r.solo_second), (1.0, 0.0, 2.0));
    }

    #[test]
    fn misaligned_phases_jump_independently() {
        let m = ModelSpec::new(
            Dynamics::RenewalSystem {
                g: vec![GrowthFunction::Constant(1.0)],
                d: RateFunction::constant(1.0).unwrap(),
                states: 3,
            },
            1.0,
        )
        .unwrap();
        let x = StatePoint::AgeState { age: 1.0, state: 1 };
        let y = StatePoint::AgeState { age: 1.0, state: 2 };
        let r = m.event_rates(&x, &y);
        assert_eq!((r.common, r.solo_first, r.solo_second), (0.0, 1.0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(m.marginal_jump(&StatePoint::AgeState { age: 2.0, state: 3 }, &mut rng), StatePoint::AgeState {
            age: 0.0,
            state: 1
        });
    }

    #[test]
    fn common_jumps_share_the_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gf = ModelSpec::new(
            Dynamics::GrowthFragmentation {
                g: GrowthFunction::Constant(1.0),
                d: RateFunction::constant(1.0).unwrap(),
                ratio: FragmentRatio::new(Law1D::uniform(0.0, 1.0).unwrap()).unwrap(),
            },
            0.4,
        )
        .unwrap();
        for _ in 0..100 {
            let (a, b) = gf.coupled_jump((&StatePoint::Age(2.0), &StatePoint::Age(3.0)), EventClass::Common, &mut rng);
            let (StatePoint::Age(a), StatePoint::Age(b)) = (a, b) else { panic!() };
            assert!((a / 2.0 - b / 3.0).abs() < 1e-15);
        }
        let sa = ModelSpec::new(
            Dynamics::SpaceAge {
                d: RateFunction::constant(1.0).unwrap(),
                noise: SpatialNoise::new(VecLaw::UniformBox { lower: vec![-1.0], upper: vec![1.0] }, 0.5).unwrap(),
            },
            1.0,
        )
        .unwrap();
        let x = StatePoint::AgePosition { age: 1.0, pos: vec![0.0] };
        let y = StatePoint::AgePosition { age: 2.0, pos: vec![4.0] };
        let (a, b) = sa.coupled_jump((&x, &y), EventClass::Common, &mut rng);
        assert_eq!(sa.cost().evaluate(&a, &b), 1.0f64.min(4.0));
        let (StatePoint::AgePosition { pos: pa, .. }, StatePoint::AgePosition { pos: pb, .. }) = (a, b) else {
            panic!()
        };
        assert!((pb[0] - pa[0] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn two_time_reset_keeps_wedge() {
        let m = ModelSpec::new(Dynamics::TwoTime { d: RateFunction::constant(1.0).unwrap() }, 1.0).unwrap();
        let s = StatePoint::TimePair { x1: 0.5, x2: 2.0 };
        let f = m.flow(&s, 1.25);
        assert_eq!(f, StatePoint::TimePair { x1: 1.75, x2: 3.25 });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let j = m.marginal_jump(&f, &mut rng);
        assert_eq!(j, StatePoint::TimePair { x1: 0.0, x2: 1.75 });
        assert!(Space::TimePair.check(&j).is_ok());
    }

    #[test]
    fn rejects_increasing_growth() {
        let bad = Dynamics::Renewal {
            g: GrowthFunction::Affine { intercept: 1.0, slope: 0.1 },
            d: RateFunction::constant(1.0).unwrap(),
            birth: BirthLaw::new(Law1D::dirac(0.0)).unwrap(),
        };
        assert!(ModelSpec::new(bad, 1.0).is_err());
    }
}
