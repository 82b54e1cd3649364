//! JSON experiment configuration.

use rand::Rng;
use serde::Deserialize;

use crate::dual::SourceTerm;
use crate::error::{Error, Result};
use crate::measures::{
    BirthLaw, EmpiricalMeasure, FragmentRatio, GridSpec, GrowthFunction, Law1D, MatingMix, PowerTerm, RateFunction,
    Space, SpatialNoise, StatePoint, VecLaw,
};
use crate::models::Dynamics;

/// One experiment; each subcommand reads the keys it needs and rejects
/// configurations missing them. Unknown keys are rejected at parse time.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub a: Option<Truncation>,
    /// Admissibility validation grid over the rate coordinates.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub n_particles: Option<usize>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub checkpoints: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replicas: Option<usize>,
    /// Atoms per sampled initial cloud and per checkpoint transport solve.
    #[serde(default)]
    pub ot_subsample: Option<usize>,
    #[serde(default)]
    pub lookahead: Option<f64>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub dual: Option<DualConfig>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Either an explicit truncation level or `"auto"`.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Truncation {
    Value(f64),
    Keyword(Keyword),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keyword {
    Auto,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthConfig {
    Constant { value: f64 },
    Affine { intercept: f64, slope: f64 },
}

impl GrowthConfig {
    pub fn build(&self) -> GrowthFunction {
        match *self {
            GrowthConfig::Constant { value } => GrowthFunction::Constant(value),
            GrowthConfig::Affine { intercept, slope } => GrowthFunction::Affine { intercept, slope },
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateConfig {
    Constant { value: f64 },
    /// `alpha + beta * x^p` on the first rate coordinate.
    Power { alpha: f64, beta: f64, p: f64 },
    Separable { alpha: f64, terms: Vec<PowerTerm> },
    PerState { rates: Vec<RateConfig> },
}

impl RateConfig {
    pub fn build(&self) -> Result<RateFunction> {
        match self {
            RateConfig::Constant { value } => RateFunction::constant(*value),
            RateConfig::Power { alpha, beta, p } => RateFunction::power(*alpha, *beta, *p),
            RateConfig::Separable { alpha, terms } => RateFunction::separable(*alpha, terms.clone()),
            RateConfig::PerState { rates } => {
                RateFunction::per_state(rates.iter().map(RateConfig::build).collect::<Result<_>>()?)
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Renewal {
        g: GrowthConfig,
        d: RateConfig,
        birth: Law1D,
    },
    RenewalSystem {
        /// One field shared by all phases, or one per phase.
        g: Vec<GrowthConfig>,
        d: RateConfig,
        states: u32,
    },
    SpaceAge {
        d: RateConfig,
        noise: VecLaw,
        epsilon: f64,
    },
    TwoTime {
        d: RateConfig,
    },
    GrowthFragmentation {
        g: GrowthConfig,
        d: RateConfig,
        ratio: Law1D,
    },
    AgeSize {
        g: GrowthConfig,
        d: RateConfig,
        ratio: Law1D,
    },
    Sexual {
        mix: Law1D,
        p: f64,
        #[serde(default)]
        theta: Option<f64>,
        dim: usize,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Result<Dynamics> {
        Ok(match self {
            ModelConfig::Renewal { g, d, birth } => {
                Dynamics::Renewal { g: g.build(), d: d.build()?, birth: BirthLaw::new(birth.clone())? }
            }
            ModelConfig::RenewalSystem { g, d, states } => Dynamics::RenewalSystem {
                g: g.iter().map(GrowthConfig::build).collect(),
                d: d.build()?,
                states: *states,
            },
            ModelConfig::SpaceAge { d, noise, epsilon } => {
                Dynamics::SpaceAge { d: d.build()?, noise: SpatialNoise::new(noise.clone(), *epsilon)? }
            }
            ModelConfig::TwoTime { d } => Dynamics::TwoTime { d: d.build()? },
            ModelConfig::GrowthFragmentation { g, d, ratio } => Dynamics::GrowthFragmentation {
                g: g.build(),
                d: d.build()?,
                ratio: FragmentRatio::new(ratio.clone())?,
            },
            ModelConfig::AgeSize { g, d, ratio } => {
                Dynamics::AgeSize { g: g.build(), d: d.build()?, ratio: FragmentRatio::new(ratio.clone())? }
            }
            ModelConfig::Sexual { mix, p, theta, dim } => {
                let mix = match theta {
                    Some(t) => MatingMix::with_theta(mix.clone(), *t, *p)?,
                    None => MatingMix::new(mix.clone(), *p)?,
                };
                Dynamics::Sexual { mix, dim: *dim }
            }
        })
    }
}

/// Initial law on the model's state space, given in flat coordinates.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    Dirac { point: Vec<f64> },
    Atoms { points: Vec<Vec<f64>>, weights: Vec<f64> },
    /// Independent coordinates.
    Product { coords: Vec<Law1D> },
}

impl InitialLaw {
    /// Atom laws are used as given; product laws are replaced by `m` samples.
    pub fn to_measure<R: Rng + ?Sized>(&self, space: Space, m: usize, rng: &mut R) -> Result<EmpiricalMeasure> {
        match self {
            InitialLaw::Dirac { point } => EmpiricalMeasure::dirac(space, space.point(point)?),
            InitialLaw::Atoms { points, weights } => {
                let atoms = points.iter().map(|p| space.point(p)).collect::<Result<Vec<_>>>()?;
                EmpiricalMeasure::new(space, atoms, weights.clone())
            }
            InitialLaw::Product { coords } => {
                for law in coords {
                    law.validate()?;
                }
                let atoms = (0..m)
                    .map(|_| {
                        let c: Vec<f64> = coords.iter().map(|l| l.sample(rng)).collect();
                        space.point(&c)
                    })
                    .collect::<Result<Vec<StatePoint>>>()?;
                EmpiricalMeasure::uniform(space, atoms)
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub first: InitialLaw,
    pub second: InitialLaw,
}

/// Box of flat coordinates sampled by the inequality sweep.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn default_samples() -> usize {
    100_000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    Zero,
    Bump { x0: f64, rx: f64, t0: f64, rt: f64, amplitude: f64 },
}

impl SourceConfig {
    pub fn build(&self) -> Result<SourceTerm> {
        match *self {
            SourceConfig::Zero => Ok(SourceTerm::zero()),
            SourceConfig::Bump { x0, rx, t0, rt, amplitude } => SourceTerm::bump(x0, rx, t0, rt, amplitude),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    pub source: SourceConfig,
    pub h_t: f64,
    pub initial: InitialLaw,
}
