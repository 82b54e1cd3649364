use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of an [`EmpiricalMeasure`], per atom.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// A point of one of the model state spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StatePoint {
    Age(f64),
    /// Age together with a cell-cycle phase in `1..=I` (torus arithmetic).
    AgeState { age: f64, state: u32 },
    AgePosition { age: f64, pos: Vec<f64> },
    /// Ages of the two last events, `x2 > x1 >= 0`.
    TimePair { x1: f64, x2: f64 },
    AgeSize { age: f64, size: f64 },
    Trait(Vec<f64>),
}

/// State-space descriptor, including the torus size and vector dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Space {
    Age,
    AgeState { states: u32 },
    AgePosition { dim: usize },
    TimePair,
    AgeSize,
    Trait { dim: usize },
}

impl Space {
    pub fn name(&self) -> &'static str {
        match self {
            Space::Age => "age",
            Space::AgeState { .. } => "age_state",
            Space::AgePosition { .. } => "age_position",
            Space::TimePair => "time_pair",
            Space::AgeSize => "age_size",
            Space::Trait { .. } => "trait",
        }
    }

    /// Number of flat coordinates used by [`StatePoint::coords`].
    pub fn coord_len(&self) -> usize {
        match self {
            Space::Age => 1,
            Space::AgeState { .. } | Space::TimePair | Space::AgeSize => 2,
            Space::AgePosition { dim } => 1 + dim,
            Space::Trait { dim } => *dim,
        }
    }

    /// Checks that `point` belongs to this space.
    pub fn check(&self, point: &StatePoint) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidMeasure(format!("{point:?}: {why}")));
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        match (self, point) {
            (Space::Age, StatePoint::Age(x)) => {
                if !nonneg(*x) {
                    return bad("age must be finite and >= 0");
                }
            }
            (Space::AgeState { states }, StatePoint::AgeState { age, state }) => {
                if !nonneg(*age) {
                    return bad("age must be finite and >= 0");
                }
                if *state < 1 || state > states {
                    return bad("state index outside 1..=I");
                }
            }
            (Space::AgePosition { dim }, StatePoint::AgePosition { age, pos }) => {
                if !nonneg(*age) {
                    return bad("age must be finite and >= 0");
                }
                if pos.len() != *dim || pos.iter().any(|v| !v.is_finite()) {
                    return bad("position has the wrong dimension or is not finite");
                }
            }
            (Space::TimePair, StatePoint::TimePair { x1, x2 }) => {
                if !nonneg(*x1) || !x2.is_finite() || x2 <= x1 {
                    return bad("time pair must satisfy x2 > x1 >= 0");
                }
            }
            (Space::AgeSize, StatePoint::AgeSize { age, size }) => {
                if !nonneg(*age) || !nonneg(*size) {
                    return bad("age and size must be finite and >= 0");
                }
            }
            (Space::Trait { dim }, StatePoint::Trait(x)) => {
                if x.len() != *dim || x.iter().any(|v| !v.is_finite()) {
                    return bad("trait has the wrong dimension or is not finite");
                }
            }
            _ => {
                return Err(Error::SpaceMismatch(format!(
                    "point {point:?} is not in space {}",
                    self.name()
                )))
            }
        }
        Ok(())
    }

    /// Builds a point from its flat coordinates (inverse of [`StatePoint::coords`]).
    pub fn point(&self, c: &[f64]) -> Result<StatePoint> {
        if c.len() != self.coord_len() {
            return Err(Error::InvalidMeasure(format!(
                "space {} expects {} coordinates, got {}",
                self.name(),
                self.coord_len(),
                c.len()
            )));
        }
        let p = match self {
            Space::Age => StatePoint::Age(c[0]),
            Space::AgeState { .. } => {
                let i = c[1];
                if i.fract() != 0.0 || i < 1.0 {
                    return Err(Error::InvalidMeasure(format!("state index {i} is not a positive integer")));
                }
                StatePoint::AgeState { age: c[0], state: i as u32 }
            }
            Space::AgePosition { .. } => StatePoint::AgePosition { age: c[0], pos: c[1..].to_vec() },
            Space::TimePair => StatePoint::TimePair { x1: c[0], x2: c[1] },
            Space::AgeSize => StatePoint::AgeSize { age: c[0], size: c[1] },
            Space::Trait { .. } => StatePoint::Trait(c.to_vec()),
        };
        self.check(&p)?;
        Ok(p)
    }
}

impl StatePoint {
    /// Flat coordinate vector; the torus index of `AgeState` is the second entry.
    pub fn coords(&self) -> Vec<f64> {
        match self {
            StatePoint::Age(x) => vec![*x],
            StatePoint::AgeState { age, state } => vec![*age, *state as f64],
            StatePoint::AgePosition { age, pos } => {
                let mut v = Vec::with_capacity(1 + pos.len());
                v.push(*age);
                v.extend_from_slice(pos);
                v
            }
            StatePoint::TimePair { x1, x2 } => vec![*x1, *x2],
            StatePoint::AgeSize { age, size } => vec![*age, *size],
            StatePoint::Trait(x) => x.clone(),
        }
    }

    /// Coordinates a jump rate may depend on. Positions and torus indices are excluded.
    pub fn rate_coords(&self) -> Vec<f64> {
        match self {
            StatePoint::Age(x) => vec![*x],
            StatePoint::AgeState { age, .. } => vec![*age],
            StatePoint::AgePosition { age, .. } => vec![*age],
            StatePoint::TimePair { x1, x2 } => vec![*x1, *x2],
            StatePoint::AgeSize { age, size } => vec![*age, *size],
            StatePoint::Trait(_) => Vec::new(),
        }
    }

    pub fn same_variant(&self, other: &StatePoint) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

impl fmt::Display for StatePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.coords();
        write!(f, "(")?;
        for (i, v) in c.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// A finitely supported probability measure: weighted atoms on one space.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    space: Space,
    atoms: Vec<StatePoint>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(space: Space, atoms: Vec<StatePoint>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        for a in &atoms {
            space.check(a)?;
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE * weights.len().max(1) as f64 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self { space, atoms, weights, cumulative })
    }

    /// Equal weights `1/n` on the given atoms.
    pub fn uniform(space: Space, atoms: Vec<StatePoint>) -> Result<Self> {
        let n = atoms.len().max(1);
        let w = vec![1.0 / n as f64; atoms.len()];
        // 1/n summed n times can miss 1 by a few ulps; renormalize the last weight.
        let mut w = w;
        if let Some(last) = w.last_mut() {
            *last = 1.0 - (n - 1) as f64 / n as f64;
        }
        Self::new(space, atoms, w)
    }

    pub fn dirac(space: Space, atom: StatePoint) -> Result<Self> {
        Self::new(space, vec![atom], vec![1.0])
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn atoms(&self) -> &[StatePoint] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// True when every atom carries the same weight.
    pub fn has_equal_weights(&self) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - w0).abs() <= 1e-12 * w0.max(1e-300) + 1e-15)
    }

    /// Index of the atom selected by a uniform variate `u` in [0, 1).
    pub fn index_for(&self, u: f64) -> usize {
        let target = u * self.cumulative[self.cumulative.len() - 1];
        let i = self.cumulative.partition_point(|c| *c <= target);
        let mut i = i.min(self.len() - 1);
        // never land on a zero-weight atom
        while self.weights[i] == 0.0 && i > 0 {
            i -= 1;
        }
        while self.weights[i] == 0.0 && i + 1 < self.len() {
            i += 1;
        }
        i
    }

    /// `n` i.i.d. draws from the atom distribution.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<StatePoint>> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be >= 1".into()));
        }
        Ok((0..n)
            .map(|_| self.atoms[self.index_for(rng.random::<f64>())].clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirac_samples_are_constant() {
        let m = EmpiricalMeasure::dirac(Space::Age, StatePoint::Age(0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = m.sample(3, &mut rng).unwrap();
        assert_eq!(s, vec![StatePoint::Age(0.0); 3]);
    }

    #[test]
    fn degenerate_weight_always_picks_first_atom() {
        let m = EmpiricalMeasure::new(
            Space::Age,
            vec![StatePoint::Age(1.0), StatePoint::Age(2.0)],
            vec![1.0, 0.0],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(m.sample(5, &mut rng).unwrap().iter().all(|p| *p == StatePoint::Age(1.0)));
    }

    #[test]
    fn uniform_two_atom_frequency_within_binomial_band() {
        let m = EmpiricalMeasure::uniform(Space::Age, vec![StatePoint::Age(0.0), StatePoint::Age(1.0)])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let s = m.sample(n, &mut rng).unwrap();
        let freq = s.iter().filter(|p| **p == StatePoint::Age(0.0)).count() as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn sampling_is_deterministic_given_stream() {
        let m = EmpiricalMeasure::uniform(
            Space::Age,
            (0..10).map(|i| StatePoint::Age(i as f64)).collect(),
        )
        .unwrap();
        let a = m.sample(50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = m.sample(50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_measures() {
        assert!(EmpiricalMeasure::new(Space::Age, vec![], vec![]).is_err());
        assert!(EmpiricalMeasure::new(Space::Age, vec![StatePoint::Age(0.0)], vec![0.9]).is_err());
        assert!(EmpiricalMeasure::new(Space::Age, vec![StatePoint::Age(-1.0)], vec![1.0]).is_err());
        let mixed = EmpiricalMeasure::new(
            Space::Age,
            vec![StatePoint::Age(0.0), StatePoint::AgeSize { age: 0.0, size: 1.0 }],
            vec![0.5, 0.5],
        );
        assert!(matches!(mixed, Err(Error::SpaceMismatch(_))));
        assert!(EmpiricalMeasure::new(Space::Age, vec![StatePoint::Age(0.0)], vec![1.0])
            .unwrap()
            .sample(0, &mut ChaCha8Rng::seed_from_u64(0))
            .is_err());
    }

    #[test]
    fn time_pair_wedge_is_open() {
        let s = Space::TimePair;
        assert!(s.check(&StatePoint::TimePair { x1: 1.0, x2: 1.0 }).is_err());
        assert!(s.check(&StatePoint::TimePair { x1: 0.0, x2: 0.5 }).is_ok());
        assert!(s.check(&StatePoint::TimePair { x1: 2.0, x2: 1.0 }).is_err());
    }

    #[test]
    fn torus_index_range() {
        let s = Space::AgeState { states: 3 };
        assert!(s.check(&StatePoint::AgeState { age: 0.0, state: 0 }).is_err());
        assert!(s.check(&StatePoint::AgeState { age: 0.0, state: 3 }).is_ok());
        assert!(s.check(&StatePoint::AgeState { age: 0.0, state: 4 }).is_err());
    }

    #[test]
    fn coords_round_trip() {
        let s = Space::AgePosition { dim: 2 };
        let p = StatePoint::AgePosition { age: 1.5, pos: vec![-1.0, 2.0] };
        assert_eq!(s.point(&p.coords()).unwrap(), p);
    }
}
