//! Probability masses over slate positions and attention curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::Position;

/// Normalization slack accepted when validating a probability mass.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A probability distribution over positions `1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionDistribution {
    mass: Vec<f64>,
}

impl PositionDistribution {
    /// Wraps an explicit mass vector (`mass[p-1]` is the probability of
    /// position `p`).
    ///
    /// # Errors
    ///
    /// [`Error::InvalidDistribution`] when the vector is empty, has a
    /// negative or non-finite entry, or sums to anything but 1 within
    /// [`MASS_TOLERANCE`].
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidDistribution("empty mass vector".into()));
        }
        for (i, &m) in mass.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "mass {m} at position {} must be a non-negative finite number",
                    i + 1
                )));
            }
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "mass sums to {total}, expected 1"
            )));
        }
        Ok(PositionDistribution { mass })
    }

    /// Normalizes non-negative weights into a distribution.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidDistribution`] when a weight is negative or the
    /// total weight is not strictly positive.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty weight vector".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "weight {w} at position {} must be a non-negative finite number",
                    i + 1
                )));
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution(
                "weights sum to zero, nothing to normalize".into(),
            ));
        }
        Ok(PositionDistribution {
            mass: weights.iter().map(|w| w / total).collect(),
        })
    }

    /// The distribution putting all mass on `position`.
    pub fn point_mass(position: Position, n: usize) -> Result<Self> {
        if position == 0 || position > n {
            return Err(Error::InvalidDistribution(format!(
                "point mass position {position} out of range 1..={n}"
            )));
        }
        let mut mass = vec![0.0; n];
        mass[position - 1] = 1.0;
        Ok(PositionDistribution { mass })
    }

    /// Number of positions in the support range.
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    /// True when the support range is empty (never, post-construction).
    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Probability of position `p`.
    pub fn mass(&self, p: Position) -> f64 {
        self.mass[p - 1]
    }

    /// The full mass vector, position 1 first.
    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// Cumulative distribution: entry `p-1` is `P(position <= p)`.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.mass
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect()
    }

    /// Expectation of a per-position function (`values[p-1]` at position
    /// `p`).
    ///
    /// # Errors
    ///
    /// [`Error::DimensionMismatch`] when `values` has the wrong length.
    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.mass.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} positions",
                values.len(),
                self.mass.len()
            )));
        }
        Ok(self
            .mass
            .iter()
            .zip(values)
            .map(|(m, v)| m * v)
            .sum())
    }

    /// Total-variation distance to another distribution on the same range.
    ///
    /// # Errors
    ///
    /// [`Error::DimensionMismatch`] when the ranges differ.
    pub fn tv_distance(&self, other: &PositionDistribution) -> Result<f64> {
        if other.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "comparing distributions over {} and {} positions",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0)
    }
}

/// A validated attention curve: non-negative, finite, and non-increasing
/// in position.
///
/// `values[p-1]` is the attention paid to position `p`; the monotonicity
/// requirement encodes that viewers scan slates top-down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AttentionFunction {
    values: Vec<f64>,
}

impl AttentionFunction {
    /// Validates and wraps an attention curve.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidAttention`] when the curve is empty, has a negative
    /// or non-finite entry, or increases anywhere.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidAttention("empty attention curve".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidAttention(format!(
                    "attention {v} at position {} must be a non-negative finite number",
                    i + 1
                )));
            }
        }
        for p in 1..values.len() {
            if values[p] > values[p - 1] {
                return Err(Error::InvalidAttention(format!(
                    "attention increases from {} at position {p} to {} at position {}",
                    values[p - 1],
                    values[p],
                    p + 1
                )));
            }
        }
        Ok(AttentionFunction { values })
    }

    /// The step curve paying attention 1 to positions `1..=j` and 0 below.
    pub fn step(j: Position, n: usize) -> Result<Self> {
        if j > n {
            return Err(Error::InvalidAttention(format!(
                "step at position {j} beyond slate of {n}"
            )));
        }
        AttentionFunction::new(
            (1..=n).map(|p| if p <= j { 1.0 } else { 0.0 }).collect(),
        )
    }

    /// Number of positions covered.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when no positions are covered (never, post-construction).
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Attention paid to position `p`.
    pub fn value(&self, p: Position) -> f64 {
        self.values[p - 1]
    }

    /// The full curve, position 1 first.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for AttentionFunction {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        AttentionFunction::new(values)
    }
}

impl From<AttentionFunction> for Vec<f64> {
    fn from(h: AttentionFunction) -> Vec<f64> {
        h.values
    }
}
