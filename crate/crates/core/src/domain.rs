//! Shared domain types: forecast records, the expert roster, simplex weights
//! and the squared loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One round of a (station, lead time) stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord<T> {
    /// 1-based position in the stream.
    pub round_index: usize,
    pub date: String,
    pub station_id: String,
    pub lead_time_hours: u32,
    pub observation: T,
    pub expert_predictions: Vec<T>,
    /// Observed temperature at the models' first lead time, known before
    /// the forecast is issued.
    pub first_leadtime_observation: T,
}

impl<T: Scalar> ForecastRecord<T> {
    pub fn validate(&self, n_experts: usize) -> Result<()> {
        if self.expert_predictions.len() != n_experts {
            return Err(Error::DimensionMismatch {
                expected: n_experts,
                got: self.expert_predictions.len(),
            });
        }
        if self.expert_predictions.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("expert predictions"));
        }
        if !self.observation.is_finite() {
            return Err(Error::NonFinite("observation"));
        }
        if !self.first_leadtime_observation.is_finite() {
            return Err(Error::NonFinite("first lead time observation"));
        }
        Ok(())
    }
}

/// Class of the unbiased aggregation's error `ŷ − y` relative to a
/// symmetric threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorClass {
    /// error ≤ −threshold: the aggregation runs too cold.
    Negative = 1,
    /// |error| < threshold.
    Neutral = 2,
    /// error ≥ +threshold: the aggregation runs too hot.
    Positive = 3,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 3] = [ErrorClass::Negative, ErrorClass::Neutral, ErrorClass::Positive];

    pub fn from_error<T: Scalar>(error: T, threshold: T) -> Self {
        if error <= -threshold {
            ErrorClass::Negative
        } else if error >= threshold {
            ErrorClass::Positive
        } else {
            ErrorClass::Neutral
        }
    }

    /// 1-based label.
    pub fn label(self) -> u8 {
        self as u8
    }

    /// 0-based index.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn from_label(label: u8) -> Option<Self> {
        (label as usize).checked_sub(1).and_then(Self::from_index)
    }
}

/// Which large-error regime a biased expert is woken for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specialty {
    /// Low quantiles: useful when the aggregation runs too hot (error ≥ +threshold).
    Cold,
    /// High quantiles: useful when the aggregation runs too cold (error ≤ −threshold).
    Warm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertId {
    pub index: usize,
    pub name: String,
    /// `None` for experts that are always awake.
    pub specialty: Option<Specialty>,
}

impl ExpertId {
    pub fn is_biased(&self) -> bool {
        self.specialty.is_some()
    }
}

/// Ordered set of experts for one stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertRoster {
    experts: Vec<ExpertId>,
}

impl ExpertRoster {
    /// Builds a roster from names; experts listed in `cold` / `warm` are the
    /// biased specialists.
    pub fn new<S: AsRef<str>>(names: &[S], cold: &[S], warm: &[S]) -> Result<Self> {
        let mut experts = Vec::with_capacity(names.len());
        for (index, name) in names.iter().enumerate() {
            let name = name.as_ref();
            if experts.iter().any(|e: &ExpertId| e.name == name) {
                return Err(Error::param("experts", format!("duplicate expert name {name}")));
            }
            let in_cold = cold.iter().any(|c| c.as_ref() == name);
            let in_warm = warm.iter().any(|c| c.as_ref() == name);
            let specialty = match (in_cold, in_warm) {
                (true, true) => {
                    return Err(Error::param(
                        "experts",
                        format!("{name} cannot be both a cold and a warm specialist"),
                    ))
                }
                (true, false) => Some(Specialty::Cold),
                (false, true) => Some(Specialty::Warm),
                (false, false) => None,
            };
            experts.push(ExpertId { index, name: name.to_string(), specialty });
        }
        if experts.is_empty() {
            return Err(Error::Empty("expert roster"));
        }
        if experts.iter().all(ExpertId::is_biased) {
            return Err(Error::param("experts", "at least one expert must be always awake"));
        }
        Ok(Self { experts })
    }

    /// Roster with no specialists.
    pub fn unbiased<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::new(names, &[], &[])
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn experts(&self) -> &[ExpertId] {
        &self.experts
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.experts.iter().map(|e| e.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.experts.iter().position(|e| e.name == name)
    }

    pub fn biased_indices(&self) -> Vec<usize> {
        self.experts.iter().filter(|e| e.is_biased()).map(|e| e.index).collect()
    }

    pub fn unbiased_indices(&self) -> Vec<usize> {
        self.experts.iter().filter(|e| !e.is_biased()).map(|e| e.index).collect()
    }

    /// Sub-roster containing only the listed indices, re-indexed from 0.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        let experts = indices
            .iter()
            .enumerate()
            .map(|(new, &old)| ExpertId { index: new, ..self.experts[old].clone() })
            .collect();
        Self { experts }
    }
}

/// Convex weights over the experts of a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector<T> {
    weights: Vec<T>,
}

impl<T: Scalar> WeightVector<T> {
    /// Accepts a vector whose entries are non-negative and sum to one within
    /// the scalar's simplex tolerance; the result is renormalized.
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        if weights.iter().any(|&w| w < T::zero()) {
            return Err(Error::NotSimplex("negative entry".into()));
        }
        let sum: T = weights.iter().copied().sum();
        if (sum - T::one()).abs() > T::SIMPLEX_TOL {
            return Err(Error::NotSimplex(format!("entries sum to {sum}")));
        }
        Ok(Self { weights: weights.into_iter().map(|w| w / sum).collect() })
    }

    /// Normalizes non-negative masses with a positive total.
    pub fn from_masses(masses: Vec<T>) -> Result<Self> {
        if masses.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("weight masses"));
        }
        if masses.iter().any(|&w| w < T::zero()) {
            return Err(Error::NotSimplex("negative mass".into()));
        }
        let sum: T = masses.iter().copied().sum();
        if sum <= T::zero() {
            return Err(Error::NotSimplex("masses sum to zero".into()));
        }
        Ok(Self { weights: masses.into_iter().map(|w| w / sum).collect() })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("weight vector"));
        }
        let w = T::one() / T::from_count(n);
        Ok(Self { weights: vec![w; n] })
    }

    /// Unit mass on one expert.
    pub fn vertex(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::DimensionMismatch { expected: n, got: i + 1 });
        }
        let mut weights = vec![T::zero(); n];
        weights[i] = T::one();
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.weights
    }

    pub fn get(&self, i: usize) -> T {
        self.weights[i]
    }
}

/// Squared-°C loss.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LossValue<T>(T);

impl<T: Scalar> LossValue<T> {
    pub fn value(self) -> T {
        self.0
    }
}

pub fn squared_loss<T: Scalar>(prediction: T, observation: T) -> Result<LossValue<T>> {
    check_finite(prediction, observation)?;
    Ok(LossValue(sq_err(prediction, observation)))
}

/// Derivative of the squared loss in its first argument.
pub fn loss_gradient<T: Scalar>(prediction: T, observation: T) -> Result<T> {
    check_finite(prediction, observation)?;
    Ok(grad(prediction, observation))
}

pub fn convex_combine<T: Scalar>(weights: &WeightVector<T>, predictions: &[T]) -> Result<T> {
    if weights.len() != predictions.len() {
        return Err(Error::DimensionMismatch { expected: weights.len(), got: predictions.len() });
    }
    Ok(dot(weights.as_slice(), predictions))
}

fn check_finite<T: Scalar>(prediction: T, observation: T) -> Result<()> {
    if !prediction.is_finite() {
        return Err(Error::NonFinite("prediction"));
    }
    if !observation.is_finite() {
        return Err(Error::NonFinite("observation"));
    }
    Ok(())
}

// Unchecked kernels for inputs already validated at ingestion.

#[inline]
pub(crate) fn sq_err<T: Scalar>(prediction: T, observation: T) -> T {
    let d = prediction - observation;
    d * d
}

#[inline]
pub(crate) fn grad<T: Scalar>(prediction: T, observation: T) -> T {
    T::lit(2.0) * (prediction - observation)
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&w, &x)| acc + w * x)
}
