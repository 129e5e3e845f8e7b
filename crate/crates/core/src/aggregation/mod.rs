//! Online convex aggregation rules and the FTL meta-selector.

mod boa;
mod fixed_share;
mod ftl;

pub use boa::BoaState;
pub use fixed_share::FixedShareState;
pub use ftl::{Candidate, FtlState};

use crate::domain::{convex_combine, WeightVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A convex aggregation rule driven by the online protocol: predict with the
/// current weights, then update once the observation is revealed.
pub trait Aggregator<T: Scalar> {
    fn weights(&self) -> &WeightVector<T>;

    fn n_experts(&self) -> usize {
        self.weights().len()
    }

    fn predict(&self, predictions: &[T]) -> Result<T> {
        convex_combine(self.weights(), predictions)
    }

    /// Update after the aggregation issued `prediction` for `predictions`.
    ///
    /// Callers wrapping the rule (sleeping experts) pass the prediction they
    /// actually issued so that the gradient is taken at that point.
    fn update_at(&mut self, predictions: &[T], prediction: T, observation: T) -> Result<()>;

    fn update(&mut self, predictions: &[T], observation: T) -> Result<()> {
        let prediction = self.predict(predictions)?;
        self.update_at(predictions, prediction, observation)
    }
}

pub(crate) fn check_round<T: Scalar>(n: usize, predictions: &[T], prediction: T, observation: T) -> Result<()> {
    if predictions.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: predictions.len() });
    }
    if predictions.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("expert predictions"));
    }
    if !prediction.is_finite() {
        return Err(Error::NonFinite("aggregated prediction"));
    }
    if !observation.is_finite() {
        return Err(Error::NonFinite("observation"));
    }
    Ok(())
}

/// Normalizes `exp(log_masses)` after subtracting the maximum.
pub(crate) fn softmax_weights<T: Scalar>(log_masses: &[T]) -> Result<WeightVector<T>> {
    let max = log_masses.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("log-domain weights"));
    }
    WeightVector::from_masses(log_masses.iter().map(|&l| (l - max).exp()).collect())
}
