use serde::{Deserialize, Serialize};

use super::{check_round, softmax_weights, Aggregator};
use crate::domain::{grad, WeightVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Exponential weights on linearized losses followed by the Fixed Share
/// mixing step `w ← (1 − α) w + α / N`.
///
/// The learning rate adapts to the observed spread of linearized losses:
/// `η_t = min(η_max, sqrt(8 ln N / Σ_s range_s²))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedShareState<T> {
    weights: WeightVector<T>,
    share_rate: T,
    eta_max: T,
    eta: T,
    cumulative_squared_range: T,
}

impl<T: Scalar> FixedShareState<T> {
    pub fn new(n_experts: usize, share_rate: T) -> Result<Self> {
        Self::with_eta_max(n_experts, share_rate, T::one())
    }

    /// `share_rate` must lie in [0, 1]; 0 is plain exponential weights and 1
    /// resets to uniform every round.
    pub fn with_eta_max(n_experts: usize, share_rate: T, eta_max: T) -> Result<Self> {
        if !(share_rate >= T::zero() && share_rate <= T::one()) {
            return Err(Error::param("share_rate", format!("must lie in [0, 1], got {share_rate}")));
        }
        if !(eta_max > T::zero() && eta_max.is_finite()) {
            return Err(Error::param("eta_max", format!("must be positive and finite, got {eta_max}")));
        }
        Ok(Self {
            weights: WeightVector::uniform(n_experts)?,
            share_rate,
            eta_max,
            eta: eta_max,
            cumulative_squared_range: T::zero(),
        })
    }

    pub fn share_rate(&self) -> T {
        self.share_rate
    }

    pub fn learning_rate(&self) -> T {
        self.eta
    }
}

impl<T: Scalar> Aggregator<T> for FixedShareState<T> {
    fn weights(&self) -> &WeightVector<T> {
        &self.weights
    }

    fn update_at(&mut self, predictions: &[T], prediction: T, observation: T) -> Result<()> {
        let n = self.weights.len();
        check_round(n, predictions, prediction, observation)?;
        let g = grad(prediction, observation);
        let regrets: Vec<T> = predictions.iter().map(|&x| g * (x - prediction)).collect();
        let log_masses: Vec<T> = self
            .weights
            .as_slice()
            .iter()
            .zip(&regrets)
            .map(|(&w, &r)| w.ln() - self.eta * r)
            .collect();
        let exp_weights = softmax_weights(&log_masses)?;

        let alpha = self.share_rate;
        let floor = alpha / T::from_count(n);
        let mixed: Vec<T> = exp_weights
            .as_slice()
            .iter()
            .map(|&v| (T::one() - alpha) * v + floor)
            .collect();
        self.weights = WeightVector::from_masses(mixed)?;

        let hi = regrets.iter().copied().fold(T::neg_infinity(), T::max);
        let lo = regrets.iter().copied().fold(T::infinity(), T::min);
        let range = hi - lo;
        self.cumulative_squared_range = self.cumulative_squared_range + range * range;
        let ln_n = T::from_count(n).ln();
        self.eta = if self.cumulative_squared_range > T::zero() && ln_n > T::zero() {
            self.eta_max.min((T::lit(8.0) * ln_n / self.cumulative_squared_range).sqrt())
        } else {
            self.eta_max
        };
        Ok(())
    }
}
