use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar Kalman filter on an expert's additive bias, modeled as a random
/// walk: `y_t = x_t + b_t + ε_t`, `b_t = b_{t−1} + ν_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanFeatureState {
    pub state_mean: f64,
    pub state_variance: f64,
    pub process_noise: f64,
    pub observation_noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanForecast {
    /// Bias-corrected expert prediction.
    pub prediction: f64,
    /// Posterior-predictive standard deviation.
    pub sd: f64,
}

impl KalmanFeatureState {
    /// State variance starts at the observation noise.
    pub fn new(initial_mean: f64, process_noise: f64, observation_noise: f64) -> Result<Self> {
        if !(process_noise >= 0.0 && process_noise.is_finite()) {
            return Err(Error::param("kalman.process_noise", format!("{process_noise}")));
        }
        if !(observation_noise > 0.0 && observation_noise.is_finite()) {
            return Err(Error::param("kalman.observation_noise", format!("{observation_noise}")));
        }
        if !initial_mean.is_finite() {
            return Err(Error::NonFinite("kalman initial mean"));
        }
        Ok(Self {
            state_mean: initial_mean,
            state_variance: observation_noise,
            process_noise,
            observation_noise,
        })
    }

    /// Predictive distribution for this round, before the observation.
    pub fn forecast(&self, expert_prediction: f64) -> KalmanForecast {
        let prior_var = self.state_variance + self.process_noise;
        KalmanForecast {
            prediction: expert_prediction + self.state_mean,
            sd: (prior_var + self.observation_noise).sqrt(),
        }
    }

    pub fn update(&mut self, expert_prediction: f64, observation: f64) {
        let prior_var = self.state_variance + self.process_noise;
        let gain = prior_var / (prior_var + self.observation_noise);
        let innovation = observation - expert_prediction - self.state_mean;
        self.state_mean += gain * innovation;
        self.state_variance = (1.0 - gain) * prior_var;
    }

    /// Forecast then update; returns the pre-update forecast.
    pub fn step(&mut self, expert_prediction: f64, observation: f64) -> KalmanForecast {
        let f = self.forecast(expert_prediction);
        self.update(expert_prediction, observation);
        f
    }
}
