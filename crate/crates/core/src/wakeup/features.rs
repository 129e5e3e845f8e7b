use serde::{Deserialize, Serialize};

use super::kalman::KalmanForecast;
use crate::domain::ForecastRecord;
use crate::error::{Error, Result};

/// Which experts feed the ensemble-spread features and the Kalman filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Indices of the ensemble quantile experts.
    pub ensemble: Vec<usize>,
    /// Index of the expert tracked by the Kalman filter.
    pub kalman_expert: usize,
}

/// Inputs of the wake-up classifier for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub first_leadtime_obs: f64,
    /// One entry per expert, in roster order.
    pub first_leadtime_obs_minus_expert: Vec<f64>,
    pub first_leadtime_obs_minus_agreg: f64,
    pub sd_all_experts: f64,
    pub mean_minus_max: f64,
    pub mean_minus_min: f64,
    pub sd_pearp_quantiles: f64,
    pub agreg_minus_mean_pearp: f64,
    pub run_mean_variance: f64,
    pub run_variance_of_variance: f64,
    pub diff_run_mean_var: f64,
    pub kf_prediction: f64,
    pub kf_sd: f64,
    /// Run-level features were zero-filled for lack of context.
    #[serde(default)]
    pub degenerate_run: bool,
}

impl FeatureVector {
    /// Flattened in the order of [`feature_names`].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.first_leadtime_obs_minus_expert.len() + 12);
        v.push(self.first_leadtime_obs);
        v.extend_from_slice(&self.first_leadtime_obs_minus_expert);
        v.extend_from_slice(&[
            self.first_leadtime_obs_minus_agreg,
            self.sd_all_experts,
            self.mean_minus_max,
            self.mean_minus_min,
            self.sd_pearp_quantiles,
            self.agreg_minus_mean_pearp,
            self.run_mean_variance,
            self.run_variance_of_variance,
            self.diff_run_mean_var,
            self.kf_prediction,
            self.kf_sd,
        ]);
        v
    }
}

pub fn feature_names<'a>(experts: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut names = vec!["first_lt_obs".to_string()];
    names.extend(experts.into_iter().map(|e| format!("first_lt_obs_minus_{e}")));
    names.extend(
        [
            "first_lt_obs_minus_agreg",
            "sd_all_experts",
            "mean_minus_max",
            "mean_minus_min",
            "sd_pearp_quantiles",
            "agreg_minus_mean_pearp",
            "run_mean_variance",
            "run_variance_of_variance",
            "diff_run_mean_var",
            "kf_prediction",
            "kf_sd",
        ]
        .map(String::from),
    );
    names
}

fn mean(xs: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let n = xs.clone().count();
    (n > 0).then(|| xs.sum::<f64>() / n as f64)
}

/// Population variance.
pub(crate) fn variance(xs: &[f64]) -> f64 {
    match mean(xs.iter().copied()) {
        Some(m) => xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64,
        None => 0.0,
    }
}

/// Builds the classifier features for one round.
///
/// `run_variances` holds the across-expert variance of every lead time of the
/// same model run (including this one). An empty slice zero-fills the
/// run-level features and sets `degenerate_run`.
pub fn build_features(
    record: &ForecastRecord<f64>,
    unbiased_prediction: f64,
    kalman: KalmanForecast,
    spec: &FeatureSpec,
    run_variances: &[f64],
) -> Result<FeatureVector> {
    let preds = &record.expert_predictions;
    if preds.is_empty() {
        return Err(Error::Empty("expert predictions"));
    }
    if let Some(&bad) = spec.ensemble.iter().chain([&spec.kalman_expert]).find(|&&i| i >= preds.len()) {
        return Err(Error::DimensionMismatch { expected: preds.len(), got: bad + 1 });
    }
    let obs1 = record.first_leadtime_observation;
    let m = mean(preds.iter().copied()).unwrap_or(0.0);
    let max = preds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = preds.iter().copied().fold(f64::INFINITY, f64::min);
    let own_var = variance(preds);

    let ens: Vec<f64> = spec.ensemble.iter().map(|&i| preds[i]).collect();
    let ens_mean = mean(ens.iter().copied());

    let degenerate_run = run_variances.is_empty();
    let (run_mean, run_var) = if degenerate_run {
        (0.0, 0.0)
    } else {
        let rm = mean(run_variances.iter().copied()).unwrap_or(0.0);
        (rm, variance(run_variances))
    };

    let fv = FeatureVector {
        first_leadtime_obs: obs1,
        first_leadtime_obs_minus_expert: preds.iter().map(|x| obs1 - x).collect(),
        first_leadtime_obs_minus_agreg: obs1 - unbiased_prediction,
        sd_all_experts: own_var.sqrt(),
        mean_minus_max: m - max,
        mean_minus_min: m - min,
        sd_pearp_quantiles: variance(&ens).sqrt(),
        agreg_minus_mean_pearp: ens_mean.map_or(0.0, |em| unbiased_prediction - em),
        run_mean_variance: run_mean,
        run_variance_of_variance: run_var,
        diff_run_mean_var: if degenerate_run { 0.0 } else { own_var - run_mean },
        kf_prediction: kalman.prediction,
        kf_sd: kalman.sd,
        degenerate_run,
    };
    if fv.to_vec().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features"));
    }
    Ok(fv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(preds: Vec<f64>) -> ForecastRecord<f64> {
        ForecastRecord {
            round_index: 1,
            date: "2021-12-13".into(),
            station_id: "74056001".into(),
            lead_time_hours: 48,
            observation: 0.0,
            expert_predictions: preds,
            first_leadtime_observation: 1.0,
        }
    }

    fn kf() -> KalmanForecast {
        KalmanForecast { prediction: 0.0, sd: 1.0 }
    }

    #[test]
    fn zero_spread() {
        let spec = FeatureSpec { ensemble: vec![0, 1, 2], kalman_expert: 0 };
        let f = build_features(&record(vec![4.0, 4.0, 4.0]), 4.0, kf(), &spec, &[0.0]).unwrap();
        assert_eq!(f.sd_all_experts, 0.0);
        assert_eq!(f.mean_minus_max, 0.0);
        assert_eq!(f.mean_minus_min, 0.0);
    }

    #[test]
    fn symmetric_quantiles() {
        let spec = FeatureSpec { ensemble: vec![0, 1, 2, 3, 4], kalman_expert: 0 };
        let f = build_features(&record(vec![1.0, 2.0, 3.0, 4.0, 5.0]), 3.0, kf(), &spec, &[2.0]).unwrap();
        assert_eq!(f.agreg_minus_mean_pearp, 0.0);
    }

    #[test]
    fn population_sd() {
        let spec = FeatureSpec { ensemble: vec![], kalman_expert: 0 };
        let f = build_features(&record(vec![10.0, 12.0, 14.0]), 12.0, kf(), &spec, &[]).unwrap();
        assert!((f.sd_all_experts - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((f.sd_all_experts - 1.632_993_161_855_452).abs() < 1e-12);
        assert!(f.degenerate_run);
        assert_eq!(f.run_mean_variance, 0.0);
        assert_eq!(f.agreg_minus_mean_pearp, 0.0);
    }

    #[test]
    fn run_features() {
        let spec = FeatureSpec { ensemble: vec![0, 1], kalman_expert: 1 };
        let rec = record(vec![10.0, 12.0]);
        // Own variance 1; run variances (1, 3).
        let f = build_features(&rec, 11.0, kf(), &spec, &[1.0, 3.0]).unwrap();
        assert_eq!(f.run_mean_variance, 2.0);
        assert_eq!(f.run_variance_of_variance, 1.0);
        assert_eq!(f.diff_run_mean_var, -1.0);
        assert_eq!(f.first_leadtime_obs_minus_expert, vec![-9.0, -11.0]);
        assert_eq!(f.first_leadtime_obs_minus_agreg, -10.0);
        let names = feature_names(["a", "b"]);
        assert_eq!(names.len(), f.to_vec().len());
    }

    #[test]
    fn index_out_of_range() {
        let spec = FeatureSpec { ensemble: vec![5], kalman_expert: 0 };
        assert!(build_features(&record(vec![1.0]), 1.0, kf(), &spec, &[]).is_err());
    }
}
