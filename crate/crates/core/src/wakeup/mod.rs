//! Deciding which specialists to wake: error labels, the wake rule, the
//! feature builder, a scalar Kalman filter feature and the boosted-tree
//! classifier.

pub(crate) mod features;
mod gbrt;
mod kalman;

pub use features::{build_features, feature_names, FeatureSpec, FeatureVector};
pub use gbrt::{
    train_forest, BoostedForest, GbrtParams, RegressionTree, Split, TrainingSample, TreeNode,
    FOREST_FORMAT_VERSION,
};
pub use kalman::{KalmanFeatureState, KalmanForecast};

use crate::domain::{ErrorClass, ExpertRoster, Specialty};
use crate::error::Result;
use crate::sleeping::{AwakeSet, WakeSource};

/// Large-error threshold in °C.
pub const DEFAULT_THRESHOLD: f64 = 2.5;
/// First round at which the classifier may wake specialists.
pub const DEFAULT_ACTIVATION_ROUND: usize = 100;
pub const DEFAULT_OVERSAMPLE: u32 = 5;

/// Class of the unbiased aggregation's error `prediction − observation`.
pub fn make_label(unbiased_prediction: f64, observation: f64, threshold: f64) -> ErrorClass {
    ErrorClass::from_error(unbiased_prediction - observation, threshold)
}

/// Training multiplicity: `factor` when the unbiased error is large in
/// either direction, 1 otherwise.
pub fn replication(unbiased_prediction: f64, observation: f64, threshold: f64, factor: u32) -> u32 {
    if (unbiased_prediction - observation).abs() >= threshold {
        factor
    } else {
        1
    }
}

/// Wake rule: before `activation_round` every specialist sleeps; afterwards a
/// predicted negative error wakes the warm specialists, a predicted positive
/// error wakes the cold ones, and a neutral class wakes none.
pub fn wake_from_class(
    class: ErrorClass,
    round: usize,
    activation_round: usize,
    roster: &ExpertRoster,
) -> Result<AwakeSet> {
    let wanted = if round < activation_round {
        None
    } else {
        match class {
            ErrorClass::Negative => Some(Specialty::Warm),
            ErrorClass::Positive => Some(Specialty::Cold),
            ErrorClass::Neutral => None,
        }
    };
    let mask = roster
        .experts()
        .iter()
        .map(|e| match e.specialty {
            None => true,
            Some(s) => Some(s) == wanted,
        })
        .collect();
    AwakeSet::new(mask, class, WakeSource::Classifier, roster)
}
