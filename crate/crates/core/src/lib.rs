//! Online temperature forecast aggregation with sleeping experts.
//!
//! The building blocks are an adaptive second-order aggregation ([`BoaState`]),
//! a sleeping-expert wrapper that wakes biased quantile experts only when a
//! boosted-tree classifier expects a large error ([`sleeping`], [`wakeup`]),
//! a follow-the-leader selector between the two ([`FtlState`]), exact
//! TreeSHAP attributions ([`explain`]) and multi-category verification scores
//! ([`evaluation`]). [`pipeline`] runs everything over CSV streams.
//!
//! Aggregation and scoring are generic over [`Scalar`]; the aliases below fix
//! the scalar to `f64`.

pub mod aggregation;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod pipeline;
pub mod scalar;
pub mod sleeping;
pub mod synthetic;
pub mod wakeup;

pub use aggregation::{Aggregator, Candidate, FixedShareState, FtlState};
pub use domain::{
    convex_combine, loss_gradient, squared_loss, ErrorClass, ExpertId, ExpertRoster, LossValue,
    Specialty,
};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use sleeping::{AwakeSet, SleepingAggregator, WakeSource};

pub type Boa = aggregation::BoaState<f64>;
pub type SleepingBoa = sleeping::SleepingAggregator<Boa>;
pub type FixedShare = aggregation::FixedShareState<f64>;
pub type Ftl = aggregation::FtlState<f64>;
pub type Weights = domain::WeightVector<f64>;
pub type Record = domain::ForecastRecord<f64>;
pub type SefStep = sleeping::SefStep<f64>;
pub type RegretAudit = sleeping::RegretAudit<f64>;

pub use aggregation::BoaState;
pub use domain::{ForecastRecord, WeightVector};
