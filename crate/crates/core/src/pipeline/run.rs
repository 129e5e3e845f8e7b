use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::RunConfig;
use super::ingest::{Stream, StreamKey};
use super::ledger::{LedgerRow, Outcome, RunLedger, Strategy};
use crate::aggregation::{Aggregator, BoaState, Candidate, FixedShareState, FtlState};
use crate::domain::{sq_err, ErrorClass, ExpertRoster, WeightVector};
use crate::error::{Error, Result};
use crate::explain::{tree_shap, ShapRecord};
use crate::sleeping::{oracle_awake_set, AwakeSet, OracleMode, SleepingAggregator};
use crate::wakeup::{
    build_features, feature_names, make_label, replication, train_forest, wake_from_class, BoostedForest,
    FeatureSpec, KalmanFeatureState, TrainingSample,
};

fn stream_roster(cfg: &RunConfig, names: &[String]) -> Result<ExpertRoster> {
    let pick = |list: &[String]| -> Vec<String> { list.iter().filter(|n| names.contains(n)).cloned().collect() };
    ExpertRoster::new(names, &pick(&cfg.roster.cold), &pick(&cfg.roster.warm))
}

/// Ensemble experts present in the stream; the Kalman feature follows the
/// first configured expert present, else the first always-awake expert.
fn feature_spec(cfg: &RunConfig, roster: &ExpertRoster) -> FeatureSpec {
    FeatureSpec {
        ensemble: cfg.roster.ensemble.iter().filter_map(|e| roster.index_of(e)).collect(),
        kalman_expert: cfg
            .roster
            .kalman_experts
            .iter()
            .find_map(|e| roster.index_of(e))
            .unwrap_or(roster.unbiased_indices()[0]),
    }
}

fn boa(cfg: &RunConfig, n: usize) -> Result<BoaState<f64>> {
    BoaState::with_prior(WeightVector::uniform(n)?, cfg.eta_max)
}

/// Diagnostics of a run that are not ledger columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub forests_trained: usize,
    /// Largest |base + Σφ − margin| over all logged attributions.
    pub max_shap_local_error: f64,
    pub degenerate_rounds: usize,
}

/// The online loop over one stream. Every strategy sees the same rounds in
/// lockstep; nothing reads a round's observation before all strategies have
/// predicted it, except the oracles, which are defined by peeking at it.
pub fn run_stream(cfg: &RunConfig, stream: &Stream) -> Result<RunLedger> {
    run_stream_with_stats(cfg, stream).map(|(l, _)| l)
}

pub fn run_stream_with_stats(cfg: &RunConfig, stream: &Stream) -> Result<(RunLedger, RunStats)> {
    let wrap = |round: usize| {
        let key = stream.key.to_string();
        move |e: Error| Error::Stream { stream: key, round, source: Box::new(e) }
    };
    cfg.validate()?;
    if stream.records.is_empty() {
        return Err(Error::Empty("stream"));
    }
    let names = &stream.expert_names;
    let roster = stream_roster(cfg, names).map_err(wrap(0))?;
    let n = roster.len();
    let unbiased = roster.unbiased_indices();
    let spec = feature_spec(cfg, &roster);
    let threshold = cfg.wake.threshold;
    let activation = cfg.wake.activation_round;
    let use_classifier = cfg.needs_classifier();

    let mut strategies = vec![Strategy::BoaUnbiased];
    let t = &cfg.strategies;
    for (on, s) in [
        (t.boa, Strategy::Boa),
        (t.boa_sleeping, Strategy::BoaSleeping),
        (t.ftl, Strategy::FtlBoa),
        (t.ftl_regularized, Strategy::FtlBoaRegularized),
        (t.fixed_share, Strategy::FixedShare),
        (t.oracle_class, Strategy::OracleClass),
        (t.oracle_expert, Strategy::OracleExpert),
    ] {
        if on {
            strategies.push(s);
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let weighted: Vec<(Strategy, Vec<usize>)> = strategies
        .iter()
        .filter(|s| s.has_weights())
        .map(|&s| (s, if s == Strategy::BoaUnbiased { unbiased.clone() } else { all.clone() }))
        .collect();

    let mut ub = boa(cfg, unbiased.len())?;
    let mut full = boa(cfg, n)?;
    let mut sef = SleepingAggregator::new(boa(cfg, n)?);
    let mut oracle = SleepingAggregator::new(boa(cfg, n)?);
    let mut fs = FixedShareState::new(n, cfg.fixed_share_alpha)?;
    let mut ftl = FtlState::<f64>::plain();
    let mut ftl_reg = FtlState::new(cfg.ftl_regularizer)?;
    let mut kalman = KalmanFeatureState::new(0.0, cfg.kalman.process_noise, cfg.kalman.observation_noise)?;

    let fnames = feature_names(names.iter().map(String::as_str));
    let mut samples: Vec<TrainingSample> = Vec::new();
    let mut forest: Option<BoostedForest> = None;
    let mut stats = RunStats::default();
    let mut shap = Vec::new();
    let mut rows = Vec::with_capacity(stream.records.len());

    for (idx, rec) in stream.records.iter().enumerate() {
        let round = idx + 1;
        let mut step = || -> Result<LedgerRow> {
            rec.validate(n)?;
            let x = &rec.expert_predictions;
            let sub: Vec<f64> = unbiased.iter().map(|&i| x[i]).collect();

            // (a) features from past state and the unbiased aggregation
            let ub_pred = ub.predict(&sub)?;
            let kf = kalman.forecast(x[spec.kalman_expert]);
            let features = build_features(rec, ub_pred, kf, &spec, &stream.run_variances[idx])?;
            let fv = features.to_vec();

            // (b) classifier
            let mut predicted = ErrorClass::Neutral;
            if use_classifier && round >= activation && !samples.is_empty() {
                if forest.is_none() || (round - activation).is_multiple_of(cfg.wake.retrain_stride) {
                    forest = Some(train_forest(&samples, &cfg.gbrt, cfg.seed)?);
                    stats.forests_trained += 1;
                }
                let f = forest.as_ref().expect("trained above");
                predicted = f.predict_class(&fv).0;
                if cfg.shap {
                    let attr = tree_shap(f, &fv)?;
                    stats.max_shap_local_error = stats.max_shap_local_error.max(attr.local_accuracy_error());
                    shap.extend(ShapRecord::from_attribution(round, predicted, &fnames, &fv, &attr));
                }
            }

            // (c) awake set
            let awake = wake_from_class(predicted, round, activation, &roster)?;

            // (d) predictions
            let weights_before: Vec<Vec<f64>> = weighted
                .iter()
                .map(|(s, _)| match s {
                    Strategy::BoaUnbiased => ub.weights().as_slice().to_vec(),
                    Strategy::Boa => full.weights().as_slice().to_vec(),
                    Strategy::BoaSleeping => sef.weights().as_slice().to_vec(),
                    Strategy::FixedShare => fs.weights().as_slice().to_vec(),
                    Strategy::OracleClass => oracle.weights().as_slice().to_vec(),
                    _ => unreachable!("unweighted strategy"),
                })
                .collect();
            let boa_pred = full.predict(x)?;
            let sef_pred = sef.predict(x, &awake)?;
            let ftl_choice = ftl.select();
            let ftl_reg_choice = ftl_reg.select();
            let pick = |c: Candidate| if c == Candidate::B { sef_pred.value } else { boa_pred };
            let fs_pred = fs.predict(x)?;

            // (e) observation
            let y = rec.observation;
            let truth = make_label(ub_pred, y, threshold);
            let oracle_awake: AwakeSet =
                oracle_awake_set(OracleMode::OracleClass, Some(truth), round, activation, &roster)?;
            let oracle_pred = oracle.predict(x, &oracle_awake)?.value;

            // (f) losses and updates
            let ub_loss = sq_err(ub_pred, y);
            let boa_loss = sq_err(boa_pred, y);
            let sef_loss = sq_err(sef_pred.value, y);
            let fs_loss = sq_err(fs_pred, y);
            let oracle_loss = sq_err(oracle_pred, y);
            let oracle_expert_loss =
                if OracleMode::OracleExpert.forces_zero_loss(&oracle_awake, &roster) { 0.0 } else { oracle_loss };
            ub.update_at(&sub, ub_pred, y)?;
            full.update_at(x, boa_pred, y)?;
            sef.update(x, &awake, y)?;
            oracle.update(x, &oracle_awake, y)?;
            fs.update_at(x, fs_pred, y)?;
            ftl.record(boa_loss, sef_loss)?;
            ftl_reg.record(boa_loss, sef_loss)?;
            kalman.update(x[spec.kalman_expert], y);
            samples.push(TrainingSample {
                features: fv,
                label: truth,
                replication: replication(ub_pred, y, threshold, cfg.wake.oversample),
            });
            if sef_pred.degenerate {
                stats.degenerate_rounds += 1;
            }

            // (g) ledger row
            let outcome = |s: Strategy| match s {
                Strategy::BoaUnbiased => Outcome { prediction: ub_pred, loss: ub_loss },
                Strategy::Boa => Outcome { prediction: boa_pred, loss: boa_loss },
                Strategy::BoaSleeping => Outcome { prediction: sef_pred.value, loss: sef_loss },
                Strategy::FtlBoa => {
                    Outcome { prediction: pick(ftl_choice), loss: if ftl_choice == Candidate::B { sef_loss } else { boa_loss } }
                }
                Strategy::FtlBoaRegularized => Outcome {
                    prediction: pick(ftl_reg_choice),
                    loss: if ftl_reg_choice == Candidate::B { sef_loss } else { boa_loss },
                },
                Strategy::FixedShare => Outcome { prediction: fs_pred, loss: fs_loss },
                Strategy::OracleClass => Outcome { prediction: oracle_pred, loss: oracle_loss },
                Strategy::OracleExpert => Outcome { prediction: oracle_pred, loss: oracle_expert_loss },
            };
            Ok(LedgerRow {
                round,
                date: rec.date.clone(),
                observation: y,
                predictions: x.clone(),
                awake: awake.mask().to_vec(),
                oracle_awake: oracle_awake.mask().to_vec(),
                predicted_class: predicted,
                true_class: truth,
                degenerate: sef_pred.degenerate,
                outcomes: strategies.iter().map(|&s| outcome(s)).collect(),
                ftl_choice: t.ftl.then_some(ftl_choice),
                ftl_reg_choice: t.ftl_regularized.then_some(ftl_reg_choice),
                weights: weights_before,
            })
        };
        rows.push(step().map_err(wrap(round))?);
    }
    if stats.degenerate_rounds > 0 {
        log::info!("{}: {} degenerate sleeping-expert rounds", stream.key, stats.degenerate_rounds);
    }
    let ledger = RunLedger {
        key: stream.key.clone(),
        expert_names: names.clone(),
        strategies,
        weighted,
        rows,
        feature_names: fnames,
        shap,
    };
    Ok((ledger, stats))
}

/// Runs every stream, in parallel, and returns the ledgers in key order.
pub fn run_all(cfg: &RunConfig, streams: &BTreeMap<StreamKey, Stream>) -> Result<Vec<(RunLedger, RunStats)>> {
    let list: Vec<&Stream> = streams.values().collect();
    list.par_iter().map(|s| run_stream_with_stats(cfg, s)).collect()
}

/// The classifier's training set for a whole stream: the features, labels
/// and replication the online loop would log, without running any other
/// strategy.
pub fn training_samples(cfg: &RunConfig, stream: &Stream) -> Result<Vec<TrainingSample>> {
    let names = &stream.expert_names;
    let roster = stream_roster(cfg, names)?;
    let unbiased = roster.unbiased_indices();
    let spec = feature_spec(cfg, &roster);
    let mut ub = boa(cfg, unbiased.len())?;
    let mut kalman = KalmanFeatureState::new(0.0, cfg.kalman.process_noise, cfg.kalman.observation_noise)?;
    let mut out = Vec::with_capacity(stream.records.len());
    for (idx, rec) in stream.records.iter().enumerate() {
        rec.validate(roster.len())?;
        let x = &rec.expert_predictions;
        let sub: Vec<f64> = unbiased.iter().map(|&i| x[i]).collect();
        let ub_pred = ub.predict(&sub)?;
        let kf = kalman.forecast(x[spec.kalman_expert]);
        let fv = build_features(rec, ub_pred, kf, &spec, &stream.run_variances[idx])?.to_vec();
        let y = rec.observation;
        out.push(TrainingSample {
            features: fv,
            label: make_label(ub_pred, y, cfg.wake.threshold),
            replication: replication(ub_pred, y, cfg.wake.threshold, cfg.wake.oversample),
        });
        ub.update_at(&sub, ub_pred, y)?;
        kalman.update(x[spec.kalman_expert], y);
    }
    Ok(out)
}
