//! Seeded synthetic forecast streams: a smooth temperature signal, unbiased
//! experts with their own bias and noise, and quantile-like specialists that
//! become exact during planted cold (or warm) spells.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregation::{Aggregator, BoaState};
use crate::domain::{ErrorClass, ExpertRoster, ForecastRecord};
use crate::error::{Error, Result};
use crate::pipeline::{attach_run_variances, Stream, StreamKey, FIXED_COLUMNS};
use crate::sleeping::{oracle_awake_set, OracleMode, SefStep, SleepingAggregator};
use crate::wakeup::{make_label, wake_from_class};

/// Standard normal draw (Box–Muller).
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub rounds: usize,
    pub n_unbiased: usize,
    /// Cold specialists, most extreme first (Q10, Q30, ...).
    pub cold: Vec<(String, f64)>,
    /// Warm specialists, most extreme first (Q90, Q70, ...).
    pub warm: Vec<(String, f64)>,
    pub spell_length: usize,
    pub n_cold_spells: usize,
    pub n_warm_spells: usize,
    /// Spells start no earlier than this round.
    pub first_spell_round: usize,
    /// Range of the planted anomaly in °C.
    pub spell_depth: (f64, f64),
    pub expert_noise: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            rounds: 400,
            n_unbiased: 3,
            cold: vec![("Q10".into(), -3.0), ("Q30".into(), -1.5)],
            warm: vec![("Q90".into(), 3.0), ("Q70".into(), 1.5)],
            spell_length: 10,
            n_cold_spells: 4,
            n_warm_spells: 0,
            first_spell_round: 120,
            spell_depth: (4.0, 7.0),
            expert_noise: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spell {
    Cold,
    Warm,
}

#[derive(Debug, Clone)]
pub struct SyntheticStream {
    pub expert_names: Vec<String>,
    pub roster: ExpertRoster,
    pub records: Vec<ForecastRecord<f64>>,
    /// `spells[t]` for 0-based round `t`.
    pub spells: Vec<Option<Spell>>,
}

impl SyntheticStream {
    pub fn planted_rounds(&self) -> impl Iterator<Item = usize> + '_ {
        self.spells.iter().enumerate().filter(|(_, s)| s.is_some()).map(|(t, _)| t)
    }

    /// As an ingested pipeline stream.
    pub fn to_stream(&self) -> Stream {
        let first = &self.records[0];
        let key = StreamKey { station_id: first.station_id.clone(), lead_time: first.lead_time_hours };
        let stream = Stream {
            key: key.clone(),
            expert_names: self.expert_names.clone(),
            records: self.records.clone(),
            run_variances: Vec::new(),
        };
        let mut map = BTreeMap::from([(key.clone(), stream)]);
        attach_run_variances(&mut map);
        map.remove(&key).expect("inserted above")
    }

    /// In the ingest format.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_streams_csv(path, std::slice::from_ref(self))
    }
}

/// Several synthetic streams in one ingest-format file. All streams must
/// share the expert names.
pub fn write_streams_csv(path: &Path, streams: &[SyntheticStream]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    if let Some(s) = streams.first() {
        header.extend(s.expert_names.iter().cloned());
    }
    w.write_record(&header)?;
    for s in streams {
        for r in &s.records {
            let mut rec = vec![
                r.date.clone(),
                r.station_id.clone(),
                r.lead_time_hours.to_string(),
                r.observation.to_string(),
                r.first_leadtime_observation.to_string(),
            ];
            rec.extend(r.expert_predictions.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn plant_spells(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig) -> Vec<Option<Spell>> {
    let mut spells = vec![None; cfg.rounds];
    let kinds: Vec<Spell> = std::iter::repeat_n(Spell::Cold, cfg.n_cold_spells)
        .chain(std::iter::repeat_n(Spell::Warm, cfg.n_warm_spells))
        .collect();
    let lo = cfg.first_spell_round.saturating_sub(1);
    let hi = cfg.rounds.saturating_sub(cfg.spell_length);
    for kind in kinds {
        for _ in 0..1000 {
            if hi <= lo {
                break;
            }
            let start = rng.gen_range(lo..hi);
            // keep a calm round on either side
            let a = start.saturating_sub(1);
            let b = (start + cfg.spell_length + 1).min(cfg.rounds);
            if spells[a..b].iter().all(Option::is_none) {
                for s in &mut spells[start..start + cfg.spell_length] {
                    *s = Some(kind);
                }
                break;
            }
        }
    }
    spells
}

/// One seeded stream. Unbiased experts track the calm signal with a fixed
/// bias and noise and miss the planted anomaly; during a cold spell the most
/// extreme cold specialist equals the observation up to 0.1 °C noise and the
/// other cold specialists sit halfway, and symmetrically for warm spells.
pub fn generate(cfg: &GeneratorConfig, seed: u64) -> Result<SyntheticStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names: Vec<String> = (0..cfg.n_unbiased).map(|i| format!("model{}", i + 1)).collect();
    names.extend(cfg.cold.iter().map(|(n, _)| n.clone()));
    names.extend(cfg.warm.iter().map(|(n, _)| n.clone()));
    let cold: Vec<&str> = cfg.cold.iter().map(|(n, _)| n.as_str()).collect();
    let warm: Vec<&str> = cfg.warm.iter().map(|(n, _)| n.as_str()).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let roster = ExpertRoster::new(&name_refs, &cold, &warm)?;

    let biases: Vec<f64> = (0..cfg.n_unbiased).map(|_| rng.gen_range(-0.8..0.8)).collect();
    let noise: Vec<f64> = (0..cfg.n_unbiased).map(|_| cfg.expert_noise * rng.gen_range(0.7..1.3)).collect();
    let spells = plant_spells(&mut rng, cfg);
    let phase = rng.gen_range(0.0..365.0);
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");

    let mut records = Vec::with_capacity(cfg.rounds);
    let mut anomaly = 0.0;
    let mut prev_obs = 10.0;
    for t in 0..cfg.rounds {
        anomaly = 0.7 * anomaly + 0.8 * standard_normal(&mut rng);
        let calm = 10.0 + 8.0 * (2.0 * std::f64::consts::PI * (t as f64 + phase) / 365.0).sin() + anomaly;
        let depth = rng.gen_range(cfg.spell_depth.0..cfg.spell_depth.1);
        let obs = match spells[t] {
            Some(Spell::Cold) => calm - depth,
            Some(Spell::Warm) => calm + depth,
            None => calm + 0.5 * standard_normal(&mut rng),
        };
        let mut preds: Vec<f64> =
            (0..cfg.n_unbiased).map(|i| calm + biases[i] + noise[i] * standard_normal(&mut rng)).collect();
        let center = preds.iter().sum::<f64>() / cfg.n_unbiased as f64;
        for (group, kind) in [(&cfg.cold, Spell::Cold), (&cfg.warm, Spell::Warm)] {
            for (rank, (_, offset)) in group.iter().enumerate() {
                let x = if spells[t] == Some(kind) {
                    let exact = obs + 0.1 * standard_normal(&mut rng);
                    if rank == 0 {
                        exact
                    } else {
                        0.5 * (exact + center)
                    }
                } else {
                    center + offset + 0.3 * standard_normal(&mut rng)
                };
                preds.push(x);
            }
        }
        records.push(ForecastRecord {
            round_index: t + 1,
            date: (start + Duration::days(t as i64)).format("%Y-%m-%d").to_string(),
            station_id: format!("SYN{seed}"),
            lead_time_hours: 48,
            observation: obs,
            expert_predictions: preds,
            first_leadtime_observation: prev_obs + 0.3 * standard_normal(&mut rng),
        });
        prev_obs = obs;
    }
    Ok(SyntheticStream { expert_names: names, roster, records, spells })
}

/// How the awake sets of [`simulate_sef_trace`] are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimulatedClassifier {
    /// The true class with this probability, otherwise one of the two
    /// other classes uniformly.
    Noisy(f64),
    Perfect,
}

/// Runs BOA in the sleeping-expert framework over `stream`, waking
/// specialists from a simulated classifier. True classes come from plain
/// BOA over the unbiased experts.
pub fn simulate_sef_trace(
    stream: &SyntheticStream,
    classifier: SimulatedClassifier,
    activation_round: usize,
    threshold: f64,
    seed: u64,
) -> Result<Vec<SefStep<f64>>> {
    let roster = &stream.roster;
    let unbiased = roster.unbiased_indices();
    let mut reference = BoaState::<f64>::new(unbiased.len())?;
    let mut sef = SleepingAggregator::new(BoaState::<f64>::new(roster.len())?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::with_capacity(stream.records.len());
    for rec in &stream.records {
        let t = rec.round_index;
        let xs = &rec.expert_predictions;
        let sub: Vec<f64> = unbiased.iter().map(|&i| xs[i]).collect();
        let reference_pred = reference.predict(&sub)?;
        let truth = make_label(reference_pred, rec.observation, threshold);
        let awake = match classifier {
            SimulatedClassifier::Perfect => {
                oracle_awake_set(OracleMode::OracleClass, Some(truth), t, activation_round, roster)?
            }
            SimulatedClassifier::Noisy(p) => {
                let guess = if t < activation_round {
                    ErrorClass::Neutral
                } else if rng.gen::<f64>() < p {
                    truth
                } else {
                    let others: Vec<ErrorClass> = ErrorClass::ALL.into_iter().filter(|&c| c != truth).collect();
                    others[rng.gen_range(0..2)]
                };
                wake_from_class(guess, t, activation_round, roster)?
            }
        };
        let round = sef.update(xs, &awake, rec.observation)?;
        reference.update_at(&sub, reference_pred, rec.observation)?;
        trace.push(SefStep {
            predictions: xs.clone(),
            awake: awake.mask().to_vec(),
            prediction: round.sef_prediction,
            observation: rec.observation,
            predicted_class: awake.predicted_class(),
            true_class: truth,
        });
    }
    Ok(trace)
}

/// Three well-separated clusters on feature 0 (centres −5, 0, +5, spread
/// ±1) plus `extra` uniform noise features.
pub fn separable_clusters(n_per_class: usize, extra: usize, seed: u64) -> Vec<(Vec<f64>, ErrorClass)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(3 * n_per_class);
    for i in 0..3 * n_per_class {
        let class = ErrorClass::ALL[i % 3];
        let centre = (class.index() as f64 - 1.0) * 5.0;
        let mut f = vec![centre + rng.gen_range(-1.0..1.0)];
        f.extend((0..extra).map(|_| rng.gen_range(-5.0..5.0)));
        out.push((f, class));
    }
    out
}
