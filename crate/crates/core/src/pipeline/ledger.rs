use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ingest::StreamKey;
use crate::aggregation::Candidate;
use crate::domain::ErrorClass;
use crate::error::{Error, Result};
use crate::explain::ShapRecord;
use crate::sleeping::{AwakeSet, SefStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// BOA over the always-awake experts only; supplies labels and features.
    BoaUnbiased,
    Boa,
    /// BOA in the sleeping-expert framework, woken by the classifier.
    BoaSleeping,
    FtlBoa,
    FtlBoaRegularized,
    FixedShare,
    OracleClass,
    OracleExpert,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::BoaUnbiased,
        Strategy::Boa,
        Strategy::BoaSleeping,
        Strategy::FtlBoa,
        Strategy::FtlBoaRegularized,
        Strategy::FixedShare,
        Strategy::OracleClass,
        Strategy::OracleExpert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::BoaUnbiased => "boa_unbiased",
            Strategy::Boa => "boa",
            Strategy::BoaSleeping => "boa_s",
            Strategy::FtlBoa => "ftl_boa",
            Strategy::FtlBoaRegularized => "ftl_boa_reg",
            Strategy::FixedShare => "fixed_share",
            Strategy::OracleClass => "oracle_class",
            Strategy::OracleExpert => "oracle_expert",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }

    /// Strategies that carry their own weight vector.
    pub fn has_weights(self) -> bool {
        !matches!(self, Strategy::FtlBoa | Strategy::FtlBoaRegularized | Strategy::OracleExpert)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub prediction: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub round: usize,
    pub date: String,
    pub observation: f64,
    pub predictions: Vec<f64>,
    /// Classifier-driven awake set.
    pub awake: Vec<bool>,
    /// Awake set the class oracle used.
    pub oracle_awake: Vec<bool>,
    pub predicted_class: ErrorClass,
    pub true_class: ErrorClass,
    /// Awake experts carried no weight in the sleeping aggregation.
    pub degenerate: bool,
    /// Parallel to [`RunLedger::strategies`].
    pub outcomes: Vec<Outcome>,
    pub ftl_choice: Option<Candidate>,
    pub ftl_reg_choice: Option<Candidate>,
    /// Weights used for this round's prediction, parallel to
    /// [`RunLedger::weighted`].
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLedger {
    pub key: StreamKey,
    pub expert_names: Vec<String>,
    pub strategies: Vec<Strategy>,
    /// Weighted strategies with the experts (roster indices) they weigh.
    pub weighted: Vec<(Strategy, Vec<usize>)>,
    pub rows: Vec<LedgerRow>,
    pub feature_names: Vec<String>,
    pub shap: Vec<ShapRecord>,
}

fn choice_str(c: Option<Candidate>) -> &'static str {
    match c {
        None => "",
        Some(Candidate::A) => "boa",
        Some(Candidate::B) => "boa_s",
    }
}

fn parse_choice(s: &str) -> Option<Option<Candidate>> {
    match s {
        "" => Some(None),
        "boa" => Some(Some(Candidate::A)),
        "boa_s" => Some(Some(Candidate::B)),
        _ => None,
    }
}

fn bits(mask: &[bool]) -> String {
    mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

impl RunLedger {
    pub fn strategy_index(&self, s: Strategy) -> Option<usize> {
        self.strategies.iter().position(|&x| x == s)
    }

    pub fn outcomes(&self, s: Strategy) -> Option<impl Iterator<Item = Outcome> + '_> {
        let i = self.strategy_index(s)?;
        Some(self.rows.iter().map(move |r| r.outcomes[i]))
    }

    pub fn losses(&self, s: Strategy) -> Option<Vec<f64>> {
        Some(self.outcomes(s)?.map(|o| o.loss).collect())
    }

    pub fn weight_trajectory(&self, s: Strategy) -> Option<(&[usize], Vec<&[f64]>)> {
        let i = self.weighted.iter().position(|(x, _)| *x == s)?;
        Some((&self.weighted[i].1, self.rows.iter().map(|r| r.weights[i].as_slice()).collect()))
    }

    /// Sleeping-expert trace of the classifier-driven aggregation.
    pub fn sef_trace(&self) -> Option<Vec<SefStep<f64>>> {
        let i = self.strategy_index(Strategy::BoaSleeping)?;
        Some(
            self.rows
                .iter()
                .map(|r| SefStep {
                    predictions: r.predictions.clone(),
                    awake: r.awake.clone(),
                    prediction: r.outcomes[i].prediction,
                    observation: r.observation,
                    predicted_class: r.predicted_class,
                    true_class: r.true_class,
                })
                .collect(),
        )
    }

    /// Trace of the class oracle, whose predicted class is the true one.
    pub fn oracle_trace(&self) -> Option<Vec<SefStep<f64>>> {
        let i = self.strategy_index(Strategy::OracleClass)?;
        Some(
            self.rows
                .iter()
                .map(|r| SefStep {
                    predictions: r.predictions.clone(),
                    awake: r.oracle_awake.clone(),
                    prediction: r.outcomes[i].prediction,
                    observation: r.observation,
                    predicted_class: r.true_class,
                    true_class: r.true_class,
                })
                .collect(),
        )
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["round", "date", "observation"].map(String::from).to_vec();
        h.extend(self.expert_names.iter().map(|e| format!("x_{e}")));
        h.extend(["awake", "oracle_awake", "pred_class", "true_class", "degenerate"].map(String::from));
        for s in &self.strategies {
            h.push(format!("{s}_pred"));
            h.push(format!("{s}_loss"));
        }
        h.push("ftl_choice".into());
        h.push("ftl_reg_choice".into());
        for (s, idx) in &self.weighted {
            h.extend(idx.iter().map(|&i| format!("w_{s}_{}", self.expert_names[i])));
        }
        h
    }

    /// Floats use Rust's shortest round-trip `Display`, so a written ledger
    /// reads back exactly and identical runs give identical bytes.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec: Vec<String> = vec![r.round.to_string(), r.date.clone(), r.observation.to_string()];
            rec.extend(r.predictions.iter().map(f64::to_string));
            rec.push(bits(&r.awake));
            rec.push(bits(&r.oracle_awake));
            rec.push(r.predicted_class.label().to_string());
            rec.push(r.true_class.label().to_string());
            rec.push(u8::from(r.degenerate).to_string());
            for o in &r.outcomes {
                rec.push(o.prediction.to_string());
                rec.push(o.loss.to_string());
            }
            rec.push(choice_str(r.ftl_choice).into());
            rec.push(choice_str(r.ftl_reg_choice).into());
            for ws in &r.weights {
                rec.extend(ws.iter().map(f64::to_string));
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a ledger written by [`RunLedger::write_csv`]. SHAP records and
    /// feature names are not part of the file.
    pub fn read_csv(path: &Path, key: StreamKey) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        let bad = |line: u64, reason: String| Error::Ingest { path: path.into(), line, reason };
        let pos = |name: &str| header.iter().position(|h| h == name);
        let awake_col = pos("awake").ok_or_else(|| bad(1, "missing `awake` column".into()))?;
        if header.len() < 3 || header[..3] != ["round", "date", "observation"] {
            return Err(bad(1, "not a run ledger".into()));
        }
        let expert_names: Vec<String> = header[3..awake_col]
            .iter()
            .map(|h| h.strip_prefix("x_").map(String::from).ok_or_else(|| bad(1, format!("unexpected column {h}"))))
            .collect::<Result<_>>()?;
        let mut strategies = Vec::new();
        let mut c = awake_col + 5;
        while c + 1 < header.len() && header[c] != "ftl_choice" {
            let name = header[c].strip_suffix("_pred").ok_or_else(|| bad(1, format!("unexpected column {}", header[c])))?;
            strategies.push(Strategy::from_name(name).ok_or_else(|| bad(1, format!("unknown strategy {name}")))?);
            c += 2;
        }
        let ftl_col = c;
        let mut weighted: Vec<(Strategy, Vec<usize>)> = Vec::new();
        for h in &header[ftl_col + 2..] {
            let rest = h.strip_prefix("w_").ok_or_else(|| bad(1, format!("unexpected column {h}")))?;
            let (s, e) = Strategy::ALL
                .iter()
                .filter_map(|s| rest.strip_prefix(&format!("{s}_")).map(|e| (*s, e)))
                .find(|(_, e)| expert_names.iter().any(|n| n == e))
                .ok_or_else(|| bad(1, format!("cannot parse weight column {h}")))?;
            let ei = expert_names.iter().position(|n| n == e).expect("found above");
            match weighted.last_mut() {
                Some((last, idx)) if *last == s => idx.push(ei),
                _ => weighted.push((s, vec![ei])),
            }
        }

        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let f = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|_| bad(line, format!("column {}: bad number {:?}", header[i], &rec[i])))
            };
            let mask = |i: usize| AwakeSet::parse_bitstring(&rec[i]).ok_or_else(|| bad(line, format!("bad bitstring {:?}", &rec[i])));
            let class = |i: usize| {
                rec[i].parse::<u8>().ok().and_then(ErrorClass::from_label).ok_or_else(|| bad(line, format!("bad class {:?}", &rec[i])))
            };
            let n = expert_names.len();
            let mut weights = Vec::new();
            let mut col = ftl_col + 2;
            for (_, idx) in &weighted {
                weights.push((col..col + idx.len()).map(f).collect::<Result<Vec<_>>>()?);
                col += idx.len();
            }
            rows.push(LedgerRow {
                round: rec[0].parse().map_err(|_| bad(line, "bad round".into()))?,
                date: rec[1].to_string(),
                observation: f(2)?,
                predictions: (3..3 + n).map(f).collect::<Result<_>>()?,
                awake: mask(awake_col)?,
                oracle_awake: mask(awake_col + 1)?,
                predicted_class: class(awake_col + 2)?,
                true_class: class(awake_col + 3)?,
                degenerate: &rec[awake_col + 4] == "1",
                outcomes: (0..strategies.len())
                    .map(|k| Ok(Outcome { prediction: f(awake_col + 5 + 2 * k)?, loss: f(awake_col + 6 + 2 * k)? }))
                    .collect::<Result<_>>()?,
                ftl_choice: parse_choice(&rec[ftl_col]).ok_or_else(|| bad(line, "bad ftl choice".into()))?,
                ftl_reg_choice: parse_choice(&rec[ftl_col + 1]).ok_or_else(|| bad(line, "bad ftl choice".into()))?,
                weights,
            });
        }
        Ok(RunLedger { key, expert_names, strategies, weighted, rows, feature_names: Vec::new(), shap: Vec::new() })
    }
}
