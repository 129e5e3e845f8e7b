use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;

use crate::domain::ForecastRecord;
use crate::error::{Error, Result};
use crate::wakeup::features::variance;

pub const FIXED_COLUMNS: [&str; 5] = ["date", "station_id", "lead_time", "obs", "first_lt_obs"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamKey {
    pub station_id: String,
    pub lead_time: u32,
}

impl fmt::Display for StreamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.station_id, self.lead_time)
    }
}

/// One (station, lead time) series in date order.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub key: StreamKey,
    /// Experts with a value on every row of this stream.
    pub expert_names: Vec<String>,
    pub records: Vec<ForecastRecord<f64>>,
    /// Per record: across-expert variance of every lead time of the same
    /// model run, in lead-time order.
    pub run_variances: Vec<Vec<f64>>,
}

struct RawRow {
    line: u64,
    date: NaiveDate,
    obs: f64,
    first_lt_obs: f64,
    experts: Vec<Option<f64>>,
}

fn parse_f64(s: &str, what: &str, path: &Path, line: u64) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Ingest {
        path: path.into(),
        line,
        reason: format!("{what}: cannot parse {s:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Ingest { path: path.into(), line, reason: format!("{what} is not finite") });
    }
    Ok(v)
}

/// Reads the forecast table into streams keyed by (station, lead time).
///
/// An expert whose column is blank on every row of a stream is left out of
/// that stream's roster; a column blank on only some rows is an error.
pub fn ingest_csv(path: &Path) -> Result<BTreeMap<StreamKey, Stream>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Ingest { path: path.into(), line: 1, reason: "empty file".into() });
    }
    for (i, want) in FIXED_COLUMNS.iter().enumerate() {
        if headers.get(i) != Some(want) {
            return Err(Error::Ingest {
                path: path.into(),
                line: 1,
                reason: format!("column {} must be `{want}`, found {:?}", i + 1, headers.get(i).unwrap_or("")),
            });
        }
    }
    let experts: Vec<String> = headers.iter().skip(FIXED_COLUMNS.len()).map(String::from).collect();
    if experts.is_empty() {
        return Err(Error::Ingest { path: path.into(), line: 1, reason: "no expert columns".into() });
    }

    let mut raw: BTreeMap<StreamKey, Vec<RawRow>> = BTreeMap::new();
    let mut seen: HashMap<(StreamKey, NaiveDate), u64> = HashMap::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| Error::Ingest { path: path.into(), line, reason };
        if row.len() != headers.len() {
            return Err(bad(format!("expected {} fields, found {}", headers.len(), row.len())));
        }
        let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
            .map_err(|e| bad(format!("date {:?}: {e}", &row[0])))?;
        let station_id = row[1].to_string();
        if station_id.is_empty() {
            return Err(bad("empty station_id".into()));
        }
        let lead_time: u32 = row[2].parse().map_err(|_| bad(format!("lead_time {:?} is not an integer", &row[2])))?;
        let obs = parse_f64(&row[3], "obs", path, line)?;
        let first_lt_obs = parse_f64(&row[4], "first_lt_obs", path, line)?;
        let values = (0..experts.len())
            .map(|j| {
                let cell = &row[FIXED_COLUMNS.len() + j];
                if cell.is_empty() {
                    Ok(None)
                } else {
                    parse_f64(cell, &experts[j], path, line).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let key = StreamKey { station_id, lead_time };
        if let Some(first) = seen.insert((key.clone(), date), line) {
            return Err(bad(format!("duplicate ({key}, {date}), first seen on line {first}")));
        }
        raw.entry(key).or_default().push(RawRow { line, date, obs, first_lt_obs, experts: values });
    }
    if raw.is_empty() {
        return Err(Error::Ingest { path: path.into(), line: 1, reason: "no data rows".into() });
    }

    let mut streams = BTreeMap::new();
    for (key, mut rows) in raw {
        rows.sort_by_key(|r| r.date);
        for w in rows.windows(2) {
            let step = (w[1].date - w[0].date).num_days();
            if step != 1 {
                return Err(Error::Ingest {
                    path: path.into(),
                    line: w[1].line,
                    reason: format!("gap in {key}: {} follows {}", w[1].date, w[0].date),
                });
            }
        }
        let mut keep = Vec::new();
        for (j, name) in experts.iter().enumerate() {
            let present = rows.iter().filter(|r| r.experts[j].is_some()).count();
            if present == rows.len() {
                keep.push(j);
            } else if present > 0 {
                let r = rows.iter().find(|r| r.experts[j].is_none()).expect("some row blank");
                return Err(Error::Ingest {
                    path: path.into(),
                    line: r.line,
                    reason: format!("{name} is blank here but present elsewhere in {key}"),
                });
            }
        }
        if keep.is_empty() {
            return Err(Error::Ingest { path: path.into(), line: rows[0].line, reason: format!("no experts in {key}") });
        }
        let records = rows
            .iter()
            .enumerate()
            .map(|(t, r)| ForecastRecord {
                round_index: t + 1,
                date: r.date.format("%Y-%m-%d").to_string(),
                station_id: key.station_id.clone(),
                lead_time_hours: key.lead_time,
                observation: r.obs,
                expert_predictions: keep.iter().map(|&j| r.experts[j].expect("kept")).collect(),
                first_leadtime_observation: r.first_lt_obs,
            })
            .collect();
        let names = keep.iter().map(|&j| experts[j].clone()).collect();
        streams.insert(key.clone(), Stream { key, expert_names: names, records, run_variances: Vec::new() });
    }
    attach_run_variances(&mut streams);
    Ok(streams)
}

/// Fills `run_variances`: a run is a (station, date) pair across lead times.
pub fn attach_run_variances(streams: &mut BTreeMap<StreamKey, Stream>) {
    let mut runs: BTreeMap<(String, String), Vec<(u32, f64)>> = BTreeMap::new();
    for s in streams.values() {
        for r in &s.records {
            runs.entry((r.station_id.clone(), r.date.clone()))
                .or_default()
                .push((r.lead_time_hours, variance(&r.expert_predictions)));
        }
    }
    for s in streams.values_mut() {
        s.run_variances = s
            .records
            .iter()
            .map(|r| {
                let mut v = runs[&(r.station_id.clone(), r.date.clone())].clone();
                v.sort_by_key(|(lt, _)| *lt);
                v.into_iter().map(|(_, x)| x).collect()
            })
            .collect();
    }
}
