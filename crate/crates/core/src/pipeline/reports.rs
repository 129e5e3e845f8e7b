use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::ledger::{RunLedger, Strategy};
use crate::error::{Error, Result};
use crate::evaluation::{quantile_abs_error, ClassifierScores, ConfusionMatrix, ScoreReport};
use crate::explain::write_shap_csv;
use crate::sleeping::{audit_compound_bound, best_awake_compound};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyScore {
    pub station_id: String,
    pub lead_time: u32,
    pub strategy: Strategy,
    pub n: usize,
    pub rmse: f64,
    pub q95_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledScore {
    pub strategy: Strategy,
    pub n: usize,
    pub rmse: f64,
    pub q95_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffQ95 {
    pub station_id: String,
    pub lead_time: u32,
    pub boa_q95: f64,
    /// Strategy Q95 minus BOA Q95; negative means the strategy did better.
    pub boa_s_minus_boa: Option<f64>,
    pub ftl_boa_minus_boa: Option<f64>,
    pub ftl_boa_reg_minus_boa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub station_id: String,
    pub lead_time: u32,
    pub trace: &'static str,
    pub rounds: usize,
    pub compound_regret: f64,
    pub bound_rhs: f64,
    pub bound_holds: bool,
    pub perfect_bound_rhs: Option<f64>,
    pub perfect_bound_holds: Option<bool>,
    pub per_expert_sef_regret: Vec<f64>,
    pub cell_counts: [[usize; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reports {
    pub per_stream: Vec<StrategyScore>,
    pub pooled: Vec<PooledScore>,
    pub classifier_per_stream: Vec<(String, u32, Option<ClassifierScores>)>,
    pub classifier_pooled: Option<ClassifierScores>,
    pub diff_q95: Vec<DiffQ95>,
    pub audits: Vec<AuditRow>,
}

/// Absolute errors recovered from the squared losses.
fn abs_errors(l: &RunLedger, s: Strategy) -> Option<Vec<f64>> {
    Some(l.losses(s)?.into_iter().map(f64::sqrt).collect())
}

/// Confusion of predicted against true class over rounds where the
/// classifier could wake specialists.
pub fn classifier_confusion(l: &RunLedger, activation_round: usize) -> ConfusionMatrix {
    ConfusionMatrix::from_classes(
        l.rows.iter().filter(|r| r.round >= activation_round).map(|r| (r.predicted_class, r.true_class)),
    )
}

fn uses_classifier(l: &RunLedger) -> bool {
    [Strategy::BoaSleeping, Strategy::FtlBoa, Strategy::FtlBoaRegularized]
        .iter()
        .any(|s| l.strategy_index(*s).is_some())
}

pub fn compute_reports(ledgers: &[RunLedger], activation_round: usize) -> Result<Reports> {
    let mut per_stream = Vec::new();
    let mut diff_q95 = Vec::new();
    let mut audits = Vec::new();
    let mut classifier_per_stream = Vec::new();
    let mut pooled_conf = ConfusionMatrix::zeros(3);
    let mut any_classifier = false;
    for l in ledgers {
        let (sid, lt) = (l.key.station_id.clone(), l.key.lead_time);
        for &s in &l.strategies {
            let e = abs_errors(l, s).expect("listed strategy");
            let r = ScoreReport::new(&e, None)?;
            per_stream.push(StrategyScore {
                station_id: sid.clone(),
                lead_time: lt,
                strategy: s,
                n: r.n,
                rmse: r.rmse,
                q95_abs_error: r.q95_abs_error,
            });
        }
        if let Some(be) = abs_errors(l, Strategy::Boa) {
            let q = |s: Strategy| -> Result<Option<f64>> {
                abs_errors(l, s).map(|e| quantile_abs_error(&e, 0.95)).transpose()
            };
            let boa_q = quantile_abs_error(&be, 0.95)?;
            diff_q95.push(DiffQ95 {
                station_id: sid.clone(),
                lead_time: lt,
                boa_q95: boa_q,
                boa_s_minus_boa: q(Strategy::BoaSleeping)?.map(|v| v - boa_q),
                ftl_boa_minus_boa: q(Strategy::FtlBoa)?.map(|v| v - boa_q),
                ftl_boa_reg_minus_boa: q(Strategy::FtlBoaRegularized)?.map(|v| v - boa_q),
            });
        }
        if uses_classifier(l) {
            any_classifier = true;
            let m = classifier_confusion(l, activation_round);
            pooled_conf.merge(&m);
            classifier_per_stream.push((sid.clone(), lt, ClassifierScores::from_matrix(&m)));
        }
        for (name, trace) in [("boa_s", l.sef_trace()), ("oracle_class", l.oracle_trace())] {
            let Some(trace) = trace else { continue };
            let compound = best_awake_compound(&trace);
            let a = audit_compound_bound(&trace, &compound)?;
            audits.push(AuditRow {
                station_id: sid.clone(),
                lead_time: lt,
                trace: name,
                rounds: a.rounds(),
                compound_regret: a.compound_regret,
                bound_rhs: a.bound_rhs,
                bound_holds: a.bound_holds,
                perfect_bound_rhs: a.perfect_bound_rhs,
                perfect_bound_holds: a.perfect_bound_holds,
                per_expert_sef_regret: a.per_expert_sef_regret,
                cell_counts: a.cell_counts,
            });
        }
    }
    let mut pooled = Vec::new();
    for s in Strategy::ALL {
        let e: Vec<f64> = ledgers.iter().filter_map(|l| abs_errors(l, s)).flatten().collect();
        if e.is_empty() {
            continue;
        }
        let r = ScoreReport::new(&e, None)?;
        pooled.push(PooledScore { strategy: s, n: r.n, rmse: r.rmse, q95_abs_error: r.q95_abs_error });
    }
    Ok(Reports {
        per_stream,
        pooled,
        classifier_per_stream,
        classifier_pooled: if any_classifier { ClassifierScores::from_matrix(&pooled_conf) } else { None },
        diff_q95,
        audits,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every report under `out`; returns the files written, sorted.
///
/// Layout: `ledgers/`, `weights/`, `shap/` per stream, plus
/// `scores_per_stream.csv`, `scores_pooled.csv`, `classifier_scores.csv`,
/// `diff_q95.csv`, `audit.csv` and `scores.json`.
pub fn emit_reports(ledgers: &[RunLedger], activation_round: usize, out: &Path) -> Result<Vec<PathBuf>> {
    let reports = compute_reports(ledgers, activation_round)?;
    let mut written = Vec::new();
    for sub in ["ledgers", "weights", "shap"] {
        create_dir(&out.join(sub))?;
    }
    for l in ledgers {
        let p = out.join("ledgers").join(format!("{}.csv", l.key));
        l.write_csv(&p)?;
        written.push(p);
        for (s, idx) in &l.weighted {
            let p = out.join("weights").join(format!("{}_{s}.csv", l.key));
            let mut w = csv_writer(&p)?;
            let mut h = vec!["round".to_string()];
            h.extend(idx.iter().map(|&i| l.expert_names[i].clone()));
            w.write_record(&h)?;
            let (_, traj) = l.weight_trajectory(*s).expect("weighted strategy");
            for (r, ws) in l.rows.iter().zip(traj) {
                let mut rec = vec![r.round.to_string()];
                rec.extend(ws.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
            finish(w, &p)?;
            written.push(p);
        }
        if !l.shap.is_empty() {
            let p = out.join("shap").join(format!("{}.csv", l.key));
            write_shap_csv(&p, &l.shap)?;
            written.push(p);
        }
    }

    let p = out.join("scores_per_stream.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["station_id", "lead_time", "strategy", "n", "rmse", "q95_abs_error"])?;
    for s in &reports.per_stream {
        w.write_record([
            s.station_id.clone(),
            s.lead_time.to_string(),
            s.strategy.to_string(),
            s.n.to_string(),
            s.rmse.to_string(),
            s.q95_abs_error.to_string(),
        ])?;
    }
    finish(w, &p)?;
    written.push(p);

    let p = out.join("scores_pooled.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["strategy", "n", "rmse", "q95_abs_error"])?;
    for s in &reports.pooled {
        w.write_record([s.strategy.to_string(), s.n.to_string(), s.rmse.to_string(), s.q95_abs_error.to_string()])?;
    }
    finish(w, &p)?;
    written.push(p);

    let p = out.join("classifier_scores.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["station_id", "lead_time", "ess", "pss_1", "pss_2", "hit_rate_negative", "hit_rate_positive", "collapsed"])?;
    let pooled_row = ("all".to_string(), None, reports.classifier_pooled.clone());
    for (sid, lt, c) in reports
        .classifier_per_stream
        .iter()
        .map(|(s, l, c)| (s.clone(), Some(*l), c.clone()))
        .chain(std::iter::once(pooled_row))
    {
        let pss = |i: usize| c.as_ref().and_then(|c| c.pss_per_threshold.get(i).copied());
        w.write_record([
            sid,
            lt.map_or_else(String::new, |v| v.to_string()),
            opt(c.as_ref().map(|c| c.ess)),
            opt(pss(0)),
            opt(pss(1)),
            opt(c.as_ref().and_then(|c| c.hit_rate_negative)),
            opt(c.as_ref().and_then(|c| c.hit_rate_positive)),
            c.as_ref().map_or_else(String::new, |c| c.collapsed.to_string()),
        ])?;
    }
    finish(w, &p)?;
    written.push(p);

    let p = out.join("diff_q95.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["station_id", "lead_time", "boa_q95", "boa_s_minus_boa", "ftl_boa_minus_boa", "ftl_boa_reg_minus_boa"])?;
    for d in &reports.diff_q95 {
        w.write_record([
            d.station_id.clone(),
            d.lead_time.to_string(),
            d.boa_q95.to_string(),
            opt(d.boa_s_minus_boa),
            opt(d.ftl_boa_minus_boa),
            opt(d.ftl_boa_reg_minus_boa),
        ])?;
    }
    finish(w, &p)?;
    written.push(p);

    let p = out.join("audit.csv");
    let mut w = csv_writer(&p)?;
    w.write_record([
        "station_id",
        "lead_time",
        "trace",
        "rounds",
        "compound_regret",
        "bound_rhs",
        "bound_holds",
        "perfect_bound_rhs",
        "perfect_bound_holds",
    ])?;
    for a in &reports.audits {
        w.write_record([
            a.station_id.clone(),
            a.lead_time.to_string(),
            a.trace.to_string(),
            a.rounds.to_string(),
            a.compound_regret.to_string(),
            a.bound_rhs.to_string(),
            a.bound_holds.to_string(),
            opt(a.perfect_bound_rhs),
            a.perfect_bound_holds.map_or_else(String::new, |b| b.to_string()),
        ])?;
    }
    finish(w, &p)?;
    written.push(p);

    let p = out.join("scores.json");
    let json = serde_json::to_string_pretty(&reports)?;
    fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))?;
    written.push(p);
    written.sort();
    Ok(written)
}
