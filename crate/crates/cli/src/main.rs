use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use sleeping_boa::evaluation::{grid_search, HyperGrid};
use sleeping_boa::explain::{read_shap_csv, shap_dependence_export};
use sleeping_boa::pipeline::{self, emit_reports, ingest_csv, training_samples, RunConfig, RunLedger, StreamKey};
use sleeping_boa::sleeping::{audit_compound_bound, best_awake_compound};
use sleeping_boa::synthetic::{generate, write_streams_csv, GeneratorConfig};

#[derive(Parser)]
#[command(name = "sleeping-boa", version, about = "Online forecast aggregation with sleeping experts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every strategy over the configured input and write all reports.
    Run {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Cross-validate classifier hyperparameters by equitable skill score.
    GridSearch {
        #[arg(short, long)]
        config: PathBuf,
        /// TOML file with the candidate lists; the full tuning grid otherwise.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Output table, sorted by ESS.
        #[arg(long, default_value = "grid_search.csv")]
        out: PathBuf,
    },
    /// Check the compound-expert regret bounds recorded in a ledger.
    Audit {
        #[arg(short, long)]
        ledger: PathBuf,
    },
    /// SHAP dependence table and linear fit for one feature.
    Explain {
        /// Per-stream SHAP export written by `run`.
        #[arg(long)]
        shap: PathBuf,
        #[arg(long)]
        feature: String,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Recompute the score reports from the ledgers of a finished run.
    Scores {
        #[arg(short, long)]
        config: PathBuf,
        /// Where to write; defaults to the run's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write a synthetic input file with planted cold spells.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        streams: u64,
        #[arg(long, default_value_t = 400)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn key_from_path(p: &Path) -> Result<StreamKey> {
    let stem = p.file_stem().and_then(|s| s.to_str()).context("ledger file name")?;
    let (station, lead) = stem.rsplit_once('_').context("ledger file name must be <station>_<lead_time>.csv")?;
    Ok(StreamKey { station_id: station.to_string(), lead_time: lead.parse().context("lead time in file name")? })
}

fn read_ledgers(dir: &Path) -> Result<Vec<RunLedger>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_ledger(p)).collect()
}

fn read_ledger(p: &Path) -> Result<RunLedger> {
    RunLedger::read_csv(p, key_from_path(p)?).with_context(|| format!("reading {}", p.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::from_file(&config)?;
            let (ledgers, files) = pipeline::execute(&cfg)?;
            println!("{} streams, {} files under {}", ledgers.len(), files.len(), cfg.output_dir.display());
        }
        Command::GridSearch { config, grid, folds, out } => {
            let cfg = RunConfig::from_file(&config)?;
            let grid = match grid {
                Some(p) => toml::from_str::<HyperGrid>(&std::fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => HyperGrid::tuning(),
            };
            let streams = ingest_csv(&cfg.input_path)?;
            let samples = streams.values().map(|s| training_samples(&cfg, s)).collect::<Result<Vec<_>, _>>()?;
            info!("{} combinations, {} folds", grid.len(), folds);
            let result = grid_search(&samples, &grid, folds, cfg.seed)?;
            result.write_csv(&out)?;
            let b = &result.best;
            println!(
                "best #{}: n_rounds={} max_depth={} learning_rate={} min_child_weight={} colsample_bynode={} ess={}",
                result.best_index,
                b.n_rounds,
                b.max_depth,
                b.learning_rate,
                b.min_child_weight,
                b.colsample_bynode,
                result.rows[result.best_index].ess.map_or("n/a".into(), |e| e.to_string())
            );
        }
        Command::Audit { ledger } => {
            let l = read_ledger(&ledger)?;
            let mut ok = true;
            for (name, trace) in [("boa_s", l.sef_trace()), ("oracle_class", l.oracle_trace())] {
                let Some(trace) = trace else { continue };
                let a = audit_compound_bound(&trace, &best_awake_compound(&trace))?;
                println!(
                    "{name}: rounds={} compound_regret={} bound_rhs={} holds={} perfect_rhs={} perfect_holds={}",
                    a.rounds(),
                    a.compound_regret,
                    a.bound_rhs,
                    a.bound_holds,
                    a.perfect_bound_rhs.map_or("n/a".into(), |v| v.to_string()),
                    a.perfect_bound_holds.map_or("n/a".into(), |v| v.to_string()),
                );
                ok &= a.bound_holds && a.perfect_bound_holds.unwrap_or(true);
            }
            if !ok {
                bail!("a regret bound was violated");
            }
        }
        Command::Explain { shap, feature, out_dir } => {
            let records = read_shap_csv(&shap).with_context(|| format!("reading {}", shap.display()))?;
            if !records.iter().any(|r| r.feature == feature) {
                bail!("feature {feature} not in {}", shap.display());
            }
            let table = shap_dependence_export(&records, &feature);
            std::fs::create_dir_all(&out_dir)?;
            table.write_csv(&out_dir.join(format!("dependence_{feature}.csv")))?;
            table.write_fit_json(&out_dir.join(format!("dependence_{feature}_fit.json")))?;
            match table.fit {
                Some(f) => println!(
                    "{feature}: n={} y={}+{}x R2={} F={}",
                    f.n, f.intercept, f.slope, f.r_squared, f.f_statistic
                ),
                None => println!("{feature}: {} points, fit omitted", table.points.len()),
            }
        }
        Command::Scores { config, out_dir } => {
            let cfg = RunConfig::from_file(&config)?;
            let ledgers = read_ledgers(&cfg.output_dir.join("ledgers"))?;
            let out = out_dir.unwrap_or(cfg.output_dir.clone());
            let files = emit_reports(&ledgers, cfg.wake.activation_round, &out)?;
            println!("{} ledgers, {} files under {}", ledgers.len(), files.len(), out.display());
        }
        Command::Synth { out, streams, rounds, seed } => {
            let g = GeneratorConfig { rounds, ..GeneratorConfig::default() };
            let s = (0..streams).map(|i| generate(&g, seed + i)).collect::<Result<Vec<_>, _>>()?;
            write_streams_csv(&out, &s)?;
            println!("{streams} streams of {rounds} rounds in {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
