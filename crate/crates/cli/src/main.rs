//! `biest`: verification suites, decompositions, experiments and data
//! dumps for the time-frequency model.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or input error.

mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use commands::{emit, envelope, pretty, say, Kind, SetArg};
use config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Assertion(String),
}

#[derive(Parser)]
#[command(name = "biest", version, about = "Time-frequency model laboratory")]
struct Cli {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// First seed; overrides `seeds.start`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the resolved plan and exit without computing.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a module's invariant checks and print a JSON report.
    Verify {
        #[arg(value_parser = ["grid", "tiles", "packets", "functionals", "decomp", "whitney", "forms", "all"])]
        suite: String,
    },
    /// Partition a tile collection with coefficients into tree levels.
    Decompose {
        /// Instance file: `{"tiles": [...], "coefficients": [[...], [...], [...]]}`.
        input: PathBuf,
        /// Keep only the selection traces of this slot (0, 1 or 2).
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..3))]
        slot: Option<u8>,
    },
    /// Restricted-type experiment over the configured seeds.
    Experiment {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Exponent tuple, comma separated (decimals or fractions).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        alpha: Option<Vec<String>>,
        /// Extremal point `A1`..`A12`; picks a nearby tuple when `--alpha` is absent.
        #[arg(long)]
        vertex: Option<String>,
        /// Finer tiles and block-shaped sets, for the stratum profile.
        #[arg(long)]
        stratified: bool,
    },
    /// Serialize a tile collection for plotting.
    DumpTiles {
        /// Instance file to dump instead of a generated family.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Size of the generated family.
        #[arg(long, default_value_t = 40)]
        count: usize,
        /// Tag each tile with the id of its tree in the partition.
        #[arg(long)]
        trees: bool,
        /// Emit an instance file with coefficients instead of a bare array.
        #[arg(long)]
        coefficients: bool,
    },
    /// Probe the truncated Fourier reconstruction of a Whitney symbol.
    ReconstructSymbol {
        #[arg(long, value_enum, default_value = "double")]
        set: SetArg,
        /// Number of Fourier modes per axis; defaults to `whitney.k_max`.
        #[arg(long)]
        k: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("biest: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("biest: {msg}");
            ExitCode::from(2)
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(Failure::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds.start = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = Some(o.clone());
    }
    cfg.validate().map_err(|e| Failure::Usage(format!("invalid configuration: {e}")))?;
    Ok(cfg)
}

fn dry_run(cfg: &RunConfig, command: &str, plan: Value) {
    let mut out = envelope(cfg, command);
    out.insert("dry_run".into(), json!(true));
    out.insert("plan".into(), plan);
    say(&pretty(&Value::Object(out)));
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::Verify { suite } => {
            let suites: Vec<&str> = if suite == "all" { verify::SUITES.to_vec() } else { vec![suite.as_str()] };
            if cli.dry_run {
                dry_run(&cfg, "verify", json!({ "suites": suites, "seeds": cfg.seed_list() }));
                return Ok(());
            }
            let reports: Vec<verify::SuiteReport> = suites
                .iter()
                .map(|s| verify::run(s, &cfg).expect("suite names are validated by the parser"))
                .collect();
            let ok = reports.iter().all(|r| r.ok);
            if let Some(dir) = &cfg.output.dir {
                for r in &reports {
                    let mut one = envelope(&cfg, "verify");
                    one.insert("report".into(), serde_json::to_value(r).expect("report serializes"));
                    commands::write_file(&dir.join(format!("verify-{}.json", r.suite)), &pretty(&Value::Object(one)))?;
                }
            }
            let mut out = envelope(&cfg, "verify");
            out.insert("suite".into(), json!(suite));
            out.insert("ok".into(), json!(ok));
            out.insert("reports".into(), serde_json::to_value(&reports).expect("reports serialize"));
            say(&pretty(&Value::Object(out)));
            if !ok {
                let failed: Vec<String> = reports
                    .iter()
                    .flat_map(|r| r.checks.iter().filter(|c| !c.pass).map(move |c| format!("{}.{}", r.suite, c.name)))
                    .collect();
                return Err(Failure::Assertion(format!("failed checks: {}", failed.join(", "))));
            }
            Ok(())
        }
        Command::Decompose { input, slot } => {
            if cli.dry_run {
                dry_run(&cfg, "decompose", json!({ "input": input, "slot": slot }));
                return Ok(());
            }
            let trace = commands::decompose(&cfg, input, slot.map(usize::from))?;
            emit(&cfg, "trace.json", &pretty(&trace))
        }
        Command::Experiment { kind, alpha, vertex, stratified } => {
            let spec = commands::experiment_spec(&cfg, *kind, alpha.as_deref(), vertex.as_deref(), *stratified)?;
            if cli.dry_run {
                dry_run(&cfg, "experiment", commands::experiment_plan(&spec));
                return Ok(());
            }
            let (report, csv) = commands::experiment(&cfg, &spec)?;
            emit(&cfg, "experiment.json", &pretty(&report))?;
            if let Some(dir) = &cfg.output.dir {
                commands::write_file(&dir.join("experiment.csv"), &csv)?;
            }
            Ok(())
        }
        Command::DumpTiles { input, count, trees, coefficients } => {
            if cli.dry_run {
                let source = match input {
                    Some(p) => json!({ "input": p }),
                    None => json!({ "generated": { "count": count, "seed": cfg.seeds.start } }),
                };
                dry_run(&cfg, "dump-tiles", json!({ "source": source, "trees": trees, "coefficients": coefficients }));
                return Ok(());
            }
            let v = commands::dump_tiles(&cfg, input.as_deref(), *count, *trees, *coefficients)?;
            emit(&cfg, "tiles.json", &pretty(&v))
        }
        Command::ReconstructSymbol { set, k } => {
            let k = k.unwrap_or(cfg.whitney.k_max);
            if cli.dry_run {
                let (along, lo, hi, na, nb) = commands::PROBE_GRID;
                dry_run(
                    &cfg,
                    "reconstruct-symbol",
                    json!({ "set": format!("{set:?}").to_lowercase(), "k": k, "grid": cfg.whitney.grid,
                            "probe": { "along": along, "dist": [lo, hi], "points": 2 * na * nb } }),
                );
                return Ok(());
            }
            let (csv, cover) = commands::reconstruct(&cfg, set.singular_set(), k)?;
            emit(&cfg, "probe.csv", &csv)?;
            if let Some(dir) = &cfg.output.dir {
                commands::write_file(&dir.join("cover.json"), &pretty(&cover))?;
            }
            Ok(())
        }
    }
}
