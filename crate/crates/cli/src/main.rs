// SPDX-License-Identifier: Apache-2.0

//! `edgefed`: runs federation scenarios and writes metric files.

mod report;

use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgefed_core::contract::event_log_jsonl;
use edgefed_core::ledger::chain_dump_json;
use edgefed_core::metrics::{read_csv, read_jsonl, result_file_name, write_csv, write_jsonl, ExportFormat, TraceRow};
use edgefed_core::simkernel::{ScenarioFile, ScenarioOutcome};
use edgefed_core::{run_scenario, ScenarioConfig, Variant};
use rayon::prelude::*;

use report::{CompareRow, SummaryRow};

#[derive(Parser)]
#[command(name = "edgefed", version, about = "Blockchain-driven MEC federation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenario and write its traces.
    Run(RunArgs),
    /// Run every (N, consensus) cell of the configured sweep.
    Sweep(RunArgs),
    /// Per-N overhead of a blockchain result file over a SOA result file.
    Compare(CompareArgs),
    /// Check a scenario file and print the resolved scenario.
    ValidateConfig(ConfigArg),
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "EDGEFED_OUT", default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    out: OutArg,
    #[arg(long)]
    seed: Option<u64>,
    /// clique, qbft or soa. Restricts a sweep to one variant.
    #[arg(long)]
    consensus: Option<Variant>,
    #[arg(long)]
    runs: Option<u32>,
}

#[derive(Args)]
struct CompareArgs {
    /// Result file (csv or jsonl) of a blockchain variant.
    blockchain: PathBuf,
    /// Result file (csv or jsonl) of the SOA baseline.
    soa: PathBuf,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    Incomplete(String),
    Mismatch(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Io(_) => 2,
            Failure::Incomplete(_) => 3,
            Failure::Mismatch(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Incomplete(m) | Failure::Mismatch(m) => m,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::ValidateConfig(a) => cmd_validate(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("edgefed: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load(args: &RunArgs) -> Result<ScenarioFile, Failure> {
    let mut file = ScenarioFile::load(&args.config.config).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    if let Some(runs) = args.runs {
        file.runs = runs;
    }
    Ok(file)
}

fn cmd_validate(args: &ConfigArg) -> Result<(), Failure> {
    let file = ScenarioFile::load(&args.config).map_err(|e| Failure::Config(e.to_string()))?;
    let cfg = file.to_config().map_err(|e| Failure::Config(e.to_string()))?;
    let cells = file.sweep_configs().map_err(|e| Failure::Config(e.to_string()))?;
    println!(
        "ok: scenario {} n={} ({} consumers, {} providers) {} runs={} seed={}",
        cfg.scenario_id, cfg.n_systems, cfg.split.consumers, cfg.split.providers, cfg.variant, cfg.runs, cfg.seed
    );
    println!("sweep cells: {}", cells.len());
    for w in report::config_warnings(&cfg) {
        println!("warning: {w}");
    }
    Ok(())
}

fn execute(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, Failure> {
    let outcome = run_scenario(cfg).map_err(|e| Failure::Config(e.to_string()))?;
    Ok(outcome)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn write_rows(
    dir: &Path,
    cfg: &ScenarioConfig,
    rows: &[TraceRow],
    formats: &[ExportFormat],
) -> Result<Vec<PathBuf>, Failure> {
    let mut written = Vec::new();
    for &format in formats {
        let path = dir.join(result_file_name(&cfg.scenario_id, cfg.variant.as_str(), cfg.n_systems, format));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        let res = match format {
            ExportFormat::Csv => write_csv(rows, &mut w),
            ExportFormat::Jsonl => write_jsonl(rows, &mut w),
        };
        res.map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        w.flush().map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

fn stem(cfg: &ScenarioConfig) -> String {
    format!("{}_{}_{}", cfg.scenario_id, cfg.variant, cfg.n_systems)
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let file = load(args)?;
    let mut cfg = file.to_config().map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(v) = args.consensus {
        cfg = cfg.with_variant(v);
    }
    let dir = &args.out.out;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for w in report::config_warnings(&cfg) {
        eprintln!("warning: {w}");
    }

    let outcome = execute(&cfg)?;
    let rows = outcome.rows();
    write_rows(dir, &cfg, &rows, &file.output.formats)?;
    if let Some(first) = outcome.runs.first().filter(|r| !r.chain.is_empty()) {
        if file.output.chain_dump {
            write_file(&dir.join(format!("{}_chain.json", stem(&cfg))), chain_dump_json(&first.chain).as_bytes())?;
        }
        if file.output.event_log {
            write_file(&dir.join(format!("{}_events.jsonl", stem(&cfg))), event_log_jsonl(&first.events).as_bytes())?;
        }
    }

    let summary = SummaryRow::from_rows(cfg.variant, cfg.n_systems, &rows);
    print!("{}", report::summary_table(std::slice::from_ref(&summary)));
    report::check_complete(std::slice::from_ref(&summary))
}

fn cmd_sweep(args: &RunArgs) -> Result<(), Failure> {
    let mut file = load(args)?;
    if let Some(v) = args.consensus {
        file.consensus.variants = vec![v];
    }
    let cells = file.sweep_configs().map_err(|e| Failure::Config(e.to_string()))?;
    let dir = &args.out.out;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let results: Vec<Result<SummaryRow, Failure>> = cells
        .par_iter()
        .map(|cfg| {
            let outcome = execute(cfg)?;
            let rows = outcome.rows();
            write_rows(dir, cfg, &rows, &file.output.formats)?;
            Ok(SummaryRow::from_rows(cfg.variant, cfg.n_systems, &rows))
        })
        .collect();
    let mut summary = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    summary.sort_by_key(|s| (s.consensus, s.n_systems));
    report::attach_overheads(&mut summary);

    let scenario = &file.output.scenario_id;
    let csv_path = dir.join(format!("{scenario}_summary.csv"));
    let file_out = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    report::write_summary_csv(&summary, file_out).map_err(io_err(&csv_path))?;
    let json_path = dir.join(format!("{scenario}_summary.json"));
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&json_path, json.as_bytes())?;

    print!("{}", report::summary_table(&summary));
    report::check_complete(&summary)
}

fn read_rows(path: &Path) -> Result<Vec<TraceRow>, Failure> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let res = match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => read_jsonl(BufReader::new(file)),
        _ => read_csv(file),
    };
    res.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn cmd_compare(args: &CompareArgs) -> Result<(), Failure> {
    let chain = read_rows(&args.blockchain)?;
    let soa = read_rows(&args.soa)?;
    let table: Vec<CompareRow> = report::compare(&chain, &soa).map_err(Failure::Mismatch)?;
    let dir = &args.out.out;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("compare.json");
    write_file(&path, serde_json::to_string_pretty(&table).expect("report serializes").as_bytes())?;
    print!("{}", report::compare_table(&table));
    Ok(())
}
