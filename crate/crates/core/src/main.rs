use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use seeknet::metrics::{emit_report, write_csv, FlowSummary, ReportFormat};
use seeknet::scenario::{parse_scenario, parse_scenario_value, set_json_path, validate_scenario, ScenarioError};
use seeknet::sim::run;

#[derive(Parser)]
#[command(name = "seeknet", version, about = "Packet-level SEEK routing / segment MAC simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write summary files.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long, env = "SEEKNET_SEED")]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Overrides `mac.arq`.
        #[arg(long, value_enum)]
        arq: Option<OnOff>,
        /// Also write the full event trace as trace.ndjson.
        #[arg(long)]
        trace: bool,
    },
    /// Run a scenario once per (value, seed), varying one parameter.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Dotted path into the scenario, e.g. `sessions[0].payload_bytes`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Number of consecutive seeds per value, starting at the base seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, env = "SEEKNET_SEED")]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ScenarioError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn read_doc(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    // Parse once through the strict path so syntax errors keep their location.
    let doc = parse_scenario(&text)?;
    Ok(serde_json::to_value(doc).expect("scenario serializes"))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate { scenario } => {
            let doc = read_doc(&scenario)?;
            let sc = validate_scenario(&parse_scenario_value(doc)?)?;
            println!(
                "ok: {} ({} nodes, {} sessions, {} world events, {} s)",
                sc.name,
                sc.nodes.len(),
                sc.sessions.len(),
                sc.world_events.len(),
                sc.sim.duration.as_secs_f64()
            );
            Ok(())
        }
        Command::Run { scenario, seed, out, format, arq, trace } => {
            let mut doc = read_doc(&scenario)?;
            if let Some(a) = arq {
                set_json_path(&mut doc, "mac.arq", Value::Bool(matches!(a, OnOff::On)))?;
            }
            if trace {
                set_json_path(&mut doc, "sim.record_trace", Value::Bool(true))?;
            }
            let sc = validate_scenario(&parse_scenario_value(doc)?)?;
            let seed = seed.unwrap_or(sc.sim.seed);
            let result = run(&sc, seed);
            let format = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Json => ReportFormat::Json,
            };
            let mut files = emit_report(&result.report, format, &out)?;
            if let Some(lines) = &result.trace.lines {
                let p = out.join("trace.ndjson");
                let mut text = lines.join("\n");
                text.push('\n');
                std::fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))?;
                files.push(p);
            }
            print_rows(&result.report.summary_rows());
            println!("seed {seed}, trace digest {}", result.report.trace_digest);
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Sweep { scenario, param, values, seeds, seed, out } => {
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let base = read_doc(&scenario)?;
            let mut jobs = Vec::new();
            for v in &values {
                let value: Value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.clone()));
                let mut doc = base.clone();
                set_json_path(&mut doc, &param, value)?;
                let sc = validate_scenario(&parse_scenario_value(doc)?)?;
                let first = seed.unwrap_or(sc.sim.seed);
                for k in 0..seeds {
                    jobs.push((v.clone(), first + k, sc.clone()));
                }
            }
            // Runs share nothing, so they go in parallel.
            let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
            let mut rows: Vec<Option<SweepRow>> = vec![None; jobs.len()];
            for (chunk_jobs, chunk_rows) in jobs.chunks(threads).zip(rows.chunks_mut(threads)) {
                std::thread::scope(|s| {
                    let handles: Vec<_> = chunk_jobs
                        .iter()
                        .map(|(v, seed, sc)| {
                            let param = &param;
                            s.spawn(move || {
                                let r = run(sc, *seed);
                                SweepRow {
                                    param: param.clone(),
                                    value: v.clone(),
                                    seed: *seed,
                                    digest: r.report.trace_digest.clone(),
                                    summary: r.report.aggregate,
                                }
                            })
                        })
                        .collect();
                    for (slot, h) in chunk_rows.iter_mut().zip(handles) {
                        *slot = Some(h.join().expect("sweep run panicked"));
                    }
                });
            }
            let rows: Vec<SweepRow> = rows.into_iter().map(|r| r.expect("filled")).collect();
            std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let flat: Vec<FlatSweepRow> = rows.iter().map(FlatSweepRow::from).collect();
            let p = out.join("sweep.csv");
            write_csv(&p, &flat)?;
            println!("{:<24} {:>6} {:>8} {:>9} {:>12} {:>8}", "value", "seed", "sent", "received", "reliability", "norm_thr");
            for r in &rows {
                println!(
                    "{:<24} {:>6} {:>8} {:>9} {:>12} {:>8.4}",
                    r.value,
                    r.seed,
                    r.summary.sent,
                    r.summary.received,
                    fmt_pct(r.summary.reliability_pct),
                    r.summary.normalized_throughput
                );
            }
            println!("wrote {}", p.display());
            Ok(())
        }
    }
}

#[derive(Clone)]
struct SweepRow {
    param: String,
    value: String,
    seed: u64,
    digest: String,
    summary: FlowSummary,
}

#[derive(Serialize)]
struct FlatSweepRow {
    param: String,
    value: String,
    seed: u64,
    sent: u64,
    received: u64,
    dropped: u64,
    in_flight: u64,
    reliability_pct: Option<f64>,
    goodput_bps: f64,
    normalized_throughput: f64,
    trace_digest: String,
}

impl From<&SweepRow> for FlatSweepRow {
    fn from(r: &SweepRow) -> Self {
        FlatSweepRow {
            param: r.param.clone(),
            value: r.value.clone(),
            seed: r.seed,
            sent: r.summary.sent,
            received: r.summary.received,
            dropped: r.summary.dropped,
            in_flight: r.summary.in_flight,
            reliability_pct: r.summary.reliability_pct,
            goodput_bps: r.summary.goodput_bps,
            normalized_throughput: r.summary.normalized_throughput,
            trace_digest: r.digest.clone(),
        }
    }
}

fn fmt_pct(p: Option<f64>) -> String {
    p.map_or_else(|| "n/a".into(), |p| format!("{p:.2}%"))
}

fn print_rows(rows: &[FlowSummary]) {
    println!(
        "{:<10} {:>8} {:>9} {:>8} {:>9} {:>12} {:>12} {:>8}",
        "flow", "sent", "received", "dropped", "in_flight", "reliability", "goodput_bps", "norm_thr"
    );
    for r in rows {
        println!(
            "{:<10} {:>8} {:>9} {:>8} {:>9} {:>12} {:>12.0} {:>8.4}",
            r.flow,
            r.sent,
            r.received,
            r.dropped,
            r.in_flight,
            fmt_pct(r.reliability_pct),
            r.goodput_bps,
            r.normalized_throughput
        );
    }
}
