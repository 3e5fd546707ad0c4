use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multinav::harness::{self, parse_crashes, OracleKind, RunConfig};

#[derive(Parser)]
#[command(name = "multinav", version, about = "Multi-agent multi-object navigation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write report.json, messages.tsv and trace.jsonl.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        oracle: Option<OracleKind>,
        /// Crash schedule, e.g. "leader:50,2:80".
        #[arg(long)]
        crash: Option<String>,
        /// Overrides the output directory from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a trace and print its timeline.
    Replay { trace: PathBuf },
    /// Check a scenario file against the world invariants.
    ValidateScenario { path: PathBuf },
}

fn run(config: PathBuf, seed: Option<u64>, oracle: Option<OracleKind>, crash: Option<String>, out: Option<PathBuf>) -> Result<bool, String> {
    let mut cfg = RunConfig::load(&config).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = oracle {
        cfg.oracle.kind = o;
    }
    if let Some(c) = crash {
        cfg.crash = parse_crashes(&c)?;
    }
    if out.is_some() {
        cfg.output_dir = out;
    }
    let result = harness::run(&cfg).map_err(|e| e.to_string())?;
    let r = &result.report;
    for t in &r.targets {
        println!("{:<16} {:?} tick={:?} agent={:?}", t.class, t.outcome, t.tick, t.agent.map(|a| a.0));
    }
    println!(
        "done={} ticks={} messages={} baseline={} handoffs={} recoveries={} violations={}",
        r.done,
        r.ticks,
        r.messages.total,
        r.messages.broadcast_baseline,
        r.protocol.handoffs,
        r.protocol.recoveries,
        r.verdicts.violations()
    );
    if let Some(dir) = &cfg.output_dir {
        println!("outputs in {}", dir.display());
    }
    Ok(r.all_found() && r.verdicts.violations() == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, seed, oracle, crash, out } => run(config, seed, oracle, crash, out),
        Command::Replay { trace } => std::fs::read_to_string(&trace)
            .map_err(|e| format!("{}: {e}", trace.display()))
            .and_then(|text| harness::replay(&text).map_err(|e| e.to_string()))
            .map(|r| {
                print!("{}", r.timeline);
                println!("checksums ok, {} ticks, verdicts match", r.ticks.len());
                true
            }),
        Command::ValidateScenario { path } => harness::validate_scenario(&path)
            .map_err(|e| e.to_string())
            .map(|diags| {
                for d in &diags {
                    println!("{d}");
                }
                if diags.is_empty() {
                    println!("{}: clean", path.display());
                }
                diags.is_empty()
            }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
