use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rugsim::figures::{write_figure, Figure};
use rugsim::harness::sweep::{parse_param, run_sweep, SweepError};
use rugsim::harness::{format_hash, load_scenario, scenario_schema, verify_trace, Engine, LoadError, VerifyError};

const OK: u8 = 0;
const INPUT: u8 = 2;
const STRICT: u8 = 3;
const VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "rugsim", version, about = "Anticoin protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, env = "RUGSIM_OUT", default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        blocks: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Exit 3 if any failed event was recorded.
        #[arg(long)]
        strict: bool,
    },
    /// Run one scenario per value of a numeric key.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// KEY=A:B:STEP, e.g. vaults[0].params.penalty_lambda=1.1:3.0:0.1
        #[arg(long)]
        param: String,
        #[arg(long, env = "RUGSIM_OUT", default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        blocks: Option<u64>,
    },
    /// Check a written trace: hash, ledger replay, balances and supply identity.
    Verify {
        #[arg(long, required_unless_present = "regen_golden")]
        trace: Option<PathBuf>,
        /// Rerun a scenario and rewrite its golden file.
        #[arg(long, value_name = "SCENARIO")]
        regen_golden: Option<PathBuf>,
        #[arg(long, requires = "regen_golden")]
        golden: Option<PathBuf>,
    },
    /// Write figure data as CSV.
    Figures {
        #[arg(long, value_enum)]
        which: Option<Figure>,
        #[arg(long, env = "RUGSIM_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Print the scenario JSON schema.
    Schema,
}

fn load(path: &Path, seed: Option<u64>) -> Result<rugsim::harness::Scenario, LoadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LoadError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let mut scenario = load_scenario(&text)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    Ok(scenario)
}

fn run(scenario: &Path, out: &Path, blocks: Option<u64>, seed: Option<u64>, strict: bool) -> u8 {
    if blocks == Some(0) {
        eprintln!("--blocks must be at least 1");
        return INPUT;
    }
    let trace = match load(scenario, seed).and_then(Engine::new) {
        Ok(engine) => engine.run(blocks),
        Err(e) => {
            eprintln!("{e}");
            return INPUT;
        }
    };
    if let Err(e) = trace.write(out) {
        eprintln!("cannot write trace to {}: {e}", out.display());
        return INPUT;
    }
    println!("{}  events={} failed={}", format_hash(trace.trace_hash), trace.events.len(), trace.failed_events);
    if strict && trace.failed_events > 0 {
        eprintln!("{} failed events recorded", trace.failed_events);
        return STRICT;
    }
    OK
}

fn sweep(scenario: &Path, param: &str, out: &Path, blocks: Option<u64>) -> u8 {
    let spec = match parse_param(param) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return INPUT;
        }
    };
    let text = match std::fs::read_to_string(scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", scenario.display());
            return INPUT;
        }
    };
    match run_sweep(&text, &spec, out, blocks) {
        Ok(rows) => {
            println!("{} runs, summary in {}", rows.len(), out.join("summary.csv").display());
            OK
        }
        Err(e @ (SweepError::Usage(_) | SweepError::Load(_) | SweepError::Io(_))) => {
            eprintln!("{e}");
            INPUT
        }
    }
}

fn verify(trace: Option<&Path>, regen: Option<&Path>, golden: Option<&Path>) -> u8 {
    if let Some(scenario) = regen {
        let golden = golden.map(Path::to_path_buf).unwrap_or_else(|| rugsim::harness::golden::default_path(scenario));
        return match rugsim::harness::golden::regenerate(scenario, &golden) {
            Ok(g) => {
                println!("wrote {} (trace_hash {})", golden.display(), g.trace_hash);
                OK
            }
            Err(e) => {
                eprintln!("{e}");
                INPUT
            }
        };
    }
    let dir = trace.expect("clap requires --trace");
    match verify_trace(dir) {
        Ok(r) => {
            println!("ok  events={} ledger_ops={} hash={}", r.events, r.ledger_ops, format_hash(r.trace_hash));
            OK
        }
        Err(e @ VerifyError::Input(_)) => {
            eprintln!("{e}");
            INPUT
        }
        Err(e @ VerifyError::Violation { .. }) => {
            eprintln!("{e}");
            VERIFY
        }
    }
}

fn figures(which: Option<Figure>, out: &Path) -> u8 {
    let list: Vec<Figure> = which.map_or_else(|| Figure::ALL.to_vec(), |f| vec![f]);
    for f in list {
        match write_figure(f, out) {
            Ok(p) => println!("{}", p.display()),
            Err(e) => {
                eprintln!("cannot write figure: {e}");
                return INPUT;
            }
        }
    }
    OK
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { INPUT } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Run { scenario, out, blocks, seed, strict } => run(&scenario, &out, blocks, seed, strict),
        Command::Sweep { scenario, param, out, blocks } => sweep(&scenario, &param, &out, blocks),
        Command::Verify { trace, regen_golden, golden } => {
            verify(trace.as_deref(), regen_golden.as_deref(), golden.as_deref())
        }
        Command::Figures { which, out } => figures(which, &out),
        Command::Schema => {
            println!("{}", serde_json::to_string_pretty(&scenario_schema()).expect("schema serializes"));
            OK
        }
    };
    ExitCode::from(code)
}
