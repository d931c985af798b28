use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use rat_steer::config::parse_config;
use rat_steer::harness::report::{
    write_kpi_csv, write_summary_csv, write_sweep_csv, write_sweep_runs_csv, write_trace_csv, write_train_csv,
};
use rat_steer::harness::selfcheck::selfcheck;
use rat_steer::harness::{default_seeds, load_sweep, run, steering_trace, summarize, threshold_sweep, Scenario};
use rat_steer::policy::PolicyRegistry;

#[derive(Parser, Debug)]
#[command(name = "rat-steer", version, about = "LTE/NR traffic steering simulator")]
struct Cli {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; RAT_STEER_OUT takes precedence.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Steering policy: hrl, dqn or heuristic.
    #[arg(long, global = true, default_value = "hrl")]
    agent: String,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Training episodes; overrides the scenario.
    #[arg(long, global = true)]
    episodes: Option<u32>,
    /// Worker threads for multi-run commands.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train and evaluate one agent; writes kpi.csv and train_log.csv.
    Run,
    /// DQN throughput over thresholds and loads; writes sweep.csv and sweep_runs.csv.
    SweepThreshold {
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0])]
        thresholds: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0])]
        loads: Vec<f64>,
        /// Seeds 1..=N; the scenario's count when omitted.
        #[arg(long)]
        seeds: Option<u32>,
    },
    /// Agent KPIs over loads and seeds; writes kpi.csv and summary.csv.
    SweepLoad {
        #[arg(long, value_delimiter = ',', default_values_t = ["hrl".to_string(), "dqn".to_string(), "heuristic".to_string()])]
        agents: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [2.5, 5.0, 7.5, 10.0])]
        loads: Vec<f64>,
        #[arg(long)]
        seeds: Option<u32>,
    },
    /// Per-period steering records of one agent; writes trace.csv.
    Trace {
        /// Decision periods to record.
        #[arg(long, default_value_t = 300)]
        window: u64,
    },
    /// Runs the invariant suite on a shortened scenario.
    Selfcheck,
}

fn out_dir(flag: &Path) -> PathBuf {
    match std::env::var_os("RAT_STEER_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.to_path_buf(),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn seeds(scenario: &Scenario, n: Option<u32>) -> Vec<u64> {
    match n {
        Some(n) => (1..=u64::from(n)).collect(),
        None => default_seeds(scenario),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut scenario = parse_config(cli.config.as_deref())?;
    if let Some(e) = cli.episodes {
        scenario.training.episodes = e;
    }
    let registry = PolicyRegistry::builtin();
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let dir = out_dir(&cli.out_dir);
    match cli.command {
        Command::Run => {
            let out = run(&scenario, &registry, &cli.agent, cli.seed)?;
            write_kpi_csv(create(&dir, "kpi.csv")?, std::slice::from_ref(&out.report))?;
            write_train_csv(create(&dir, "train_log.csv")?, &out.log)?;
            let r = &out.report;
            println!(
                "{} seed {}: throughput {:.3} Mbit/s, delay {:.3} ms, drop rate {:.4}",
                r.agent, r.seed, r.throughput_mbps, r.delay_ms, r.drop_rate
            );
        }
        Command::SweepThreshold { thresholds, loads, seeds: n } => {
            let sweep = threshold_sweep(&scenario, &registry, &thresholds, &loads, &seeds(&scenario, n), jobs)?;
            write_sweep_csv(create(&dir, "sweep.csv")?, &sweep.rows)?;
            write_sweep_runs_csv(create(&dir, "sweep_runs.csv")?, &sweep.runs)?;
            for r in &sweep.rows {
                println!("Th {:.2} @ {} Mbit/s: {:.3} Mbit/s", r.threshold, r.load_mbps, r.throughput_mbps.0);
            }
        }
        Command::SweepLoad { agents, loads, seeds: n } => {
            let reports = load_sweep(&scenario, &registry, &agents, &loads, &seeds(&scenario, n), jobs)?;
            let summary = summarize(&reports);
            write_kpi_csv(create(&dir, "kpi.csv")?, &reports)?;
            write_summary_csv(create(&dir, "summary.csv")?, &summary)?;
            for s in &summary {
                println!(
                    "{} @ {} Mbit/s: throughput {:.3} ± {:.3}, delay {:.3} ± {:.3} ms, drop {:.4}",
                    s.agent,
                    s.load_mbps,
                    s.throughput_mbps.0,
                    s.throughput_mbps.1,
                    s.delay_ms.0,
                    s.delay_ms.1,
                    s.drop_rate.0
                );
            }
        }
        Command::Trace { window } => {
            let rows = steering_trace(&scenario, &registry, &cli.agent, cli.seed, window)?;
            write_trace_csv(create(&dir, "trace.csv")?, &rows)?;
            println!("{} records, {} steered", rows.len(), rows.iter().filter(|r| r.switched).count());
        }
        Command::Selfcheck => {
            let checks = selfcheck(&scenario)?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            if failed > 0 {
                bail!("{failed} of {} checks failed", checks.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
