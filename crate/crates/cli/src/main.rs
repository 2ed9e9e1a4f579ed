use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deferral::harness::{self, ExperimentConfig, StageError};
use deferral::Error;

/// Deadline-aware capacity provisioning simulator.
#[derive(Parser)]
#[command(name = "deferral", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the selected algorithms on one workload and write a report bundle.
    Simulate(Common),
    /// Sweep the deadline (or VFW lookahead) and write cost curves.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SweepOver::Deadline)]
        over: SweepOver,
    },
    /// Estimate per-job execution time and slot length from a trace.
    Estimate(Common),
    /// Cluster trace jobs and assign per-class deadlines.
    Classify(Common),
    /// Energy of per-machine metrics under the linear power model.
    Energy {
        /// CSV with columns slot,machine_id,u_cpu,disk_bytes,disk_ops,net_bytes.
        metrics: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepOver {
    Deadline,
    Delta,
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Job trace CSV: job_id,release_time_s,input_bytes,shuffle_bytes,output_bytes.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Synthetic workload, e.g. `sinusoid:mean=10,pmr=3,period=288`.
    #[arg(long)]
    synthetic: Option<String>,
    /// offline, vfw, gcp, follow, none, or all (comma separated).
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    deadline: Option<usize>,
    #[arg(long)]
    delta: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    e0: Option<f64>,
    #[arg(long)]
    e1: Option<f64>,
    #[arg(long)]
    fleet: Option<f64>,
    #[arg(long)]
    slot_seconds: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Any other configuration key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    extra: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, StageError> {
        let tag = |source: Error| StageError {
            stage: harness::Stage::Config,
            source,
        };
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_file(path).map_err(tag)?,
            None => ExperimentConfig::default(),
        };
        let mut set = |k: &str, v: String| c.set(k, &v).map_err(tag);
        if let Some(v) = &self.trace {
            set("trace", v.display().to_string())?;
            set("synthetic", String::new())?;
        }
        if let Some(v) = &self.synthetic {
            set("synthetic", v.clone())?;
            set("trace", String::new())?;
        }
        if let Some(v) = &self.algorithm {
            set("algorithm", v.clone())?;
        }
        let numbers = [
            ("deadline", self.deadline.map(|v| v.to_string())),
            ("delta", self.delta.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("e0", self.e0.map(|v| v.to_string())),
            ("e1", self.e1.map(|v| v.to_string())),
            ("fleet", self.fleet.map(|v| v.to_string())),
            ("slot_seconds", self.slot_seconds.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (k, v) in numbers {
            if let Some(v) = v {
                set(k, v)?;
            }
        }
        for kv in &self.extra {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| tag(Error::Config(format!("--set expects KEY=VALUE, got '{kv}'"))))?;
            set(k.trim(), v.trim().to_string())?;
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<(), StageError> {
    match cli.command {
        Command::Simulate(common) => {
            let config = common.config()?;
            let report = harness::run_experiment(&config, common.out_dir.as_deref())?;
            println!(
                "fleet {} | load total {:.3} | peak {:.3}",
                report.fleet, report.load_total, report.peak_load
            );
            println!(
                "{:<8} {:>6} {:>12} {:>12} {:>12} {:>9} {:>8} {:>10}",
                "algo", "delta", "operating", "switching", "total", "savings", "ratio", "energy_wh"
            );
            for r in &report.runs {
                println!(
                    "{:<8} {:>6} {:>12.3} {:>12.3} {:>12.3} {:>8.2}% {:>8.3} {:>10.2}",
                    r.algorithm.name(),
                    r.delta.map(|d| d.to_string()).unwrap_or_else(|| "-".into()),
                    r.cost.operating_cost,
                    r.cost.switching_cost,
                    r.cost.total_cost,
                    100.0 * r.cost.savings_vs_baseline,
                    r.bound.ratio,
                    r.energy.as_ref().map_or(0.0, |e| e.energy_wh),
                );
            }
        }
        Command::Sweep { common, over } => {
            let config = common.config()?;
            let rows = harness::run_sweep(&config, matches!(over, SweepOver::Delta), common.out_dir.as_deref())?;
            let mut out = Vec::new();
            harness::write_sweep_csv(&rows, &mut out).map_err(|source| StageError {
                stage: harness::Stage::Output,
                source,
            })?;
            print!("{}", String::from_utf8_lossy(&out));
        }
        Command::Estimate(common) => {
            let config = common.config()?;
            let rows = harness::run_estimate(&config, common.out_dir.as_deref())?;
            println!("{:<16} {:>14} {:>6}", "job", "seconds", "slots");
            for r in rows {
                println!("{:<16} {:>14.3} {:>6}", r.id, r.seconds, r.slots);
            }
        }
        Command::Classify(common) => {
            let config = common.config()?;
            let (rows, _) = harness::run_classify(&config, common.out_dir.as_deref())?;
            println!(
                "{:>8} {:>7} {:>8} {:>14} {:>14} {:>14} {:>9}",
                "cluster", "jobs", "% jobs", "input_mb", "shuffle_mb", "output_mb", "deadline"
            );
            for r in rows {
                println!(
                    "{:>8} {:>7} {:>8.2} {:>14.3} {:>14.3} {:>14.3} {:>9}",
                    r.cluster, r.jobs, r.percent, r.median_input_mb, r.median_shuffle_mb, r.median_output_mb, r.deadline
                );
            }
        }
        Command::Energy { metrics, common } => {
            let config = common.config()?;
            let report = harness::run_energy(&metrics, &config.power, config.slot_seconds, common.out_dir.as_deref())?;
            println!(
                "energy {:.4} Wh over {} machine-slots (mean cpu {:.3})",
                report.energy_wh, report.machine_slots, report.mean_cpu_util
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
