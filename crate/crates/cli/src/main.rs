//! `ndnsmc`: run single forwarder traces, SMC estimates and factor sweeps.
//!
//! Exit status: 0 on success, 2 on configuration errors, 3 when a
//! simulation aborts (timelock or livelock), 1 for anything else.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use ndnsmc::calibration::CalibrationError;
use ndnsmc::dist::{fit, DistError};
use ndnsmc::experiment::{
    emit_series, main_effects, read_results, run_sweep, write_atomic, write_effects, ExperimentError, Factor, Response,
    SweepOptions, SweepSpec,
};
use ndnsmc::forwarder::{build_model_with, FactorConfig, ForwarderError, ModelOptions};
use ndnsmc::smc::{estimate, sprt, Monitor, SmcError, SprtConfig, TraceSource};
use ndnsmc::{CalibrationProfile, Placement};

#[derive(Parser)]
#[command(name = "ndnsmc", version, about = "Stochastic NDN forwarder model with statistical model checking")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed [default: 0, or the sweep file's master_seed]
    #[arg(long, global = true, env = "NDNSMC_SEED")]
    seed: Option<u64>,
    /// SMC precision
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// SMC confidence parameter
    #[arg(long, global = true)]
    delta_conf: Option<f64>,
    /// Trace length in ticks (ns)
    #[arg(long, global = true)]
    horizon: Option<u64>,
    /// Interests sent before this tick are not measured
    #[arg(long, global = true)]
    warmup: Option<u64>,
    /// Output file [default: stdout, or the sweep file's output]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Refuse to run more than this many traces
    #[arg(long, global = true)]
    budget: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trace and print its counters as JSON
    Simulate(CellArgs),
    /// Estimate the probability that a monitor holds for one configuration
    Estimate {
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long, value_enum, default_value_t = MonitorArg::AllSatisfied)]
        monitor: MonitorArg,
    },
    /// Sequential test of "the monitor holds with probability at least theta"
    Sprt {
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long, value_enum, default_value_t = MonitorArg::AllSatisfied)]
        monitor: MonitorArg,
        #[arg(long, default_value_t = 0.9)]
        theta: f64,
        /// Indifference half-width
        #[arg(long, default_value_t = 0.01)]
        half_width: f64,
        #[arg(long, default_value_t = 100_000)]
        max_samples: u64,
    },
    /// Run a factor sweep and write the results CSV
    Sweep {
        /// Sweep file (TOML)
        spec: PathBuf,
    },
    /// Main effects of each factor from a results CSV
    Effects {
        results: PathBuf,
        #[arg(long, value_enum, default_value_t = ResponseArg::MeanRatio)]
        response: ResponseArg,
    },
    /// Plot-ready long-format series from a results CSV
    Series {
        results: PathBuf,
        /// Factor on the x axis
        #[arg(long)]
        x: String,
        /// Factor whose levels become separate curves
        #[arg(long)]
        curve: Option<String>,
        /// Keep only rows where a factor has the given level; repeatable
        #[arg(long = "where", value_name = "FACTOR=LEVEL")]
        filters: Vec<String>,
        #[arg(long, value_enum, default_value_t = ResponseArg::MeanRatio)]
        response: ResponseArg,
    },
    /// Fit a latency distribution to measurements (one ns value per line)
    Fit { measurements: PathBuf },
}

#[derive(Args)]
struct CellArgs {
    /// FactorConfig TOML; the flags below override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Calibration profile [default: shipped synthetic profile]
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Forwarding threads (1 to 8)
    #[arg(long)]
    threads: Option<u8>,
    /// Components per Interest name
    #[arg(long)]
    name_length: Option<usize>,
    /// Data payload bytes
    #[arg(long)]
    payload_len: Option<u32>,
    /// Ticks (ns) between Interests
    #[arg(long)]
    send_interval: Option<u64>,
    /// Capacity of each forwarding-thread input queue
    #[arg(long)]
    queue_capacity: Option<usize>,
    /// NUMA placement: P1, P2, P3 or P4
    #[arg(long)]
    placement: Option<Placement>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MonitorArg {
    AllSatisfied,
    SatisfactionRatio,
}

impl From<MonitorArg> for Monitor {
    fn from(m: MonitorArg) -> Monitor {
        match m {
            MonitorArg::AllSatisfied => Monitor::AllSatisfied,
            MonitorArg::SatisfactionRatio => Monitor::SatisfactionRatio,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ResponseArg {
    MeanRatio,
    PHat,
}

impl From<ResponseArg> for Response {
    fn from(r: ResponseArg) -> Response {
        match r {
            ResponseArg::MeanRatio => Response::MeanRatio,
            ResponseArg::PHat => Response::PHat,
        }
    }
}

#[derive(Debug, Error)]
#[error("{0}")]
struct ConfigError(String);

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

impl Cli {
    fn cell(&self, args: &CellArgs) -> Result<(FactorConfig, CalibrationProfile)> {
        let mut cfg = match &args.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?
            }
            None => FactorConfig::default(),
        };
        if let Some(v) = args.threads {
            cfg.n_forwarding_threads = v;
        }
        if let Some(v) = args.name_length {
            cfg.name_length = v;
        }
        if let Some(v) = args.payload_len {
            cfg.payload_len = v;
        }
        if let Some(v) = args.send_interval {
            cfg.send_interval = v;
        }
        if let Some(v) = args.queue_capacity {
            cfg.queue_capacity = v;
        }
        if let Some(v) = args.placement {
            cfg.numa_placement = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if self.warmup.is_some() {
            cfg.warmup = self.warmup;
        }
        cfg.validate()?;
        let cal = match &args.calibration {
            Some(p) => CalibrationProfile::load(p)?,
            None => CalibrationProfile::shipped(),
        };
        Ok((cfg, cal))
    }

    fn emit(&self, bytes: &[u8]) -> Result<()> {
        match &self.out {
            Some(p) => write_atomic(p, bytes)?,
            None => std::io::stdout().write_all(bytes)?,
        }
        Ok(())
    }

    fn emit_json<T: serde::Serialize>(&self, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.emit(s.as_bytes())
    }

    fn alpha_delta(&self) -> (f64, f64) {
        (self.alpha.unwrap_or(0.1), self.delta_conf.unwrap_or(0.1))
    }
}

fn run(cli: &Cli) -> Result<()> {
    let opts = ModelOptions::default();
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Simulate(args) => {
            let (cfg, cal) = cli.cell(args)?;
            let counters = build_model_with(&cfg, &cal, &opts)?.run(seed)?;
            cli.emit_json(&counters)
        }
        Command::Estimate { cell, monitor } => {
            let (cfg, cal) = cli.cell(cell)?;
            let (alpha, delta) = cli.alpha_delta();
            let n = ndnsmc::smc::required_samples(alpha, delta)?;
            if let Some(budget) = cli.budget.filter(|b| n > *b) {
                return Err(config_error(format!("budget of {budget} traces exceeded: the estimate needs {n}")));
            }
            let src = TraceSource { cfg: &cfg, calibration: &cal, options: &opts };
            let est = estimate(&src, &(*monitor).into(), alpha, delta, seed, cli.jobs)?;
            cli.emit_json(&est)
        }
        Command::Sprt { cell, monitor, theta, half_width, max_samples } => {
            let (cfg, cal) = cli.cell(cell)?;
            let scfg = SprtConfig {
                theta: *theta,
                half_width: *half_width,
                max_samples: cli.budget.map_or(*max_samples, |b| b.min(*max_samples)),
                ..SprtConfig::default()
            };
            let src = TraceSource { cfg: &cfg, calibration: &cal, options: &opts };
            cli.emit_json(&sprt(&src, &(*monitor).into(), &scfg, seed)?)
        }
        Command::Sweep { spec } => {
            let mut s = SweepSpec::load(spec)?;
            if let Some(v) = cli.seed {
                s.master_seed = v;
            }
            if let Some(v) = cli.alpha {
                s.alpha = v;
            }
            if let Some(v) = cli.delta_conf {
                s.delta_conf = v;
            }
            if let Some(v) = cli.horizon {
                s.base.horizon = v;
            }
            if cli.warmup.is_some() {
                s.base.warmup = cli.warmup;
            }
            let out = cli
                .out
                .clone()
                .or_else(|| s.output.clone())
                .ok_or_else(|| config_error("no output path: set `output` in the sweep file or pass --out"))?;
            let cal = s.load_calibration()?;
            let rows = run_sweep(&s, &cal, &out, &SweepOptions { jobs: cli.jobs, budget: cli.budget })?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Effects { results, response } => {
            let rows = read_results(results)?;
            cli.emit(&write_effects(&main_effects(&rows, (*response).into())?)?)
        }
        Command::Series { results, x, curve, filters, response } => {
            let factor = |name: &str| {
                Factor::parse(&name.replace('-', "_")).ok_or_else(|| config_error(format!("unknown factor {name:?}")))
            };
            let x = factor(x)?;
            let curve = curve.as_deref().map(factor).transpose()?;
            let filters = filters
                .iter()
                .map(|f| {
                    let (name, level) =
                        f.split_once('=').ok_or_else(|| config_error(format!("filter {f:?} is not FACTOR=LEVEL")))?;
                    Ok((factor(name)?, level.to_string()))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let mut rows = read_results(results)?;
            rows.retain(|r| filters.iter().all(|(f, level)| f.level(r) == *level));
            let (_, csv) = emit_series(&rows, x, curve, (*response).into())?;
            cli.emit(&csv)
        }
        Command::Fit { measurements } => {
            let samples = read_measurements(measurements)?;
            cli.emit_json(&fit(&samples)?)
        }
    }
}

fn read_measurements(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.trim().parse::<f64>().map_err(|e| config_error(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

/// Exit status for an error: the innermost recognised cause decides.
fn exit_code(err: &anyhow::Error) -> u8 {
    let mut code = None;
    for cause in err.chain() {
        let c = if let Some(e) = cause.downcast_ref::<ForwarderError>() {
            Some(if matches!(e, ForwarderError::Kernel(_)) { 3 } else { 2 })
        } else if let Some(e) = cause.downcast_ref::<SmcError>() {
            match e {
                SmcError::Trace { .. } => Some(3),
                SmcError::Domain(_) | SmcError::Monitor(_) => Some(2),
                _ => None,
            }
        } else if let Some(e) = cause.downcast_ref::<ExperimentError>() {
            e.is_config().then_some(2)
        } else if cause.is::<ConfigError>() || cause.is::<CalibrationError>() || cause.is::<DistError>() {
            Some(2)
        } else {
            None
        };
        code = c.or(code);
    }
    code.unwrap_or(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use ndnsmc::kernel::KernelError;

    use super::*;

    fn timelock() -> ForwarderError {
        ForwarderError::Kernel(KernelError::Timelock { tick: 5, component: "fwd0".into(), location: "f1".into() })
    }

    #[test]
    fn simulation_aborts_exit_with_3() {
        assert_eq!(exit_code(&timelock().into()), 3);
        let trace = SmcError::Trace { index: 4, seed: 9, source: Box::new(timelock()) };
        assert_eq!(exit_code(&trace.into()), 3);
        let cell = ExperimentError::Cell {
            cell: 2,
            desc: String::new(),
            source: SmcError::Trace { index: 0, seed: 1, source: Box::new(timelock()) },
        };
        assert_eq!(exit_code(&cell.into()), 3);
    }

    #[test]
    fn configuration_problems_exit_with_2() {
        assert_eq!(exit_code(&ForwarderError::Config("x".into()).into()), 2);
        assert_eq!(exit_code(&SmcError::Domain("x".into()).into()), 2);
        assert_eq!(exit_code(&ExperimentError::Budget { projected: 2, budget: 1 }.into()), 2);
        assert_eq!(exit_code(&config_error("x")), 2);
        // a monitor failure inside a trace is a configuration problem
        let trace = SmcError::Trace { index: 0, seed: 1, source: Box::new(SmcError::Monitor("empty window".into())) };
        assert_eq!(exit_code(&trace.into()), 2);
    }

    #[test]
    fn other_failures_exit_with_1() {
        assert_eq!(exit_code(&std::io::Error::other("disk").into()), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("odd")), 1);
    }
}
