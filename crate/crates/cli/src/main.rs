use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use deco_core::network::{gen_trace, TraceGenParams};
use deco_core::timing::{approximation_bound, throughput_efficiency};
use deco_core::{deco_plan, simulate_pipeline, t_avg_closed_form, CompressionRatio, ConvergenceRegime, TimingParams};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

mod config;
mod sweep;
mod train;

#[derive(Parser)]
#[command(
    name = "deco",
    version,
    about = "Delayed, compressed, error-feedback SGD on a simulated network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pick staleness and compression ratio for a network.
    Plan(PlanArgs),
    /// Run the compute/transmit/arrive recurrence and compare with the closed form.
    SimTiming(SimTimingArgs),
    /// Generate a fluctuating-bandwidth trace CSV.
    TraceGen(TraceGenArgs),
    /// Train on a synthetic task from a config file.
    Train(FileArgs),
    /// Compare variants on time-to-target from a config file.
    Sweep(FileArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Regime {
    Standard,
    HighHeterogeneity,
}

impl From<Regime> for ConvergenceRegime {
    fn from(r: Regime) -> Self {
        match r {
            Regime::Standard => ConvergenceRegime::Standard,
            Regime::HighHeterogeneity => ConvergenceRegime::HighHeterogeneity,
        }
    }
}

#[derive(Args)]
struct NetworkArgs {
    /// Uncompressed gradient size, bits.
    #[arg(long)]
    sg: f64,
    /// Bandwidth, bits/s.
    #[arg(long)]
    a: f64,
    /// Latency, seconds.
    #[arg(long)]
    b: f64,
    /// Compute time per iteration, seconds.
    #[arg(long)]
    tcomp: f64,
}

impl NetworkArgs {
    fn params(&self) -> Result<TimingParams<f64>> {
        Ok(TimingParams::new(self.tcomp, self.sg, self.a, self.b)?)
    }
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    net: NetworkArgs,
    /// Model dimension; the smallest ratio considered is 1/d.
    #[arg(long, default_value_t = 1_000_000_000)]
    d: usize,
    #[arg(long, value_enum, default_value = "standard")]
    regime: Regime,
}

#[derive(Args)]
struct SimTimingArgs {
    #[command(flatten)]
    net: NetworkArgs,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    tau: usize,
    /// Number of iterations (at least 1).
    #[arg(long)]
    t: usize,
    /// Directory for the schedule CSV and summary JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceGenArgs {
    #[arg(long)]
    seed: u64,
    /// Mean bandwidth, bits/s.
    #[arg(long)]
    mean_bw: f64,
    /// Relative fluctuation in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    fluctuation: f64,
    /// Constant latency, seconds.
    #[arg(long)]
    latency: f64,
    /// Trace length, seconds.
    #[arg(long)]
    duration: f64,
    /// Sample spacing, seconds.
    #[arg(long, default_value_t = 1.0)]
    interval: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FileArgs {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `.`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PlanOutput {
    tau: usize,
    delta: f64,
    phi: f64,
    t_avg: f64,
    throughput_efficiency: f64,
}

fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let p = args.net.params()?;
    let floor = CompressionRatio::floor_for_dim(args.d)?;
    let plan = deco_plan(&p, args.regime.into(), &floor)?;
    let out = PlanOutput {
        tau: plan.tau,
        delta: *plan.delta.value(),
        phi: plan.phi,
        t_avg: t_avg_closed_form(&p, &plan.delta, plan.tau),
        throughput_efficiency: throughput_efficiency(&p, &plan.delta, plan.tau),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_sim_timing(args: &SimTimingArgs) -> Result<()> {
    let p = args.net.params()?;
    let delta = CompressionRatio::new(args.delta)?;
    let sched = simulate_pipeline(&p, &delta, args.tau, args.t)?;
    let closed = t_avg_closed_form(&p, &delta, args.tau);
    let finish = sched.tc[args.t];
    let inputs = json!({
        "t_comp_s": args.net.tcomp,
        "grad_bits": args.net.sg,
        "bandwidth_bps": args.net.a,
        "latency_s": args.net.b,
        "delta": args.delta,
        "tau": args.tau,
        "t": args.t,
    });
    let hash = hex::encode(Sha256::digest(serde_json::to_vec(&inputs)?));
    let summary = json!({
        "config_hash": hash,
        "inputs": inputs,
        "t_avg_empirical": finish / args.t as f64,
        "t_avg_closed_form": closed,
        "abs_gap": (finish - closed * args.t as f64).abs(),
        "bound": approximation_bound(&p, &delta),
    });
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let stem = format!("timing-{}", config::short(&hash));
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
        w.write_record(["k", "ts_s", "tm_s", "tc_s"])?;
        for k in 0..=args.t {
            w.write_record([
                k.to_string(),
                sched.ts[k].to_string(),
                sched.tm[k].to_string(),
                sched.tc[k].to_string(),
            ])?;
        }
        w.flush()?;
        write_json(&dir.join(format!("{stem}.json")), &summary)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_trace_gen(args: &TraceGenArgs) -> Result<()> {
    let trace = gen_trace(&TraceGenParams {
        seed: args.seed,
        mean_bandwidth: args.mean_bw,
        fluctuation: args.fluctuation,
        latency: args.latency,
        duration: args.duration,
        interval: args.interval,
    })?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    trace
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {} samples to {}", trace.samples().len(), args.out.display());
    Ok(())
}

/// Worker threads for sweeps: `DECO_THREADS`, else rayon's default.
pub(crate) fn thread_count() -> Result<Option<usize>> {
    match std::env::var("DECO_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("DECO_THREADS={v:?} is not a count"))?;
            anyhow::ensure!(n > 0, "DECO_THREADS must be at least 1");
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan(a) => cmd_plan(&a),
        Command::SimTiming(a) => cmd_sim_timing(&a),
        Command::TraceGen(a) => cmd_trace_gen(&a),
        Command::Train(a) => train::run(&a.config, a.out.as_deref()),
        Command::Sweep(a) => sweep::run(&a.config, a.out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
