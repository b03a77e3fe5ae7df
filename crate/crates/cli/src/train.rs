use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use deco_core::network::TRACE_PRNG;
use deco_core::trainer::{PlanEvent, StepsizeAdvisory};
use deco_core::{train_run, Task};
use serde::Serialize;

use crate::config::{self, load_experiment, ExperimentConfig, SCHEMA_VERSION};
use crate::{create_dir, write_json};

#[derive(Serialize)]
struct Final {
    iteration: usize,
    sim_time_s: f64,
    loss: f64,
    gap: f64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config_hash: &'a str,
    schema_version: u32,
    config: &'a ExperimentConfig,
    trace_sha256: Option<&'a str>,
    trace_prng: &'static str,
    optimum_value: f64,
    initial_loss: f64,
    #[serde(rename = "final")]
    last: Final,
    max_nvs_residual: Option<f64>,
    advisories: &'a [StepsizeAdvisory],
    plans: &'a [PlanEvent],
}

pub fn output_dir(cli: Option<&Path>, from_config: Option<&PathBuf>) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| from_config.cloned())
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn run(config_path: &Path, out: Option<&Path>) -> Result<()> {
    let loaded = load_experiment(config_path)?;
    let cfg = &loaded.config;
    let dir = output_dir(out, cfg.output_dir.as_ref());
    create_dir(&dir)?;

    let task = Task::<f64>::build(&cfg.task)?;
    let output = train_run(&task, &cfg.run, &loaded.trace)?;
    let last = output.final_record().context("run produced no iterations")?;

    let stem = format!("run-{}", config::short(&loaded.hash));
    let csv_path = dir.join(format!("{stem}.csv"));
    let file = File::create(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
    output.write_csv(BufWriter::new(file))?;

    let sidecar = Sidecar {
        config_hash: &loaded.hash,
        schema_version: SCHEMA_VERSION,
        config: cfg,
        trace_sha256: loaded.trace_sha256.as_deref(),
        trace_prng: TRACE_PRNG,
        optimum_value: output.optimum_value,
        initial_loss: output.initial_loss,
        last: Final {
            iteration: last.iteration,
            sim_time_s: last.sim_time,
            loss: last.loss,
            gap: last.loss - output.optimum_value,
        },
        max_nvs_residual: output.max_nvs_residual(),
        advisories: &output.advisories,
        plans: &output.plans,
    };
    let json_path = dir.join(format!("{stem}.json"));
    write_json(&json_path, &sidecar)?;

    let over: Vec<&StepsizeAdvisory> = output.advisories.iter().filter(|a| !a.gamma_compliant).collect();
    if let Some(tightest) = over.iter().min_by(|a, b| a.gamma_max.total_cmp(&b.gamma_max)) {
        eprintln!(
            "note: gamma {} exceeds the advisory stepsize bound for {} of {} plans (tightest {:.3e} at tau={}, delta={:.4})",
            cfg.run.gamma,
            over.len(),
            output.advisories.len(),
            tightest.gamma_max,
            tightest.tau,
            tightest.delta
        );
    }
    println!(
        "final loss {:.6e} (gap {:.3e}) after {} iterations, simulated time {:.3} s",
        last.loss, sidecar.last.gap, last.iteration, last.sim_time
    );
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}
