use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use deco_core::network::TRACE_PRNG;
use deco_core::trainer::{RunOutput, RunRecord};
use deco_core::{train_run, NetworkTrace, RunConfig, Task};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, load_sweep, SweepCell, SweepConfig, Target, SCHEMA_VERSION};
use crate::train::output_dir;
use crate::{create_dir, thread_count, write_json};

struct CellResult {
    output: RunOutput,
    hit: Option<RunRecord>,
}

/// One line of the comparison table; field order is the CSV column order.
#[derive(Serialize)]
struct Row<'a> {
    cell: &'a str,
    variant: String,
    tau: usize,
    delta: f64,
    reached: bool,
    iters_to_target: Option<usize>,
    time_to_target_s: Option<f64>,
    baseline: &'a str,
    speedup_vs: Option<f64>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config_hash: &'a str,
    schema_version: u32,
    config: &'a SweepConfig,
    trace_sha256: Option<&'a str>,
    trace_prng: &'static str,
    optimum_value: f64,
    target_gap: f64,
    unreached: Vec<&'a str>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) && !name.starts_with('.')
}

fn run_cell(
    task: &Task<f64>,
    cfg: &SweepConfig,
    cell: &SweepCell,
    trace: &NetworkTrace,
    gap: f64,
) -> Result<CellResult> {
    let base = &cfg.base;
    let run = RunConfig {
        variant: cell.variant.clone(),
        gamma: cell.gamma.unwrap_or(base.gamma),
        iterations: base.iterations,
        t_comp: base.t_comp,
        grad_bits: base.grad_bits,
        regime: base.regime,
        seed: base.seed,
        probe: false,
        stop_at_gap: Some(gap),
    };
    let output = train_run(task, &run, trace).with_context(|| format!("cell {}", cell.name))?;
    let hit = output.time_to_target(gap).cloned();
    Ok(CellResult { output, hit })
}

pub fn run(config_path: &Path, out: Option<&Path>) -> Result<()> {
    let loaded = load_sweep(config_path)?;
    let cfg = &loaded.config;
    if let Some(bad) = cfg.cells.iter().find(|c| !valid_name(&c.name)) {
        bail!(
            "cell name {:?} must use only letters, digits, '-', '_' and '.'",
            bad.name
        );
    }
    let dir = output_dir(out, cfg.output_dir.as_ref());
    let stem = format!("sweep-{}", config::short(&loaded.hash));
    let cell_dir = dir.join(&stem);
    create_dir(&cell_dir)?;

    let task = Task::<f64>::build(&cfg.task)?;
    let gap = match cfg.target {
        Target::Gap(g) => g,
        Target::RelativeGap(r) => r * (task.loss(task.initial_point()) - task.optimum_value()),
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let results: Vec<CellResult> = pool.install(|| {
        cfg.cells
            .par_iter()
            .map(|cell| {
                let result = run_cell(&task, cfg, cell, &loaded.trace, gap)?;
                let path = cell_dir.join(format!("{}.csv", cell.name));
                let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
                result.output.write_csv(BufWriter::new(file))?;
                Ok(result)
            })
            .collect::<Result<_>>()
    })?;

    let baseline_idx = cfg
        .cells
        .iter()
        .position(|c| c.name == cfg.baseline)
        .expect("validated");
    let baseline_time = results[baseline_idx].hit.as_ref().map(|r| r.sim_time);
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
    let mut unreached = Vec::new();
    for (cell, res) in cfg.cells.iter().zip(&results) {
        let shown = res
            .hit
            .as_ref()
            .or(res.output.final_record())
            .context("cell produced no iterations")?;
        let time = res.hit.as_ref().map(|r| r.sim_time);
        if res.hit.is_none() {
            unreached.push(cell.name.as_str());
        }
        w.serialize(Row {
            cell: &cell.name,
            variant: cell.variant.to_string(),
            tau: shown.tau,
            delta: shown.delta,
            reached: res.hit.is_some(),
            iters_to_target: res.hit.as_ref().map(|r| r.iteration),
            time_to_target_s: time,
            baseline: &cfg.baseline,
            speedup_vs: baseline_time.zip(time).map(|(b, t)| b / t),
        })?;
    }
    w.flush()?;

    for name in &unreached {
        eprintln!("warning: cell {name} did not reach the target gap {gap:.3e}");
    }
    let sidecar = Sidecar {
        config_hash: &loaded.hash,
        schema_version: SCHEMA_VERSION,
        config: cfg,
        trace_sha256: loaded.trace_sha256.as_deref(),
        trace_prng: TRACE_PRNG,
        optimum_value: task.optimum_value(),
        target_gap: gap,
        unreached,
    };
    let json_path = dir.join(format!("{stem}.json"));
    write_json(&json_path, &sidecar)?;
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}
