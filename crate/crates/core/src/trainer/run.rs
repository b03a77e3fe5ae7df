//! Full training runs on the simulated clock.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::state::{StepParams, TrainerState};
use super::task::Task;
use super::variant::{AlgoVariant, PlanSource};
use crate::compressor::CompressionRatio;
use crate::error::{invalid, Error, Result};
use crate::network::NetworkTrace;
use crate::planner::{deco_plan, stepsize_advisory, ConvergenceRegime, Plan};
use crate::scalar::Scalar;
use crate::timing::{PipelineClock, TimingParams};

/// Header of the per-iteration CSV log.
pub const RUN_CSV_HEADER: &str = "iter,sim_time_s,loss,grad_norm_sq,tau,delta";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub variant: AlgoVariant,
    pub gamma: f64,
    pub iterations: usize,
    /// Compute time per iteration, seconds.
    pub t_comp: f64,
    /// Uncompressed gradient size, bits.
    pub grad_bits: f64,
    #[serde(default)]
    pub regime: ConvergenceRegime,
    /// Master seed of the gradient-noise streams.
    pub seed: u64,
    #[serde(default)]
    pub probe: bool,
    /// Stop once `f(x_t) - f*` drops to this value.
    #[serde(default)]
    pub stop_at_gap: Option<f64>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.variant.validate()?;
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(invalid("gamma", "must be finite and > 0"));
        }
        if self.iterations == 0 {
            return Err(invalid("iterations", "must be at least 1"));
        }
        TimingParams::new(self.t_comp, self.grad_bits, 1.0, 0.0)?;
        Ok(())
    }
}

/// One row of the run log, describing `x_t` after `iteration` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(rename = "iter")]
    pub iteration: usize,
    #[serde(rename = "sim_time_s")]
    pub sim_time: f64,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub tau: usize,
    pub delta: f64,
    #[serde(skip)]
    pub nvs_residual: Option<f64>,
}

/// Stepsize bound logged whenever the active plan changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepsizeAdvisory {
    pub iteration: usize,
    pub tau: usize,
    pub delta: f64,
    pub gamma_max: f64,
    pub gamma_compliant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEvent {
    pub iteration: usize,
    pub bandwidth: f64,
    pub latency: f64,
    pub tau: usize,
    pub delta: f64,
    pub phi: f64,
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub optimum_value: f64,
    pub initial_loss: f64,
    pub advisories: Vec<StepsizeAdvisory>,
    pub plans: Vec<PlanEvent>,
}

impl RunOutput {
    pub fn final_record(&self) -> Option<&RunRecord> {
        self.records.last()
    }

    pub fn max_nvs_residual(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.nvs_residual)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    /// First record with `loss - f* <= gap`.
    pub fn time_to_target(&self, gap: f64) -> Option<&RunRecord> {
        self.records.iter().find(|r| r.loss - self.optimum_value <= gap)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_records(&self.records, writer)
    }
}

pub fn write_records<W: Write>(records: &[RunRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    if records.is_empty() {
        wtr.write_record(RUN_CSV_HEADER.split(','))?;
    }
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(Error::from)
}

fn plan_for(
    trace: &NetworkTrace,
    clock: f64,
    cfg: &RunConfig,
    floor: &CompressionRatio<f64>,
    iteration: usize,
) -> Result<(Plan<f64>, PlanEvent)> {
    let net = trace.sample_at(clock);
    let p = TimingParams::new(cfg.t_comp, cfg.grad_bits, net.bandwidth, net.latency)?;
    let plan = deco_plan(&p, cfg.regime, floor)?;
    let event = PlanEvent {
        iteration,
        bandwidth: net.bandwidth,
        latency: net.latency,
        tau: plan.tau,
        delta: *plan.delta.value(),
        phi: plan.phi,
        clamped: plan.clamped,
    };
    Ok((plan, event))
}

/// Runs `cfg.iterations` steps of the configured variant.
///
/// The clock advances through the pipeline recurrence one iteration at a
/// time, with bandwidth and latency read from `trace` when each
/// transmission starts. Adaptive variants re-plan at iterations
/// `1, 1 + E, 1 + 2E, ...` from the network sampled at the current clock;
/// a new plan affects gradients computed from then on, updates already in
/// flight keep their arrival iteration, and error residuals carry over.
pub fn train_run<S: Scalar>(task: &Task<S>, cfg: &RunConfig, trace: &NetworkTrace) -> Result<RunOutput> {
    cfg.validate()?;
    let gamma = S::from_f64_exact(cfg.gamma).ok_or_else(|| invalid("gamma", "not representable"))?;
    let floor = CompressionRatio::floor_for_dim(task.dim())?;
    let source = cfg.variant.plan_source()?;
    let smoothness = task.smoothness();

    let mut state = TrainerState::new(task, cfg.seed, cfg.probe);
    let mut clock = PipelineClock::<f64>::new();
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut advisories = Vec::new();
    let mut plans = Vec::new();
    let (mut tau, mut delta) = match &source {
        PlanSource::Fixed { tau, delta } => (*tau, delta.clone()),
        PlanSource::Adaptive { .. } => (0, CompressionRatio::one()),
    };

    for t in 1..=cfg.iterations {
        let replan = match source {
            PlanSource::Fixed { .. } => false,
            PlanSource::Adaptive { period: None } => t == 1,
            PlanSource::Adaptive { period: Some(e) } => (t - 1) % e == 0,
        };
        if replan {
            let (plan, event) = plan_for(trace, *clock.last_arrival(), cfg, &floor, t)?;
            tau = plan.tau;
            delta = plan.delta;
            plans.push(event);
        }
        if t == 1 || replan {
            let gamma_max = stepsize_advisory(smoothness, *delta.value(), tau)?;
            let changed = advisories
                .last()
                .is_none_or(|a: &StepsizeAdvisory| a.tau != tau || a.delta != *delta.value());
            if changed {
                advisories.push(StepsizeAdvisory {
                    iteration: t,
                    tau,
                    delta: *delta.value(),
                    gamma_max,
                    gamma_compliant: cfg.gamma <= gamma_max,
                });
            }
        }

        state.step(
            task,
            &StepParams {
                gamma: gamma.clone(),
                tau,
                delta: delta.clone(),
                error_feedback: cfg.variant.error_feedback(),
            },
        )?;

        let send_at = clock.next_compute_end(&cfg.t_comp, tau).max(*clock.last_transmit_end());
        let net = trace.sample_at(send_at);
        let transmit = *delta.value() * cfg.grad_bits / net.bandwidth;
        let sim_time = clock.advance(&cfg.t_comp, &transmit, &net.latency, tau);

        let x = state.x();
        let record = RunRecord {
            iteration: t,
            sim_time,
            loss: task.loss(x),
            grad_norm_sq: task.full_gradient(x).norm_sq().to_f64_lossy(),
            tau,
            delta: *delta.value(),
            nvs_residual: state.nvs_probe().ok().map(|s| s.residual),
        };
        let stop = cfg
            .stop_at_gap
            .is_some_and(|gap| record.loss - task.optimum_value() <= gap);
        records.push(record);
        if stop {
            break;
        }
    }

    Ok(RunOutput {
        records,
        optimum_value: task.optimum_value(),
        initial_loss: task.loss(task.initial_point()),
        advisories,
        plans,
    })
}
