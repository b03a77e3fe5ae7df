//! One synchronous iteration of delayed, compressed, error-feedback SGD.
//!
//! At iteration `t` every worker evaluates `g_t^i` at `x_t`, compresses
//! `e^i + g_t^i` with Top-k, keeps the remainder as its new residual and
//! sends the sparse update. The aggregated update is applied `tau`
//! iterations later: `x_{t+1} = x_t - gamma * mean_i(Delta_{t-tau}^i)`.
//! Until the first update arrives the model does not move.

use super::delay::{DelayEntry, DelaySlot};
use super::rng::{stream, Stream};
use super::task::Task;
use crate::compressor::{CompressionRatio, ErrorState};
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::vector::Vector;

#[derive(Clone, Debug)]
pub struct StepParams<S> {
    pub gamma: S,
    pub tau: usize,
    pub delta: CompressionRatio<f64>,
    pub error_feedback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkerState<S> {
    pub error: ErrorState<S>,
    /// Index used to derive this worker's noise stream.
    pub stream: u64,
}

/// Noise decomposition of the last step.
///
/// `b = gamma/n sum_i e^i_{t-tau}` (compression noise), `b_tilde = gamma/n
/// sum_i sum_{j=1..tau} g^i_{t-j}` (delay noise). The virtual iterate
/// `x_hat = x - b - b_tilde` follows plain averaged SGD, so `defect`,
/// `x_hat_{t+1} - (x_hat_t - gamma/n sum_i g_t^i)`, vanishes identically.
#[derive(Clone, Debug, PartialEq)]
pub struct NvsSnapshot<S> {
    pub iteration: usize,
    pub b: Vector<S>,
    pub b_tilde: Vector<S>,
    pub defect: Vector<S>,
    /// `|defect| / max(1, |x_hat_t|)`.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct TrainerState<S> {
    x: Vector<S>,
    workers: Vec<WorkerState<S>>,
    delay: DelaySlot<S>,
    iteration: usize,
    noise_seed: u64,
    probe: Option<Option<NvsSnapshot<S>>>,
}

/// `gamma * (sum_j / n)` coordinate-wise.
fn scaled_mean<S: Scalar>(sum: &Vector<S>, gamma: &S, n: &S) -> Vector<S> {
    Vector::from_vec_unchecked(
        sum.as_slice()
            .iter()
            .map(|v| gamma.clone() * (v.clone() / n.clone()))
            .collect(),
    )
}

fn norm_f64<S: Scalar>(v: &Vector<S>) -> f64 {
    v.norm_sq().to_f64_lossy().sqrt()
}

impl<S: Scalar> TrainerState<S> {
    pub fn new(task: &Task<S>, noise_seed: u64, probe: bool) -> Self {
        let workers = (0..task.workers())
            .map(|i| WorkerState {
                error: ErrorState::zeros(task.dim()),
                stream: i as u64,
            })
            .collect();
        Self {
            x: task.initial_point().clone(),
            workers,
            delay: DelaySlot::new(),
            iteration: 0,
            noise_seed,
            probe: probe.then_some(None),
        }
    }

    pub fn x(&self) -> &Vector<S> {
        &self.x
    }

    /// Number of completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn workers(&self) -> &[WorkerState<S>] {
        &self.workers
    }

    pub fn delay(&self) -> &DelaySlot<S> {
        &self.delay
    }

    pub fn probe_enabled(&self) -> bool {
        self.probe.is_some()
    }

    /// Noise decomposition and residual of the most recent step.
    pub fn nvs_probe(&self) -> Result<&NvsSnapshot<S>> {
        match &self.probe {
            None => Err(Error::ProbeDisabled),
            Some(None) => Err(invalid("nvs_probe", "no step has been taken yet")),
            Some(Some(snap)) => Ok(snap),
        }
    }

    /// `(B_t, B~_t)` for the current state.
    fn noise_terms(&self, gamma: &S) -> (Vector<S>, Vector<S>) {
        let d = self.x.dim();
        let n = S::from_usize_exact(self.workers.len());
        let mut residual_mass = Vector::zeros(d);
        for w in &self.workers {
            residual_mass.add_assign(w.error.residual()).expect("same dimension");
        }
        let mut in_flight = Vector::zeros(d);
        for entry in self.delay.pending() {
            let grads = entry.grad_sum.as_ref().expect("probe mode stores gradient sums");
            residual_mass.add_assign(&entry.update_sum).expect("same dimension");
            residual_mass.sub_assign(grads).expect("same dimension");
            in_flight.add_assign(grads).expect("same dimension");
        }
        (
            scaled_mean(&residual_mass, gamma, &n),
            scaled_mean(&in_flight, gamma, &n),
        )
    }

    fn virtual_iterate(&self, b: &Vector<S>, b_tilde: &Vector<S>) -> Vector<S> {
        self.x.sub(b).and_then(|v| v.sub(b_tilde)).expect("same dimension")
    }

    pub fn step(&mut self, task: &Task<S>, params: &StepParams<S>) -> Result<()> {
        if !params.error_feedback && !params.delta.is_one() {
            return Err(invalid("delta", "compression requires error feedback"));
        }
        if params.gamma.partial_cmp(&S::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(invalid("gamma", "must be > 0"));
        }
        let t = self.iteration;
        let d = self.x.dim();
        let n = S::from_usize_exact(self.workers.len());
        let probing = self.probe.is_some();
        let before = probing.then(|| {
            let (b, b_tilde) = self.noise_terms(&params.gamma);
            let x_hat = self.virtual_iterate(&b, &b_tilde);
            (b, b_tilde, x_hat)
        });

        let mut update_sum: Vector<S> = Vector::zeros(d);
        let mut grad_sum = probing.then(|| Vector::zeros(d));
        for w in &mut self.workers {
            let mut rng = stream(self.noise_seed, Stream::GradientNoise, w.stream, t as u64);
            let g = task.worker_gradient(w.stream as usize, &self.x, &mut rng);
            if let Some(sum) = grad_sum.as_mut() {
                sum.add_assign(&g)?;
            }
            if params.error_feedback {
                let sparse = w.error.compress(&g, &params.delta)?;
                let acc = update_sum.as_mut_slice();
                for (&j, v) in sparse.indices().iter().zip(sparse.values()) {
                    acc[j] = acc[j].clone() + v.clone();
                }
            } else {
                update_sum.add_assign(&g)?;
            }
        }

        self.delay.push(DelayEntry {
            computed_at: t,
            apply_at: t + params.tau,
            update_sum,
            grad_sum: grad_sum.clone(),
        });
        let due = self.delay.pop_due(t);
        if !due.is_empty() {
            let mut arrived = Vector::zeros(d);
            for entry in &due {
                arrived.add_assign(&entry.update_sum)?;
            }
            self.x.sub_assign(&scaled_mean(&arrived, &params.gamma, &n))?;
        }
        self.iteration += 1;

        if let Some((b, b_tilde, x_hat)) = before {
            let (b_next, b_tilde_next) = self.noise_terms(&params.gamma);
            let x_hat_next = self.virtual_iterate(&b_next, &b_tilde_next);
            let sgd_step = scaled_mean(grad_sum.as_ref().expect("probing"), &params.gamma, &n);
            let defect = x_hat_next.sub(&x_hat.sub(&sgd_step)?)?;
            let residual = norm_f64(&defect) / norm_f64(&x_hat).max(1.0);
            self.probe = Some(Some(NvsSnapshot {
                iteration: t,
                b,
                b_tilde,
                defect,
                residual,
            }));
        }
        Ok(())
    }
}
