//! Synthetic objectives with known smoothness, strong convexity and optimum.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::rng::{stream, Stream, StreamRng};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::vector::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Quadratic,
    Logistic,
}

fn default_mu() -> f64 {
    1.0
}

fn default_smoothness() -> f64 {
    10.0
}

fn default_samples() -> usize {
    64
}

fn default_l2() -> f64 {
    1e-2
}

fn default_init_scale() -> f64 {
    1.0
}

/// Description of a synthetic distributed task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub dim: usize,
    pub workers: usize,
    /// Spread of the per-worker optima (quadratic) or class-mean shift (logistic).
    pub heterogeneity: f64,
    /// Gradient noise level; each coordinate gets variance `noise^2 / dim`.
    pub noise: f64,
    pub seed: u64,
    /// Smallest curvature of each quadratic `f_i`.
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Largest curvature of each quadratic `f_i`.
    #[serde(default = "default_smoothness")]
    pub smoothness: f64,
    #[serde(default = "default_samples")]
    pub samples_per_worker: usize,
    /// Ridge penalty of the logistic task.
    #[serde(default = "default_l2")]
    pub l2: f64,
    /// Distance of the starting point from the origin.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

impl TaskSpec {
    pub fn quadratic(dim: usize, workers: usize, heterogeneity: f64, noise: f64, seed: u64) -> Self {
        Self {
            kind: TaskKind::Quadratic,
            dim,
            workers,
            heterogeneity,
            noise,
            seed,
            mu: default_mu(),
            smoothness: default_smoothness(),
            samples_per_worker: default_samples(),
            l2: default_l2(),
            init_scale: default_init_scale(),
        }
    }

    pub fn logistic(dim: usize, workers: usize, heterogeneity: f64, noise: f64, seed: u64) -> Self {
        Self {
            kind: TaskKind::Logistic,
            ..Self::quadratic(dim, workers, heterogeneity, noise, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        let nonneg = |name, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(name, "must be finite and >= 0"))
            }
        };
        nonneg("heterogeneity", self.heterogeneity)?;
        nonneg("noise", self.noise)?;
        nonneg("init_scale", self.init_scale)?;
        match self.kind {
            TaskKind::Quadratic => {
                if !(self.mu.is_finite() && self.mu > 0.0 && self.smoothness.is_finite() && self.smoothness >= self.mu)
                {
                    return Err(invalid("mu/smoothness", "need 0 < mu <= smoothness"));
                }
            }
            TaskKind::Logistic => {
                if self.samples_per_worker == 0 {
                    return Err(invalid("samples_per_worker", "must be at least 1"));
                }
                if !(self.l2.is_finite() && self.l2 > 0.0) {
                    return Err(invalid("l2", "must be finite and > 0"));
                }
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit_vector(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, dim);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn to_scalar<S: Scalar>(values: &[f64]) -> Vector<S> {
    Vector::from_vec_unchecked(
        values
            .iter()
            .map(|&v| S::from_f64_exact(v).expect("finite f64 converts exactly"))
            .collect(),
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradient for an SPD operator, used to locate optima.
fn conjugate_gradient(apply: impl Fn(&[f64]) -> Vec<f64>, rhs: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let mut x = vec![0.0; rhs.len()];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let stop = tol * tol * dot(rhs, rhs).max(f64::MIN_POSITIVE);
    for _ in 0..max_iter {
        if rs <= stop {
            break;
        }
        let ap = apply(&p);
        let alpha = rs / dot(&p, &ap);
        for j in 0..x.len() {
            x[j] += alpha * p[j];
            r[j] -= alpha * ap[j];
        }
        let rs_next = dot(&r, &r);
        let beta = rs_next / rs;
        for j in 0..p.len() {
            p[j] = r[j] + beta * p[j];
        }
        rs = rs_next;
    }
    x
}

/// `f_i(x) = 1/2 (x - c_i)^T H_i D_i H_i (x - c_i)` with `H_i` a Householder
/// reflection, so the Hessian is dense but applies in `O(d)`.
#[derive(Clone, Debug)]
struct QuadraticWorker<S> {
    curvature: Vector<S>,
    reflector: Vector<S>,
    /// `2 / |v|^2`.
    reflect_scale: S,
    center: Vector<S>,
}

impl<S: Scalar> QuadraticWorker<S> {
    fn reflect(&self, y: &Vector<S>) -> Vector<S> {
        let coef = self.reflect_scale.clone() * self.reflector.dot(y).expect("same dimension");
        y.sub(&self.reflector.scale(&coef)).expect("same dimension")
    }

    fn gradient(&self, x: &Vector<S>) -> Vector<S> {
        let shifted = x.sub(&self.center).expect("same dimension");
        let rotated = self.reflect(&shifted);
        let scaled = Vector::from_vec_unchecked(
            rotated
                .as_slice()
                .iter()
                .zip(self.curvature.as_slice())
                .map(|(r, l)| r.clone() * l.clone())
                .collect(),
        );
        self.reflect(&scaled)
    }

    fn loss(&self, x: &Vector<S>) -> S {
        let rotated = self.reflect(&x.sub(&self.center).expect("same dimension"));
        let two = S::one() + S::one();
        rotated
            .as_slice()
            .iter()
            .zip(self.curvature.as_slice())
            .fold(S::zero(), |acc, (r, l)| acc + l.clone() * r.clone() * r.clone())
            / two
    }
}

/// Ridge-regularized logistic loss on a worker's private samples; computed in `f64`.
#[derive(Clone, Debug)]
struct LogisticWorker {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticWorker {
    fn gradient(&self, x: &[f64], l2: f64) -> Vec<f64> {
        let m = self.labels.len() as f64;
        let mut g: Vec<f64> = x.iter().map(|v| l2 * v).collect();
        for (a, &y) in self.features.iter().zip(&self.labels) {
            let coef = -y * sigmoid(-y * dot(a, x)) / m;
            for (gj, aj) in g.iter_mut().zip(a) {
                *gj += coef * aj;
            }
        }
        g
    }

    fn loss(&self, x: &[f64], l2: f64) -> f64 {
        let m = self.labels.len() as f64;
        let data: f64 = self
            .features
            .iter()
            .zip(&self.labels)
            .map(|(a, &y)| softplus(-y * dot(a, x)))
            .sum();
        data / m + 0.5 * l2 * dot(x, x)
    }

    fn hessian_vec(&self, x: &[f64], v: &[f64], l2: f64) -> Vec<f64> {
        let m = self.labels.len() as f64;
        let mut out: Vec<f64> = v.iter().map(|vj| l2 * vj).collect();
        for a in &self.features {
            let s = sigmoid(dot(a, x));
            let coef = s * (1.0 - s) * dot(a, v) / m;
            for (oj, aj) in out.iter_mut().zip(a) {
                *oj += coef * aj;
            }
        }
        out
    }

    /// Power-iteration estimate of the largest Hessian eigenvalue bound `|F|^2 / (4m)`.
    fn curvature_bound(&self, dim: usize) -> f64 {
        let m = self.labels.len() as f64;
        let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
        let mut lambda = 0.0;
        for _ in 0..100 {
            let mut w = vec![0.0; dim];
            for a in &self.features {
                let c = dot(a, &v);
                for (wj, aj) in w.iter_mut().zip(a) {
                    *wj += c * aj;
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        lambda / (4.0 * m)
    }
}

#[derive(Clone, Debug)]
enum Objective<S> {
    Quadratic(Vec<QuadraticWorker<S>>),
    Logistic { workers: Vec<LogisticWorker>, l2: f64 },
}

/// A built task: per-worker objectives plus the global optimum value.
#[derive(Clone, Debug)]
pub struct Task<S> {
    spec: TaskSpec,
    objective: Objective<S>,
    initial: Vector<S>,
    optimum: Vec<f64>,
    optimum_value: f64,
    smoothness: f64,
    strong_convexity: f64,
}

impl<S: Scalar> Task<S> {
    pub fn build(spec: &TaskSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.dim;
        let initial_f64: Vec<f64> = {
            let mut rng = stream(spec.seed, Stream::TaskInit, 0, 0);
            unit_vector(&mut rng, d)
                .into_iter()
                .map(|v| v * spec.init_scale)
                .collect()
        };
        let (objective, smoothness, strong_convexity) = match spec.kind {
            TaskKind::Quadratic => (Self::build_quadratic(spec), spec.smoothness, spec.mu),
            TaskKind::Logistic => {
                let workers = build_logistic(spec);
                let l = workers.iter().map(|w| w.curvature_bound(d)).fold(0.0, f64::max) + spec.l2;
                (Objective::Logistic { workers, l2: spec.l2 }, l, spec.l2)
            }
        };
        let mut task = Self {
            spec: spec.clone(),
            objective,
            initial: to_scalar(&initial_f64),
            optimum: Vec::new(),
            optimum_value: 0.0,
            smoothness,
            strong_convexity,
        };
        task.optimum = task.solve_optimum();
        task.optimum_value = task.loss_f64(&task.optimum);
        Ok(task)
    }

    fn build_quadratic(spec: &TaskSpec) -> Objective<S> {
        let d = spec.dim;
        let workers = (0..spec.workers)
            .map(|i| {
                let mut rng = stream(spec.seed, Stream::TaskCurvature, i as u64, 0);
                let mut curvature: Vec<f64> = (0..d)
                    .map(|_| spec.mu + (spec.smoothness - spec.mu) * rng.random::<f64>())
                    .collect();
                curvature[0] = spec.mu;
                if d > 1 {
                    curvature[d - 1] = spec.smoothness;
                }
                let reflector = unit_vector(&mut rng, d);
                let mut center_rng = stream(spec.seed, Stream::TaskCenter, i as u64, 0);
                let center: Vec<f64> = unit_vector(&mut center_rng, d)
                    .into_iter()
                    .map(|v| v * spec.heterogeneity)
                    .collect();
                let reflector: Vector<S> = to_scalar(&reflector);
                let two = S::one() + S::one();
                let reflect_scale = two / reflector.norm_sq();
                QuadraticWorker {
                    curvature: to_scalar(&curvature),
                    reflector,
                    reflect_scale,
                    center: to_scalar(&center),
                }
            })
            .collect();
        Objective::Quadratic(workers)
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn workers(&self) -> usize {
        self.spec.workers
    }

    pub fn initial_point(&self) -> &Vector<S> {
        &self.initial
    }

    /// Smoothness constant `L` of every `f_i`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    /// `f* = min_x f(x)`.
    pub fn optimum_value(&self) -> f64 {
        self.optimum_value
    }

    /// Noiseless `grad f_i(x)`.
    pub fn local_gradient(&self, i: usize, x: &Vector<S>) -> Vector<S> {
        match &self.objective {
            Objective::Quadratic(ws) => ws[i].gradient(x),
            Objective::Logistic { workers, l2 } => to_scalar(&workers[i].gradient(&x.to_f64(), *l2)),
        }
    }

    /// Stochastic gradient oracle: `grad f_i(x) + xi`, `xi ~ N(0, noise^2 / d I)`.
    pub fn worker_gradient(&self, i: usize, x: &Vector<S>, rng: &mut StreamRng) -> Vector<S> {
        let g = self.local_gradient(i, x);
        if self.spec.noise == 0.0 {
            return g;
        }
        let scale = self.spec.noise / (self.dim() as f64).sqrt();
        let noise: Vec<f64> = gaussian(rng, self.dim()).into_iter().map(|z| z * scale).collect();
        g.add(&to_scalar(&noise)).expect("same dimension")
    }

    /// Global objective `f(x) = (1/n) sum_i f_i(x)`.
    pub fn loss(&self, x: &Vector<S>) -> f64 {
        match &self.objective {
            Objective::Quadratic(ws) => {
                let total = ws.iter().fold(S::zero(), |acc, w| acc + w.loss(x));
                (total / S::from_usize_exact(ws.len())).to_f64_lossy()
            }
            Objective::Logistic { .. } => self.loss_f64(&x.to_f64()),
        }
    }

    /// `grad f(x)` without noise.
    pub fn full_gradient(&self, x: &Vector<S>) -> Vector<S> {
        let mut sum = Vector::zeros(self.dim());
        for i in 0..self.workers() {
            sum.add_assign(&self.local_gradient(i, x)).expect("same dimension");
        }
        sum.scale(&(S::one() / S::from_usize_exact(self.workers())))
    }

    fn loss_f64(&self, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::Quadratic(ws) => {
                let total: f64 = ws.iter().map(|w| w.loss(&to_scalar::<S>(x)).to_f64_lossy()).sum();
                total / ws.len() as f64
            }
            Objective::Logistic { workers, l2 } => {
                workers.iter().map(|w| w.loss(x, *l2)).sum::<f64>() / workers.len() as f64
            }
        }
    }

    fn gradient_f64(&self, x: &[f64]) -> Vec<f64> {
        let n = self.workers() as f64;
        let mut sum = vec![0.0; self.dim()];
        for i in 0..self.workers() {
            let g = match &self.objective {
                Objective::Quadratic(ws) => ws[i].gradient(&to_scalar(x)).to_f64(),
                Objective::Logistic { workers, l2 } => workers[i].gradient(x, *l2),
            };
            for (s, v) in sum.iter_mut().zip(g) {
                *s += v / n;
            }
        }
        sum
    }

    fn solve_optimum(&self) -> Vec<f64> {
        let d = self.dim();
        match &self.objective {
            Objective::Quadratic(_) => {
                // grad f is affine: grad f(x) = A x - A c*, so solve A x = -grad f(0).
                let zero = vec![0.0; d];
                let g0 = self.gradient_f64(&zero);
                let rhs: Vec<f64> = g0.iter().map(|v| -v).collect();
                let apply = |v: &[f64]| {
                    let gv = self.gradient_f64(v);
                    gv.iter().zip(&g0).map(|(a, b)| a - b).collect()
                };
                conjugate_gradient(apply, &rhs, 1e-14, 10 * d + 100)
            }
            Objective::Logistic { workers, l2 } => {
                let n = workers.len() as f64;
                let mut x = vec![0.0; d];
                for _ in 0..50 {
                    let g = self.gradient_f64(&x);
                    if dot(&g, &g).sqrt() < 1e-13 {
                        break;
                    }
                    let hv = |v: &[f64]| {
                        let mut out = vec![0.0; d];
                        for w in workers {
                            for (o, h) in out.iter_mut().zip(w.hessian_vec(&x, v, *l2)) {
                                *o += h / n;
                            }
                        }
                        out
                    };
                    let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
                    let step = conjugate_gradient(hv, &neg_g, 1e-12, 10 * d + 100);
                    for (xj, sj) in x.iter_mut().zip(step) {
                        *xj += sj;
                    }
                }
                x
            }
        }
    }
}

fn build_logistic(spec: &TaskSpec) -> Vec<LogisticWorker> {
    let d = spec.dim;
    let mut shared = stream(spec.seed, Stream::TaskData, u64::MAX, 0);
    let class_direction = unit_vector(&mut shared, d);
    let noise_scale = 1.0 / (d as f64).sqrt();
    (0..spec.workers)
        .map(|i| {
            let mut shift_rng = stream(spec.seed, Stream::TaskCenter, i as u64, 1);
            let shift = unit_vector(&mut shift_rng, d);
            let mut rng = stream(spec.seed, Stream::TaskData, i as u64, 0);
            let mut features = Vec::with_capacity(spec.samples_per_worker);
            let mut labels = Vec::with_capacity(spec.samples_per_worker);
            for _ in 0..spec.samples_per_worker {
                let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let a: Vec<f64> = gaussian(&mut rng, d)
                    .into_iter()
                    .zip(&class_direction)
                    .zip(&shift)
                    .map(|((z, u), s)| y * u + spec.heterogeneity * s + noise_scale * z)
                    .collect();
                features.push(a);
                labels.push(y);
            }
            LogisticWorker { features, labels }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Scalar;
    use crate::trainer::rng::stream;
    use crate::Exact;

    fn quad(noise: f64) -> Task<f64> {
        Task::build(&TaskSpec::quadratic(6, 3, 0.5, noise, 11)).unwrap()
    }

    #[test]
    fn noiseless_gradient_vanishes_at_local_center() {
        let task = quad(0.0);
        let Objective::Quadratic(ws) = &task.objective else {
            unreachable!()
        };
        for (i, w) in ws.iter().enumerate() {
            let mut rng = stream(0, Stream::GradientNoise, i as u64, 0);
            let g = task.worker_gradient(i, &w.center, &mut rng);
            assert!(g.as_slice().iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn noiseless_gradient_is_hessian_times_offset() {
        // Dense Hessian assembled column by column via finite differences of
        // the loss, then compared with the analytic gradient.
        let task = quad(0.0);
        let x = Vector::new(vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.25]).unwrap();
        let Objective::Quadratic(ws) = &task.objective else {
            unreachable!()
        };
        let w = &ws[1];
        let h = 1e-5;
        for j in 0..6 {
            let mut plus = x.as_slice().to_vec();
            let mut minus = x.as_slice().to_vec();
            plus[j] += h;
            minus[j] -= h;
            let fd = (w.loss(&Vector::new(plus).unwrap()) - w.loss(&Vector::new(minus).unwrap())) / (2.0 * h);
            assert!((fd - w.gradient(&x)[j]).abs() < 1e-8, "coordinate {j}");
        }
    }

    #[test]
    fn curvature_band() {
        // Rayleigh quotients of the Hessian along random directions stay in [mu, L].
        let task = quad(0.0);
        let Objective::Quadratic(ws) = &task.objective else {
            unreachable!()
        };
        let mut rng = stream(5, Stream::TaskData, 0, 0);
        for w in ws {
            for _ in 0..50 {
                let dir = Vector::new(gaussian(&mut rng, 6)).unwrap();
                let shifted = dir.add(&w.center).unwrap();
                let hv = w.gradient(&shifted);
                let q = hv.dot(&dir).unwrap() / dir.norm_sq();
                assert!((1.0 - 1e-12..=10.0 + 1e-12).contains(&q), "{q}");
            }
        }
    }

    #[test]
    fn noise_is_unbiased() {
        let task = quad(0.5);
        let x = task.initial_point().clone();
        let clean = task.local_gradient(0, &x);
        let draws = 100_000;
        let mut mean = [0.0; 6];
        for t in 0..draws {
            let mut rng = stream(1, Stream::GradientNoise, 0, t);
            for (m, v) in mean.iter_mut().zip(task.worker_gradient(0, &x, &mut rng).as_slice()) {
                *m += v / draws as f64;
            }
        }
        let tol = 3.0 * 0.5 / (draws as f64).sqrt();
        for (m, c) in mean.iter().zip(clean.as_slice()) {
            assert!((m - c).abs() < tol, "{m} vs {c}");
        }
    }

    #[test]
    fn optimum_is_stationary() {
        let task = quad(0.0);
        let g = task.gradient_f64(task.optimum());
        assert!(dot(&g, &g).sqrt() < 1e-10);
        assert!(task.loss(task.initial_point()) > task.optimum_value());

        let logistic = Task::<f64>::build(&TaskSpec::logistic(5, 3, 0.3, 0.0, 2)).unwrap();
        let g = logistic.gradient_f64(logistic.optimum());
        assert!(dot(&g, &g).sqrt() < 1e-9);
        assert!(logistic.smoothness() > logistic.strong_convexity());
    }

    #[test]
    fn exact_task_matches_float_task() {
        let spec = TaskSpec::quadratic(3, 2, 0.5, 0.0, 4);
        let exact = Task::<Exact>::build(&spec).unwrap();
        let float = Task::<f64>::build(&spec).unwrap();
        let g_exact = exact.local_gradient(1, exact.initial_point()).to_f64();
        let g_float = float.local_gradient(1, float.initial_point());
        for (a, b) in g_exact.iter().zip(g_float.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        const { assert!(Exact::EXACT) };
    }

    #[test]
    fn spec_validation() {
        let mut spec = TaskSpec::quadratic(0, 2, 0.1, 0.1, 1);
        assert!(spec.validate().is_err());
        spec.dim = 3;
        spec.mu = 20.0;
        assert!(spec.validate().is_err());
        let mut l = TaskSpec::logistic(3, 2, 0.1, 0.1, 1);
        l.l2 = 0.0;
        assert!(l.validate().is_err());
    }
}
