//! Gaussian-process emulator with an anisotropic squared-exponential kernel.
//!
//! Inputs are min-max scaled to the unit cube and outputs standardized before
//! fitting; hyperparameters maximize the log marginal likelihood.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream};

/// Largest jitter, relative to the mean diagonal, tried before giving up.
pub const MAX_RELATIVE_JITTER: f64 = 1e-4;

const LOG_LENGTHSCALE: (f64, f64) = (-4.605_170_185_988_091, 6.907_755_278_982_137); // 1e-2..1e3
const LOG_SIGNAL: (f64, f64) = (-9.210_340_371_976_182, 9.210_340_371_976_182); // 1e-4..1e4
const LOG_NOISE: (f64, f64) = (-23.025_850_929_940_457, 0.0); // 1e-10..1

/// `σ² exp(-Σ (a_d - b_d)² / (2 l_d²))`.
pub fn rbf_kernel(a: &[f64], b: &[f64], signal_variance: f64, lengthscales: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != lengthscales.len() {
        return Err(Error::InvalidInput(format!(
            "kernel dimensions differ: {}, {}, {}",
            a.len(),
            b.len(),
            lengthscales.len()
        )));
    }
    if let Some(&l) = lengthscales.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::domain("lengthscale", l, "(0, inf)"));
    }
    if !(signal_variance >= 0.0) {
        return Err(Error::domain(
            "signal variance",
            signal_variance,
            "[0, inf)",
        ));
    }
    Ok(kernel_unchecked(a, b, signal_variance, lengthscales))
}

#[inline]
fn kernel_unchecked(a: &[f64], b: &[f64], s2: f64, l: &[f64]) -> f64 {
    let mut r2 = 0.0;
    for d in 0..a.len() {
        let t = (a[d] - b[d]) / l[d];
        r2 += t * t;
    }
    s2 * (-0.5 * r2).exp()
}

/// Simulator inputs and a scalar response, with the box used to scale the
/// inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub names: Vec<String>,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub day: Option<u32>,
}

impl TrainingSet {
    pub fn new(
        names: Vec<String>,
        inputs: Vec<Vec<f64>>,
        outputs: Vec<f64>,
        bounds: Vec<(f64, f64)>,
        day: Option<u32>,
    ) -> Result<Self> {
        let set = Self {
            names,
            inputs,
            outputs,
            bounds,
            day,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.bounds.len();
        if self.names.len() != j {
            return Err(Error::InvalidInput(format!(
                "{} names for {j} input dimensions",
                self.names.len()
            )));
        }
        if self.inputs.len() != self.outputs.len() {
            return Err(Error::InvalidInput(
                "inputs and outputs differ in length".into(),
            ));
        }
        if self.outputs.len() < 2 {
            return Err(Error::InvalidInput(
                "a training set needs at least two points".into(),
            ));
        }
        for &(lo, hi) in &self.bounds {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidInput(format!(
                    "bad input bounds [{lo}, {hi}]"
                )));
            }
        }
        for (i, (x, y)) in self.inputs.iter().zip(&self.outputs).enumerate() {
            if x.len() != j {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} inputs, expected {j}",
                    x.len()
                )));
            }
            if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "row {i} has a non-finite value"
                )));
            }
            for (d, (&v, &(lo, hi))) in x.iter().zip(&self.bounds).enumerate() {
                let slack = 1e-9 * (hi - lo);
                if v < lo - slack || v > hi + slack {
                    return Err(Error::InvalidInput(format!(
                        "row {i}: {} = {v} outside [{lo}, {hi}]",
                        self.names[d]
                    )));
                }
            }
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.inputs[a]
                .iter()
                .zip(&self.inputs[b])
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            if self.inputs[w[0]] == self.inputs[w[1]] && self.outputs[w[0]] != self.outputs[w[1]] {
                return Err(Error::InvalidInput(format!(
                    "rows {} and {} have identical inputs but different outputs",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 over the bounds, inputs and outputs.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for &(lo, hi) in &self.bounds {
            h.update(lo.to_le_bytes());
            h.update(hi.to_le_bytes());
        }
        for (x, y) in self.inputs.iter().zip(&self.outputs) {
            for v in x {
                h.update(v.to_le_bytes());
            }
            h.update(y.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn normalize(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .map(|(&v, &(lo, hi))| (v - lo) / (hi - lo))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Optimizer starts; the first is a fixed default, the rest are a Latin
    /// hypercube over the hyperparameter box.
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Fixes the standardized noise variance instead of optimizing it.
    pub fixed_noise: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iterations: 200,
            seed: 0,
            fixed_noise: None,
        }
    }
}

/// Start and end of one optimizer run, as log marginal likelihoods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub start: f64,
    pub end: f64,
    pub iterations: usize,
}

/// Serializable form of a fitted model. The factorization is rebuilt on
/// load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpArtifact {
    pub format: String,
    pub names: Vec<String>,
    pub bounds: Vec<(f64, f64)>,
    pub day: Option<u32>,
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
    pub jitter: f64,
    pub output_mean: f64,
    pub output_scale: f64,
    pub log_marginal_likelihood: f64,
    pub training_digest: String,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

const ARTIFACT_FORMAT: &str = "spheroid-gp/1";

#[derive(Debug, Clone)]
pub struct GpModel {
    names: Vec<String>,
    bounds: Vec<(f64, f64)>,
    day: Option<u32>,
    /// Hyperparameters act on standardized outputs.
    signal_variance: f64,
    lengthscales: Vec<f64>,
    noise_variance: f64,
    jitter: f64,
    output_mean: f64,
    output_scale: f64,
    log_marginal_likelihood: f64,
    digest: String,
    raw_inputs: Vec<Vec<f64>>,
    raw_outputs: Vec<f64>,
    x: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    restarts: Vec<RestartTrace>,
}

struct Factorized {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

fn gram(x: &[Vec<f64>], s2: f64, l: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = s2;
        for j in 0..i {
            let v = kernel_unchecked(&x[i], &x[j], s2, l);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `k + noise I`, escalating diagonal jitter when needed.
fn factorize(mut k: DMatrix<f64>, noise: f64) -> Result<Factorized> {
    let n = k.nrows();
    for i in 0..n {
        k[(i, i)] += noise;
    }
    let mean_diag = (0..n).map(|i| k[(i, i)]).sum::<f64>() / n as f64;
    if let Some(chol) = k.clone().cholesky() {
        return Ok(Factorized { chol, jitter: 0.0 });
    }
    let mut rel = 1e-12;
    while rel <= MAX_RELATIVE_JITTER * (1.0 + 1e-9) {
        let jitter = rel * mean_diag;
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(chol) = kj.cholesky() {
            return Ok(Factorized { chol, jitter });
        }
        rel *= 10.0;
    }
    Err(Error::Conditioning {
        jitter: MAX_RELATIVE_JITTER * mean_diag,
    })
}

/// Hyperparameters in log space: `[ln l_1..ln l_J, ln σ², ln σ_n²]`.
struct Objective<'a> {
    x: &'a [Vec<f64>],
    y: &'a DVector<f64>,
    fixed_noise: Option<f64>,
}

impl Objective<'_> {
    fn dim(&self) -> usize {
        self.x[0].len()
    }

    fn unpack(&self, theta: &[f64]) -> (Vec<f64>, f64, f64) {
        let j = self.dim();
        let l: Vec<f64> = theta[..j].iter().map(|t| t.exp()).collect();
        let s2 = theta[j].exp();
        let noise = self.fixed_noise.unwrap_or_else(|| theta[j + 1].exp());
        (l, s2, noise)
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![LOG_LENGTHSCALE; self.dim()];
        b.push(LOG_SIGNAL);
        if self.fixed_noise.is_none() {
            b.push(LOG_NOISE);
        }
        b
    }

    /// Log marginal likelihood and its gradient.
    fn evaluate(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let n = self.x.len();
        let j = self.dim();
        let (l, s2, noise) = self.unpack(theta);
        let kf = gram(self.x, s2, &l);
        let fac = factorize(kf.clone(), noise).ok()?;
        let alpha = fac.chol.solve(self.y);
        let log_det: f64 = 2.0
            * fac
                .chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        let lml = -0.5 * self.y.dot(&alpha)
            - 0.5 * log_det
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        if !lml.is_finite() {
            return None;
        }
        // W = α αᵀ - K⁻¹; dL/dθ = ½ tr(W dK/dθ).
        let kinv = fac.chol.inverse();
        let mut grad = vec![0.0; theta.len()];
        for a in 0..n {
            for b in 0..n {
                let w = alpha[a] * alpha[b] - kinv[(a, b)];
                let k = kf[(a, b)];
                if a != b {
                    for d in 0..j {
                        let t = (self.x[a][d] - self.x[b][d]) / l[d];
                        grad[d] += 0.5 * w * k * t * t;
                    }
                }
                grad[j] += 0.5 * w * k;
            }
            if self.fixed_noise.is_none() {
                grad[j + 1] += 0.5 * (alpha[a] * alpha[a] - kinv[(a, a)]) * noise;
            }
        }
        Some((lml, grad))
    }
}

fn project(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, &(lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(lo, hi);
    }
}

/// Projected L-BFGS ascent on a box. Never returns a point worse than the
/// start.
fn maximize(obj: &Objective, start: Vec<f64>, max_iter: usize) -> (Vec<f64>, f64, f64, usize) {
    const MEMORY: usize = 7;
    let bounds = obj.bounds();
    let mut x = start;
    project(&mut x, &bounds);
    let Some((mut f, mut g)) = obj.evaluate(&x) else {
        return (x, f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
    };
    let f0 = f;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let mut iters = 0;
    for _ in 0..max_iter {
        iters += 1;
        // Two-loop recursion on the ascent direction.
        let mut q: Vec<f64> = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push((a, rho));
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let gn = dot(&g, &g).sqrt().max(1e-12);
            q.iter_mut().for_each(|v| *v /= gn);
        }
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        // Ascent directions only; fall back to the gradient.
        let dir = if dot(&q, &g) > 0.0 { q } else { g.clone() };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            project(&mut xn, &bounds);
            let moved: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let predicted = dot(&g, &moved);
            if predicted <= 0.0 && moved.iter().all(|m| m.abs() < 1e-14) {
                break;
            }
            if let Some((fnew, gnew)) = obj.evaluate(&xn) {
                if fnew >= f + 1e-4 * predicted.max(0.0) && fnew >= f {
                    accepted = Some((xn, fnew, gnew, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew, s)) = accepted else {
            break;
        };
        // Curvature of the ascent problem is -H, so store -Δg.
        let y: Vec<f64> = g.iter().zip(&gnew).map(|(a, b)| a - b).collect();
        let improvement = fnew - f;
        x = xn;
        f = fnew;
        g = gnew;
        if dot(&s, &y) > 1e-12 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let free_grad: f64 = g
            .iter()
            .zip(&x)
            .zip(&bounds)
            .map(|((gi, xi), &(lo, hi))| {
                if (*xi <= lo && *gi < 0.0) || (*xi >= hi && *gi > 0.0) {
                    0.0
                } else {
                    gi * gi
                }
            })
            .sum::<f64>()
            .sqrt();
        if free_grad < 1e-6 || improvement < 1e-10 * f.abs().max(1.0) {
            break;
        }
    }
    (x, f0, f, iters)
}

impl GpModel {
    /// Fits hyperparameters by multi-start marginal-likelihood ascent.
    pub fn fit(data: &TrainingSet, opts: &FitOptions) -> Result<Self> {
        data.validate()?;
        if opts.restarts == 0 {
            return Err(Error::InvalidInput(
                "at least one optimizer start is required".into(),
            ));
        }
        if let Some(nv) = opts.fixed_noise {
            if !(nv >= 0.0) {
                return Err(Error::domain("noise variance", nv, "[0, inf)"));
            }
        }
        let x: Vec<Vec<f64>> = data
            .inputs
            .iter()
            .map(|r| normalize(r, &data.bounds))
            .collect();
        let (mean, scale) = standardization(&data.outputs);
        let y = DVector::from_iterator(data.len(), data.outputs.iter().map(|v| (v - mean) / scale));
        let obj = Objective {
            x: &x,
            y: &y,
            fixed_noise: opts.fixed_noise,
        };
        let bounds = obj.bounds();
        let mut starts = vec![{
            let mut s = vec![(0.5f64).ln(); obj.dim()];
            s.push(0.0);
            if opts.fixed_noise.is_none() {
                s.push((1e-4f64).ln());
            }
            s
        }];
        starts.extend(latin_hypercube(
            opts.restarts - 1,
            &bounds,
            &RngStream::new(opts.seed),
        ));
        let results: Vec<(Vec<f64>, f64, f64, usize)> = starts
            .into_par_iter()
            .map(|s| maximize(&obj, s, opts.max_iterations))
            .collect();
        let traces: Vec<RestartTrace> = results
            .iter()
            .map(|r| RestartTrace {
                start: r.1,
                end: r.2,
                iterations: r.3,
            })
            .collect();
        let best = results
            .into_iter()
            .filter(|r| r.2.is_finite())
            .max_by(|a, b| a.2.total_cmp(&b.2))
            .ok_or(Error::Conditioning {
                jitter: MAX_RELATIVE_JITTER,
            })?;
        let (l, s2, noise) = obj.unpack(&best.0);
        let mut model = Self::assemble(data, l, s2, noise, mean, scale)?;
        model.log_marginal_likelihood = best.2;
        model.restarts = traces;
        Ok(model)
    }

    /// Builds a model with given hyperparameters (on standardized outputs).
    pub fn with_hyperparameters(
        data: &TrainingSet,
        signal_variance: f64,
        lengthscales: Vec<f64>,
        noise_variance: f64,
    ) -> Result<Self> {
        data.validate()?;
        let (mean, scale) = standardization(&data.outputs);
        let mut m = Self::assemble(
            data,
            lengthscales,
            signal_variance,
            noise_variance,
            mean,
            scale,
        )?;
        m.log_marginal_likelihood = m.compute_lml();
        Ok(m)
    }

    /// As [`GpModel::with_hyperparameters`] but on raw, unstandardized outputs.
    pub fn with_raw_hyperparameters(
        data: &TrainingSet,
        signal_variance: f64,
        lengthscales: Vec<f64>,
        noise_variance: f64,
    ) -> Result<Self> {
        data.validate()?;
        let mut m = Self::assemble(
            data,
            lengthscales,
            signal_variance,
            noise_variance,
            0.0,
            1.0,
        )?;
        m.log_marginal_likelihood = m.compute_lml();
        Ok(m)
    }

    fn assemble(
        data: &TrainingSet,
        lengthscales: Vec<f64>,
        signal_variance: f64,
        noise_variance: f64,
        output_mean: f64,
        output_scale: f64,
    ) -> Result<Self> {
        if lengthscales.len() != data.dim() {
            return Err(Error::InvalidInput(
                "one lengthscale per input is required".into(),
            ));
        }
        if let Some(&l) = lengthscales.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::domain("lengthscale", l, "(0, inf)"));
        }
        if !(signal_variance > 0.0) {
            return Err(Error::domain(
                "signal variance",
                signal_variance,
                "(0, inf)",
            ));
        }
        if !(noise_variance >= 0.0) {
            return Err(Error::domain("noise variance", noise_variance, "[0, inf)"));
        }
        let x: Vec<Vec<f64>> = data
            .inputs
            .iter()
            .map(|r| normalize(r, &data.bounds))
            .collect();
        let y = DVector::from_iterator(
            data.len(),
            data.outputs
                .iter()
                .map(|v| (v - output_mean) / output_scale),
        );
        let fac = factorize(gram(&x, signal_variance, &lengthscales), noise_variance)?;
        let alpha = fac.chol.solve(&y);
        Ok(Self {
            names: data.names.clone(),
            bounds: data.bounds.clone(),
            day: data.day,
            signal_variance,
            lengthscales,
            noise_variance,
            jitter: fac.jitter,
            output_mean,
            output_scale,
            log_marginal_likelihood: f64::NAN,
            digest: data.digest(),
            raw_inputs: data.inputs.clone(),
            raw_outputs: data.outputs.clone(),
            x,
            chol: fac.chol,
            alpha,
            restarts: Vec::new(),
        })
    }

    fn compute_lml(&self) -> f64 {
        let n = self.x.len() as f64;
        let y = DVector::from_iterator(
            self.raw_outputs.len(),
            self.raw_outputs
                .iter()
                .map(|v| (v - self.output_mean) / self.output_scale),
        );
        let log_det: f64 = 2.0
            * self
                .chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        -0.5 * y.dot(&self.alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn day(&self) -> Option<u32> {
        self.day
    }

    /// Signal variance in output units squared.
    pub fn signal_variance(&self) -> f64 {
        self.signal_variance * self.output_scale * self.output_scale
    }

    /// Noise variance in output units squared.
    pub fn noise_variance(&self) -> f64 {
        self.noise_variance * self.output_scale * self.output_scale
    }

    /// Lengthscales in normalized input units.
    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    pub fn restarts(&self) -> &[RestartTrace] {
        &self.restarts
    }

    pub fn training_digest(&self) -> &str {
        &self.digest
    }

    /// True if `x` lies outside the normalization box.
    pub fn is_extrapolation(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.bounds)
            .any(|(&v, &(lo, hi))| v < lo || v > hi)
    }

    /// Posterior mean and latent variance at `x` (raw parameter units).
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        assert_eq!(x.len(), self.dim(), "input dimension mismatch");
        let z = normalize(x, &self.bounds);
        let kstar = DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .map(|xi| kernel_unchecked(xi, &z, self.signal_variance, &self.lengthscales)),
        );
        let mean = kstar.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .expect("non-singular factor");
        let mut var = self.signal_variance - v.norm_squared();
        if var < 1e-12 * self.signal_variance {
            var = var.max(0.0);
        }
        (
            self.output_mean + self.output_scale * mean,
            var * self.output_scale * self.output_scale,
        )
    }

    /// Posterior mean only; cheaper than [`GpModel::predict`].
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        let z = normalize(x, &self.bounds);
        let mut m = 0.0;
        for (xi, a) in self.x.iter().zip(self.alpha.iter()) {
            m += a * kernel_unchecked(xi, &z, self.signal_variance, &self.lengthscales);
        }
        self.output_mean + self.output_scale * m
    }

    pub fn to_artifact(&self) -> GpArtifact {
        GpArtifact {
            format: ARTIFACT_FORMAT.into(),
            names: self.names.clone(),
            bounds: self.bounds.clone(),
            day: self.day,
            signal_variance: self.signal_variance,
            lengthscales: self.lengthscales.clone(),
            noise_variance: self.noise_variance,
            jitter: self.jitter,
            output_mean: self.output_mean,
            output_scale: self.output_scale,
            log_marginal_likelihood: self.log_marginal_likelihood,
            training_digest: self.digest.clone(),
            inputs: self.raw_inputs.clone(),
            outputs: self.raw_outputs.clone(),
        }
    }

    pub fn from_artifact(a: &GpArtifact) -> Result<Self> {
        if a.format != ARTIFACT_FORMAT {
            return Err(Error::InvalidInput(format!(
                "unknown model format '{}'",
                a.format
            )));
        }
        let data = TrainingSet::new(
            a.names.clone(),
            a.inputs.clone(),
            a.outputs.clone(),
            a.bounds.clone(),
            a.day,
        )?;
        if data.digest() != a.training_digest {
            return Err(Error::InvalidInput(
                "training data does not match its digest".into(),
            ));
        }
        let mut m = Self::assemble(
            &data,
            a.lengthscales.clone(),
            a.signal_variance,
            a.noise_variance,
            a.output_mean,
            a.output_scale,
        )?;
        m.log_marginal_likelihood = a.log_marginal_likelihood;
        Ok(m)
    }
}

fn standardization(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    // A constant response is left unscaled.
    let scale = if sd > 1e-12 * mean.abs().max(1.0) {
        sd
    } else {
        1.0
    };
    (mean, scale)
}

/// `n` Latin-hypercube points in a box.
pub fn latin_hypercube(n: usize, bounds: &[(f64, f64)], rng: &RngStream) -> Vec<Vec<f64>> {
    let mut s = rng.substream(0, Purpose::Sampling, 0);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(bounds.len());
    for &(lo, hi) in bounds {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = ((s.uniform() * (i + 1) as f64) as usize).min(i);
            perm.swap(i, j);
        }
        cols.push(
            perm.iter()
                .map(|&p| lo + (hi - lo) * (p as f64 + s.uniform()) / n as f64)
                .collect(),
        );
    }
    (0..n)
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect()
}

/// Nash–Sutcliffe efficiency `1 - Σ(m - f)² / Σ(f - mean f)²`.
pub fn nash_sutcliffe(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() {
        return Err(Error::InvalidInput(
            "prediction and observation counts differ".into(),
        ));
    }
    if observed.len() < 2 {
        return Err(Error::InvalidInput(
            "Q2 needs at least two test points".into(),
        ));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let den: f64 = observed.iter().map(|f| (f - mean).powi(2)).sum();
    if den <= 0.0 {
        return Err(Error::Undefined("Q2 with constant test outputs".into()));
    }
    let num: f64 = predicted
        .iter()
        .zip(observed)
        .map(|(m, f)| (m - f).powi(2))
        .sum();
    Ok(1.0 - num / den)
}

/// Held-out Q² of a model.
pub fn q2(model: &GpModel, test_inputs: &[Vec<f64>], test_outputs: &[f64]) -> Result<f64> {
    let pred: Vec<f64> = test_inputs.iter().map(|x| model.predict_mean(x)).collect();
    nash_sutcliffe(&pred, test_outputs)
}
