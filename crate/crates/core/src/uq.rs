//! Exploration of a fitted emulator: marginal response curves, Sobol
//! sensitivity indices and Bayesian calibration by adaptive Metropolis.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream, Substream};
use crate::surrogate::GpModel;

/// Primitive-polynomial degree, coefficients and initial direction numbers
/// (Joe & Kuo) for dimensions 2 and up.
const DIRECTIONS: [(u32, u32, &[u32]); 20] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
];

const BITS: usize = 32;

/// Unscrambled Sobol low-discrepancy sequence (Gray-code order), starting at
/// the origin.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    v: Vec<[u32; BITS]>,
    x: Vec<u32>,
    index: u64,
}

impl SobolSequence {
    pub const MAX_DIM: usize = DIRECTIONS.len() + 1;

    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > Self::MAX_DIM {
            return Err(Error::InvalidInput(format!(
                "Sobol sequence supports 1 to {} dimensions, got {dim}",
                Self::MAX_DIM
            )));
        }
        let mut v = Vec::with_capacity(dim);
        let mut first = [0u32; BITS];
        for (k, slot) in first.iter_mut().enumerate() {
            *slot = 1 << (31 - k);
        }
        v.push(first);
        for &(s, a, m) in DIRECTIONS.iter().take(dim - 1) {
            let s = s as usize;
            let mut vd = [0u32; BITS];
            for k in 0..BITS {
                vd[k] = if k < s {
                    m[k] << (31 - k)
                } else {
                    let mut val = vd[k - s] ^ (vd[k - s] >> s);
                    for i in 1..s {
                        if (a >> (s - 1 - i)) & 1 == 1 {
                            val ^= vd[k - i];
                        }
                    }
                    val
                };
            }
            v.push(vd);
        }
        Ok(Self {
            v,
            x: vec![0; dim],
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        if self.index > 0 {
            let c = (self.index - 1).trailing_ones() as usize;
            assert!(c < BITS, "Sobol sequence exhausted");
            for (x, v) in self.x.iter_mut().zip(&self.v) {
                *x ^= v[c];
            }
        }
        self.index += 1;
        self.x.iter().map(|&x| x as f64 / 4_294_967_296.0).collect()
    }
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::InvalidInput("no parameters".into()));
    }
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidInput(format!("bad bounds [{lo}, {hi}]")));
        }
    }
    Ok(())
}

fn scale(u: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    u.iter()
        .zip(bounds)
        .map(|(&t, &(lo, hi))| lo + t * (hi - lo))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolResult {
    pub names: Vec<String>,
    pub first_order: Vec<f64>,
    pub total_order: Vec<f64>,
    /// Upper triangle filled, `second_order[i][j]` for `i < j`.
    pub second_order: Option<Vec<Vec<f64>>>,
    pub base_samples: usize,
    pub evaluations: usize,
}

/// Saltelli cross-sampling on a Sobol base sequence. First order uses the
/// Saltelli (2010) estimator, total order Jansen's, second order the
/// Saltelli (2002) closed form.
pub fn sobol_indices<F>(
    f: F,
    bounds: &[(f64, f64)],
    names: &[String],
    n: usize,
    second_order: bool,
) -> Result<SobolResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_bounds(bounds)?;
    let j = bounds.len();
    if names.len() != j {
        return Err(Error::InvalidInput(
            "one name per parameter is required".into(),
        ));
    }
    if n < 1024 || !n.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "N must be a power of two >= 1024, got {n}"
        )));
    }
    let mut seq = SobolSequence::new(2 * j)?;
    // The origin is skipped.
    seq.next_point();
    let base: Vec<Vec<f64>> = (0..n).map(|_| seq.next_point()).collect();
    let a: Vec<Vec<f64>> = base.iter().map(|p| p[..j].to_vec()).collect();
    let b: Vec<Vec<f64>> = base.iter().map(|p| p[j..].to_vec()).collect();
    let eval =
        |rows: &[Vec<f64>]| -> Vec<f64> { rows.par_iter().map(|u| f(&scale(u, bounds))).collect() };
    let fa = eval(&a);
    let fb = eval(&b);
    let mix = |base: &[Vec<f64>], other: &[Vec<f64>], i: usize| -> Vec<Vec<f64>> {
        base.iter()
            .zip(other)
            .map(|(p, q)| {
                let mut r = p.clone();
                r[i] = q[i];
                r
            })
            .collect()
    };
    let fab: Vec<Vec<f64>> = (0..j).map(|i| eval(&mix(&a, &b, i))).collect();
    let fba: Option<Vec<Vec<f64>>> =
        second_order.then(|| (0..j).map(|i| eval(&mix(&b, &a, i))).collect());

    if fa.iter().chain(&fb).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "model produced a non-finite value".into(),
        ));
    }
    let all: Vec<f64> = fa.iter().chain(&fb).copied().collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
    if !(var > 1e-300) {
        return Err(Error::Undefined(
            "Sobol indices of a constant output".into(),
        ));
    }
    let nf = n as f64;
    let first: Vec<f64> = fab
        .iter()
        .map(|fi| {
            fb.iter()
                .zip(fi)
                .zip(&fa)
                .map(|((b, ab), a)| b * (ab - a))
                .sum::<f64>()
                / nf
                / var
        })
        .collect();
    let total: Vec<f64> = fab
        .iter()
        .map(|fi| {
            fa.iter()
                .zip(fi)
                .map(|(a, ab)| (a - ab).powi(2))
                .sum::<f64>()
                / (2.0 * nf * var)
        })
        .collect();
    let second = fba.map(|fba| {
        let mut s2 = vec![vec![0.0; j]; j];
        for p in 0..j {
            for q in p + 1..j {
                let vpq = fba[p]
                    .iter()
                    .zip(&fab[q])
                    .zip(fa.iter().zip(&fb))
                    .map(|((ba, ab), (a, b))| ba * ab - a * b)
                    .sum::<f64>()
                    / nf
                    / var;
                s2[p][q] = vpq - first[p] - first[q];
            }
        }
        s2
    });
    Ok(SobolResult {
        names: names.to_vec(),
        first_order: first,
        total_order: total,
        second_order: second,
        base_samples: n,
        evaluations: n * if second_order { 2 * j + 2 } else { j + 2 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalPoint {
    pub value: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Output averaged over uniform draws of the other parameters, for each grid
/// value of parameter `dim`. The same draws are reused along the grid.
pub fn marginal_response<F>(
    f: F,
    bounds: &[(f64, f64)],
    dim: usize,
    grid: &[f64],
    m: usize,
    rng: &RngStream,
) -> Result<Vec<MarginalPoint>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_bounds(bounds)?;
    if dim >= bounds.len() {
        return Err(Error::InvalidInput(format!(
            "parameter index {dim} out of range"
        )));
    }
    if m < 100 {
        return Err(Error::InvalidInput(format!(
            "at least 100 samples are required, got {m}"
        )));
    }
    let (lo, hi) = bounds[dim];
    if let Some(g) = grid.iter().find(|&&g| g < lo || g > hi) {
        return Err(Error::InvalidInput(format!(
            "grid value {g} outside [{lo}, {hi}]"
        )));
    }
    let draws: Vec<Vec<f64>> = (0..m as u64)
        .map(|i| {
            let mut s = rng.substream(i, Purpose::Sampling, dim as u64);
            let u: Vec<f64> = (0..bounds.len()).map(|_| s.uniform()).collect();
            scale(&u, bounds)
        })
        .collect();
    Ok(grid
        .iter()
        .map(|&g| {
            let mut vals: Vec<f64> = draws
                .par_iter()
                .map(|d| {
                    let mut x = d.clone();
                    x[dim] = g;
                    f(&x)
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / m as f64;
            vals.sort_by(f64::total_cmp);
            MarginalPoint {
                value: g,
                mean,
                lower: percentile(&vals, 0.025),
                upper: percentile(&vals, 0.975),
            }
        })
        .collect())
}

/// Observed areas of one spheroid group, per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub group: String,
    pub days: Vec<u32>,
    pub areas: Vec<Vec<f64>>,
    /// Noise scale per day.
    pub sigma: Vec<f64>,
}

impl ObservationSet {
    /// Without `sigma`, each day's noise scale is the sample standard
    /// deviation of that day's areas.
    pub fn new(
        group: impl Into<String>,
        days: Vec<u32>,
        areas: Vec<Vec<f64>>,
        sigma: Option<Vec<f64>>,
    ) -> Result<Self> {
        let group = group.into();
        if days.is_empty() {
            return Err(Error::InvalidInput(format!(
                "group '{group}' has no observations"
            )));
        }
        if days.len() != areas.len() {
            return Err(Error::InvalidInput(
                "one area list per day is required".into(),
            ));
        }
        if days.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "observation days must be strictly increasing".into(),
            ));
        }
        for (d, a) in days.iter().zip(&areas) {
            if a.is_empty() || a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "day {d}: areas must be non-empty and finite"
                )));
            }
        }
        let sigma = match sigma {
            Some(s) => s,
            None => days
                .iter()
                .zip(&areas)
                .map(|(d, a)| {
                    if a.len() < 2 {
                        return Err(Error::InvalidInput(format!(
                            "day {d}: a noise scale needs two observations or an explicit value"
                        )));
                    }
                    let m = a.iter().sum::<f64>() / a.len() as f64;
                    Ok(
                        (a.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (a.len() - 1) as f64)
                            .sqrt(),
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        };
        if sigma.len() != days.len() {
            return Err(Error::InvalidInput(
                "one noise scale per day is required".into(),
            ));
        }
        if let Some(s) = sigma.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::domain("noise scale", *s, "(0, inf)"));
        }
        Ok(Self {
            group,
            days,
            areas,
            sigma,
        })
    }

    pub fn count(&self) -> usize {
        self.areas.iter().map(Vec::len).sum()
    }
}

/// Gaussian likelihood of an observation set under per-day emulators.
#[derive(Debug, Clone)]
pub struct Likelihood<'a> {
    obs: &'a ObservationSet,
    models: Vec<&'a GpModel>,
    support: Vec<(f64, f64)>,
}

impl<'a> Likelihood<'a> {
    /// `models` must contain one emulator per observed day.
    pub fn new(
        obs: &'a ObservationSet,
        models: &'a [GpModel],
        support: &[(f64, f64)],
    ) -> Result<Self> {
        check_bounds(support)?;
        let picked = obs
            .days
            .iter()
            .map(|&d| {
                models
                    .iter()
                    .find(|m| m.day() == Some(d))
                    .ok_or_else(|| Error::InvalidInput(format!("no emulator for day {d}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(m) = picked.iter().find(|m| m.dim() != support.len()) {
            return Err(Error::InvalidInput(format!(
                "emulator has {} inputs but the prior has {}",
                m.dim(),
                support.len()
            )));
        }
        Ok(Self {
            obs,
            models: picked,
            support: support.to_vec(),
        })
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    /// Log likelihood; `-inf` outside the support.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.support.len()
            || theta
                .iter()
                .zip(&self.support)
                .any(|(&t, &(lo, hi))| !(t >= lo && t <= hi))
        {
            return f64::NEG_INFINITY;
        }
        let mut ll = 0.0;
        for ((model, areas), &sigma) in self.models.iter().zip(&self.obs.areas).zip(&self.obs.sigma)
        {
            let mu = model.predict_mean(theta);
            let norm = -0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
            for y in areas {
                ll += norm - (y - mu).powi(2) / (2.0 * sigma * sigma);
            }
        }
        ll
    }
}

/// Log likelihood of `theta` given observations and per-day emulators.
pub fn log_likelihood(
    theta: &[f64],
    obs: &ObservationSet,
    models: &[GpModel],
    support: &[(f64, f64)],
) -> Result<f64> {
    Ok(Likelihood::new(obs, models, support)?.log_density(theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcOptions {
    pub chains: usize,
    /// Retained draws per chain.
    pub draws: usize,
    /// Adaptation draws per chain, discarded.
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self {
            chains: 4,
            draws: 5000,
            burn_in: 3000,
            seed: 0,
        }
    }
}

/// Split-R̂ above this attaches a convergence warning.
pub const RHAT_WARNING: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub names: Vec<String>,
    /// Retained draws, chain by chain.
    pub samples: Vec<Vec<f64>>,
    pub chain: Vec<usize>,
    pub log_density: Vec<f64>,
    pub joint_map: Vec<f64>,
    pub joint_map_log_density: f64,
    pub marginal_map: Vec<f64>,
    pub acceptance_rate: Vec<f64>,
    pub rhat: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Posterior {
    pub fn converged(&self) -> bool {
        self.rhat.iter().all(|&r| r <= RHAT_WARNING)
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.samples.len() as f64;
        (0..self.names.len())
            .map(|d| self.samples.iter().map(|s| s[d]).sum::<f64>() / n)
            .collect()
    }
}

/// Folds `x` into `[0, 1]` by reflection.
fn reflect(mut x: f64) -> f64 {
    x = x.rem_euclid(2.0);
    if x > 1.0 {
        2.0 - x
    } else {
        x
    }
}

struct ChainOutput {
    samples: Vec<Vec<f64>>,
    log_density: Vec<f64>,
    accepted: usize,
}

/// Replicas per chain in the tempering ladder.
pub const TEMPERATURES: usize = 8;
/// Inverse temperature of the hottest replica.
pub const MIN_BETA: f64 = 1e-3;

/// One tempered random walk with its own adaptive proposal.
struct Replica {
    beta: f64,
    u: Vec<f64>,
    lp: f64,
    log_lambda: f64,
    chol: DMatrix<f64>,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
    count: f64,
}

impl Replica {
    fn new(beta: f64, u: Vec<f64>, lp: f64) -> Self {
        let d = u.len();
        Self {
            beta,
            mean: DVector::from_column_slice(&u),
            u,
            lp,
            log_lambda: (2.38f64 * 2.38 / d as f64).ln(),
            chol: DMatrix::identity(d, d) * 0.1,
            m2: DMatrix::zeros(d, d),
            count: 1.0,
        }
    }

    /// One Metropolis step on `beta * lp`; returns whether it moved.
    fn step<L: Fn(&[f64]) -> f64>(
        &mut self,
        lp: &L,
        s: &mut Substream,
        it: usize,
        adapting: bool,
    ) -> bool {
        let d = self.u.len();
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut *s)));
        let step = &self.chol * z * self.log_lambda.exp().sqrt();
        let prop: Vec<f64> = self
            .u
            .iter()
            .zip(step.iter())
            .map(|(a, b)| reflect(a + b))
            .collect();
        let lp_prop = lp(&prop);
        let diff = self.beta * (lp_prop - self.lp);
        let accept = lp_prop.is_finite() && (diff >= 0.0 || s.uniform().ln() < diff);
        if accept {
            self.u = prop;
            self.lp = lp_prop;
        }
        if adapting {
            let rate = if accept { 1.0 } else { 0.0 };
            self.log_lambda += (rate - 0.234) / (1.0 + it as f64).powf(0.6);
            let x = DVector::from_column_slice(&self.u);
            self.count += 1.0;
            let delta = &x - &self.mean;
            self.mean += &delta / self.count;
            self.m2 += &delta * (&x - &self.mean).transpose();
            if it >= 2 * d + 10 && it % 50 == 0 {
                let cov = &self.m2 / (self.count - 1.0) + DMatrix::identity(d, d) * 1e-10;
                if let Some(c) = cov.cholesky() {
                    self.chol = c.l();
                }
            }
        }
        accept
    }
}

/// Replica-exchange chain: every iteration each replica takes an adaptive
/// random-walk step, then one adjacent pair proposes to swap states. Only
/// the replica at `beta = 1` is recorded.
fn run_chain<F>(
    target: &F,
    bounds: &[(f64, f64)],
    start: &[f64],
    opts: &McmcOptions,
    rng: &RngStream,
) -> ChainOutput
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut s: Substream = rng.substream(0, Purpose::Chain, 0);
    // The chain lives in the unit cube; the target sees scaled values.
    let lp = |u: &[f64]| target(&scale(u, bounds));
    let lp0 = lp(start);
    let mut ladder: Vec<Replica> = (0..TEMPERATURES)
        .map(|k| {
            let beta = MIN_BETA.powf(k as f64 / (TEMPERATURES - 1) as f64);
            Replica::new(beta, start.to_vec(), lp0)
        })
        .collect();
    let mut out = ChainOutput {
        samples: Vec::with_capacity(opts.draws),
        log_density: Vec::with_capacity(opts.draws),
        accepted: 0,
    };
    for it in 0..opts.burn_in + opts.draws {
        let adapting = it < opts.burn_in;
        let mut cold_moved = false;
        for (k, r) in ladder.iter_mut().enumerate() {
            let moved = r.step(&lp, &mut s, it, adapting);
            if k == 0 {
                cold_moved = moved;
            }
        }
        let k = ((s.uniform() * (TEMPERATURES - 1) as f64) as usize).min(TEMPERATURES - 2);
        let (a, b) = (&ladder[k], &ladder[k + 1]);
        let log_ratio = (a.beta - b.beta) * (b.lp - a.lp);
        if a.lp.is_finite() && b.lp.is_finite() && s.uniform().ln() < log_ratio {
            let (lo, hi) = ladder.split_at_mut(k + 1);
            std::mem::swap(&mut lo[k].u, &mut hi[0].u);
            std::mem::swap(&mut lo[k].lp, &mut hi[0].lp);
        }
        if !adapting {
            if cold_moved {
                out.accepted += 1;
            }
            out.samples.push(scale(&ladder[0].u, bounds));
            out.log_density.push(ladder[0].lp);
        }
    }
    out
}

/// Split-R̂ per parameter over equally long chains.
pub fn split_rhat(chains: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let d = chains.first().and_then(|c| c.first()).map_or(0, Vec::len);
    let half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if half < 2 {
        return vec![f64::NAN; d];
    }
    (0..d)
        .map(|p| {
            let seqs: Vec<Vec<f64>> = chains
                .iter()
                .flat_map(|c| {
                    [
                        c[..half].iter().map(|s| s[p]).collect(),
                        c[half..2 * half].iter().map(|s| s[p]).collect(),
                    ]
                })
                .collect();
            let n = half as f64;
            let means: Vec<f64> = seqs.iter().map(|s| s.iter().sum::<f64>() / n).collect();
            let grand = means.iter().sum::<f64>() / means.len() as f64;
            let b = n * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>()
                / (means.len() - 1) as f64;
            let w = seqs
                .iter()
                .zip(&means)
                .map(|(s, m)| s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
                .sum::<f64>()
                / seqs.len() as f64;
            if w <= 0.0 {
                return if b <= 0.0 { 1.0 } else { f64::INFINITY };
            }
            (((n - 1.0) / n * w + b / n) / w).sqrt()
        })
        .collect()
}

/// Mode of a Gaussian kernel density estimate on a grid over `[lo, hi]`.
pub fn kde_mode(values: &[f64], lo: f64, hi: f64) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = percentile(&sorted, 0.75) - percentile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if !(h > 0.0) {
        return mean;
    }
    const GRID: usize = 512;
    let (mut best, mut best_x) = (f64::NEG_INFINITY, mean);
    for g in 0..GRID {
        let x = lo + (hi - lo) * g as f64 / (GRID - 1) as f64;
        let dens: f64 = sorted
            .iter()
            .map(|v| {
                let t = (x - v) / h;
                if t.abs() > 8.0 {
                    0.0
                } else {
                    (-0.5 * t * t).exp()
                }
            })
            .sum();
        if dens > best {
            best = dens;
            best_x = x;
        }
    }
    best_x
}

/// Compass search from `start` that only accepts improvements.
fn hill_climb<F>(
    target: &F,
    bounds: &[(f64, f64)],
    start: &[f64],
    start_value: f64,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = start.to_vec();
    let mut fx = start_value;
    let mut step = 0.02;
    while step > 1e-7 {
        let mut improved = false;
        for d in 0..x.len() {
            let (lo, hi) = bounds[d];
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[d] = (y[d] + sign * step * (hi - lo)).clamp(lo, hi);
                let fy = target(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Points of the unit-cube Sobol screen evaluated to place chain starts.
pub const SCREEN_POINTS: usize = 4096;

/// Unit-cube starting points: the `chains` best points of a Sobol screen
/// of the target, best first.
fn screen_starts<F>(target: &F, bounds: &[(f64, f64)], chains: usize) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut seq = SobolSequence::new(bounds.len())?;
    let points: Vec<Vec<f64>> = (0..SCREEN_POINTS.max(chains))
        .map(|_| seq.next_point())
        .collect();
    let values: Vec<f64> = points
        .par_iter()
        .map(|u| target(&scale(u, bounds)))
        .collect();
    let mut order: Vec<usize> = (0..points.len())
        .filter(|&i| values[i].is_finite())
        .collect();
    if order.len() < chains {
        return Err(Error::Undefined(
            "log density is -inf almost everywhere on the support".into(),
        ));
    }
    // Stable sort keeps screen order among ties.
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    Ok(order[..chains].iter().map(|&i| points[i].clone()).collect())
}

/// Adaptive random-walk Metropolis on a log density over a box, run as
/// replica exchange over a geometric temperature ladder so that chains can
/// cross between separated modes. Chains start from the best points of a
/// Sobol screen of the target, proposals are reflected at the bounds and
/// adaptation stops after burn-in. Acceptance rates refer to the untempered
/// replica's random-walk moves.
pub fn mcmc_sample<F>(
    target: F,
    bounds: &[(f64, f64)],
    names: &[String],
    opts: &McmcOptions,
) -> Result<Posterior>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_bounds(bounds)?;
    if names.len() != bounds.len() {
        return Err(Error::InvalidInput(
            "one name per parameter is required".into(),
        ));
    }
    if opts.chains < 2 {
        return Err(Error::InvalidInput(
            "at least two chains are required".into(),
        ));
    }
    if opts.draws < 4 {
        return Err(Error::InvalidInput(
            "at least four draws per chain are required".into(),
        ));
    }
    let starts = screen_starts(&target, bounds, opts.chains)?;
    let root = RngStream::new(opts.seed);
    let outputs: Vec<ChainOutput> = (0..opts.chains)
        .into_par_iter()
        .map(|c| {
            run_chain(
                &target,
                bounds,
                &starts[c],
                opts,
                &root.derive(Purpose::Chain, c as u64),
            )
        })
        .collect();
    if outputs
        .iter()
        .all(|o| o.log_density.iter().all(|v| !v.is_finite()))
    {
        return Err(Error::Undefined(
            "log density is -inf everywhere the chains went".into(),
        ));
    }
    let rhat = split_rhat(
        &outputs
            .iter()
            .map(|o| o.samples.clone())
            .collect::<Vec<_>>(),
    );
    let acceptance_rate: Vec<f64> = outputs
        .iter()
        .map(|o| o.accepted as f64 / opts.draws as f64)
        .collect();
    let mut samples = Vec::new();
    let mut log_density = Vec::new();
    let mut chain = Vec::new();
    for (c, o) in outputs.into_iter().enumerate() {
        chain.extend(std::iter::repeat_n(c, o.samples.len()));
        samples.extend(o.samples);
        log_density.extend(o.log_density);
    }
    let best = (0..samples.len())
        .max_by(|&a, &b| log_density[a].total_cmp(&log_density[b]))
        .expect("draws exist");
    let (joint_map, joint_map_log_density) =
        hill_climb(&target, bounds, &samples[best], log_density[best]);
    let marginal_map: Vec<f64> = bounds
        .iter()
        .enumerate()
        .map(|(d, &(lo, hi))| kde_mode(&samples.iter().map(|s| s[d]).collect::<Vec<_>>(), lo, hi))
        .collect();
    let warnings = names
        .iter()
        .zip(&rhat)
        .filter(|(_, &r)| !(r <= RHAT_WARNING))
        .map(|(n, r)| format!("split R-hat for {n} is {r:.3} (> {RHAT_WARNING})"))
        .collect();
    Ok(Posterior {
        names: names.to_vec(),
        samples,
        chain,
        log_density,
        joint_map,
        joint_map_log_density,
        marginal_map,
        acceptance_rate,
        rhat,
        warnings,
    })
}

/// Posterior of the emulator inputs under a uniform prior on `support`.
pub fn calibrate(
    obs: &ObservationSet,
    models: &[GpModel],
    support: &[(f64, f64)],
    opts: &McmcOptions,
) -> Result<Posterior> {
    let like = Likelihood::new(obs, models, support)?;
    let names = models
        .iter()
        .find(|m| m.day() == Some(obs.days[0]))
        .map(|m| m.names().to_vec())
        .expect("checked by Likelihood::new");
    mcmc_sample(|t| like.log_density(t), support, &names, opts)
}
