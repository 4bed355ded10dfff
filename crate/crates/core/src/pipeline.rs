//! Glue between the simulator, the morphology measurements and the
//! emulator: per-replicate metrics and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::lifecycle::{run_simulation, SimulationTrace};
use crate::measure::{measure_snapshot, MeasureConfig};
use crate::params::{
    calibration_bounds, exploration_bounds, ParameterVector, CALIBRATED, FIXED_ATP_DEATH,
    FIXED_K_AER, FIXED_K_ANA, IDX_ATP_DEATH, IDX_K_AER, IDX_K_ANA, N_PARAMS, PARAM_NAMES,
};
use crate::rng::{Purpose, RngStream};
use crate::surrogate::{latin_hypercube, TrainingSet};

/// Seed of replicate `r` of a study rooted at `seed`. Replicate seeds do not
/// depend on the parameter sample, so sweeps use common random numbers.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    RngStream::new(seed)
        .derive(Purpose::Replicate, r as u64)
        .seed()
}

/// Morphology summary of one replicate at one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub replicate: usize,
    pub seed: u64,
    pub day: u32,
    pub total_cells: usize,
    pub spheroid_count: usize,
    /// Projected area of the spheroid with most cells (µm²).
    pub main_area: f64,
    /// Mean projected area over all spheroids (µm²).
    pub mean_area: f64,
    /// Volume per cell of the main spheroid (µm³).
    pub main_volume_per_cell: f64,
}

/// Metrics of every snapshot of a trace.
pub fn trace_metrics(
    trace: &SimulationTrace,
    replicate: usize,
    seed: u64,
    cfg: &MeasureConfig,
) -> Vec<ReplicateMetrics> {
    trace
        .snapshots
        .iter()
        .map(|s| {
            let m = measure_snapshot(&s.cells, trace.radius, cfg);
            ReplicateMetrics {
                replicate,
                seed,
                day: s.day,
                total_cells: m.total_cells,
                spheroid_count: m.spheroid_count(),
                main_area: m.main_area(),
                mean_area: m.mean_area(),
                main_volume_per_cell: m.main_volume_per_cell(),
            }
        })
        .collect()
}

/// Runs `replicates` simulations with seeds from [`replicate_seed`] and
/// returns the metrics of the requested day of each.
pub fn replicate_study(
    base: &SimConfig,
    params: &ParameterVector,
    replicates: usize,
    day: u32,
) -> Result<Vec<ReplicateMetrics>> {
    let mcfg = MeasureConfig::for_radius(base.mechanics.radius);
    (0..replicates)
        .map(|r| {
            let cfg = SimConfig {
                seed: replicate_seed(base.seed, r),
                ..base.clone()
            };
            let trace = run_simulation(&cfg, params)?;
            trace_metrics(&trace, r, cfg.seed, &mcfg)
                .into_iter()
                .find(|m| m.day == day)
                .ok_or_else(|| Error::Config(format!("run does not reach day {day}")))
        })
        .collect()
}

/// Which parameters a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepSpace {
    /// The four calibrated parameters; the rest stay at their fixed values.
    Calibrated,
    /// All seven parameters over the exploration box.
    Full,
}

impl SweepSpace {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "calibrated" => Ok(Self::Calibrated),
            "full" => Ok(Self::Full),
            other => Err(Error::InvalidInput(format!(
                "unknown sweep space '{other}' (expected calibrated or full)"
            ))),
        }
    }

    pub fn indices(self) -> Vec<usize> {
        match self {
            Self::Calibrated => CALIBRATED.to_vec(),
            Self::Full => (0..N_PARAMS).collect(),
        }
    }

    pub fn names(self) -> Vec<String> {
        self.indices()
            .iter()
            .map(|&i| PARAM_NAMES[i].to_string())
            .collect()
    }

    pub fn bounds(self) -> Vec<(f64, f64)> {
        match self {
            Self::Calibrated => calibration_bounds(),
            Self::Full => exploration_bounds().to_vec(),
        }
    }

    /// Full parameter vector for a point of this space.
    pub fn parameters(self, theta: &[f64]) -> Result<ParameterVector> {
        let idx = self.indices();
        if theta.len() != idx.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                idx.len(),
                theta.len()
            )));
        }
        let mut all = [0.0; N_PARAMS];
        all[IDX_K_AER] = FIXED_K_AER;
        all[IDX_K_ANA] = FIXED_K_ANA;
        all[IDX_ATP_DEATH] = FIXED_ATP_DEATH;
        for (&i, &v) in idx.iter().zip(theta) {
            all[i] = v;
        }
        let p = ParameterVector::from_array(&all);
        p.validate()?;
        Ok(p)
    }
}

/// Latin-hypercube design over a sweep space.
pub fn sweep_design(space: SweepSpace, samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if samples < 2 {
        return Err(Error::InvalidInput(format!(
            "a sweep needs at least two samples, got {samples}"
        )));
    }
    Ok(latin_hypercube(
        samples,
        &space.bounds(),
        &RngStream::new(seed).derive(Purpose::Sampling, 0),
    ))
}

/// Replicate-averaged main-spheroid area per requested day, or the reason
/// the sample failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub sample: usize,
    pub theta: Vec<f64>,
    pub areas: Vec<(u32, f64)>,
    pub failure: Option<String>,
}

/// Simulates one sweep sample.
pub fn run_sweep_sample(
    base: &SimConfig,
    space: SweepSpace,
    sample: usize,
    theta: &[f64],
    replicates: usize,
    days: &[u32],
) -> SweepOutcome {
    let result = (|| -> Result<Vec<(u32, f64)>> {
        let params = space.parameters(theta)?;
        let mcfg = MeasureConfig::for_radius(base.mechanics.radius);
        let mut sums = vec![0.0; days.len()];
        for r in 0..replicates {
            let cfg = SimConfig {
                seed: replicate_seed(base.seed, r),
                ..base.clone()
            };
            let trace = run_simulation(&cfg, &params)?;
            for (k, &day) in days.iter().enumerate() {
                let snap = trace
                    .snapshots
                    .iter()
                    .find(|s| s.day == day)
                    .ok_or_else(|| Error::Config(format!("run does not reach day {day}")))?;
                sums[k] += measure_snapshot(&snap.cells, trace.radius, &mcfg).main_area();
            }
        }
        Ok(days
            .iter()
            .zip(sums)
            .map(|(&d, s)| (d, s / replicates as f64))
            .collect())
    })();
    match result {
        Ok(areas) => SweepOutcome {
            sample,
            theta: theta.to_vec(),
            areas,
            failure: None,
        },
        Err(e) => SweepOutcome {
            sample,
            theta: theta.to_vec(),
            areas: Vec::new(),
            failure: Some(e.to_string()),
        },
    }
}

/// Runs a sweep in parallel. Individual failures are reported in the
/// outcomes rather than aborting the sweep.
pub fn run_sweep(
    base: &SimConfig,
    space: SweepSpace,
    design: &[Vec<f64>],
    replicates: usize,
    days: &[u32],
) -> Result<Vec<SweepOutcome>> {
    if replicates == 0 {
        return Err(Error::InvalidInput(
            "at least one replicate is required".into(),
        ));
    }
    if days.is_empty() {
        return Err(Error::InvalidInput("at least one day is required".into()));
    }
    base.validate()?;
    Ok(design
        .par_iter()
        .enumerate()
        .map(|(i, theta)| run_sweep_sample(base, space, i, theta, replicates, days))
        .collect())
}

/// One training set per day from the successful sweep outcomes.
pub fn training_sets(
    outcomes: &[SweepOutcome],
    space: SweepSpace,
    days: &[u32],
) -> Result<Vec<TrainingSet>> {
    days.iter()
        .map(|&day| {
            let mut inputs = Vec::new();
            let mut outputs = Vec::new();
            for o in outcomes.iter().filter(|o| o.failure.is_none()) {
                if let Some(&(_, a)) = o.areas.iter().find(|(d, _)| *d == day) {
                    inputs.push(o.theta.clone());
                    outputs.push(a);
                }
            }
            TrainingSet::new(space.names(), inputs, outputs, space.bounds(), Some(day))
        })
        .collect()
}
