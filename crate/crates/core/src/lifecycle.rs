//! ATP-driven phenotype switching, division and death, and the main
//! simulation loop.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mechanics::{step_positions, StepContext};
use crate::metabolism::{integrate, Clamp, MetabolicState};
use crate::params::{MechanicalParams, ParameterVector, PhenotypeParams};
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Proliferating,
    Quiescent,
    Apoptotic,
}

impl CellState {
    pub fn label(self) -> &'static str {
        match self {
            CellState::Proliferating => "proliferating",
            CellState::Quiescent => "quiescent",
            CellState::Apoptotic => "apoptotic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "proliferating" => Some(CellState::Proliferating),
            "quiescent" => Some(CellState::Quiescent),
            "apoptotic" => Some(CellState::Apoptotic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellAgent {
    pub id: u64,
    /// Random-stream key, inherited along the lineage.
    pub key: u64,
    pub position: Vec3,
    pub radius: f64,
    pub state: CellState,
    pub metabolic: MetabolicState,
    /// Locomotive force currently applied (model force units).
    pub locomotion: Vec3,
    /// Time at which `locomotion` is redrawn.
    pub locomotion_expires: f64,
}

impl CellAgent {
    pub fn new(
        id: u64,
        key: u64,
        position: Vec3,
        radius: f64,
        state: CellState,
        metabolic: MetabolicState,
    ) -> Self {
        Self {
            id,
            key,
            position,
            radius,
            state,
            metabolic,
            locomotion: Vec3::ZERO,
            locomotion_expires: f64::NEG_INFINITY,
        }
    }
}

/// Phenotype for an ATP level. Ties go to survival: `atp == atp_death` is
/// quiescent, `atp == atp_prolif` proliferating.
pub fn classify(atp: f64, thresholds: &PhenotypeParams) -> CellState {
    if atp < thresholds.atp_death {
        CellState::Apoptotic
    } else if atp >= thresholds.atp_prolif {
        CellState::Proliferating
    } else {
        CellState::Quiescent
    }
}

/// Bernoulli division trial with probability `k_prolif * dt`. The daughter
/// sits one radius from the parent in a random direction and copies its
/// state.
pub fn attempt_division(
    cell: &CellAgent,
    k_prolif: f64,
    dt: f64,
    rng: &RngStream,
    step: u64,
    new_id: u64,
) -> Option<CellAgent> {
    if cell.state != CellState::Proliferating {
        return None;
    }
    let u = rng.substream(cell.key, Purpose::Division, step).uniform();
    if u >= k_prolif * dt {
        return None;
    }
    let dir = rng
        .substream(cell.key, Purpose::DivisionDirection, step)
        .unit_vector();
    let mut daughter = cell.clone();
    daughter.id = new_id;
    daughter.key = RngStream::child_key(cell.key, step);
    daughter.position = cell.position + dir * cell.radius;
    daughter.locomotion = Vec3::ZERO;
    daughter.locomotion_expires = f64::NEG_INFINITY;
    Some(daughter)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    Division { parent: u64, daughter: u64 },
    Death { id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// Removes apoptotic cells, logging one death per removal. Returns the
/// number removed.
pub fn apply_death(cells: &mut Vec<CellAgent>, time: f64, events: &mut Vec<Event>) -> usize {
    let before = cells.len();
    cells.retain(|c| {
        if c.state == CellState::Apoptotic {
            events.push(Event {
                time,
                kind: EventKind::Death { id: c.id },
            });
            false
        } else {
            true
        }
    });
    before - cells.len()
}

/// One cell in a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub id: u64,
    pub position: Vec3,
    pub state: CellState,
    pub atp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Snapshot index; day number for the default daily interval.
    pub day: u32,
    pub time: f64,
    pub cells: Vec<CellRecord>,
}

/// Population counts at a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyCounts {
    pub day: u32,
    pub time: f64,
    pub cells: usize,
    pub proliferating: usize,
    pub quiescent: usize,
    pub divisions: usize,
    pub deaths: usize,
    pub mean_atp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub radius: f64,
    pub snapshots: Vec<Snapshot>,
    pub daily: Vec<DailyCounts>,
    pub events: Vec<Event>,
}

impl SimulationTrace {
    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("a trace always holds the initial snapshot")
    }

    pub fn divisions(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Division { .. }))
            .count()
    }

    pub fn deaths(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Death { .. }))
            .count()
    }
}

fn record(cells: &[CellAgent], day: u32, time: f64, events: &[Event]) -> (Snapshot, DailyCounts) {
    let records: Vec<CellRecord> = cells
        .iter()
        .map(|c| CellRecord {
            id: c.id,
            position: c.position,
            state: c.state,
            atp: c.metabolic.atp,
        })
        .collect();
    let count = |s| cells.iter().filter(|c| c.state == s).count();
    let divisions = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Division { .. }))
        .count();
    let mean_atp = if cells.is_empty() {
        0.0
    } else {
        cells.iter().map(|c| c.metabolic.atp).sum::<f64>() / cells.len() as f64
    };
    (
        Snapshot {
            day,
            time,
            cells: records,
        },
        DailyCounts {
            day,
            time,
            cells: cells.len(),
            proliferating: count(CellState::Proliferating),
            quiescent: count(CellState::Quiescent),
            divisions,
            deaths: events.len() - divisions,
            mean_atp,
        },
    )
}

fn initial_cells(config: &SimConfig, mech: &MechanicalParams, atp: f64) -> Vec<CellAgent> {
    let rng = RngStream::new(config.seed);
    let metabolic = MetabolicState::initial(&config.supply, atp);
    (0..config.initial_cells as u64)
        .map(|i| {
            let position = if config.placement_radius > 0.0 {
                let mut s = rng.substream(i, Purpose::Placement, 0);
                let r = config.placement_radius * s.uniform().cbrt();
                s.unit_vector() * r
            } else {
                Vec3::ZERO
            };
            CellAgent::new(i, i, position, mech.radius, CellState::Quiescent, metabolic)
        })
        .collect()
}

/// Integrates every cell's metabolism over `dt`. Cells whose states are
/// bitwise identical share one integration.
fn advance_metabolism(
    cells: &mut [CellAgent],
    params: &ParameterVector,
    config: &SimConfig,
    clamp: Clamp,
) -> Result<()> {
    let mut cache: FxHashMap<[u64; 7], MetabolicState> = FxHashMap::default();
    let mut last: Option<([u64; 7], MetabolicState)> = None;
    for cell in cells.iter_mut() {
        let bits = cell.metabolic.bits();
        if let Some((b, s)) = last {
            if b == bits {
                cell.metabolic = s;
                continue;
            }
        }
        let next = match cache.get(&bits) {
            Some(s) => *s,
            None => {
                let s = integrate(
                    &cell.metabolic,
                    &params.metabolic,
                    config.mechanics_dt,
                    config.metabolic_substep,
                    Some(clamp),
                )?;
                cache.insert(bits, s);
                s
            }
        };
        last = Some((bits, next));
        cell.metabolic = next;
    }
    Ok(())
}

/// Runs the coupled simulation and returns its trace.
pub fn run_simulation(config: &SimConfig, params: &ParameterVector) -> Result<SimulationTrace> {
    config.validate()?;
    params.validate()?;
    let ph = &params.phenotype;
    if ph.k_prolif * config.phenotype_dt >= 0.1 {
        return Err(Error::Config(format!(
            "division probability per phenotype step {} must stay below 0.1",
            ph.k_prolif * config.phenotype_dt
        )));
    }
    let mech = config.mechanical_params()?;
    let rng = RngStream::new(config.seed);
    let clamp = Clamp::from(&config.supply);
    let atp0 = config
        .supply
        .initial_atp
        .unwrap_or(0.5 * (ph.atp_death + ph.atp_prolif));

    let mut cells = initial_cells(config, &mech, atp0);
    for c in cells.iter_mut() {
        c.state = classify(c.metabolic.atp, ph);
    }
    let mut events = Vec::new();
    apply_death(&mut cells, 0.0, &mut events);
    let mut next_id = config.initial_cells as u64;

    let mut snapshots = Vec::new();
    let mut daily = Vec::new();
    let (s, d) = record(&cells, 0, 0.0, &events);
    snapshots.push(s);
    daily.push(d);

    let n_steps = config.n_steps();
    let stride = config.phenotype_stride();
    let phenotype_dt = stride as f64 * config.mechanics_dt;
    let mut next_snapshot = 1u32;

    for step in 1..=n_steps {
        let t0 = (step - 1) as f64 * config.mechanics_dt;
        let t = step as f64 * config.mechanics_dt;
        if !cells.is_empty() {
            advance_metabolism(&mut cells, params, config, clamp)?;
            let ctx = StepContext {
                dt: config.mechanics_dt,
                time: t0,
                step,
                domain_half_extent: config.domain_half_extent,
                locomotion_scale: config.locomotion_scale,
                locomotion_persistence: config.mechanics.locomotion_persistence,
                rng,
            };
            step_positions(&mut cells, &mech, &ctx)?;
        }

        if step % stride == 0 {
            for c in cells.iter_mut() {
                c.state = classify(c.metabolic.atp, ph);
            }
            apply_death(&mut cells, t, &mut events);
            let parents = cells.len();
            for i in 0..parents {
                if let Some(mut daughter) =
                    attempt_division(&cells[i], ph.k_prolif, phenotype_dt, &rng, step, next_id)
                {
                    let half = config.domain_half_extent;
                    let p = daughter.position;
                    daughter.position = Vec3::new(
                        p.x.clamp(-half, half),
                        p.y.clamp(-half, half),
                        p.z.clamp(-half, half),
                    );
                    events.push(Event {
                        time: t,
                        kind: EventKind::Division {
                            parent: cells[i].id,
                            daughter: next_id,
                        },
                    });
                    next_id += 1;
                    cells.push(daughter);
                }
            }
            if cells.len() > config.population_cap {
                return Err(Error::Resource {
                    cap: config.population_cap,
                    population: cells.len(),
                });
            }
        }

        if t + 1e-9 >= next_snapshot as f64 * config.snapshot_interval {
            let (s, d) = record(&cells, next_snapshot, t, &events);
            snapshots.push(s);
            daily.push(d);
            next_snapshot += 1;
        }
    }

    Ok(SimulationTrace {
        radius: mech.radius,
        snapshots,
        daily,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SpheroidGroup;

    fn thresholds(death: f64, prolif: f64) -> PhenotypeParams {
        PhenotypeParams {
            k_prolif: 6e-4,
            atp_prolif: prolif,
            atp_death: death,
        }
    }

    #[test]
    fn classification_bands() {
        let t = thresholds(500.0, 1040.0);
        assert_eq!(classify(499.0, &t), CellState::Apoptotic);
        assert_eq!(classify(1050.0, &t), CellState::Proliferating);
        assert_eq!(classify(800.0, &t), CellState::Quiescent);
        assert_eq!(classify(500.0, &t), CellState::Quiescent);
        assert_eq!(classify(1040.0, &t), CellState::Proliferating);
    }

    fn prolif_cell(id: u64) -> CellAgent {
        CellAgent::new(
            id,
            id,
            Vec3::ZERO,
            6.0,
            CellState::Proliferating,
            MetabolicState::default(),
        )
    }

    #[test]
    fn zero_rate_never_divides() {
        let rng = RngStream::new(1);
        let c = prolif_cell(0);
        assert!((0..10_000).all(|s| attempt_division(&c, 0.0, 6.0, &rng, s, 1).is_none()));
    }

    #[test]
    fn division_count_matches_bernoulli_chain() {
        // One always-proliferating cell whose daughters never divide.
        let (k, dt, t_end) = (6.1e-4, 6.0, 10_080.0);
        let steps = (t_end / dt) as u64;
        let trials = 10_000u64;
        let mut total = 0u64;
        for trial in 0..trials {
            let rng = RngStream::new(trial);
            let c = prolif_cell(0);
            total += (1..=steps)
                .filter(|&s| attempt_division(&c, k, dt, &rng, s, 1).is_some())
                .count() as u64;
        }
        let p = k * dt;
        let n = (steps * trials) as f64;
        let mean = total as f64;
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((mean - n * p).abs() < 3.0 * sd, "{mean} vs {}", n * p);
        assert!(((n * p / trials as f64) - k * t_end).abs() < 1e-9 * k * t_end + 0.01);
    }

    #[test]
    fn daughter_placement() {
        let rng = RngStream::new(5);
        let c = prolif_cell(3);
        let d = (0..100_000)
            .find_map(|s| attempt_division(&c, 0.05, 1.0, &rng, s, 42))
            .unwrap();
        assert_eq!(d.id, 42);
        assert_ne!(d.key, c.key);
        assert!(((d.position - c.position).norm() - 6.0).abs() < 1e-12);
        assert_eq!(d.metabolic, c.metabolic);
    }

    #[test]
    fn death_removal_logged() {
        let mut cells: Vec<_> = (0..3).map(prolif_cell).collect();
        let mut events = Vec::new();
        assert_eq!(apply_death(&mut cells, 0.0, &mut events), 0);
        cells[1].state = CellState::Apoptotic;
        assert_eq!(apply_death(&mut cells, 6.0, &mut events), 1);
        assert_eq!(cells.len(), 2);
        assert_eq!(
            events,
            vec![Event {
                time: 6.0,
                kind: EventKind::Death { id: 1 }
            }]
        );
    }

    #[test]
    fn zero_duration_has_single_snapshot() {
        let cfg = SimConfig {
            duration: 0.0,
            ..SimConfig::default()
        };
        let trace = run_simulation(&cfg, &SpheroidGroup::Large.parameters()).unwrap();
        assert_eq!(trace.snapshots.len(), 1);
        assert_eq!(trace.daily[0].cells, 1);
    }

    #[test]
    fn high_consumption_dies_out() {
        let mut p = SpheroidGroup::Large.parameters();
        p.metabolic.k_ene = 0.1;
        let cfg = SimConfig {
            duration: 1440.0,
            ..SimConfig::desk_scale()
        };
        let trace = run_simulation(&cfg, &p).unwrap();
        assert_eq!(trace.final_snapshot().cells.len(), 0);
        assert_eq!(trace.deaths(), 1);
    }

    #[test]
    fn event_log_balances() {
        let cfg = SimConfig {
            duration: 3.0 * 1440.0,
            initial_cells: 4,
            placement_radius: 20.0,
            ..SimConfig::desk_scale()
        };
        let p = SpheroidGroup::Large.parameters();
        let trace = run_simulation(&cfg, &p).unwrap();
        let last = trace.final_snapshot().cells.len();
        assert_eq!(last, 4 + trace.divisions() - trace.deaths());
        let times: Vec<f64> = trace.snapshots.iter().map(|s| s.time).collect();
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        let mut ids: Vec<u64> = trace.final_snapshot().cells.iter().map(|c| c.id).collect();
        ids.dedup();
        assert_eq!(ids.len(), last);
    }

    #[test]
    fn population_cap_is_enforced() {
        let cfg = SimConfig {
            duration: 5.0 * 1440.0,
            population_cap: 3,
            seed: 3,
            ..SimConfig::desk_scale()
        };
        let err = run_simulation(&cfg, &SpheroidGroup::Large.parameters()).unwrap_err();
        assert!(matches!(err, Error::Resource { cap: 3, .. }));
    }
}
