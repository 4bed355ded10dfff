//! Centre-based overdamped mechanics: pair potentials, random locomotion and
//! Stokes drag.

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::geom::{ForceVector, Vec3};
use crate::lifecycle::{CellAgent, CellState};
use crate::params::MechanicalParams;
use crate::rng::{Purpose, RngStream, Substream};

/// Distances below this are treated as coincident (µm).
pub const COINCIDENCE_TOL: f64 = 1e-9;

/// Adhesive pull on the cell at `x_i` from the cell at `x_j`.
pub fn adhesion_force(x_i: Vec3, x_j: Vec3, params: &MechanicalParams) -> Result<ForceVector> {
    let r = x_j - x_i;
    let d = r.norm();
    if d < COINCIDENCE_TOL {
        return Err(Error::SingularDirection);
    }
    Ok(adhesion_from_offset(r, d, params))
}

#[inline]
fn adhesion_from_offset(r: Vec3, d: f64, params: &MechanicalParams) -> ForceVector {
    if d > params.adhesion_radius {
        return Vec3::ZERO;
    }
    let s = 1.0 - d / params.adhesion_radius;
    r * (params.c_cca * s * s / d)
}

/// Repulsive push on the cell at `x_i` away from the cell at `x_j`.
///
/// For coincident centres the direction is drawn from `rng`.
pub fn repulsion_force(
    x_i: Vec3,
    x_j: Vec3,
    r_i: f64,
    r_j: f64,
    params: &MechanicalParams,
    rng: &mut Substream,
) -> ForceVector {
    let r = x_j - x_i;
    let d = r.norm();
    if d < COINCIDENCE_TOL {
        return rng.unit_vector() * params.c_ccr;
    }
    repulsion_from_offset(r, d, r_i + r_j, params)
}

#[inline]
fn repulsion_from_offset(r: Vec3, d: f64, r_d: f64, params: &MechanicalParams) -> ForceVector {
    if d > r_d {
        return Vec3::ZERO;
    }
    let s = 1.0 - d / r_d;
    r * (-params.c_ccr * s * s / d)
}

/// Magnitude of the locomotive force for a uniform draw `p`.
pub fn locomotive_magnitude(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain("p", p, "[0, 1]"));
    }
    Ok(((1.56 * p + 3.27) * p + 0.07) * p + 0.06)
}

/// Random locomotive force of a proliferating cell: `scale` times the
/// polynomial magnitude, uniform direction. Quiescent and apoptotic cells
/// do not migrate.
pub fn locomotive_force(cell: &CellAgent, scale: f64, rng: &mut Substream) -> ForceVector {
    if cell.state != CellState::Proliferating {
        return Vec3::ZERO;
    }
    let p = rng.uniform();
    let magnitude = scale * locomotive_magnitude(p).expect("uniform draw lies in [0, 1)");
    rng.unit_vector() * magnitude
}

/// Overdamped velocity (µm/min) under a net force.
pub fn velocity(net_force: ForceVector, params: &MechanicalParams) -> Vec3 {
    net_force / params.drag_coefficient()
}

/// Uniform grid over cell centres for fixed-radius neighbour queries.
///
/// Bins over the bounding box are stored densely when the box is small
/// compared with the population, and hashed otherwise. Members of a bin are
/// kept in ascending index order.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    bin: f64,
    bins: Bins,
}

#[derive(Debug, Clone)]
enum Bins {
    Dense {
        origin: [i64; 3],
        dims: [i64; 3],
        /// `start[b]..start[b + 1]` indexes `order` for bin `b`.
        start: Vec<u32>,
        order: Vec<u32>,
    },
    Sparse(FxHashMap<[i64; 3], Vec<usize>>),
}

/// Dense storage is used while bins per cell stay below this.
const DENSE_BINS_PER_CELL: i64 = 32;

impl NeighborIndex {
    pub fn build(positions: &[Vec3], bin: f64) -> Self {
        assert!(bin > 0.0, "bin size must be positive");
        let keys: Vec<[i64; 3]> = positions.iter().map(|&p| Self::key(p, bin)).collect();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for k in &keys {
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
        }
        let extent = |a: usize| hi[a].checked_sub(lo[a]).and_then(|d| d.checked_add(1));
        let dims = match (extent(0), extent(1), extent(2)) {
            (Some(x), Some(y), Some(z)) if !keys.is_empty() => [x, y, z],
            _ => [i64::MAX, 1, 1],
        };
        let volume = dims[0].saturating_mul(dims[1]).saturating_mul(dims[2]);
        let limit = (DENSE_BINS_PER_CELL * positions.len() as i64).max(4096);
        let bins = if volume <= limit {
            let linear = |k: &[i64; 3]| {
                (((k[0] - lo[0]) * dims[1] + (k[1] - lo[1])) * dims[2] + (k[2] - lo[2])) as usize
            };
            let mut start = vec![0u32; volume as usize + 1];
            for k in &keys {
                start[linear(k) + 1] += 1;
            }
            for b in 0..volume as usize {
                start[b + 1] += start[b];
            }
            let mut fill = start.clone();
            let mut order = vec![0u32; keys.len()];
            for (i, k) in keys.iter().enumerate() {
                let b = linear(k);
                order[fill[b] as usize] = i as u32;
                fill[b] += 1;
            }
            Bins::Dense {
                origin: lo,
                dims,
                start,
                order,
            }
        } else {
            let mut map: FxHashMap<[i64; 3], Vec<usize>> = FxHashMap::default();
            for (i, k) in keys.into_iter().enumerate() {
                map.entry(k).or_default().push(i);
            }
            Bins::Sparse(map)
        };
        Self { bin, bins }
    }

    pub fn bin_size(&self) -> f64 {
        self.bin
    }

    #[inline]
    fn key(p: Vec3, bin: f64) -> [i64; 3] {
        [
            (p.x / bin).floor() as i64,
            (p.y / bin).floor() as i64,
            (p.z / bin).floor() as i64,
        ]
    }

    #[inline]
    fn visit_bin(&self, k: [i64; 3], mut f: impl FnMut(usize)) {
        match &self.bins {
            Bins::Dense {
                origin,
                dims,
                start,
                order,
            } => {
                let r = [k[0] - origin[0], k[1] - origin[1], k[2] - origin[2]];
                if (0..3).any(|a| r[a] < 0 || r[a] >= dims[a]) {
                    return;
                }
                let b = ((r[0] * dims[1] + r[1]) * dims[2] + r[2]) as usize;
                for &j in &order[start[b] as usize..start[b + 1] as usize] {
                    f(j as usize);
                }
            }
            Bins::Sparse(map) => {
                if let Some(members) = map.get(&k) {
                    members.iter().for_each(|&j| f(j));
                }
            }
        }
    }

    /// Indices `j != i` with `|x_j - x_i| <= radius`, ascending.
    ///
    /// `radius` must not exceed the bin size.
    pub fn neighbors_within(
        &self,
        positions: &[Vec3],
        i: usize,
        radius: f64,
        out: &mut Vec<usize>,
    ) {
        assert!(radius <= self.bin, "query radius exceeds bin size");
        out.clear();
        let xi = positions[i];
        let [cx, cy, cz] = Self::key(xi, self.bin);
        let r2 = radius * radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    self.visit_bin([cx + dx, cy + dy, cz + dz], |j| {
                        if j != i && (positions[j] - xi).norm_squared() <= r2 {
                            out.push(j);
                        }
                    });
                }
            }
        }
        out.sort_unstable();
    }

    /// All unordered pairs `(i, j)`, `i < j`, within `radius`, sorted.
    pub fn pairs_within(&self, positions: &[Vec3], radius: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut buf = Vec::new();
        for i in 0..positions.len() {
            self.neighbors_within(positions, i, radius, &mut buf);
            out.extend(buf.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }
}

/// Everything [`step_positions`] needs besides the cells and constants.
#[derive(Debug, Clone, Copy)]
pub struct StepContext {
    pub dt: f64,
    /// Simulated time at the start of the step (min).
    pub time: f64,
    /// Step counter, used to key random draws.
    pub step: u64,
    pub domain_half_extent: f64,
    pub locomotion_scale: f64,
    /// Minutes a sampled locomotive force is held.
    pub locomotion_persistence: f64,
    pub rng: RngStream,
}

/// Key of the random stream shared by an unordered pair of cells.
fn pair_key(a: u64, b: u64) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    RngStream::child_key(lo, hi)
}

/// Sum of cell–cell forces on cell `i`.
fn pair_forces(
    cells: &[CellAgent],
    positions: &[Vec3],
    neighbors: &[usize],
    i: usize,
    params: &MechanicalParams,
    ctx: &StepContext,
) -> ForceVector {
    let xi = positions[i];
    let mut f = Vec3::ZERO;
    for &j in neighbors {
        if cells[j].state == CellState::Apoptotic {
            continue;
        }
        let r = positions[j] - xi;
        let d = r.norm();
        if d < COINCIDENCE_TOL {
            // The lower id takes +u, the higher id -u.
            let mut s = ctx.rng.substream(
                pair_key(cells[i].id, cells[j].id),
                Purpose::Repulsion,
                ctx.step,
            );
            let u = s.unit_vector() * params.c_ccr;
            f += if cells[i].id < cells[j].id { u } else { -u };
            continue;
        }
        f += adhesion_from_offset(r, d, params);
        f += repulsion_from_offset(r, d, cells[i].radius + cells[j].radius, params);
    }
    f
}

#[inline]
fn reflect(v: f64, half: f64) -> f64 {
    let mut v = v;
    // Repeat for the (pathological) case of a jump longer than the domain.
    for _ in 0..8 {
        if v > half {
            v = 2.0 * half - v;
        } else if v < -half {
            v = -2.0 * half - v;
        } else {
            break;
        }
    }
    v.clamp(-half, half)
}

/// Redraws expired locomotive forces. Returns the force each cell applies
/// this step.
fn refresh_locomotion(cells: &mut [CellAgent], params: &MechanicalParams, ctx: &StepContext) {
    let unit = params.locomotion_unit;
    for cell in cells.iter_mut() {
        if cell.state != CellState::Proliferating {
            cell.locomotion = Vec3::ZERO;
            cell.locomotion_expires = f64::NEG_INFINITY;
            continue;
        }
        if ctx.time + 1e-9 >= cell.locomotion_expires {
            let mut s = ctx.rng.substream(cell.key, Purpose::Locomotion, ctx.step);
            cell.locomotion = locomotive_force(cell, ctx.locomotion_scale, &mut s) * unit;
            cell.locomotion_expires = ctx.time + ctx.locomotion_persistence;
        }
    }
}

/// Advances every cell by one forward-Euler step from a snapshot of the
/// current positions.
pub fn step_positions(
    cells: &mut [CellAgent],
    params: &MechanicalParams,
    ctx: &StepContext,
) -> Result<()> {
    if !(ctx.dt > 0.0) {
        return Err(Error::domain("dt", ctx.dt, "(0, inf)"));
    }
    refresh_locomotion(cells, params, ctx);
    let positions: Vec<Vec3> = cells.iter().map(|c| c.position).collect();
    let range = params.interaction_range();
    let index = NeighborIndex::build(&positions, range);
    let cells_ro: &[CellAgent] = cells;
    let displacements: Vec<Vec3> = (0..cells_ro.len())
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            let cell = &cells_ro[i];
            if cell.state == CellState::Apoptotic {
                return Vec3::ZERO;
            }
            index.neighbors_within(&positions, i, range, buf);
            let f = pair_forces(cells_ro, &positions, buf, i, params, ctx) + cell.locomotion;
            velocity(f, params) * ctx.dt
        })
        .collect();
    let half = ctx.domain_half_extent;
    for (cell, d) in cells.iter_mut().zip(displacements) {
        let p = cell.position + d;
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite position for cell {}",
                cell.id
            )));
        }
        cell.position = Vec3::new(reflect(p.x, half), reflect(p.y, half), reflect(p.z, half));
    }
    Ok(())
}
