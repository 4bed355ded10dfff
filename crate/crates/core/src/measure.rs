//! Morphology of a cell snapshot: spheroid detection, projected area and
//! volume per cell.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::lifecycle::{CellRecord, CellState};
use crate::mechanics::NeighborIndex;

/// Link distance of the default clustering: contact plus a quarter radius.
pub fn default_link_distance(radius: f64) -> f64 {
    2.25 * radius
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    /// Single-linkage distance between cell centres (µm).
    pub link_distance: f64,
    /// Raster pixel edge for projected areas (µm).
    pub pixel: f64,
}

impl MeasureConfig {
    pub fn for_radius(radius: f64) -> Self {
        Self {
            link_distance: default_link_distance(radius),
            pixel: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpheroidCluster {
    /// Member ids, ascending.
    pub members: Vec<u64>,
    /// Positions of the members in the input slice, matching `members`.
    pub indices: Vec<usize>,
    pub centroid: Vec3,
}

impl SpheroidCluster {
    pub fn cell_count(&self) -> usize {
        self.members.len()
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Connected components of living cells under the relation
/// `|x_i - x_j| <= link_distance`. Clusters are ordered by smallest member id.
pub fn detect_spheroids(cells: &[CellRecord], link_distance: f64) -> Vec<SpheroidCluster> {
    assert!(link_distance > 0.0, "link distance must be positive");
    let alive: Vec<usize> = (0..cells.len())
        .filter(|&i| cells[i].state != CellState::Apoptotic)
        .collect();
    let positions: Vec<Vec3> = alive.iter().map(|&i| cells[i].position).collect();
    let index = NeighborIndex::build(&positions, link_distance);
    let mut parent: Vec<usize> = (0..alive.len()).collect();
    for (a, b) in index.pairs_within(&positions, link_distance) {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for k in 0..alive.len() {
        let root = find(&mut parent, k);
        groups.entry(root).or_default().push(alive[k]);
    }
    let mut clusters: Vec<SpheroidCluster> = groups
        .into_values()
        .map(|mut idx| {
            idx.sort_by_key(|&i| cells[i].id);
            let n = idx.len() as f64;
            let centroid = idx
                .iter()
                .fold(Vec3::ZERO, |acc, &i| acc + cells[i].position)
                / n;
            SpheroidCluster {
                members: idx.iter().map(|&i| cells[i].id).collect(),
                indices: idx,
                centroid,
            }
        })
        .collect();
    clusters.sort_by_key(|c| c.members[0]);
    clusters
}

/// Area of the union of the members' disks in the xy plane, rasterised on a
/// grid of `pixel`-sized squares aligned with the origin. A pixel counts when
/// its centre lies inside some disk.
pub fn projected_area(
    cluster: &SpheroidCluster,
    cells: &[CellRecord],
    radius: f64,
    pixel: f64,
) -> f64 {
    if cluster.indices.is_empty() {
        return 0.0;
    }
    let centres: Vec<(f64, f64)> = cluster
        .indices
        .iter()
        .map(|&i| (cells[i].position.x, cells[i].position.y))
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &centres {
        x0 = x0.min(x - radius);
        x1 = x1.max(x + radius);
        y0 = y0.min(y - radius);
        y1 = y1.max(y + radius);
    }
    let i0 = (x0 / pixel).floor() as i64;
    let j0 = (y0 / pixel).floor() as i64;
    let nx = ((x1 / pixel).ceil() as i64 - i0 + 1) as usize;
    let ny = ((y1 / pixel).ceil() as i64 - j0 + 1) as usize;
    let mut covered = vec![false; nx * ny];
    let r2 = radius * radius;
    for &(cx, cy) in &centres {
        let jlo = (((cy - radius) / pixel).floor() as i64 - j0).max(0) as usize;
        let jhi = ((((cy + radius) / pixel).ceil() as i64 - j0) as usize).min(ny - 1);
        for j in jlo..=jhi {
            let py = (j as i64 + j0) as f64 * pixel + 0.5 * pixel;
            let dy = py - cy;
            let rem = r2 - dy * dy;
            if rem < 0.0 {
                continue;
            }
            let half = rem.sqrt();
            // Pixel centres px = (i + i0 + 0.5) * pixel within [cx - half, cx + half].
            let ilo = ((cx - half) / pixel - 0.5).ceil() as i64 - i0;
            let ihi = ((cx + half) / pixel - 0.5).floor() as i64 - i0;
            let ilo = ilo.max(0) as usize;
            if ihi < 0 {
                continue;
            }
            let ihi = (ihi as usize).min(nx - 1);
            if ilo > ihi {
                continue;
            }
            covered[j * nx + ilo..=j * nx + ihi].fill(true);
        }
    }
    covered.iter().filter(|&&c| c).count() as f64 * pixel * pixel
}

/// Mean over directions of the support function of the 26 lattice
/// directions, i.e. half the mean width of their convex hull.
pub const LATTICE_MEAN_SUPPORT: f64 = 0.958_645;

fn lattice_directions() -> Vec<Vec3> {
    let mut dirs = Vec::with_capacity(26);
    for a in -1..=1i32 {
        for b in -1..=1i32 {
            for c in -1..=1i32 {
                if (a, b, c) != (0, 0, 0) {
                    let v = Vec3::new(a as f64, b as f64, c as f64);
                    dirs.push(v / v.norm());
                }
            }
        }
    }
    dirs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    /// Volume per member cell (µm³).
    pub per_cell: f64,
    /// True when the hull was degenerate and the union-of-spheres volume
    /// was used instead.
    pub fallback: bool,
}

/// Volume occupied per cell. For clusters with at least four non-coplanar
/// members this is the convex hull of points sampled on every member sphere
/// in 26 lattice directions, divided by the member count. The sampling
/// radius is stretched so the sampled polytope has the sphere's mean width.
/// Smaller or flat clusters fall back to the exact union-of-spheres volume.
pub fn volume_per_cell(
    cluster: &SpheroidCluster,
    cells: &[CellRecord],
    radius: f64,
) -> VolumeEstimate {
    let n = cluster.indices.len();
    if n == 0 {
        return VolumeEstimate {
            per_cell: 0.0,
            fallback: true,
        };
    }
    let centres: Vec<Vec3> = cluster.indices.iter().map(|&i| cells[i].position).collect();
    if n >= 4 {
        let sample = radius / LATTICE_MEAN_SUPPORT;
        let dirs = lattice_directions();
        let points: Vec<Vec3> = centres
            .iter()
            .flat_map(|&c| dirs.iter().map(move |&d| c + d * sample))
            .collect();
        if !centres_coplanar(&centres, radius) {
            if let Some(v) = convex_hull_volume(&points) {
                return VolumeEstimate {
                    per_cell: v / n as f64,
                    fallback: false,
                };
            }
        }
    }
    VolumeEstimate {
        per_cell: union_of_spheres_volume(&centres, radius, radius / 64.0) / n as f64,
        fallback: true,
    }
}

fn centres_coplanar(centres: &[Vec3], scale: f64) -> bool {
    hull_seed(centres, 1e-6 * scale).is_none()
}

/// Four affinely independent points, or `None` when all lie within `eps` of
/// a plane.
fn hull_seed(points: &[Vec3], eps: f64) -> Option<[usize; 4]> {
    let a = 0;
    let b = (1..points.len()).max_by(|&i, &j| {
        let di = (points[i] - points[a]).norm_squared();
        let dj = (points[j] - points[a]).norm_squared();
        di.total_cmp(&dj)
    })?;
    let ab = points[b] - points[a];
    if ab.norm() <= eps {
        return None;
    }
    let c = (0..points.len()).max_by(|&i, &j| {
        let ci = ab.cross(points[i] - points[a]).norm_squared();
        let cj = ab.cross(points[j] - points[a]).norm_squared();
        ci.total_cmp(&cj)
    })?;
    let normal = ab.cross(points[c] - points[a]);
    if normal.norm() <= eps * ab.norm() {
        return None;
    }
    let unit = normal / normal.norm();
    let d = (0..points.len()).max_by(|&i, &j| {
        let di = unit.dot(points[i] - points[a]).abs();
        let dj = unit.dot(points[j] - points[a]).abs();
        di.total_cmp(&dj)
    })?;
    if unit.dot(points[d] - points[a]).abs() <= eps {
        return None;
    }
    Some([a, b, c, d])
}

/// Volume of the convex hull of `points` by incremental construction;
/// `None` for degenerate (flat) input.
pub fn convex_hull_volume(points: &[Vec3]) -> Option<f64> {
    if points.len() < 4 {
        return None;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    let scale = (hi - lo).norm();
    let eps = 1e-10 * scale.max(1e-300);
    let [a, b, c, d] = hull_seed(points, eps)?;
    let interior = (points[a] + points[b] + points[c] + points[d]) / 4.0;

    struct Face {
        v: [usize; 3],
        normal: Vec3,
        offset: f64,
    }
    let make = |v: [usize; 3]| -> Face {
        let n = (points[v[1]] - points[v[0]]).cross(points[v[2]] - points[v[0]]);
        let normal = n / n.norm();
        Face {
            v,
            normal,
            offset: normal.dot(points[v[0]]),
        }
    };
    let oriented = |v: [usize; 3]| -> Face {
        let f = make(v);
        if f.normal.dot(interior) > f.offset {
            make([v[0], v[2], v[1]])
        } else {
            f
        }
    };
    let mut faces: Vec<Face> = vec![
        oriented([a, b, c]),
        oriented([a, b, d]),
        oriented([a, c, d]),
        oriented([b, c, d]),
    ];
    for (p, &x) in points.iter().enumerate() {
        if [a, b, c, d].contains(&p) {
            continue;
        }
        let visible: Vec<bool> = faces
            .iter()
            .map(|f| f.normal.dot(x) - f.offset > eps)
            .collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for k in 0..3 {
                edges.insert((f.v[k], f.v[(k + 1) % 3]));
            }
        }
        let mut horizon: Vec<(usize, usize)> = edges
            .iter()
            .filter(|&&(u, v)| !edges.contains(&(v, u)))
            .copied()
            .collect();
        horizon.sort_unstable();
        let mut kept: Vec<Face> = faces
            .into_iter()
            .zip(visible)
            .filter(|(_, v)| !v)
            .map(|(f, _)| f)
            .collect();
        for (u, v) in horizon {
            kept.push(make([u, v, p]));
        }
        faces = kept;
    }
    let volume: f64 = faces
        .iter()
        .map(|f| {
            let (p0, p1, p2) = (
                points[f.v[0]] - interior,
                points[f.v[1]] - interior,
                points[f.v[2]] - interior,
            );
            p0.dot(p1.cross(p2)) / 6.0
        })
        .sum();
    Some(volume.abs())
}

/// Volume of a union of equal spheres: midpoint quadrature over xy columns
/// with exact interval unions along z.
pub fn union_of_spheres_volume(centres: &[Vec3], radius: f64, h: f64) -> f64 {
    if centres.is_empty() {
        return 0.0;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for c in centres {
        x0 = x0.min(c.x - radius);
        x1 = x1.max(c.x + radius);
        y0 = y0.min(c.y - radius);
        y1 = y1.max(c.y + radius);
    }
    let nx = ((x1 - x0) / h).ceil() as usize;
    let ny = ((y1 - y0) / h).ceil() as usize;
    let r2 = radius * radius;
    let mut total = 0.0;
    let mut spans: Vec<(f64, f64)> = Vec::new();
    for i in 0..nx {
        let px = x0 + (i as f64 + 0.5) * h;
        for j in 0..ny {
            let py = y0 + (j as f64 + 0.5) * h;
            spans.clear();
            for c in centres {
                let rem = r2 - (px - c.x).powi(2) - (py - c.y).powi(2);
                if rem > 0.0 {
                    let half = rem.sqrt();
                    spans.push((c.z - half, c.z + half));
                }
            }
            if spans.is_empty() {
                continue;
            }
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut lo, mut hi) = spans[0];
            let mut len = 0.0;
            for &(a, b) in &spans[1..] {
                if a > hi {
                    len += hi - lo;
                    lo = a;
                    hi = b;
                } else {
                    hi = hi.max(b);
                }
            }
            len += hi - lo;
            total += len;
        }
    }
    total * h * h
}

/// Size class from a day-7 projected area.
pub fn group_by_quantiles(area: f64, q1: f64, q3: f64) -> crate::params::SpheroidGroup {
    use crate::params::SpheroidGroup;
    assert!(q1 < q3, "quantile thresholds must be ordered");
    if area < q1 {
        SpheroidGroup::Small
    } else if area <= q3 {
        SpheroidGroup::Medium
    } else {
        SpheroidGroup::Large
    }
}

/// Labels for a list of day-7 areas.
pub fn group_areas(areas: &[f64], q1: f64, q3: f64) -> Vec<crate::params::SpheroidGroup> {
    areas
        .iter()
        .map(|&a| group_by_quantiles(a, q1, q3))
        .collect()
}

/// Reference quantile thresholds of the experimental day-7 areas (µm²).
pub const AREA_Q1: f64 = 2500.0;
pub const AREA_Q3: f64 = 7500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpheroidMetrics {
    pub cells: usize,
    pub area: f64,
    pub volume_per_cell: f64,
    pub volume_fallback: bool,
    pub centroid: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphologyReport {
    pub spheroids: Vec<SpheroidMetrics>,
    pub total_cells: usize,
}

impl MorphologyReport {
    pub fn spheroid_count(&self) -> usize {
        self.spheroids.len()
    }

    /// The spheroid with most cells (ties: larger area, then first found).
    pub fn main(&self) -> Option<&SpheroidMetrics> {
        self.spheroids.iter().reduce(|best, s| {
            if (s.cells, s.area) > (best.cells, best.area) {
                s
            } else {
                best
            }
        })
    }

    pub fn main_area(&self) -> f64 {
        self.main().map_or(0.0, |s| s.area)
    }

    pub fn mean_area(&self) -> f64 {
        mean(self.spheroids.iter().map(|s| s.area))
    }

    pub fn mean_cells_per_spheroid(&self) -> f64 {
        mean(self.spheroids.iter().map(|s| s.cells as f64))
    }

    pub fn main_volume_per_cell(&self) -> f64 {
        self.main().map_or(0.0, |s| s.volume_per_cell)
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// All morphology metrics of one snapshot.
pub fn measure_snapshot(
    cells: &[CellRecord],
    radius: f64,
    cfg: &MeasureConfig,
) -> MorphologyReport {
    let clusters = detect_spheroids(cells, cfg.link_distance);
    let spheroids = clusters
        .iter()
        .map(|c| {
            let v = volume_per_cell(c, cells, radius);
            SpheroidMetrics {
                cells: c.cell_count(),
                area: projected_area(c, cells, radius, cfg.pixel),
                volume_per_cell: v.per_cell,
                volume_fallback: v.fallback,
                centroid: c.centroid,
            }
        })
        .collect();
    MorphologyReport {
        spheroids,
        total_cells: clusters.iter().map(SpheroidCluster::cell_count).sum(),
    }
}
