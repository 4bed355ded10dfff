//! CSV and JSON interchange formats. Every CSV has a header row; columns
//! carrying physical quantities name their unit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::lifecycle::{CellRecord, CellState, SimulationTrace};
use crate::measure::{measure_snapshot, MeasureConfig, MorphologyReport};
use crate::pipeline::{ReplicateMetrics, SweepOutcome, SweepSpace};
use crate::stats::TestReport;
use crate::surrogate::TrainingSet;
use crate::uq::{ObservationSet, Posterior, SobolResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn schema(path: &Path, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Shortest round-trip text of `x`, in exponent form for very small or
/// very large magnitudes.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn num(x: f64) -> String {
    format_float(x)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| schema(path, e.to_string()))
}

/// Per-day aggregates of a run: population counts and the morphology of
/// the snapshot taken that day.
pub fn write_daily_csv<W: Write>(
    out: W,
    trace: &SimulationTrace,
    cfg: &MeasureConfig,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "day",
        "time_min",
        "cells",
        "proliferating",
        "quiescent",
        "divisions",
        "deaths",
        "mean_atp",
        "spheroids",
        "main_area_um2",
        "mean_area_um2",
        "main_volume_per_cell_um3",
    ])?;
    for d in &trace.daily {
        let m = trace
            .snapshots
            .iter()
            .find(|s| s.day == d.day)
            .map(|s| measure_snapshot(&s.cells, trace.radius, cfg))
            .unwrap_or(MorphologyReport {
                spheroids: Vec::new(),
                total_cells: 0,
            });
        w.write_record([
            d.day.to_string(),
            num(d.time),
            d.cells.to_string(),
            d.proliferating.to_string(),
            d.quiescent.to_string(),
            d.divisions.to_string(),
            d.deaths.to_string(),
            num(d.mean_atp),
            m.spheroid_count().to_string(),
            num(m.main_area()),
            num(m.mean_area()),
            num(m.main_volume_per_cell()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Every cell of every snapshot.
pub fn write_cells_csv<W: Write>(out: W, trace: &SimulationTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "id", "x_um", "y_um", "z_um", "state", "atp"])?;
    for s in &trace.snapshots {
        for c in &s.cells {
            w.write_record([
                s.day.to_string(),
                c.id.to_string(),
                num(c.position.x),
                num(c.position.y),
                num(c.position.z),
                c.state.label().to_string(),
                num(c.atp),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Snapshots read back from a cell table, ordered by day.
pub fn read_cells_csv(path: &Path) -> Result<Vec<(u32, Vec<CellRecord>)>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let cols = ["day", "id", "x_um", "y_um", "z_um", "state", "atp"].map(|name| {
        header
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| schema(path, format!("missing column '{name}'")))
    });
    let [day, id, x, y, z, state, atp] = {
        let mut out = [0usize; 7];
        for (o, c) in out.iter_mut().zip(cols) {
            *o = c?;
        }
        out
    };
    let mut by_day: BTreeMap<u32, Vec<CellRecord>> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| schema(path, e.to_string()))?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let bad = |k: usize| {
            schema(
                path,
                format!("line {line}: invalid {} '{}'", header[k], field(k)),
            )
        };
        let float = |k: usize| {
            field(k)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(k))
        };
        let d: u32 = field(day).parse().map_err(|_| bad(day))?;
        let record = CellRecord {
            id: field(id).parse().map_err(|_| bad(id))?,
            position: Vec3::new(float(x)?, float(y)?, float(z)?),
            state: CellState::parse(field(state)).ok_or_else(|| bad(state))?,
            atp: float(atp)?,
        };
        by_day.entry(d).or_default().push(record);
    }
    Ok(by_day.into_iter().collect())
}

/// One row per spheroid of each `(replicate, day, report)`.
pub fn write_spheroids_csv<W: Write>(
    out: W,
    rows: &[(usize, u32, MorphologyReport)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "replicate",
        "day",
        "spheroid",
        "cells",
        "area_um2",
        "volume_per_cell_um3",
        "volume_fallback",
        "centroid_x_um",
        "centroid_y_um",
        "centroid_z_um",
    ])?;
    for (replicate, day, report) in rows {
        for (k, s) in report.spheroids.iter().enumerate() {
            w.write_record([
                replicate.to_string(),
                day.to_string(),
                k.to_string(),
                s.cells.to_string(),
                num(s.area),
                num(s.volume_per_cell),
                s.volume_fallback.to_string(),
                num(s.centroid.x),
                num(s.centroid.y),
                num(s.centroid.z),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Metric columns of the per-replicate aggregate table, in file order.
pub const METRIC_COLUMNS: [&str; 5] = [
    "total_cells",
    "spheroid_count",
    "main_area_um2",
    "mean_area_um2",
    "main_volume_per_cell_um3",
];

pub fn write_metrics_csv<W: Write>(out: W, rows: &[ReplicateMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["replicate", "seed", "day"];
    header.extend(METRIC_COLUMNS);
    w.write_record(&header)?;
    for r in rows {
        w.write_record([
            r.replicate.to_string(),
            r.seed.to_string(),
            r.day.to_string(),
            r.total_cells.to_string(),
            r.spheroid_count.to_string(),
            num(r.main_area),
            num(r.mean_area),
            num(r.main_volume_per_cell),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A numeric table read from CSV: column names and rows of values.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Reads a CSV whose cells are all numeric.
pub fn read_numeric_csv(path: &Path) -> Result<NumericTable> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if columns.is_empty() {
        return Err(schema(path, "missing header row"));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| schema(path, e.to_string()))?;
        let row = rec
            .iter()
            .zip(&columns)
            .map(|(cell, col)| {
                cell.trim().parse::<f64>().map_err(|_| {
                    schema(
                        path,
                        format!("line {}: column '{col}' holds non-numeric '{cell}'", i + 2),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(NumericTable { columns, rows })
}

/// Sweep results in long form: one row per sample and day. Failed samples
/// keep a single row with empty day and area and the failure message.
pub fn write_sweep_csv<W: Write>(
    out: W,
    names: &[String],
    outcomes: &[SweepOutcome],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sample".to_string()];
    header.extend(names.iter().cloned());
    header.extend(["day".into(), "area_um2".into(), "status".into()]);
    w.write_record(&header)?;
    for o in outcomes {
        let mut base = vec![o.sample.to_string()];
        base.extend(o.theta.iter().map(|&v| num(v)));
        match &o.failure {
            Some(msg) => {
                let mut row = base.clone();
                row.extend([String::new(), String::new(), format!("failed: {msg}")]);
                w.write_record(&row)?;
            }
            None => {
                for &(day, area) in &o.areas {
                    let mut row = base.clone();
                    row.extend([day.to_string(), num(area), "ok".into()]);
                    w.write_record(&row)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a sweep CSV into one training set per day, skipping failed rows.
/// The sweep space is recognised from the parameter columns.
pub fn read_training_csv(path: &Path) -> Result<(SweepSpace, Vec<TrainingSet>)> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| schema(path, format!("missing column '{name}'")))
    };
    let day_col = find("day")?;
    let area_col = find("area_um2")?;
    let status_col = header.iter().position(|c| c == "status");
    let start = usize::from(header.first().map(String::as_str) == Some("sample"));
    let names: Vec<String> = header[start..day_col].to_vec();
    let space = [SweepSpace::Calibrated, SweepSpace::Full]
        .into_iter()
        .find(|s| s.names() == names)
        .ok_or_else(|| {
            schema(
                path,
                format!("parameter columns {names:?} match no sweep space"),
            )
        })?;

    let mut by_day: BTreeMap<u32, (Vec<Vec<f64>>, Vec<f64>)> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| schema(path, e.to_string()))?;
        let line = i + 2;
        if let Some(k) = status_col {
            if rec.get(k).is_some_and(|s| s != "ok") {
                continue;
            }
        }
        let parse = |k: usize| -> Result<f64> {
            let cell = rec.get(k).unwrap_or("");
            cell.trim().parse::<f64>().map_err(|_| {
                schema(
                    path,
                    format!("line {line}: column '{}' holds '{cell}'", header[k]),
                )
            })
        };
        let theta = (start..day_col).map(parse).collect::<Result<Vec<_>>>()?;
        let day = rec
            .get(day_col)
            .and_then(|s| s.trim().parse::<u32>().ok())
            .ok_or_else(|| schema(path, format!("line {line}: invalid day")))?;
        let area = parse(area_col)?;
        let entry = by_day.entry(day).or_default();
        entry.0.push(theta);
        entry.1.push(area);
    }
    if by_day.is_empty() {
        return Err(schema(path, "no successful rows"));
    }
    let sets = by_day
        .into_iter()
        .map(|(day, (inputs, outputs))| {
            TrainingSet::new(names.clone(), inputs, outputs, space.bounds(), Some(day))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((space, sets))
}

/// Appends finished sweep samples to a JSON-lines checkpoint.
pub fn append_checkpoint(path: &Path, outcomes: &[SweepOutcome]) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    for o in outcomes {
        let mut line = serde_json::to_string(o)?;
        line.push('\n');
        f.write_all(line.as_bytes())?;
    }
    f.flush()?;
    Ok(())
}

/// Samples recorded in a checkpoint. A truncated final line, left by an
/// interrupted write, is ignored.
pub fn read_checkpoint(path: &Path) -> Result<Vec<SweepOutcome>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(open(path)?);
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SweepOutcome>(line) {
            Ok(o) => out.push(o),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => return Err(schema(path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

/// Observed areas with columns `group`, `day` and `area_um2`. Groups keep
/// their order of first appearance.
pub fn read_observations_csv(path: &Path) -> Result<Vec<ObservationSet>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let find = |names: &[&str]| {
        header
            .iter()
            .position(|c| names.contains(&c.as_str()))
            .ok_or_else(|| schema(path, format!("missing column '{}'", names[0])))
    };
    let g = find(&["group"])?;
    let d = find(&["day"])?;
    let a = find(&["area_um2", "area"])?;
    let mut order: Vec<String> = Vec::new();
    let mut data: BTreeMap<String, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| schema(path, e.to_string()))?;
        let line = i + 2;
        let group = rec.get(g).unwrap_or("").trim().to_string();
        if group.is_empty() {
            return Err(schema(path, format!("line {line}: empty group")));
        }
        let day = rec
            .get(d)
            .and_then(|s| s.trim().parse::<u32>().ok())
            .ok_or_else(|| schema(path, format!("line {line}: invalid day")))?;
        let area = rec
            .get(a)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| schema(path, format!("line {line}: invalid area")))?;
        if !data.contains_key(&group) {
            order.push(group.clone());
        }
        data.entry(group)
            .or_default()
            .entry(day)
            .or_default()
            .push(area);
    }
    if order.is_empty() {
        return Err(schema(path, "no observations"));
    }
    order
        .into_iter()
        .map(|group| {
            let days = data.remove(&group).expect("group recorded");
            let (days, areas): (Vec<u32>, Vec<Vec<f64>>) = days.into_iter().unzip();
            ObservationSet::new(group, days, areas, None)
        })
        .collect()
}

pub fn write_observations_csv<W: Write>(out: W, sets: &[ObservationSet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "day", "area_um2"])?;
    for s in sets {
        for (day, areas) in s.days.iter().zip(&s.areas) {
            for &a in areas {
                w.write_record([s.group.clone(), day.to_string(), num(a)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Prior support per parameter from a CSV with columns `parameter`,
/// `lower` and `upper`. Every name in `names` must appear exactly once.
pub fn read_priors_csv(path: &Path, names: &[String]) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != ["parameter", "lower", "upper"] {
        return Err(schema(path, "expected columns parameter,lower,upper"));
    }
    let mut found: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| schema(path, e.to_string()))?;
        let line = i + 2;
        let name = rec.get(0).unwrap_or("").trim().to_string();
        let value = |k: usize| {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| schema(path, format!("line {line}: invalid bound")))
        };
        let (lo, hi) = (value(1)?, value(2)?);
        if lo >= hi {
            return Err(schema(
                path,
                format!("line {line}: lower bound must be below upper"),
            ));
        }
        if found.insert(name.clone(), (lo, hi)).is_some() {
            return Err(schema(path, format!("line {line}: '{name}' listed twice")));
        }
    }
    names
        .iter()
        .map(|n| {
            found
                .get(n)
                .copied()
                .ok_or_else(|| schema(path, format!("no bounds for '{n}'")))
        })
        .collect()
}

/// Posterior draws: chain, draw index within the chain, parameters and the
/// log posterior density.
pub fn write_posterior_csv<W: Write>(out: W, post: &Posterior) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(post.names.iter().cloned());
    header.push("log_density".into());
    w.write_record(&header)?;
    let mut counters = vec![0usize; post.chain.iter().max().map_or(0, |&c| c + 1)];
    for ((theta, &c), &lp) in post.samples.iter().zip(&post.chain).zip(&post.log_density) {
        let mut row = vec![c.to_string(), counters[c].to_string()];
        counters[c] += 1;
        row.extend(theta.iter().map(|&v| num(v)));
        row.push(num(lp));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// First- and total-order indices, one row per parameter.
pub fn write_sobol_csv<W: Write>(out: W, res: &SobolResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["parameter", "first_order", "total_order"])?;
    for ((n, s1), st) in res.names.iter().zip(&res.first_order).zip(&res.total_order) {
        w.write_record([n.clone(), num(*s1), num(*st)])?;
    }
    w.flush()?;
    Ok(())
}

/// Second-order indices, one row per unordered pair.
pub fn write_sobol_pairs_csv<W: Write>(out: W, res: &SobolResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["parameter_a", "parameter_b", "second_order"])?;
    if let Some(s2) = &res.second_order {
        for i in 0..res.names.len() {
            for j in i + 1..res.names.len() {
                w.write_record([res.names[i].clone(), res.names[j].clone(), num(s2[i][j])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Routing and p-values of group comparisons: per metric an omnibus row and
/// one row per pair.
pub fn write_report_csv<W: Write>(out: W, reports: &[(String, TestReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "metric",
        "comparison",
        "route",
        "test",
        "statistic",
        "p",
        "significant",
        "all_normal",
        "levene_p",
        "warnings",
    ])?;
    for (metric, rep) in reports {
        let o = &rep.omnibus;
        let common = |comparison: String, test: &str, stat: f64, p: f64| {
            vec![
                metric.clone(),
                comparison,
                rep.route.label().to_string(),
                test.to_string(),
                num(stat),
                num(p),
                (p < rep.alpha).to_string(),
                rep.all_normal().to_string(),
                num(rep.levene_p),
            ]
        };
        let mut row = common("omnibus".into(), &o.test, o.statistic, o.p);
        row.push(o.warnings.join("; "));
        w.write_record(&row)?;
        let post_hoc = match rep.route {
            crate::stats::Route::Anova => "tukey",
            crate::stats::Route::KruskalWallis => "dunn",
        };
        for pair in &o.pairs {
            let mut row = common(
                format!("{} vs {}", pair.a, pair.b),
                post_hoc,
                pair.statistic,
                pair.p_adjusted,
            );
            row.push(String::new());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
