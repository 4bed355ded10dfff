use std::collections::BTreeSet;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use spheroid_core::config::load_parameters;
use spheroid_core::io::{
    append_checkpoint, format_float, read_cells_csv, read_checkpoint, read_json, read_numeric_csv,
    read_observations_csv, read_priors_csv, read_training_csv, write_cells_csv, write_daily_csv,
    write_json, write_metrics_csv, write_posterior_csv, write_report_csv, write_sobol_csv,
    write_sobol_pairs_csv, write_spheroids_csv, write_sweep_csv,
};
use spheroid_core::measure::{measure_snapshot, MeasureConfig};
use spheroid_core::pipeline::{
    replicate_seed, run_sweep_sample, sweep_design, trace_metrics, ReplicateMetrics, SweepOutcome,
    SweepSpace,
};
use spheroid_core::rng::Purpose;
use spheroid_core::stats::{select_and_run, GroupedSamples};
use spheroid_core::surrogate::{nash_sutcliffe, FitOptions, GpArtifact, GpModel};
use spheroid_core::uq::{calibrate as run_calibration, sobol_indices, McmcOptions};
use spheroid_core::{
    run_simulation, ConfigFile, Error, ParameterVector, RngStream, SimConfig, SpheroidGroup,
};

use crate::manifest::ManifestBuilder;
use crate::{
    CalibrateArgs, CompareArgs, Exit, GpTrainArgs, MeasureArgs, RunSettings, SimulateArgs,
    SobolArgs, SweepArgs,
};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("cannot write {}", path.display()))
}

/// Effective configuration plus any parameter table from the config file.
fn load_run(
    run: &RunSettings,
    manifest: &mut ManifestBuilder,
) -> Result<(SimConfig, Option<ParameterVector>)> {
    let (mut cfg, params) = match &run.config {
        Some(path) => {
            let file = ConfigFile::load(path)?;
            manifest.input(path);
            (file.simulation, file.parameters)
        }
        None if run.desk => (SimConfig::desk_scale(), None),
        None => (SimConfig::default(), None),
    };
    if run.desk {
        let desk = SimConfig::desk_scale();
        cfg.mechanics_dt = desk.mechanics_dt;
        cfg.metabolic_substep = desk.metabolic_substep;
    }
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(d) = run.density {
        cfg.collagen_density = d;
    }
    if let Some(s) = run.locomotion_scale {
        cfg.locomotion_scale = s;
    }
    if let Some(days) = run.days {
        cfg.duration = days * 1440.0;
    }
    cfg.validate()?;
    manifest.seed(cfg.seed);
    Ok((cfg, params))
}

fn effective_config(cfg: &SimConfig, params: Option<&ParameterVector>) -> String {
    ConfigFile {
        simulation: cfg.clone(),
        parameters: params.cloned(),
    }
    .to_toml_string()
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("simulate");
    let (cfg, config_params) = load_run(&args.run, &mut manifest)?;
    let params = if let Some(path) = &args.params {
        let p = load_parameters(path)?;
        manifest.input(path);
        p
    } else if let Some(g) = &args.group {
        SpheroidGroup::parse(g)?.parameters()
    } else {
        config_params.ok_or_else(|| {
            Error::InvalidInput(
                "no parameters given: use --params, --group or a [parameters] table".into(),
            )
        })?
    };
    if args.replicates == 0 {
        return Err(Error::InvalidInput("--replicates must be at least 1".into()).into());
    }
    create_dir(&args.out)?;
    let text = effective_config(&cfg, Some(&params));
    manifest.config_text(&text);
    let config_path = args.out.join("config.toml");
    fs::write(&config_path, &text)?;
    manifest.artifact(&config_path);

    let mcfg = MeasureConfig::for_radius(cfg.mechanics.radius);
    let traces = (0..args.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(cfg.seed, r);
            let run_cfg = SimConfig {
                seed,
                ..cfg.clone()
            };
            run_simulation(&run_cfg, &params).map(|t| (seed, t))
        })
        .collect::<spheroid_core::Result<Vec<_>>>()?;

    let mut metrics: Vec<ReplicateMetrics> = Vec::new();
    let mut spheroids = Vec::new();
    for (r, (seed, trace)) in traces.iter().enumerate() {
        let suffix = if args.replicates == 1 {
            String::new()
        } else {
            format!("_r{r}")
        };
        let daily = args.out.join(format!("daily{suffix}.csv"));
        write_daily_csv(create(&daily)?, trace, &mcfg)?;
        manifest.artifact(&daily);
        if !args.no_cells {
            let cells = args.out.join(format!("cells{suffix}.csv"));
            write_cells_csv(create(&cells)?, trace)?;
            manifest.artifact(&cells);
        }
        metrics.extend(trace_metrics(trace, r, *seed, &mcfg));
        for s in &trace.snapshots {
            spheroids.push((r, s.day, measure_snapshot(&s.cells, trace.radius, &mcfg)));
        }
    }
    let metrics_path = args.out.join("metrics.csv");
    write_metrics_csv(create(&metrics_path)?, &metrics)?;
    manifest.artifact(&metrics_path);
    let spheroids_path = args.out.join("spheroids.csv");
    write_spheroids_csv(create(&spheroids_path)?, &spheroids)?;
    manifest.artifact(&spheroids_path);
    manifest.write(&args.out)?;

    for m in metrics
        .iter()
        .filter(|m| m.day == metrics.iter().map(|m| m.day).max().unwrap_or(0))
    {
        eprintln!(
            "replicate {}: day {} cells {} spheroids {} main area {:.1} um2",
            m.replicate, m.day, m.total_cells, m.spheroid_count, m.main_area
        );
    }
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("sweep");
    let (cfg, _) = load_run(&args.run, &mut manifest)?;
    let space = SweepSpace::parse(&args.space)?;
    if args.replicates == 0 || args.chunk == 0 {
        return Err(
            Error::InvalidInput("--replicates and --chunk must be at least 1".into()).into(),
        );
    }
    let last_day = (cfg.duration / 1440.0).floor() as u32;
    let days: Vec<u32> = if args.record_days.is_empty() {
        (1..=last_day).collect()
    } else {
        args.record_days.clone()
    };
    if days.is_empty() {
        return Err(Error::InvalidInput("the run covers no whole day to record".into()).into());
    }
    if let Some(d) = days.iter().find(|&&d| d > last_day) {
        return Err(Error::InvalidInput(format!(
            "day {d} lies beyond the simulated {last_day} days"
        ))
        .into());
    }
    create_dir(&args.out)?;
    let text = effective_config(&cfg, None);
    manifest.config_text(&text);
    let design = sweep_design(space, args.samples, cfg.seed)?;

    let checkpoint = args.out.join("sweep.checkpoint.jsonl");
    let mut outcomes = read_checkpoint(&checkpoint)?;
    for o in &outcomes {
        if design.get(o.sample) != Some(&o.theta)
            || (o.failure.is_none() && o.areas.iter().map(|a| a.0).collect::<Vec<_>>() != days)
        {
            return Err(Error::InvalidInput(format!(
                "{} belongs to a different sweep; remove it to start over",
                checkpoint.display()
            ))
            .into());
        }
    }
    let done: BTreeSet<usize> = outcomes.iter().map(|o| o.sample).collect();
    if !done.is_empty() {
        eprintln!(
            "resuming: {} of {} samples already done",
            done.len(),
            design.len()
        );
    }
    let todo: Vec<usize> = (0..design.len()).filter(|i| !done.contains(i)).collect();
    for chunk in todo.chunks(args.chunk) {
        let batch: Vec<SweepOutcome> = chunk
            .par_iter()
            .map(|&i| run_sweep_sample(&cfg, space, i, &design[i], args.replicates, &days))
            .collect();
        append_checkpoint(&checkpoint, &batch)?;
        outcomes.extend(batch);
        eprintln!("sweep: {}/{} samples", outcomes.len(), design.len());
    }
    outcomes.sort_by_key(|o| o.sample);

    manifest.artifact(&checkpoint);
    let sweep_path = args.out.join("sweep.csv");
    write_sweep_csv(create(&sweep_path)?, &space.names(), &outcomes)?;
    manifest.artifact(&sweep_path);
    manifest.write(&args.out)?;

    let failed: Vec<&SweepOutcome> = outcomes.iter().filter(|o| o.failure.is_some()).collect();
    for o in &failed {
        eprintln!(
            "sample {} failed: {}",
            o.sample,
            o.failure.as_deref().unwrap_or("")
        );
    }
    if failed.len() == outcomes.len() {
        return Err(Exit {
            code: 3,
            message: "every sweep sample failed".into(),
        }
        .into());
    }
    Ok(())
}

struct GpSummaryRow {
    day: u32,
    samples: usize,
    signal_variance: f64,
    noise_variance: f64,
    log_marginal_likelihood: f64,
    q2: Option<f64>,
}

pub fn gp_train(args: GpTrainArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("gp-train");
    manifest.seed(args.seed);
    let (_, sets) = read_training_csv(&args.training)?;
    manifest.input(&args.training);
    let tests = match &args.test {
        Some(p) => {
            manifest.input(p);
            Some(read_training_csv(p)?.1)
        }
        None => None,
    };
    let sets: Vec<_> = sets
        .into_iter()
        .filter(|s| args.fit_days.is_empty() || s.day.is_some_and(|d| args.fit_days.contains(&d)))
        .collect();
    if sets.is_empty() {
        return Err(Error::InvalidInput("no training data for the requested days".into()).into());
    }
    create_dir(&args.out)?;
    let opts = FitOptions {
        restarts: args.restarts,
        seed: args.seed,
        ..FitOptions::default()
    };
    let names = sets[0].names.clone();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "day",
        "samples",
        "signal_variance",
        "noise_variance",
        "log_marginal_likelihood",
        "q2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(names.iter().map(|n| format!("lengthscale_{n}")));
    w.write_record(&header)?;
    for set in &sets {
        let day = set.day.expect("sweep rows carry a day");
        let model = GpModel::fit(set, &opts)?;
        let q2 = tests
            .as_ref()
            .and_then(|t| t.iter().find(|s| s.day == Some(day)))
            .map(|t| {
                let pred: Vec<f64> = t.inputs.iter().map(|x| model.predict_mean(x)).collect();
                nash_sutcliffe(&pred, &t.outputs)
            })
            .transpose()?;
        let path = args.out.join(format!("gp_day{day}.json"));
        write_json(&path, &model.to_artifact())?;
        manifest.artifact(&path);
        let row = GpSummaryRow {
            day,
            samples: set.len(),
            signal_variance: model.signal_variance(),
            noise_variance: model.noise_variance(),
            log_marginal_likelihood: model.log_marginal_likelihood(),
            q2,
        };
        let mut rec = vec![
            row.day.to_string(),
            row.samples.to_string(),
            format_float(row.signal_variance),
            format_float(row.noise_variance),
            format_float(row.log_marginal_likelihood),
            row.q2.map(format_float).unwrap_or_default(),
        ];
        // Lengthscales are reported in parameter units.
        for (l, (lo, hi)) in model.lengthscales().iter().zip(model.bounds()) {
            rec.push(format_float(l * (hi - lo)));
        }
        w.write_record(&rec)?;
        eprintln!(
            "day {day}: {} samples, log marginal likelihood {:.3}{}",
            set.len(),
            row.log_marginal_likelihood,
            q2.map(|q| format!(", Q2 {q:.4}")).unwrap_or_default()
        );
    }
    let summary = args.out.join("gp_summary.csv");
    fs::write(
        &summary,
        w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?,
    )?;
    manifest.artifact(&summary);
    manifest.write(&args.out)?;
    Ok(())
}

fn load_gp(path: &Path) -> Result<GpModel> {
    let artifact: GpArtifact = read_json(path)?;
    GpModel::from_artifact(&artifact)
        .with_context(|| format!("invalid emulator {}", path.display()))
}

pub fn sobol(args: SobolArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("sobol");
    let model = load_gp(&args.gp)?;
    manifest.input(&args.gp);
    create_dir(&args.out)?;
    let res = sobol_indices(
        |x| model.predict_mean(x),
        model.bounds(),
        model.names(),
        args.samples,
        args.second_order,
    )?;
    let path = args.out.join("sobol.csv");
    write_sobol_csv(create(&path)?, &res)?;
    manifest.artifact(&path);
    if args.second_order {
        let pairs = args.out.join("sobol_pairs.csv");
        write_sobol_pairs_csv(create(&pairs)?, &res)?;
        manifest.artifact(&pairs);
    }
    manifest.write(&args.out)?;
    for ((n, s1), st) in res.names.iter().zip(&res.first_order).zip(&res.total_order) {
        eprintln!("{n:>12}  S1 {s1:.4}  ST {st:.4}");
    }
    Ok(())
}

#[derive(Serialize)]
struct MapReport<'a> {
    group: &'a str,
    names: &'a [String],
    joint_map: &'a [f64],
    joint_map_log_density: f64,
    marginal_map: &'a [f64],
    posterior_mean: Vec<f64>,
    rhat: &'a [f64],
    acceptance_rate: &'a [f64],
    converged: bool,
    warnings: &'a [String],
}

fn file_stem(group: &str) -> String {
    group
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn calibrate(args: CalibrateArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("calibrate");
    manifest.seed(args.seed);
    let observations = read_observations_csv(&args.observations)?;
    manifest.input(&args.observations);
    let models = args
        .gp
        .iter()
        .map(|p| {
            manifest.input(p);
            load_gp(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let names = models[0].names().to_vec();
    if let Some(m) = models.iter().find(|m| m.names() != names.as_slice()) {
        return Err(Error::InvalidInput(format!(
            "emulators disagree on their inputs: {:?} vs {:?}",
            names,
            m.names()
        ))
        .into());
    }
    let support = match &args.priors {
        Some(p) => {
            manifest.input(p);
            read_priors_csv(p, &names)?
        }
        None => models[0].bounds().to_vec(),
    };
    create_dir(&args.out)?;

    let mut unconverged = Vec::new();
    for (g, obs) in observations.iter().enumerate() {
        let opts = McmcOptions {
            chains: args.chains,
            draws: args.draws,
            burn_in: args.burn_in,
            seed: RngStream::new(args.seed)
                .derive(Purpose::Chain, g as u64)
                .seed(),
        };
        let post = run_calibration(obs, &models, &support, &opts)?;
        let stem = file_stem(&obs.group);
        let draws = args.out.join(format!("posterior_{stem}.csv"));
        write_posterior_csv(create(&draws)?, &post)?;
        manifest.artifact(&draws);
        let converged = post.rhat.iter().all(|&r| r <= args.max_rhat);
        let report = MapReport {
            group: &obs.group,
            names: &post.names,
            joint_map: &post.joint_map,
            joint_map_log_density: post.joint_map_log_density,
            marginal_map: &post.marginal_map,
            posterior_mean: post.mean(),
            rhat: &post.rhat,
            acceptance_rate: &post.acceptance_rate,
            converged,
            warnings: &post.warnings,
        };
        let map = args.out.join(format!("map_{stem}.json"));
        write_json(&map, &report)?;
        manifest.artifact(&map);
        eprintln!("{}: joint MAP {:?}", obs.group, post.joint_map);
        for w in &post.warnings {
            eprintln!("{}: {w}", obs.group);
        }
        if !converged {
            unconverged.push(obs.group.clone());
        }
    }
    manifest.write(&args.out)?;
    if !unconverged.is_empty() {
        return Err(Exit {
            code: 3,
            message: format!(
                "split-R-hat above {} for group(s) {}",
                args.max_rhat,
                unconverged.join(", ")
            ),
        }
        .into());
    }
    Ok(())
}

pub fn measure(args: MeasureArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("measure");
    let snapshots = read_cells_csv(&args.cells)?;
    manifest.input(&args.cells);
    let defaults = MeasureConfig::for_radius(args.radius);
    let mcfg = MeasureConfig {
        link_distance: args.link_distance.unwrap_or(defaults.link_distance),
        pixel: args.pixel.unwrap_or(defaults.pixel),
    };
    if !(args.radius > 0.0
        && mcfg.link_distance > 0.0
        && mcfg.pixel > 0.0
        && mcfg.pixel <= args.radius / 4.0)
    {
        return Err(Error::InvalidInput(
            "radius and link distance must be positive and the pixel at most a quarter radius"
                .into(),
        )
        .into());
    }
    create_dir(&args.out)?;
    let reports: Vec<(usize, u32, _)> = snapshots
        .par_iter()
        .map(|(day, cells)| (0, *day, measure_snapshot(cells, args.radius, &mcfg)))
        .collect();
    let metrics: Vec<ReplicateMetrics> = reports
        .iter()
        .map(|(_, day, m)| ReplicateMetrics {
            replicate: 0,
            seed: 0,
            day: *day,
            total_cells: m.total_cells,
            spheroid_count: m.spheroid_count(),
            main_area: m.main_area(),
            mean_area: m.mean_area(),
            main_volume_per_cell: m.main_volume_per_cell(),
        })
        .collect();
    let spheroids = args.out.join("spheroids.csv");
    write_spheroids_csv(create(&spheroids)?, &reports)?;
    manifest.artifact(&spheroids);
    let metrics_path = args.out.join("metrics.csv");
    write_metrics_csv(create(&metrics_path)?, &metrics)?;
    manifest.artifact(&metrics_path);
    manifest.write(&args.out)?;
    Ok(())
}

const KEY_COLUMNS: [&str; 3] = ["replicate", "seed", "day"];

pub fn compare(args: CompareArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("compare");
    if args.scenarios.len() < 2 {
        return Err(Error::InvalidInput(
            "compare needs at least two --scenario name=path entries".into(),
        )
        .into());
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(
            Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", args.alpha)).into(),
        );
    }
    let mut tables = Vec::new();
    for spec in &args.scenarios {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("scenario '{spec}' is not name=path")))?;
        let path = PathBuf::from(path);
        let table = read_numeric_csv(&path)?;
        manifest.input(&path);
        tables.push((name.to_string(), path, table));
    }
    let columns = tables[0].2.columns.clone();
    for (_, path, t) in &tables[1..] {
        if t.columns != columns {
            return Err(Error::Schema {
                path: path.display().to_string(),
                message: format!("metric columns {:?} differ from {:?}", t.columns, columns),
            }
            .into());
        }
    }
    let day = match (args.day, columns.iter().any(|c| c == "day")) {
        (Some(d), _) => Some(d as f64),
        (None, true) => tables
            .iter()
            .map(|(_, _, t)| {
                t.column("day")
                    .unwrap_or_default()
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .reduce(f64::min),
        (None, false) => None,
    };
    let metrics: Vec<&String> = columns
        .iter()
        .filter(|c| !KEY_COLUMNS.contains(&c.as_str()))
        .collect();
    if metrics.is_empty() {
        return Err(Error::Schema {
            path: tables[0].1.display().to_string(),
            message: "no metric columns".into(),
        }
        .into());
    }
    let mut reports = Vec::new();
    for metric in metrics {
        let k = columns
            .iter()
            .position(|c| c == metric)
            .expect("column exists");
        let d = columns.iter().position(|c| c == "day");
        let groups = tables
            .iter()
            .map(|(name, _, t)| {
                let values = t
                    .rows
                    .iter()
                    .filter(|r| match (d, day) {
                        (Some(d), Some(day)) => r[d] == day,
                        _ => true,
                    })
                    .map(|r| r[k])
                    .collect();
                (name.clone(), values)
            })
            .collect();
        let samples = GroupedSamples::new(groups)?;
        match select_and_run(&samples, args.alpha) {
            Ok(rep) => {
                eprintln!("{metric}: {} p = {:.4}", rep.route.label(), rep.omnibus.p);
                reports.push((metric.clone(), rep));
            }
            Err(e @ Error::Undefined(_)) => eprintln!("{metric}: skipped, {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    create_dir(&args.out)?;
    let path = args.out.join("report.csv");
    write_report_csv(create(&path)?, &reports)?;
    manifest.artifact(&path);
    manifest.write(&args.out)?;
    Ok(())
}
