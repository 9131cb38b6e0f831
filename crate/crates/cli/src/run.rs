//! Implementations of the five subcommands.

use std::path::Path;

use serde::Serialize;

use trajflow_core::cluster::{self, ClusterConfig};
use trajflow_core::flow::{CnfModel, SplineConfig};
use trajflow_core::io;
use trajflow_core::norm::fit_normalization;
use trajflow_core::predict::{self, GridFrame, GridSpec, PredictionRequest};
use trajflow_core::sim::{
    simulate_ballistic, simulate_deterministic_modes, simulate_simple, BallisticConfig,
    SimpleTargetConfig,
};
use trajflow_core::train::{build_training_points, subsample, train_with_hook, TrainConfig};
use trajflow_core::{Error, Pose, Result};

use crate::manifest::ManifestBuilder;
use crate::targets::{load_targets, parse_float_list};
use crate::{svg, ClusterArgs, DensityArgs, SampleArgs, SimulateArgs, TrainArgs};

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    #[derive(Serialize)]
    struct Config<'a> {
        scenario: &'a str,
        n: usize,
        seed: u64,
        duration: f64,
        dt: f64,
        speed: f64,
        maneuver: (f64, f64),
        accel: (f64, f64),
        air_density: f64,
        bc: (f64, f64),
        sigma: f64,
        gravity: f64,
    }
    let config = Config {
        scenario: &args.scenario,
        n: args.n,
        seed: args.seed,
        duration: args.duration,
        dt: args.dt,
        speed: args.speed,
        maneuver: (args.min_maneuver, args.max_maneuver),
        accel: (args.min_accel, args.max_accel),
        air_density: args.air_density,
        bc: (args.bc_min, args.bc_max),
        sigma: args.sigma,
        gravity: args.gravity,
    };
    let mut manifest = ManifestBuilder::new("simulate", &config, &[args.seed]);

    let simple_config = SimpleTargetConfig {
        duration: args.duration,
        dt: args.dt,
        speed: args.speed,
        maneuver_duration_range: (args.min_maneuver, args.max_maneuver),
        lateral_accel_range: (args.min_accel, args.max_accel),
        rng_seed: args.seed,
    };
    let mut dataset = match args.scenario.as_str() {
        "simple" => simulate_simple(&simple_config, args.n)?,
        "deterministic" => simulate_deterministic_modes(&simple_config, args.n)?,
        "ballistic" => {
            let config = BallisticConfig {
                duration: args.duration,
                dt: args.dt,
                air_density: args.air_density,
                bc_range: (args.bc_min, args.bc_max),
                disturbance_cov: [args.sigma; 3],
                gravity: args.gravity,
                rng_seed: args.seed,
                ..BallisticConfig::default()
            };
            simulate_ballistic(&config, args.n)?
        }
        other => {
            return Err(Error::config(format!(
                "unknown scenario '{other}' (expected simple, deterministic, or ballistic)"
            )))
        }
    };
    dataset.meta.insert("n".into(), args.n.to_string());
    dataset.meta.insert("duration_s".into(), io::fmt_f64(args.duration));
    dataset.meta.insert("dt_s".into(), io::fmt_f64(args.dt));

    io::save_dataset(&dataset, &args.out)?;
    manifest.output("dataset_csv", &args.out.with_extension("csv"))?;
    manifest.output("dataset_json", &args.out.with_extension("json"))?;
    manifest.write(&args.out.with_extension("csv"))?;
    println!(
        "wrote {} trajectories ({} points) to {}",
        dataset.len(),
        dataset.point_count(),
        args.out.with_extension("csv").display()
    );
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    #[derive(Serialize)]
    struct Config<'a> {
        data: String,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        train_fraction: f64,
        noise_std: f64,
        subsample_points: f64,
        seed: u64,
        layers: usize,
        hidden: &'a [usize],
        bins: usize,
        tail_bound: f64,
    }
    let hidden = vec![args.hidden_units; args.hidden_layers];
    let config = Config {
        data: args.data.display().to_string(),
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        train_fraction: args.train_fraction,
        noise_std: args.noise_std,
        subsample_points: args.subsample_points,
        seed: args.seed,
        layers: args.layers,
        hidden: &hidden,
        bins: args.bins,
        tail_bound: args.tail_bound,
    };
    let mut manifest = ManifestBuilder::new("train", &config, &[args.seed]);
    manifest.input("dataset", &args.data);

    let dataset = io::load_dataset(&args.data)?;
    let norm = fit_normalization(&dataset)?;
    let mut points = build_training_points(&dataset, &norm);
    if args.subsample_points < 1.0 {
        points = subsample(&points, args.subsample_points, args.seed);
    }
    let model = CnfModel::new_identity(
        dataset.dim,
        dataset.n_psi,
        args.layers,
        SplineConfig { bins: args.bins, tail_bound: args.tail_bound },
        &hidden,
        norm,
        args.seed,
    )?;
    let train_config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        train_fraction: args.train_fraction,
        noise_std: args.noise_std,
        seed: args.seed,
    };

    let checkpoint_every = args.checkpoint_every.unwrap_or(0);
    let out_model = args.out_model.clone();
    let (model, report) = train_with_hook(&points, &train_config, model, |epoch, current| {
        if checkpoint_every > 0 && (epoch + 1) % checkpoint_every == 0 {
            let path = epoch_checkpoint_path(&out_model, epoch + 1);
            if let Err(err) = io::save_checkpoint(current, &path) {
                eprintln!("warning: failed to write {}: {err}", path.display());
            }
        }
    })?;

    io::save_checkpoint(&model, &args.out_model)?;
    manifest.output("checkpoint", &args.out_model)?;
    if let Some(report_path) = &args.report {
        std::fs::write(report_path, io::report_to_csv(&report))?;
        manifest.output("report", report_path)?;
    }
    manifest.write(&args.out_model)?;
    println!(
        "trained {} epochs on {} points; best validation NLL {:.4} (epoch {})",
        report.train_nll.len(),
        points.len(),
        report.final_test_nll,
        report.best_epoch
    );
    Ok(())
}

fn epoch_checkpoint_path(base: &Path, epoch: usize) -> std::path::PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    base.with_file_name(format!("{stem}.epoch{epoch}.json"))
}

pub fn sample(args: &SampleArgs) -> Result<()> {
    #[derive(Serialize)]
    struct Config {
        model: String,
        targets: String,
        times: String,
        n_samples: usize,
        seed: u64,
        noise_std: f64,
        share_samples: bool,
        fresh_latents: bool,
    }
    let config = Config {
        model: args.model.display().to_string(),
        targets: args.targets.display().to_string(),
        times: args.times.clone(),
        n_samples: args.n_samples,
        seed: args.seed,
        noise_std: args.noise_std,
        share_samples: args.share_samples,
        fresh_latents: args.fresh_latents,
    };
    let mut manifest = ManifestBuilder::new("sample", &config, &[args.seed]);
    manifest.input("model", &args.model);
    manifest.input("targets", &args.targets);

    let model = io::load_checkpoint(&args.model)?;
    let targets = load_targets(&args.targets, model.dim, model.n_psi)?;
    let times = parse_float_list(&args.times)?;
    let mut request = PredictionRequest::new(targets, times, args.n_samples, args.seed);
    request.share_samples = args.share_samples;
    request.fresh_latents = args.fresh_latents;
    let (samples, removed) = predict::draw_samples(&model, &request, args.noise_std)?;

    std::fs::write(&args.out, io::samples_to_csv(&samples, &model.norm))?;
    manifest.output("samples", &args.out)?;
    if let Some(svg_path) = &args.svg {
        let mut points = Vec::new();
        for i in 0..samples.n_targets {
            for j in 0..samples.n_samples {
                for k in 0..samples.n_steps {
                    if samples.is_valid(i, j, k) {
                        let w = model.norm.denormalize_position(samples.position(i, j, k));
                        points.push((w[0], w[1], i));
                    }
                }
            }
        }
        std::fs::write(svg_path, svg::scatter_svg(&points, &[], "samples"))?;
        manifest.output("svg", svg_path)?;
    }
    manifest.write(&args.out)?;
    println!(
        "wrote {} samples ({removed} outliers removed) to {}",
        samples.valid_count(),
        args.out.display()
    );
    Ok(())
}

pub fn density(args: &DensityArgs) -> Result<()> {
    #[derive(Serialize)]
    struct Config {
        model: String,
        t: f64,
        psi: String,
        target: Option<String>,
        grid: String,
        frame: String,
    }
    let config = Config {
        model: args.model.display().to_string(),
        t: args.t,
        psi: args.psi.clone(),
        target: args.target.clone(),
        grid: args.grid.clone(),
        frame: args.frame.clone(),
    };
    let mut manifest = ManifestBuilder::new("density", &config, &[]);
    manifest.input("model", &args.model);

    let model = io::load_checkpoint(&args.model)?;
    let psi = parse_float_list(&args.psi)?;
    if psi.len() != model.n_psi {
        return Err(Error::config(format!(
            "model expects {} psi values, got {}",
            model.n_psi,
            psi.len()
        )));
    }
    let frame = match args.frame.as_str() {
        "world" => GridFrame::World,
        "normalized" => GridFrame::Normalized,
        other => return Err(Error::config(format!("unknown frame '{other}'"))),
    };
    let spec = parse_grid(&args.grid, frame)?;
    let pose = match &args.target {
        Some(text) => {
            let v = parse_float_list(text)?;
            if v.len() != 4 {
                return Err(Error::config("target must be 'p0,p1,v0,v1'"));
            }
            Some(Pose::new(v[..2].to_vec(), Pose::heading_from_velocity(&v[2..4])))
        }
        None => None,
    };
    let grid = predict::evaluate_pdf_grid(&model, args.t, &psi, pose.as_ref(), &spec)?;

    std::fs::write(&args.out, io::density_to_csv(&grid))?;
    manifest.output("density", &args.out)?;
    if let Some(svg_path) = &args.svg {
        std::fs::write(svg_path, svg::heatmap_svg(&grid.values, "density"))?;
        manifest.output("svg", svg_path)?;
    }
    manifest.write(&args.out)?;
    println!(
        "wrote {}x{} density grid (mass {:.4}) to {}",
        spec.res_x,
        spec.res_y,
        grid.integral(),
        args.out.display()
    );
    Ok(())
}

/// Parse "xmin:xmax:nx,ymin:ymax:ny".
fn parse_grid(text: &str, frame: GridFrame) -> Result<GridSpec> {
    let axes: Vec<&str> = text.split(',').collect();
    if axes.len() != 2 {
        return Err(Error::config("grid must be 'xmin:xmax:nx,ymin:ymax:ny'"));
    }
    let mut parsed = Vec::new();
    for axis in axes {
        let parts: Vec<&str> = axis.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::config("grid axis must be 'min:max:res'"));
        }
        let min: f64 =
            parts[0].trim().parse().map_err(|_| Error::config("bad grid bound"))?;
        let max: f64 =
            parts[1].trim().parse().map_err(|_| Error::config("bad grid bound"))?;
        let res: usize =
            parts[2].trim().parse().map_err(|_| Error::config("bad grid resolution"))?;
        if max <= min || res == 0 {
            return Err(Error::config("grid bounds must be increasing with resolution >= 1"));
        }
        parsed.push((min, max, res));
    }
    Ok(GridSpec {
        x_min: parsed[0].0,
        x_max: parsed[0].1,
        res_x: parsed[0].2,
        y_min: parsed[1].0,
        y_max: parsed[1].1,
        res_y: parsed[1].2,
        frame,
    })
}

#[derive(Serialize)]
struct ClusterSummary {
    n_virtual: usize,
    inertia: f64,
    member_counts: Vec<usize>,
    removed_samples: usize,
    clustered_trajectories: usize,
    times: Vec<f64>,
    seed: u64,
}

pub fn cluster(args: &ClusterArgs) -> Result<()> {
    #[derive(Serialize)]
    struct Config {
        model: String,
        targets: String,
        n_virtual: usize,
        n_samples: usize,
        steps: usize,
        times: Option<String>,
        seed: u64,
        noise_std: f64,
        tolerance: f64,
        max_iter: usize,
        restarts: usize,
        share_samples: bool,
    }
    let config = Config {
        model: args.model.display().to_string(),
        targets: args.targets.display().to_string(),
        n_virtual: args.n_virtual,
        n_samples: args.n_samples,
        steps: args.steps,
        times: args.times.clone(),
        seed: args.seed,
        noise_std: args.noise_std,
        tolerance: args.tolerance,
        max_iter: args.max_iter,
        restarts: args.restarts,
        share_samples: args.share_samples,
    };
    let mut manifest = ManifestBuilder::new("cluster", &config, &[args.seed]);
    manifest.input("model", &args.model);
    manifest.input("targets", &args.targets);

    let model = io::load_checkpoint(&args.model)?;
    let targets = load_targets(&args.targets, model.dim, model.n_psi)?;
    let times = match &args.times {
        Some(text) => parse_float_list(text)?,
        None => {
            // Equally spaced steps across the trained horizon.
            let (t_lo, t_hi) = model.norm.time_range();
            if args.steps == 0 {
                return Err(Error::config("steps must be at least 1"));
            }
            (1..=args.steps)
                .map(|k| t_lo + (t_hi - t_lo) * k as f64 / args.steps as f64)
                .collect()
        }
    };

    let mut request = PredictionRequest::new(targets, times.clone(), args.n_samples, args.seed);
    request.share_samples = args.share_samples;
    let (samples, removed) = predict::draw_samples(&model, &request, args.noise_std)?;
    let (flattened, origins) = cluster::flatten(&samples);
    let cluster_config = ClusterConfig {
        n_virtual: args.n_virtual,
        tolerance: args.tolerance,
        max_iter: args.max_iter,
        seed: args.seed,
        restarts: args.restarts,
    };
    let result = cluster::kmeans(&flattened, &cluster_config)?;
    let virtual_targets = cluster::unflatten_and_renormalize(&result, &times, &model.norm)?;

    std::fs::write(&args.out, io::virtual_targets_to_csv(&virtual_targets.trajectories))?;
    manifest.output("virtual_targets", &args.out)?;
    let summary = ClusterSummary {
        n_virtual: args.n_virtual,
        inertia: virtual_targets.inertia,
        member_counts: virtual_targets.member_counts.clone(),
        removed_samples: removed,
        clustered_trajectories: flattened.len(),
        times: times.clone(),
        seed: args.seed,
    };
    std::fs::write(&args.summary, serde_json::to_string_pretty(&summary)?)?;
    manifest.output("summary", &args.summary)?;

    if let Some(svg_path) = &args.svg {
        // Final-step samples colored by assigned cluster, virtual
        // trajectories as overlaid polylines.
        let last = samples.n_steps - 1;
        let mut points = Vec::new();
        let mut row = 0usize;
        for i in 0..samples.n_targets {
            for j in 0..samples.n_samples {
                if !samples.trajectory_valid(i, j) {
                    continue;
                }
                let w = model.norm.denormalize_position(samples.position(i, j, last));
                points.push((w[0], w[1], result.assignments[row]));
                row += 1;
            }
        }
        let _ = &origins;
        let polylines: Vec<Vec<(f64, f64)>> = virtual_targets
            .trajectories
            .iter()
            .map(|t| (0..t.len()).map(|k| (t.position(k)[0], t.position(k)[1])).collect())
            .collect();
        std::fs::write(svg_path, svg::scatter_svg(&points, &polylines, "virtual targets"))?;
        manifest.output("svg", svg_path)?;
    }
    manifest.write(&args.out)?;
    println!(
        "clustered {} trajectories ({} outliers removed) into {} virtual targets; inertia {:.6}",
        flattened.len(),
        removed,
        args.n_virtual,
        virtual_targets.inertia
    );
    Ok(())
}
