use std::fs;
use std::path::{Path, PathBuf};

use kmreg::dataset::{
    downsample, save_scene, synth_scene, write_ply_to, PerturbationSpec, PlyFormat, PlyPrecision,
    SceneManifest,
};
use kmreg::evaluation::{
    ablation_elimination, cross_section, k_sweep, noise_sweep, run_registration, trial_seed,
    CellSummary, SweepSetup, REPORT_SCHEMA_VERSION,
};
use kmreg::{PointSet, RegistrationConfig, RigidTransform, Scene};
use serde::Serialize;

use crate::args::{
    check_amplitudes, check_trials, config_error, AblateArgs, Cli, Command, KsweepArgs,
    NoiseSweepArgs, RegisterArgs, SceneArgs, SliceArgs, SolverArgs, SynthArgs,
};
use crate::error::CliError;
use crate::output::{
    run_metrics, slice_csv, summary_table, sweep_metrics, write_atomic, Artifacts,
};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Register(args) => register(cli, args),
        Command::Synth(args) => synth(cli, args),
        Command::Ksweep(args) => ksweep(cli, args),
        Command::Ablate(args) => ablate(cli, args),
        Command::NoiseSweep(args) => noise(cli, args),
        Command::Slice(args) => slice(cli, args),
    }
}

struct LoadedViews {
    name: String,
    units: Option<String>,
    sets: Vec<PointSet>,
    poses: Vec<RigidTransform>,
    /// Absolute PLY paths, so that derived manifests resolve from anywhere.
    files: Vec<PathBuf>,
}

fn load_views(args: &SceneArgs) -> Result<LoadedViews, CliError> {
    let manifest = SceneManifest::read(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or_else(|| Path::new(""));
    let loaded = manifest.load(base)?;
    let sets = loaded
        .sets
        .iter()
        .map(|s| downsample(s, args.downsample))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let files = manifest
        .views
        .iter()
        .map(|v| {
            let joined = base.join(&v.path);
            std::path::absolute(&joined).map_err(|e| CliError::io(joined, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let name = manifest.name.clone().unwrap_or_else(|| {
        args.manifest
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok(LoadedViews {
        name,
        units: manifest.units,
        sets,
        poses: loaded.ground_truth,
        files,
    })
}

fn check_cluster_count(views: &LoadedViews, clusters: usize) -> Result<(), CliError> {
    let total: usize = views.sets.iter().map(PointSet::len).sum();
    if clusters > total {
        return Err(CliError::Config(format!(
            "K = {clusters} exceeds the {total} points left after down-sampling"
        )));
    }
    Ok(())
}

fn register(cli: &Cli, args: &RegisterArgs) -> Result<(), CliError> {
    let config = args.solver.config()?;
    args.scene.validate()?;
    let spec = PerturbationSpec::new(args.amplitude, trial_seed(cli.seed, 0))
        .map_err(|e| CliError::Config(e.to_string()))?;

    let views = load_views(&args.scene)?;
    check_cluster_count(&views, config.clusters)?;
    let (mut report, outcome) = run_registration(&views.sets, &views.poses, &config, &spec)?;
    report.dataset = Some(views.name.clone());

    let mut out = Artifacts::default();
    out.add("report.json", report.to_json().into_bytes());
    out.add("metrics.csv", run_metrics(&report));
    let registered = SceneManifest::new(
        Some(views.name.clone()),
        views.units.clone(),
        views
            .files
            .iter()
            .cloned()
            .zip(outcome.transforms.iter().copied()),
    );
    out.add("transforms.json", registered.to_json().into_bytes());
    if args.write_ply {
        let scene = Scene::new(views.sets, outcome.transforms)
            .map_err(|e| CliError::Registration(e.to_string()))?;
        let mut bytes = Vec::new();
        write_ply_to(
            &mut bytes,
            &scene.coarse_model(),
            PlyFormat::BinaryLittleEndian,
            PlyPrecision::Float64,
        )
        .map_err(|e| CliError::io("registered.ply", e))?;
        out.add("registered.ply", bytes);
    }
    out.commit(&cli.out)?;

    println!(
        "{}: E_R {:.4e}  E_t {:.4e}  (start {:.4e} / {:.4e})",
        views.name, report.e_r, report.e_t, report.initial_e_r, report.initial_e_t
    );
    println!(
        "iterations {} ({})  time {:.3} s",
        report.iterations,
        if report.converged {
            "converged"
        } else {
            "iteration cap reached"
        },
        report.seconds
    );
    Ok(())
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<(), CliError> {
    let params = args.params(cli.seed)?;
    let synth = synth_scene(&params).map_err(kmreg::Error::from)?;
    let name = format!(
        "{}-{}x{}",
        params.shape, params.views, params.points_per_view
    );

    let dir = &cli.out;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".synth")
        .tempdir_in(dir)
        .map_err(|e| CliError::io(dir, e))?;
    let manifest = save_scene(
        staging.path(),
        &name,
        synth.scene.sets(),
        &synth.ground_truth,
    )
    .map_err(kmreg::Error::from)?;
    for v in &manifest.views {
        let target = dir.join(&v.path);
        fs::rename(staging.path().join(&v.path), &target).map_err(|e| CliError::io(target, e))?;
    }
    write_atomic(dir, "manifest.json", manifest.to_json().as_bytes())?;

    println!(
        "{name}: {} views, {} points, written to {}",
        params.views,
        synth.scene.num_points(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepReport<'a> {
    schema_version: u32,
    command: &'static str,
    dataset: &'a str,
    config: RegistrationConfig,
    downsample: usize,
    seed: u64,
    trials: usize,
    cells: &'a [CellSummary],
}

fn sweep(
    cli: &Cli,
    command: &'static str,
    scene: &SceneArgs,
    config: RegistrationConfig,
    trials: usize,
    max_clusters: usize,
    body: impl FnOnce(&SweepSetup<'_>) -> Vec<CellSummary>,
) -> Result<(), CliError> {
    let views = load_views(scene)?;
    check_cluster_count(&views, max_clusters)?;
    let setup = SweepSetup {
        sets: &views.sets,
        ground_truth: &views.poses,
        config,
        trials,
        base_seed: cli.seed,
    };
    let cells = body(&setup);

    let report = SweepReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command,
        dataset: &views.name,
        config,
        downsample: scene.downsample,
        seed: cli.seed,
        trials,
        cells: &cells,
    };
    let table = summary_table(&cells);
    let mut out = Artifacts::default();
    out.add("metrics.csv", sweep_metrics(&cells));
    out.add(
        "report.json",
        serde_json::to_string_pretty(&report)
            .expect("report serializes")
            .into_bytes(),
    );
    out.add(
        "summary.txt",
        format!("{command} on {}\n{table}", views.name).into_bytes(),
    );
    out.commit(&cli.out)?;

    print!("{command} on {}\n{table}", views.name);
    let failures: usize = cells.iter().map(|c| c.failures).sum();
    if failures > 0 {
        log::warn!("{failures} trial(s) failed; see metrics.csv");
    }
    Ok(())
}

fn checked(
    solver: &SolverArgs,
    scene: &SceneArgs,
    trials: usize,
) -> Result<RegistrationConfig, CliError> {
    let config = solver.config()?;
    scene.validate()?;
    check_trials(trials)?;
    Ok(config)
}

fn ksweep(cli: &Cli, args: &KsweepArgs) -> Result<(), CliError> {
    let config = checked(&args.solver, &args.scene, args.trials)?;
    if args.k_values.is_empty() {
        return Err(CliError::Config(
            "--k-values needs at least one entry".into(),
        ));
    }
    for &k in &args.k_values {
        RegistrationConfig {
            clusters: k,
            ..config
        }
        .validate()
        .map_err(config_error)?;
    }
    check_amplitudes(&[args.amplitude])?;
    let largest = args.k_values.iter().copied().max().unwrap_or(0);
    sweep(
        cli,
        "ksweep",
        &args.scene,
        config,
        args.trials,
        largest,
        |setup| k_sweep(setup, &args.k_values, args.amplitude),
    )
}

fn ablate(cli: &Cli, args: &AblateArgs) -> Result<(), CliError> {
    let config = checked(&args.solver, &args.scene, args.trials)?;
    check_amplitudes(&args.amplitudes)?;
    sweep(
        cli,
        "ablate",
        &args.scene,
        config,
        args.trials,
        config.clusters,
        |setup| ablation_elimination(setup, &args.amplitudes),
    )
}

fn noise(cli: &Cli, args: &NoiseSweepArgs) -> Result<(), CliError> {
    let config = checked(&args.solver, &args.scene, args.trials)?;
    check_amplitudes(&args.amplitudes)?;
    sweep(
        cli,
        "noise-sweep",
        &args.scene,
        config,
        args.trials,
        config.clusters,
        |setup| noise_sweep(setup, &args.amplitudes),
    )
}

fn slice(cli: &Cli, args: &SliceArgs) -> Result<(), CliError> {
    args.scene.validate()?;
    if !(args.thickness > 0.0 && args.thickness.is_finite()) {
        return Err(CliError::Config(format!(
            "--thickness must be positive, got {}",
            args.thickness
        )));
    }
    if !args.position.is_finite() {
        return Err(CliError::Config("--position must be finite".into()));
    }
    let views = load_views(&args.scene)?;
    let scene = Scene::new(views.sets, views.poses).map_err(|e| CliError::Parse(e.to_string()))?;
    let points = cross_section(&scene, args.axis.index(), args.position, args.thickness)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut out = Artifacts::default();
    out.add("slice.csv", slice_csv(&points));
    out.commit(&cli.out)?;
    println!("{}: {} points in slab", views.name, points.len());
    Ok(())
}
