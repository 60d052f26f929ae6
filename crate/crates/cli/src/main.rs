mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oanbv::elevation::build_elevation_map;
use oanbv::experiments::{
    ablation_alignment, ablation_viewpoint_gen, aggregate, elevation_candidates, iteration_seed, perceive, run_suite,
    weight_sweep, write_aggregate_csv, write_alignment_csv, write_sweep_cells_csv, write_sweep_grid_csv,
    write_trials_csv, write_viewpoint_csv, Method, PlanningMesh,
};
use oanbv::scene::{generate_scene, Family};
use oanbv::scoring::{evaluate_all, write_scores_csv};
use oanbv::{io, Error, Result};
use serde_json::json;

use crate::config::{parse_list, parse_weights, scene_seeds, Config};
use crate::output::{Manifest, Staging, DETECTION_FAILURE_RULE};

#[derive(Debug, Parser)]
#[command(name = "oanbv", version, about = "Occlusion-aware next-best-view experiments")]
struct Cli {
    /// Root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Method comparison over a scene suite.
    Run(RunArgs),
    /// Evaluator weight grid sweep.
    Sweep(SweepArgs),
    /// Alignment or viewpoint-generation ablation.
    Ablate(AblateArgs),
    /// Dump one generated scene and its spawn view.
    Scene(SceneArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    family: Option<String>,
    /// Comma-separated: oa_nbv, volumetric, pred, shell_oa.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// `w_v,w_a,w_o`.
    #[arg(long)]
    weights: Option<String>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated families.
    #[arg(long)]
    families: Option<String>,
    /// Trials per family.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Ablation {
    Alignment,
    Viewpoints,
}

#[derive(Debug, Args)]
struct AblateArgs {
    which: Ablation,
    #[arg(long)]
    family: Option<String>,
    /// Seed count of the alignment ablation.
    #[arg(long)]
    seeds: Option<usize>,
    /// Scene count of the viewpoint ablation.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Args)]
struct SceneArgs {
    #[arg(long)]
    family: Option<String>,
}

/// Outcome of a command that completed and wrote its artifacts.
enum Done {
    Ok,
    /// Artifacts written, but some scenes could not be generated.
    GenerationErrors(usize),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Generation { .. } => 3,
        Error::InvalidArgument(_)
        | Error::InvalidWeights { .. }
        | Error::PitchOutOfRange(_)
        | Error::Parse(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::GenerationErrors(n)) => {
            eprintln!("error: {n} scene(s) could not be generated; see the error column");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn build_config(cli: &Cli) -> Result<Config> {
    let mut c = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if cli.workers.is_some() {
        c.workers = cli.workers;
    }
    match &cli.command {
        Command::Run(a) => {
            if let Some(f) = &a.family {
                c.run.family = f.parse()?;
            }
            if let Some(m) = &a.methods {
                c.run.methods = parse_list::<Method>(m)?;
            }
            if let Some(n) = a.scenes {
                c.run.scenes = n;
            }
            if let Some(n) = a.iterations {
                c.trial.iterations = n;
            }
            if let Some(w) = &a.weights {
                c.trial.weights = parse_weights(w)?;
            }
        }
        Command::Sweep(a) => {
            if let Some(f) = &a.families {
                c.sweep.families = parse_list::<Family>(f)?;
            }
            if let Some(n) = a.trials {
                c.sweep.trials = n;
            }
            if let Some(s) = a.step {
                c.sweep.step = s;
            }
        }
        Command::Ablate(a) => match a.which {
            Ablation::Alignment => {
                if a.trials.is_some() {
                    return Err(Error::InvalidArgument("--trials applies to 'ablate viewpoints'; use --seeds".into()));
                }
                if let Some(f) = &a.family {
                    c.ablate_alignment.family = f.parse()?;
                }
                if let Some(n) = a.seeds {
                    c.ablate_alignment.seeds = n;
                }
            }
            Ablation::Viewpoints => {
                if a.seeds.is_some() {
                    return Err(Error::InvalidArgument("--seeds applies to 'ablate alignment'; use --trials".into()));
                }
                if let Some(f) = &a.family {
                    c.ablate_viewpoints.family = f.parse()?;
                }
                if let Some(n) = a.trials {
                    c.ablate_viewpoints.trials = n;
                }
            }
        },
        Command::Scene(a) => {
            if let Some(f) = &a.family {
                c.scene.family = f.parse()?;
            }
        }
    }
    c.validate()?;
    Ok(c)
}

fn execute(cli: Cli) -> Result<Done> {
    let c = build_config(&cli)?;
    if let Some(n) = c.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    }
    let mut st = Staging::new(&cli.out)?;
    let done = match &cli.command {
        Command::Run(_) => cmd_run(&c, &mut st)?,
        Command::Sweep(_) => cmd_sweep(&c, &mut st)?,
        Command::Ablate(a) => cmd_ablate(&c, a.which, &mut st)?,
        Command::Scene(_) => cmd_scene(&c, &mut st)?,
    };
    st.commit()?;
    Ok(done)
}

fn manifest<E: serde::Serialize>(st: &mut Staging, command: &str, c: &Config, seeds: &[u64], extra: E) -> Result<()> {
    let files = st.files().to_vec();
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config: c,
        seeds,
        detection_failure_rule: DETECTION_FAILURE_RULE,
        files: &files,
        extra,
    };
    st.write_json("manifest.json", &m)
}

fn cmd_run(c: &Config, st: &mut Staging) -> Result<Done> {
    let seeds = scene_seeds(c.seed, c.run.scenes);
    let records = run_suite(c.run.family, &seeds, &c.run.methods, &c.trial)?;
    let rows = aggregate(&records);
    st.write("trials.csv", |w| write_trials_csv(w, &records))?;
    st.write("aggregate.csv", |w| write_aggregate_csv(w, &rows))?;
    let failed: Vec<_> = records
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| json!({"seed": r.seed, "method": r.method, "error": e})))
        .collect();
    let count = |m: PlanningMesh| {
        records
            .iter()
            .flat_map(|r| &r.iterations)
            .filter(|it| it.planning_mesh == m && it.iteration < c.trial.iterations)
            .count()
    };
    let extra = json!({
        "family": c.run.family,
        "failed_trials": failed,
        "planned_from_last_valid_hypothesis": count(PlanningMesh::LastValid),
        "planned_from_initial_mesh": count(PlanningMesh::InitFallback),
        "peaks": rows.iter().map(|r| json!({
            "family": r.family,
            "method": r.method,
            "success_rate": r.peak_success_rate,
            "mean_area": r.peak_area,
            "mean_rvis": r.peak_rvis,
        })).collect::<Vec<_>>(),
    });
    let n_failed = failed.len();
    manifest(st, "run", c, &seeds, extra)?;
    Ok(if n_failed == 0 { Done::Ok } else { Done::GenerationErrors(n_failed) })
}

fn cmd_sweep(c: &Config, st: &mut Staging) -> Result<Done> {
    let seeds = scene_seeds(c.seed, c.sweep.trials);
    let result = weight_sweep(&c.sweep.families, &seeds, c.sweep.step, &c.trial)?;
    st.write("sweep_cells.csv", |w| write_sweep_cells_csv(w, &result.cells))?;
    st.write("sweep_grid.csv", |w| write_sweep_grid_csv(w, &result))?;
    let best = result.best.map(|i| result.cells[i]);
    let extra = json!({
        "argmax": best.map(|b| json!({"w_o": b.w_o, "w_a": b.w_a, "w_v": b.w_v, "snr": b.snr, "zero_std": b.zero_std})),
        "trials": result.trials.len(),
        "skipped_trials": result.skipped_trials,
    });
    manifest(st, "sweep", c, &seeds, extra)?;
    Ok(Done::Ok)
}

fn cmd_ablate(c: &Config, which: Ablation, st: &mut Staging) -> Result<Done> {
    match which {
        Ablation::Alignment => {
            let seeds = scene_seeds(c.seed, c.ablate_alignment.seeds);
            let (rows, summary) = ablation_alignment(c.ablate_alignment.family, &seeds, &c.trial)?;
            st.write("ablation_alignment.csv", |w| write_alignment_csv(w, &rows))?;
            manifest(st, "ablate alignment", c, &seeds, json!({ "summary": summary }))?;
        }
        Ablation::Viewpoints => {
            let seeds = scene_seeds(c.seed, c.ablate_viewpoints.trials);
            let (rows, summary) = ablation_viewpoint_gen(c.ablate_viewpoints.family, &seeds, &c.trial)?;
            st.write("ablation_viewpoints.csv", |w| write_viewpoint_csv(w, &rows))?;
            manifest(st, "ablate viewpoints", c, &seeds, json!({ "summary": summary }))?;
        }
    }
    Ok(Done::Ok)
}

fn cmd_scene(c: &Config, st: &mut Staging) -> Result<Done> {
    let scene = generate_scene(c.scene.family, c.seed)?;
    let cam = scene.spawn_camera();
    let p = &c.trial;
    let per = perceive(&scene, &cam, p, iteration_seed(c.seed, 0))?;
    let mesh = per.hypothesis.as_ref().unwrap_or(&per.init_mesh);
    let map = build_elevation_map(&scene, &scene.spawn, &cam);
    let cands = elevation_candidates(&scene, p, mesh, &scene.spawn, &cam, iteration_seed(c.seed, 0))?;
    let scored = evaluate_all(&cands, &mesh.vertices, &per.occluder_points(p.occluders), &p.intrinsics, &p.weights, &p.eval);

    st.write("scene.json", |w| {
        w.write_all(scene.to_json()?.as_bytes())?;
        Ok(())
    })?;
    st.write("target.obj", |w| io::write_obj(w, &scene.target))?;
    st.write("target_parts.txt", |w| io::write_part_labels(w, &scene.target))?;
    st.write("hypothesis.obj", |w| io::write_obj(w, mesh))?;
    st.write("spawn_cloud.ply", |w| io::write_ply(w, &per.obs.cloud))?;
    st.write("spawn_mask.pgm", |w| io::write_pgm(w, &per.obs.gt_mask))?;
    st.write("elevation.csv", |w| io::write_elevation_csv(w, &map))?;
    st.write("elevation_valid.csv", |w| io::write_validity_csv(w, &map))?;
    st.write("candidates.csv", |w| io::write_candidates_csv(w, &cands))?;
    st.write("scores.csv", |w| write_scores_csv(w, &scored, None))?;
    let extra = json!({
        "family": c.scene.family,
        "detected": per.detected,
        "area": per.area,
        "r_vis": per.r_vis,
        "mpvpe": per.mpvpe,
        "hypothesis": per.source,
    });
    manifest(st, "scene", c, &[c.seed], extra)?;
    Ok(Done::Ok)
}


