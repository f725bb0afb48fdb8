//! Command-line front end.
//!
//! Poses are given as seven comma-separated numbers `w,x,y,z,tx,ty,tz`: a
//! Hamilton quaternion (scalar first, normalized on input) followed by the
//! translation in meters, mapping object coordinates into the camera frame.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use contour_pose::assets::{load_mesh_obj, parse_primitive_spec, ExperimentConfig};
use contour_pose::bench::{
    add_error, export_results, is_add_correct, rotation_translation_errors,
    run_perturbation_benchmark, summarize, vss_score, write_summary, PoseErrors, TrialRecord,
    DEFAULT_WINDOW_VIEWS,
};
use contour_pose::raster::{
    compute_window_size, distance_transform, extract_contour_pixels, extract_silhouette, pgm,
    render_depth,
};
use contour_pose::refine::{
    build_scene_observation, refine_iterative, RefinementConfig, SceneObservation,
};
use contour_pose::{CameraIntrinsics, Error, Pose, TriangleMesh, UnitQuaternion, Vec3};

#[derive(Parser)]
#[command(
    name = "contour-pose",
    version,
    about = "Contour-based 6D pose refinement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render depth, mask and contour distance field dumps (PGM) for a pose.
    Render {
        #[command(flatten)]
        common: Common,
        /// Object pose `w,x,y,z,tx,ty,tz`.
        #[arg(long, value_parser = parse_pose)]
        pose: Pose,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Refine an initial pose against a scene; prints the result as JSON.
    Refine {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tuning: Tuning,
        /// Initial pose `w,x,y,z,tx,ty,tz`.
        #[arg(long, value_parser = parse_pose)]
        init: Pose,
        /// Ground-truth pose the scene is rendered from.
        #[arg(long, value_parser = parse_pose, required_unless_present = "scene", conflicts_with = "scene")]
        gt: Option<Pose>,
        /// Scene image: a 16-bit depth dump or an 8-bit mask (mask scenes
        /// refine with the visual term only).
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Also write the result to `<out>/refine.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the perturbation benchmark described by an experiment config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the CSV and summary; defaults to the config's paths.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two poses: VSS, ADD and per-axis errors as JSON.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_pose)]
        gt: Pose,
        #[arg(long, value_parser = parse_pose)]
        est: Pose,
    },
}

/// Object and camera selection shared by the single-scene commands. Without
/// `--mesh` or `--primitive` the first object of `--config` is used.
#[derive(Args)]
struct Common {
    /// Experiment config providing intrinsics, refinement settings and objects.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ASCII OBJ mesh, in meters.
    #[arg(long, conflicts_with = "primitive")]
    mesh: Option<PathBuf>,
    /// Built-in primitive `name[:param...]`, e.g. `cube:0.1`.
    #[arg(long)]
    primitive: Option<String>,
}

#[derive(Args)]
struct Tuning {
    /// Maximum number of render-and-descend rounds.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Use the visual loss alone.
    #[arg(long)]
    no_bidirectional: bool,
}

impl Tuning {
    fn apply(&self, cfg: &mut RefinementConfig) {
        if let Some(n) = self.max_iters {
            cfg.max_outer_iterations = n;
        }
        if self.no_bidirectional {
            cfg.use_bidirectional = false;
        }
    }
}

fn parse_pose(s: &str) -> Result<Pose, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("'{c}': {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != 7 || v.iter().any(|c| !c.is_finite()) {
        return Err("expected seven finite numbers w,x,y,z,tx,ty,tz".into());
    }
    let q = UnitQuaternion::normalize([v[0], v[1], v[2], v[3]]).map_err(|e| e.to_string())?;
    Ok(Pose::new(q, Vec3::new(v[4], v[5], v[6])))
}

/// Failure with its exit code.
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

struct Context {
    mesh: TriangleMesh,
    k: CameraIntrinsics,
    refinement: RefinementConfig,
    min_distance: f64,
    window_views: usize,
}

impl Common {
    fn context(&self) -> Result<Context, Failure> {
        let config = self
            .config
            .as_deref()
            .map(ExperimentConfig::load)
            .transpose()?;
        let mesh = match (&self.mesh, &self.primitive, &config) {
            (Some(p), _, _) => load_mesh_obj(p)?,
            (None, Some(s), _) => parse_primitive_spec(s)?,
            (None, None, Some(c)) => c.load_objects()?.swap_remove(0).1,
            (None, None, None) => {
                return Err(Failure::Usage(
                    "one of --mesh, --primitive or --config is required".into(),
                ))
            }
        };
        Ok(match config {
            Some(c) => Context {
                mesh,
                k: c.intrinsics,
                refinement: c.refinement,
                min_distance: c.min_distance,
                window_views: c.window_views,
            },
            None => Context {
                mesh,
                k: CameraIntrinsics::vga(),
                refinement: RefinementConfig::default(),
                min_distance: 0.5,
                window_views: DEFAULT_WINDOW_VIEWS,
            },
        })
    }
}

impl Context {
    fn window(&self) -> Result<u32, Error> {
        compute_window_size(
            &self.mesh,
            &self.k,
            self.min_distance,
            self.window_views,
            self.refinement.window_padding_fraction,
        )
    }
}

fn print_json(value: &impl Serialize) -> Result<String, Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    emit(&text)?;
    Ok(text)
}

/// Writes a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(line: &str) -> Result<(), Error> {
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

#[derive(Serialize)]
struct RenderReport {
    silhouette_area: usize,
    contour_pixels: usize,
    files: Vec<PathBuf>,
}

fn render(common: &Common, pose: &Pose, out: &Path) -> Result<(), Failure> {
    let ctx = common.context()?;
    let depth = render_depth(&ctx.mesh, pose, &ctx.k)?;
    let mask = extract_silhouette(&depth);
    let contour = extract_contour_pixels(&mask);
    create_dir(out)?;
    let mut files = vec![out.join("depth.pgm"), out.join("mask.pgm")];
    pgm::write(&files[0], &pgm::encode_depth(&depth))?;
    pgm::write(&files[1], &pgm::encode_mask(&mask))?;
    if !contour.is_empty() {
        let field = distance_transform(&contour, ctx.k.width, ctx.k.height)?;
        files.push(out.join("distance.pgm"));
        pgm::write(&files[2], &pgm::encode_distance(&field))?;
    }
    print_json(&RenderReport {
        silhouette_area: mask.area(),
        contour_pixels: contour.len(),
        files,
    })?;
    Ok(())
}

fn refine(
    common: &Common,
    tuning: &Tuning,
    init: &Pose,
    gt: Option<&Pose>,
    scene: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let mut ctx = common.context()?;
    tuning.apply(&mut ctx.refinement);
    ctx.refinement.validate()?;
    let window = ctx.window()?;
    let samples = ctx.refinement.contour_samples;
    let observation = match (gt, scene) {
        (Some(gt), _) => build_scene_observation(&ctx.mesh, gt, &ctx.k, window, None, samples)?,
        (None, Some(path)) => {
            let img = pgm::read(path)?;
            if (img.width, img.height) != (ctx.k.width, ctx.k.height) {
                return Err(Failure::Runtime(Error::InvalidArgument(format!(
                    "scene is {}x{}, camera is {}x{}",
                    img.width, img.height, ctx.k.width, ctx.k.height
                ))));
            }
            if img.maxval > 255 {
                SceneObservation::from_depth(&img.to_depth(), &ctx.k, window, samples)?
            } else {
                if ctx.refinement.use_bidirectional {
                    eprintln!("note: mask scene has no depth; refining with the visual term only");
                    ctx.refinement.use_bidirectional = false;
                }
                SceneObservation::from_mask(&img.to_mask(), window)?
            }
        }
        (None, None) => return Err(Failure::Usage("one of --gt or --scene is required".into())),
    };
    let result = refine_iterative(init, &observation, &ctx.mesh, &ctx.k, &ctx.refinement, gt)?;
    let text = print_json(&result)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        let path = dir.join("refine.json");
        std::fs::write(&path, text + "\n").map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn bench(
    config: &Path,
    tuning: &Tuning,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(config)?;
    tuning.apply(&mut cfg.refinement);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let spec = cfg.perturbation_spec();
    let mut records: Vec<TrialRecord> = Vec::new();
    for setup in cfg.bench_setups()? {
        records.extend(run_perturbation_benchmark(&setup, &spec, &cfg.refinement)?);
    }
    let (csv, summary_path) = match out {
        Some(dir) => {
            create_dir(dir)?;
            (dir.join("results.csv"), dir.join("summary.json"))
        }
        None => (
            cfg.resolve(&cfg.output.csv),
            cfg.resolve(&cfg.output.summary),
        ),
    };
    for p in [&csv, &summary_path] {
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
    }
    export_results(&records, &csv)?;
    let summary = summarize(&records);
    write_summary(&summary, &summary_path)?;
    for l in &summary.levels {
        emit(&format!(
            "{} {:?} {:>5}: <5deg {:.2} <10deg {:.2} diverged {:.2} add {:.2} vss {:.3}",
            l.object,
            l.mode,
            l.level,
            l.below_5deg,
            l.below_10deg,
            l.diverged,
            l.add_rate,
            l.mean_vss
        ))?;
    }
    emit(&format!(
        "wrote {} and {}",
        csv.display(),
        summary_path.display()
    ))?;
    Ok(())
}

#[derive(Serialize)]
struct MetricsReport {
    vss: f64,
    add_m: f64,
    add_correct: bool,
    diameter_m: f64,
    #[serde(flatten)]
    errors: PoseErrors,
}

fn metrics(common: &Common, gt: &Pose, est: &Pose) -> Result<(), Failure> {
    let ctx = common.context()?;
    let mask = |p: &Pose| render_depth(&ctx.mesh, p, &ctx.k).map(|d| extract_silhouette(&d));
    let diameter = ctx.mesh.diameter()?;
    let add = add_error(&ctx.mesh, gt, est);
    print_json(&MetricsReport {
        vss: vss_score(&mask(gt)?, &mask(est)?)?,
        add_m: add,
        add_correct: is_add_correct(add, diameter),
        diameter_m: diameter,
        errors: rotation_translation_errors(gt, est),
    })?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Render { common, pose, out } => render(common, pose, out),
        Command::Refine {
            common,
            tuning,
            init,
            gt,
            scene,
            out,
        } => refine(
            common,
            tuning,
            init,
            gt.as_ref(),
            scene.as_deref(),
            out.as_deref(),
        ),
        Command::Bench {
            config,
            tuning,
            seed,
            out,
        } => bench(config, tuning, *seed, out.as_deref()),
        Command::Metrics { common, gt, est } => metrics(common, gt, est),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun with --help for usage.");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
