//! Synthetic perturbation benchmark and pose metrics.
//!
//! A trial samples a ground-truth pose, renders the scene observation,
//! perturbs the pose either in rotation or in translation, refines it and
//! records the errors. Every trial owns a seed derived from the benchmark
//! seed and its position in the sweep, so results do not depend on the
//! order in which trials run.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assets::primitives::box_mesh;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, TriangleMesh, UnitQuaternion, Vec3};
use crate::raster::{compute_window_size, extract_silhouette, render_depth, SilhouetteMask};
use crate::refine::{
    build_scene_observation, refine_iterative, Clock, RefinementConfig, Termination,
};

/// Number of views used to size the crop window.
pub const DEFAULT_WINDOW_VIEWS: usize = 64;

/// Perturbation levels. Rotation trials perturb only the rotation,
/// translation trials only the translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    pub rotation_levels_deg: Vec<f64>,
    /// Translation magnitudes as fractions of the object diameter.
    pub translation_fractions: Vec<f64>,
    pub trials_per_level: usize,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            rotation_levels_deg: (1..=9).map(|i| 5.0 * i as f64).collect(),
            translation_fractions: (0..=10).map(|i| i as f64 / 10.0).collect(),
            trials_per_level: 20,
            seed: 0,
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self
            .rotation_levels_deg
            .iter()
            .find(|a| !(**a >= 0.0 && **a <= 180.0))
        {
            return Err(Error::Config(format!(
                "rotation level {a} outside [0, 180] degrees"
            )));
        }
        if let Some(f) = self
            .translation_fractions
            .iter()
            .find(|f| !(**f >= 0.0 && **f <= 1.5))
        {
            return Err(Error::Config(format!(
                "translation fraction {f} outside [0, 1.5]"
            )));
        }
        if self.trials_per_level == 0 {
            return Err(Error::Config("trials_per_level must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Rot,
    Trans,
}

/// Object and camera a benchmark runs on.
#[derive(Debug, Clone)]
pub struct BenchSetup {
    pub name: String,
    pub mesh: TriangleMesh,
    pub k: CameraIntrinsics,
    /// Closest object distance; ground-truth depths are drawn from
    /// `[min_distance, 2 · min_distance]`.
    pub min_distance: f64,
    pub window_views: usize,
    /// Fraction of the silhouette hidden by a slab in front of the object.
    pub occlusion: Option<f64>,
}

impl BenchSetup {
    pub fn new(
        name: impl Into<String>,
        mesh: TriangleMesh,
        k: CameraIntrinsics,
        min_distance: f64,
    ) -> Self {
        Self {
            name: name.into(),
            mesh,
            k,
            min_distance,
            window_views: DEFAULT_WINDOW_VIEWS,
            occlusion: None,
        }
    }

    pub fn with_occlusion(mut self, fraction: f64) -> Self {
        self.occlusion = Some(fraction);
        self
    }
}

/// One CSV row. Column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub object: String,
    pub mode: Mode,
    pub level: f64,
    pub seed: u64,
    pub init_rot_deg: f64,
    pub final_rot_deg: f64,
    pub init_trans_m: f64,
    pub final_trans_m: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub vss: f64,
    /// Both silhouettes were empty, so `vss` is 1 by convention.
    pub vss_vacuous: bool,
    pub add_m: f64,
    pub add_correct: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub wall_ms: f64,
}

pub const CSV_COLUMNS: [&str; 18] = [
    "object",
    "mode",
    "level",
    "seed",
    "init_rot_deg",
    "final_rot_deg",
    "init_trans_m",
    "final_trans_m",
    "tx",
    "ty",
    "tz",
    "vss",
    "vss_vacuous",
    "add_m",
    "add_correct",
    "termination",
    "iterations",
    "wall_ms",
];

/// Rotation error, per-axis and total translation error between two poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrors {
    pub rotation_deg: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub translation_m: f64,
}

pub fn rotation_translation_errors(gt: &Pose, est: &Pose) -> PoseErrors {
    let d = est.translation - gt.translation;
    PoseErrors {
        rotation_deg: gt.rotation.angle_between(&est.rotation).to_degrees(),
        tx: d.x.abs(),
        ty: d.y.abs(),
        tz: d.z.abs(),
        translation_m: d.norm(),
    }
}

/// Silhouette IoU; two empty masks agree perfectly.
pub fn vss_score(a: &SilhouetteMask, b: &SilhouetteMask) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::invalid(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Mean distance between mesh vertices placed by the two poses.
pub fn add_error(mesh: &TriangleMesh, gt: &Pose, est: &Pose) -> f64 {
    let v = mesh.vertices();
    let sum: f64 = v
        .iter()
        .map(|&x| gt.transform_point(x).distance(est.transform_point(x)))
        .sum();
    sum / v.len() as f64
}

/// ADD below a tenth of the diameter.
pub fn add_correct(mesh: &TriangleMesh, gt: &Pose, est: &Pose) -> Result<bool> {
    Ok(is_add_correct(add_error(mesh, gt, est), mesh.diameter()?))
}

pub fn is_add_correct(add: f64, diameter: f64) -> bool {
    add < 0.1 * diameter
}

fn random_unit_vector(rng: &mut impl Rng) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Rotates `gt` by exactly `angle_deg` about a random axis and shifts it by
/// `translation_fraction · diameter` in a random direction.
pub fn perturb_pose(
    gt: &Pose,
    angle_deg: f64,
    translation_fraction: f64,
    diameter: f64,
    seed: u64,
) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = random_unit_vector(&mut rng);
    let dir = random_unit_vector(&mut rng);
    let rotation = if angle_deg == 0.0 {
        gt.rotation
    } else {
        UnitQuaternion::from_axis_angle(axis, angle_deg.to_radians())
            .expect("unit axis")
            .compose(&gt.rotation)
    };
    Pose::new(
        rotation,
        gt.translation + dir * (translation_fraction * diameter),
    )
}

/// Ground-truth pose seen from the upper viewing hemisphere with a random
/// in-plane angle, at a depth in `[d, 2d]`, and placed so that a
/// `window`-sized patch around its center stays inside the image.
pub fn sample_gt_pose(
    rng: &mut impl Rng,
    k: &CameraIntrinsics,
    min_distance: f64,
    window: u32,
) -> Pose {
    let azimuth: f64 = rng.random_range(0.0..2.0 * PI);
    let elevation = rng.random_range(0.0f64..1.0).asin();
    let roll: f64 = rng.random_range(-PI..PI);
    let view = Vec3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    );
    // Object-frame view direction goes to the camera's -z axis.
    let to_camera =
        UnitQuaternion::rotation_between(view, Vec3::new(0.0, 0.0, -1.0)).expect("unit vectors");
    let rotation = UnitQuaternion::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), roll)
        .expect("unit axis")
        .compose(&to_camera);

    let depth = rng.random_range(min_distance..=2.0 * min_distance);
    let half = 0.5 * window as f64;
    let range = |size: u32| {
        let (lo, hi) = (half, size as f64 - 1.0 - half);
        if lo < hi {
            (lo, hi)
        } else {
            let c = 0.5 * (size as f64 - 1.0);
            (c, c)
        }
    };
    let (ulo, uhi) = range(k.width);
    let (vlo, vhi) = range(k.height);
    let u = if ulo < uhi {
        rng.random_range(ulo..uhi)
    } else {
        ulo
    };
    let v = if vlo < vhi {
        rng.random_range(vlo..vhi)
    } else {
        vlo
    };
    let translation = k.backproject(u, v, depth).expect("positive depth");
    Pose::new(rotation, translation)
}

/// A slab between the camera and the object whose right edge hides the
/// leftmost `fraction` of the silhouette pixels.
pub fn left_occluder(
    mesh: &TriangleMesh,
    gt: &Pose,
    k: &CameraIntrinsics,
    fraction: f64,
) -> Result<Option<(TriangleMesh, Pose)>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "occlusion fraction {fraction} outside [0, 1)"
        )));
    }
    if fraction == 0.0 {
        return Ok(None);
    }
    let mask = extract_silhouette(&render_depth(mesh, gt, k)?);
    let mut columns: Vec<u32> = (0..mask.height())
        .flat_map(|y| (0..mask.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y))
        .map(|(x, _)| x)
        .collect();
    if columns.is_empty() {
        return Err(Error::DegenerateScene);
    }
    columns.sort_unstable();
    let cut = columns[((fraction * columns.len() as f64) as usize).min(columns.len() - 1)];

    let z = 0.5 * gt.translation.z;
    let right = (cut as f64 - 0.5 - k.cx) * z / k.fx;
    let left = (-1.0 - k.cx) * z / k.fx;
    let height = 2.0 * (k.height as f64 + 2.0) * z / k.fy;
    let y_mid = (0.5 * (k.height as f64 - 1.0) - k.cy) * z / k.fy;
    let width = right - left;
    let thickness = 0.01 * z;
    let slab = box_mesh(width, height, thickness)?;
    let pose = Pose::from_translation(Vec3::new(0.5 * (left + right), y_mid, z));
    Ok(Some((slab, pose)))
}

/// Mixes the benchmark seed with a trial's position into its own seed.
pub fn trial_seed(base: u64, mode: Mode, level_index: usize, trial: usize) -> u64 {
    let mut x =
        base ^ (match mode {
            Mode::Rot => 0x9E37_79B9_7F4A_7C15,
            Mode::Trans => 0xC2B2_AE3D_27D4_EB4F,
        }) ^ ((level_index as u64) << 32)
            ^ trial as u64;
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

struct Job {
    mode: Mode,
    level: f64,
    seed: u64,
}

/// Runs every (mode, level, trial) combination, in parallel when the
/// `parallel` feature is on. Records come back in sweep order. Failures of
/// individual trials are recorded, not raised.
pub fn run_perturbation_benchmark(
    setup: &BenchSetup,
    spec: &PerturbationSpec,
    config: &RefinementConfig,
) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    config.validate()?;
    if !(setup.min_distance > 0.0) {
        return Err(Error::Config("min_distance must be positive".into()));
    }
    if let Some(f) = setup.occlusion {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::Config(format!(
                "occlusion fraction {f} outside [0, 1)"
            )));
        }
    }
    let diameter = setup.mesh.diameter()?;
    let window = compute_window_size(
        &setup.mesh,
        &setup.k,
        setup.min_distance,
        setup.window_views,
        config.window_padding_fraction,
    )?;

    let mut jobs = Vec::new();
    for (mode, levels) in [
        (Mode::Rot, &spec.rotation_levels_deg),
        (Mode::Trans, &spec.translation_fractions),
    ] {
        for (li, &level) in levels.iter().enumerate() {
            for t in 0..spec.trials_per_level {
                jobs.push(Job {
                    mode,
                    level,
                    seed: trial_seed(spec.seed, mode, li, t),
                });
            }
        }
    }

    let run = |job: &Job| run_trial(setup, config, window, diameter, job);
    #[cfg(feature = "parallel")]
    let records = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let records = jobs.iter().map(run).collect();
    Ok(records)
}

fn run_trial(
    setup: &BenchSetup,
    config: &RefinementConfig,
    window: u32,
    diameter: f64,
    job: &Job,
) -> TrialRecord {
    let clock = Clock::start();
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let gt = sample_gt_pose(&mut rng, &setup.k, setup.min_distance, window);
    let (angle, fraction) = match job.mode {
        Mode::Rot => (job.level, 0.0),
        Mode::Trans => (0.0, job.level),
    };
    let initial = perturb_pose(&gt, angle, fraction, diameter, rng.random());

    let outcome = (|| {
        let occluder = match setup.occlusion {
            Some(f) => left_occluder(&setup.mesh, &gt, &setup.k, f)?,
            None => None,
        };
        let scene = build_scene_observation(
            &setup.mesh,
            &gt,
            &setup.k,
            window,
            occluder.as_ref().map(|(m, p)| (m, p)),
            config.contour_samples,
        )?;
        refine_iterative(&initial, &scene, &setup.mesh, &setup.k, config, Some(&gt))
    })();
    let (final_pose, termination, iterations) = match outcome {
        Ok(r) => (r.final_pose, r.termination, r.iterations()),
        Err(_) => (initial, Termination::Error, 0),
    };

    let init_err = rotation_translation_errors(&gt, &initial);
    let err = rotation_translation_errors(&gt, &final_pose);
    let render_mask =
        |p: &Pose| render_depth(&setup.mesh, p, &setup.k).map(|d| extract_silhouette(&d));
    let (vss, vss_vacuous) = match (render_mask(&gt), render_mask(&final_pose)) {
        (Ok(a), Ok(b)) => {
            let vacuous = a.area() == 0 && b.area() == 0;
            (vss_score(&a, &b).unwrap_or(0.0), vacuous)
        }
        _ => (0.0, false),
    };
    let add = add_error(&setup.mesh, &gt, &final_pose);
    TrialRecord {
        object: setup.name.clone(),
        mode: job.mode,
        level: job.level,
        seed: job.seed,
        init_rot_deg: init_err.rotation_deg,
        final_rot_deg: err.rotation_deg,
        init_trans_m: init_err.translation_m,
        final_trans_m: err.translation_m,
        tx: err.tx,
        ty: err.ty,
        tz: err.tz,
        vss,
        vss_vacuous,
        add_m: add,
        add_correct: is_add_correct(add, diameter),
        termination,
        iterations,
        wall_ms: clock.elapsed_ms(),
    }
}

/// CSV text with a header row; an empty record list gives the header only.
pub fn records_to_csv(records: &[TrialRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<csv>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected CSV header {header:?}"),
        });
    }
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn export_results(records: &[TrialRecord], path: &Path) -> Result<()> {
    std::fs::write(path, records_to_csv(records)?).map_err(|e| Error::io(path, e))
}

/// Statistics of one (object, mode, level) cell of the sweep. Fractions are
/// over all trials of the cell; the rotation buckets use the final rotation
/// error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub object: String,
    pub mode: Mode,
    pub level: f64,
    pub trials: usize,
    pub below_5deg: f64,
    pub below_10deg: f64,
    pub below_45deg: f64,
    pub diverged: f64,
    pub converged: f64,
    pub errors: f64,
    pub mean_vss: f64,
    pub add_rate: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub levels: Vec<LevelSummary>,
}

/// Groups records by (object, mode, level) in first-seen order.
pub fn summarize(records: &[TrialRecord]) -> Summary {
    let mut keys: Vec<(String, Mode, f64)> = Vec::new();
    for r in records {
        let key = (r.object.clone(), r.mode, r.level);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let levels = keys
        .into_iter()
        .map(|(object, mode, level)| {
            let rows: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.object == object && r.mode == mode && r.level == level)
                .collect();
            let n = rows.len() as f64;
            let frac =
                |f: &dyn Fn(&TrialRecord) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n;
            let mean = |f: &dyn Fn(&TrialRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            LevelSummary {
                trials: rows.len(),
                below_5deg: frac(&|r| r.final_rot_deg < 5.0),
                below_10deg: frac(&|r| r.final_rot_deg < 10.0),
                below_45deg: frac(&|r| r.final_rot_deg < 45.0),
                diverged: frac(&|r| r.termination == Termination::Diverged),
                converged: frac(&|r| r.termination == Termination::Converged),
                errors: frac(&|r| r.termination == Termination::Error),
                mean_vss: mean(&|r| r.vss),
                add_rate: frac(&|r| r.add_correct),
                mean_iterations: mean(&|r| r.iterations as f64),
                object,
                mode,
                level,
            }
        })
        .collect();
    Summary { levels }
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
