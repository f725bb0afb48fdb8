//! Iterative pose refinement by direct minimization of the contour energies.
//!
//! Each outer iteration renders the current hypothesis, builds its distance
//! field and contour points, and then descends the loss for a fixed number of
//! inner steps against that (now frozen) rendering. The update found is
//! applied to the pose and the object is re-rendered.
//!
//! The inner optimizer works in an object-centered parametrization: the
//! rotation `R_u` turns the object about its own origin and `τ` shifts it.
//! The loss acts on camera-space points, so it is evaluated at the equivalent
//! camera-frame update `(R_u, t − R_u t + τ)`, where `t` is the hypothesis
//! translation. Applying `(R_u, τ)` with [`Pose::apply_update`] then yields
//! exactly the pose the loss was evaluated at.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, TriangleMesh, UnitQuaternion, Vec3};
use nalgebra::{Matrix6, Vector6};

use crate::geometry::hamilton;
use crate::loss::{
    bidirectional_linearization, visual_linearization, Linearization, ReverseTerm, UpdateParams,
};
use crate::raster::{
    composite_visible, crop_patch, distance_transform_in, extract_contour_pixels,
    extract_silhouette, is_foreground_depth, mask_bounding_box, render_depth, sample_from_contour,
    ContourPointSet, DepthMap, DistanceField, Pixel, SilhouetteMask, DEFAULT_CONTOUR_SAMPLES,
    DEFAULT_WINDOW_PADDING,
};

/// Optimizer settings. Outer-loop stopping thresholds and the divergence
/// rule follow the evaluation protocol; the inner-loop values are tuning
/// choices of this implementation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementConfig {
    pub max_outer_iterations: usize,
    /// Stop once the last update rotates by less than this (degrees)...
    pub stop_rotation_deg: f64,
    /// ...and translates by less than this (meters).
    pub stop_translation_m: f64,
    pub inner_steps_per_render: usize,
    pub optimizer: Optimizer,
    /// Largest inner step, as a fraction of the object diameter.
    pub initial_step_scale: f64,
    pub window_padding_fraction: f64,
    pub use_bidirectional: bool,
    pub use_exact_inverse_reverse_term: bool,
    pub contour_samples: usize,
    /// Caps residuals during refinement so contour points without a
    /// counterpart (occlusion) stop pulling. The cap is fixed per render at
    /// `max(truncation_px, truncation_median_factor · median residual)`.
    pub truncation_px: Option<f64>,
    pub truncation_median_factor: f64,
    pub divergence_rotation_deg: f64,
    /// Divergence threshold on translation error, as a fraction of the diameter.
    pub divergence_translation_fraction: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            max_outer_iterations: 10,
            stop_rotation_deg: 1.5,
            stop_translation_m: 0.0075,
            inner_steps_per_render: 20,
            optimizer: Optimizer::GaussNewton,
            initial_step_scale: 0.25,
            window_padding_fraction: DEFAULT_WINDOW_PADDING,
            use_bidirectional: true,
            use_exact_inverse_reverse_term: false,
            contour_samples: DEFAULT_CONTOUR_SAMPLES,
            truncation_px: Some(5.0),
            truncation_median_factor: 1.5,
            divergence_rotation_deg: 45.0,
            divergence_translation_fraction: 0.5,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("stop_rotation_deg", self.stop_rotation_deg),
            ("stop_translation_m", self.stop_translation_m),
            ("initial_step_scale", self.initial_step_scale),
            ("window_padding_fraction", self.window_padding_fraction),
            ("divergence_rotation_deg", self.divergence_rotation_deg),
            (
                "divergence_translation_fraction",
                self.divergence_translation_fraction,
            ),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("max_outer_iterations", self.max_outer_iterations),
            ("inner_steps_per_render", self.inner_steps_per_render),
            ("contour_samples", self.contour_samples),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if let Some(c) = self.truncation_px {
            if !(c > 0.0) {
                return Err(Error::Config(format!(
                    "truncation_px must be positive, got {c}"
                )));
            }
        }
        if self.stop_rotation_deg >= self.divergence_rotation_deg {
            return Err(Error::Config(
                "stop_rotation_deg must be below divergence_rotation_deg".into(),
            ));
        }
        Ok(())
    }

    pub fn reverse_term(&self) -> ReverseTerm {
        if self.use_exact_inverse_reverse_term {
            ReverseTerm::ExactInverse
        } else {
            ReverseTerm::Conjugate
        }
    }

    /// Both stopping conditions hold for an update of this size.
    pub fn is_converged_update(&self, rotation_deg: f64, translation_m: f64) -> bool {
        rotation_deg < self.stop_rotation_deg && translation_m < self.stop_translation_m
    }

    /// Either error exceeds its divergence threshold.
    pub fn is_diverged(
        &self,
        rotation_error_deg: f64,
        translation_error_m: f64,
        diameter: f64,
    ) -> bool {
        rotation_error_deg > self.divergence_rotation_deg
            || translation_error_m > self.divergence_translation_fraction * diameter
    }
}

/// How the inner loop picks its descent direction. Both variants use the
/// same backtracking line search on the summed loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Normalized negative gradient, step length adapted by the line search.
    Gradient,
    /// Negative gradient preconditioned by a reweighted Gauss–Newton matrix.
    #[default]
    GaussNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    Diverged,
    Error,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::Diverged => "diverged",
            Termination::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "converged" => Termination::Converged,
            "max_iterations" => Termination::MaxIterations,
            "diverged" => Termination::Diverged,
            "error" => Termination::Error,
            _ => return None,
        })
    }
}

/// One outer iteration: loss before and after the inner descent, and the
/// size of the update that was applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub initial_loss: f64,
    pub loss: f64,
    /// Smallest final loss seen in this or any earlier iteration.
    pub best_loss: f64,
    pub rotation_deg: f64,
    pub translation_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementResult {
    pub final_pose: Pose,
    pub trace: Vec<IterationRecord>,
    /// Updates in the order they were applied; composing them onto the
    /// initial pose gives `final_pose`.
    pub updates: Vec<Pose>,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_ms: f64,
}

impl RefinementResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// What a camera sees of the target: the contour distance field over a
/// window, sparse contour points, and the visible silhouette over the same
/// window.
#[derive(Debug, Clone)]
pub struct SceneObservation {
    pub field: DistanceField,
    pub points: ContourPointSet,
    pub mask: SilhouetteMask,
}

impl SceneObservation {
    pub fn window(&self) -> u32 {
        self.field.width()
    }

    /// Observation of a given depth image, e.g. a dump read back from disk.
    pub fn from_depth(
        depth: &DepthMap,
        k: &CameraIntrinsics,
        window: u32,
        samples: usize,
    ) -> Result<Self> {
        let (field, points, mask) =
            observe(depth, None, k, window, samples).map_err(scene_error)?;
        Ok(Self {
            field,
            points,
            mask,
        })
    }

    /// Observation of a bare silhouette. Without depth there are no 3D
    /// contour points, so only the visual term can use it.
    pub fn from_mask(mask: &SilhouetteMask, window: u32) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("window must be at least one pixel"));
        }
        let bb = mask_bounding_box(mask).ok_or(Error::DegenerateScene)?;
        let crop = crop_patch(mask, bb.center(), window);
        let contour: Vec<Pixel> = extract_contour_pixels(mask)
            .into_iter()
            .filter(|&p| crop.to_local(p).is_some())
            .collect();
        if contour.is_empty() {
            return Err(Error::DegenerateScene);
        }
        let field = distance_transform_in(&contour, window, window, crop.origin())?;
        let points = ContourPointSet {
            points: Vec::new(),
            pixels: Vec::new(),
            source_pose: None,
        };
        Ok(Self {
            field,
            points,
            mask: crop,
        })
    }
}

fn scene_error(e: Error) -> Error {
    match e {
        Error::EmptyContour => Error::DegenerateScene,
        e => e,
    }
}

/// Renders the target at `gt_pose`, optionally behind an occluder sharing
/// the z-buffer, and extracts its visible contour. Outputs are cropped to a
/// `window`-sized patch centered on the visible silhouette's bounding box.
pub fn build_scene_observation(
    mesh: &TriangleMesh,
    gt_pose: &Pose,
    k: &CameraIntrinsics,
    window: u32,
    occluder: Option<(&TriangleMesh, &Pose)>,
    samples: usize,
) -> Result<SceneObservation> {
    let mut depth = render_depth(mesh, gt_pose, k)?;
    let mut occ = None;
    if let Some((occ_mesh, occ_pose)) = occluder {
        let o = render_depth(occ_mesh, occ_pose, k)?;
        depth = composite_visible(&depth, &o)?;
        occ = Some(o);
    }
    let (field, points, mask) =
        observe(&depth, occ.as_ref(), k, window, samples).map_err(scene_error)?;
    Ok(SceneObservation {
        field,
        points: points.with_source_pose(*gt_pose),
        mask,
    })
}

/// Distance field, contour points and cropped mask of a depth image, all
/// restricted to a window centered on the silhouette. Boundary pixels next
/// to a nearer occluder surface are occlusion edges, not object contour, and are
/// left out.
fn observe(
    depth: &DepthMap,
    occluder: Option<&DepthMap>,
    k: &CameraIntrinsics,
    window: u32,
    samples: usize,
) -> Result<(DistanceField, ContourPointSet, SilhouetteMask)> {
    if window == 0 {
        return Err(Error::invalid("window must be at least one pixel"));
    }
    let mask = extract_silhouette(depth);
    let bb = mask_bounding_box(&mask).ok_or(Error::EmptyContour)?;
    let crop = crop_patch(&mask, bb.center(), window);
    let contour: Vec<Pixel> = extract_contour_pixels(&mask)
        .into_iter()
        .filter(|&p| crop.to_local(p).is_some())
        .filter(|&p| {
            let d = depth.get_image(p).unwrap_or(f64::INFINITY);
            occluder.is_none_or(|o| !borders_nearer_surface(o, p, d))
        })
        .collect();
    let field = distance_transform_in(&contour, window, window, crop.origin())?;
    let points = sample_from_contour(depth, &contour, k, samples)?;
    Ok((field, points, crop))
}

/// True when a surface of `occluder` nearer than `depth` at `p` borders `p`.
fn borders_nearer_surface(occluder: &DepthMap, p: Pixel, depth: f64) -> bool {
    (-1..=1).any(|dy| {
        (-1..=1).any(|dx| {
            occluder
                .get_image((p.0 + dx, p.1 + dy))
                .is_some_and(|d| is_foreground_depth(d) && d < depth)
        })
    })
}

/// Result of one render-and-descend round.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Update to apply with [`Pose::apply_update`].
    pub update: Pose,
    /// Loss after each accepted inner step, starting with the identity update.
    pub loss_trace: Vec<f64>,
}

/// Frozen inputs of the inner optimization.
struct Objective<'a> {
    scene: &'a SceneObservation,
    hyp_field: DistanceField,
    hyp_points: ContourPointSet,
    k: &'a CameraIntrinsics,
    config: &'a RefinementConfig,
    /// Hypothesis translation, the center the object rotates about.
    center: Vec3,
    cap: Option<f64>,
}

impl Objective<'_> {
    fn camera_update(&self, rot: UnitQuaternion, tau: Vec3) -> UpdateParams {
        UpdateParams::new(rot, self.center - rot.rotate(self.center) + tau)
    }

    /// Loss with per-residual gradients. With truncation configured,
    /// residuals are capped and capped ones stop contributing gradient.
    fn eval(&self, rot: UnitQuaternion, tau: Vec3) -> Result<Linearization> {
        let update = self.camera_update(rot, tau);
        let mut lin = if self.config.use_bidirectional {
            bidirectional_linearization(
                &update,
                &self.scene.field,
                &self.hyp_points,
                &self.hyp_field,
                &self.scene.points,
                self.k,
                self.config.reverse_term(),
            )?
        } else {
            visual_linearization(&update, &self.scene.field, &self.hyp_points, self.k)?
        };
        if let Some(cap) = self.cap {
            let mut gradient = [0.0; 7];
            for (r, row) in lin.eval.residuals.iter_mut().zip(&mut lin.rows) {
                if *r >= cap {
                    *r = cap;
                    *row = [0.0; 7];
                }
                for (g, x) in gradient.iter_mut().zip(row.iter()) {
                    *g += x;
                }
            }
            lin.eval.value = lin.eval.residuals.iter().sum();
            lin.eval.gradient = gradient;
        }
        Ok(lin)
    }

    /// Re-expresses a camera-frame gradient `[q (4), t (3)]` with respect to
    /// a left-multiplied rotation vector `ω` and the object shift `τ`.
    fn to_object(&self, rot: UnitQuaternion, g: &[f64; 7]) -> [f64; 6] {
        let gt = Vec3::new(g[4], g[5], g[6]);
        let q = rot.to_array();
        let rc = rot.rotate(self.center);
        let axes = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let mut out = [0.0; 6];
        for (k, e) in axes.into_iter().enumerate() {
            // d q / d ω_k = ½ (0, e_k) ⊗ q, and t_Δ moves by -(e_k × R_u t).
            let dq = hamilton([0.0, e.x, e.y, e.z], q);
            let via_q: f64 = (0..4).map(|c| g[c] * 0.5 * dq[c]).sum();
            out[k] = via_q - gt.dot(e.cross(rc));
        }
        out[3] = gt.x;
        out[4] = gt.y;
        out[5] = gt.z;
        out
    }
}

/// Renders the hypothesis at `pose` and descends the configured loss from
/// the identity update with backtracking line search. Returns the best
/// update found.
pub fn refine_step(
    pose: &Pose,
    scene: &SceneObservation,
    mesh: &TriangleMesh,
    k: &CameraIntrinsics,
    config: &RefinementConfig,
) -> Result<StepOutcome> {
    let diameter = mesh.diameter()?;
    refine_step_with_diameter(pose, scene, mesh, k, config, diameter)
}

fn refine_step_with_diameter(
    pose: &Pose,
    scene: &SceneObservation,
    mesh: &TriangleMesh,
    k: &CameraIntrinsics,
    config: &RefinementConfig,
    diameter: f64,
) -> Result<StepOutcome> {
    if config.use_bidirectional && scene.points.is_empty() {
        return Err(Error::invalid(
            "the bidirectional loss needs 3D scene contour points",
        ));
    }
    let depth = render_depth(mesh, pose, k)?;
    let (hyp_field, hyp_points, _) =
        observe(&depth, None, k, scene.window(), config.contour_samples).map_err(|e| match e {
            Error::EmptyContour => Error::DegenerateHypothesis,
            e => e,
        })?;
    let obj = Objective {
        scene,
        hyp_field,
        hyp_points: hyp_points.with_source_pose(*pose),
        k,
        config,
        center: pose.translation,
        cap: None,
    };
    let mut obj = obj;
    if let Some(floor) = config.truncation_px {
        let mut r = obj
            .eval(UnitQuaternion::IDENTITY, Vec3::ZERO)?
            .eval
            .residuals;
        r.sort_by(f64::total_cmp);
        let median = r[r.len() / 2];
        obj.cap = Some(floor.max(config.truncation_median_factor * median));
    }

    // Rotation is measured as arc length at half the diameter, so both
    // blocks of the step are in meters.
    let lever = 0.5 * diameter;
    let max_step = config.initial_step_scale * diameter;

    let mut rot = UnitQuaternion::IDENTITY;
    let mut tau = Vec3::ZERO;
    let mut current = obj.eval(rot, tau)?;
    let mut loss_trace = vec![current.eval.value];
    let mut step = max_step;

    for _ in 0..config.inner_steps_per_render {
        // Descent direction in meters: rotation as arc length at `lever`.
        let direction = match config.optimizer {
            Optimizer::Gradient => {
                let g = obj.to_object(rot, &current.eval.gradient);
                let g = scale_rotation(g, 1.0 / lever);
                let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
                if !(norm > 0.0 && norm.is_finite()) {
                    break;
                }
                g.map(|c| -c * step / norm)
            }
            Optimizer::GaussNewton => {
                match gauss_newton_direction(&obj, rot, &current, lever, max_step) {
                    Some(d) => d,
                    None => break,
                }
            }
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=10 {
            let omega = Vec3::new(direction[0], direction[1], direction[2]) * (scale / lever);
            let cand_rot = UnitQuaternion::from_rotation_vector(omega).compose(&rot);
            let cand_tau = tau + Vec3::new(direction[3], direction[4], direction[5]) * scale;
            let eval = obj.eval(cand_rot, cand_tau)?;
            if eval.eval.value < current.eval.value {
                accepted = Some((cand_rot, cand_tau, eval));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((r, t, eval)) => {
                rot = r;
                tau = t;
                current = eval;
                loss_trace.push(current.eval.value);
                step = (2.0 * step * scale).min(max_step);
            }
            None => break,
        }
    }
    Ok(StepOutcome {
        update: Pose::new(rot, tau),
        loss_trace,
    })
}

fn scale_rotation(g: [f64; 6], s: f64) -> [f64; 6] {
    [g[0] * s, g[1] * s, g[2] * s, g[3], g[4], g[5]]
}

/// Residual floor for the reweighting, in pixels.
const IRLS_FLOOR: f64 = 1.0;
const LM_DAMPING: f64 = 1e-3;

/// Step minimizing the reweighted quadratic model of the summed residuals:
/// with weights `1 / max(r_i, floor)`, `Σ w_i r_i²` has the same gradient as
/// `Σ r_i`, and its Gauss–Newton matrix serves as the metric. Returned in
/// meters (rotation as arc length at `lever`) and capped at `max_step`.
fn gauss_newton_direction(
    obj: &Objective,
    rot: UnitQuaternion,
    lin: &Linearization,
    lever: f64,
    max_step: f64,
) -> Option<[f64; 6]> {
    let mut h = Matrix6::<f64>::zeros();
    let mut g = Vector6::<f64>::zeros();
    for (row, &r) in lin.rows.iter().zip(&lin.eval.residuals) {
        let j = Vector6::from(scale_rotation(obj.to_object(rot, row), 1.0 / lever));
        let w = 1.0 / r.max(IRLS_FLOOR);
        h += j * j.transpose() * w;
        g += j;
    }
    if !(g.norm() > 0.0 && g.norm().is_finite()) {
        return None;
    }
    let trace = h.trace();
    for i in 0..6 {
        h[(i, i)] += LM_DAMPING * h[(i, i)] + 1e-12 * trace.max(1e-300);
    }
    let mut d = match h.cholesky() {
        Some(c) => -c.solve(&g),
        None => -g * (max_step / g.norm()),
    };
    let len = d.norm();
    if !(len > 0.0 && len.is_finite()) {
        return None;
    }
    if len > max_step {
        d *= max_step / len;
    }
    Some([d[0], d[1], d[2], d[3], d[4], d[5]])
}

/// Outer refinement loop. When `gt` is given, the final pose is checked
/// against the divergence thresholds.
pub fn refine_iterative(
    initial: &Pose,
    scene: &SceneObservation,
    mesh: &TriangleMesh,
    k: &CameraIntrinsics,
    config: &RefinementConfig,
    gt: Option<&Pose>,
) -> Result<RefinementResult> {
    config.validate()?;
    let diameter = mesh.diameter()?;
    let clock = Clock::start();

    let mut pose = *initial;
    let mut trace = Vec::new();
    let mut updates = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut error = None;
    let mut best = f64::INFINITY;

    for _ in 0..config.max_outer_iterations {
        let outcome = match refine_step_with_diameter(&pose, scene, mesh, k, config, diameter) {
            Ok(o) => o,
            Err(e) => {
                termination = Termination::Error;
                error = Some(e.to_string());
                break;
            }
        };
        pose = pose.apply_update(&outcome.update);
        updates.push(outcome.update);
        let loss = *outcome
            .loss_trace
            .last()
            .expect("trace starts with the initial loss");
        best = best.min(loss);
        let rotation_deg = outcome.update.rotation.angle().to_degrees();
        let translation_m = outcome.update.translation.norm();
        trace.push(IterationRecord {
            initial_loss: outcome.loss_trace[0],
            loss,
            best_loss: best,
            rotation_deg,
            translation_m,
        });
        if config.is_converged_update(rotation_deg, translation_m) {
            termination = Termination::Converged;
            break;
        }
    }

    if termination != Termination::Error {
        if let Some(gt) = gt {
            let rot_err = gt.rotation.angle_between(&pose.rotation).to_degrees();
            let trans_err = gt.translation.distance(pose.translation);
            if config.is_diverged(rot_err, trans_err, diameter) {
                termination = Termination::Diverged;
            }
        }
    }

    Ok(RefinementResult {
        final_pose: pose,
        trace,
        updates,
        termination,
        error,
        wall_ms: clock.elapsed_ms(),
    })
}

/// Wall clock that reads zero where no monotonic clock is available.
pub(crate) struct Clock {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Clock {
    pub(crate) fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn elapsed_ms(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64() * 1e3
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}
