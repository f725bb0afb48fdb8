//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Poses cross the boundary as seven numbers `w,x,y,z,tx,ty,tz` (Hamilton
//! quaternion, scalar first, then meters). Images are RGBA byte buffers of
//! [`WIDTH`] × [`HEIGHT`] pixels.

use contour_pose::assets::parse_primitive_spec;
use contour_pose::bench::{add_error, left_occluder, rotation_translation_errors, vss_score};
use contour_pose::loss::{bidirectional_loss, visual_loss, UpdateParams};
use contour_pose::raster::{
    composite_visible, compute_window_size, distance_transform, extract_contour_pixels,
    extract_silhouette, render_depth, DepthMap, SilhouetteMask,
};
use contour_pose::refine::{
    build_scene_observation, refine_iterative, RefinementConfig, SceneObservation,
};
use contour_pose::{CameraIntrinsics, Pose, TriangleMesh, UnitQuaternion, Vec3};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const WIDTH: u32 = 320;
pub const HEIGHT: u32 = 240;

/// Fewer views than the benchmark default keep window sizing quick in the browser.
const WINDOW_VIEWS: usize = 16;
const MIN_DISTANCE: f64 = 0.5;

pub fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(286.0, 286.0, 159.5, 119.5, WIDTH, HEIGHT).expect("valid intrinsics")
}

fn pose_from(v: &[f64]) -> Result<Pose, String> {
    if v.len() != 7 {
        return Err(format!("a pose needs 7 numbers, got {}", v.len()));
    }
    let q = UnitQuaternion::normalize([v[0], v[1], v[2], v[3]]).map_err(|e| e.to_string())?;
    Ok(Pose::new(q, Vec3::new(v[4], v[5], v[6])))
}

fn pose_to(p: &Pose) -> [f64; 7] {
    let [w, x, y, z] = p.rotation.to_array();
    let t = p.translation;
    [w, x, y, z, t.x, t.y, t.z]
}

fn mesh_from(spec: &str) -> Result<TriangleMesh, String> {
    parse_primitive_spec(spec).map_err(|e| e.to_string())
}

/// Scene depth with an optional slab hiding `occlusion` of the silhouette.
fn scene(
    mesh: &TriangleMesh,
    gt: &Pose,
    occlusion: f64,
) -> Result<(DepthMap, Option<(TriangleMesh, Pose)>), String> {
    let k = camera();
    let depth = render_depth(mesh, gt, &k).map_err(|e| e.to_string())?;
    if occlusion <= 0.0 {
        return Ok((depth, None));
    }
    let occ = left_occluder(mesh, gt, &k, occlusion).map_err(|e| e.to_string())?;
    let visible = match &occ {
        Some((m, p)) => {
            let o = render_depth(m, p, &k).map_err(|e| e.to_string())?;
            composite_visible(&depth, &o).map_err(|e| e.to_string())?
        }
        None => depth,
    };
    Ok((visible, occ))
}

fn silhouette(mesh: &TriangleMesh, pose: &Pose) -> Result<SilhouetteMask, String> {
    Ok(extract_silhouette(
        &render_depth(mesh, pose, &camera()).map_err(|e| e.to_string())?,
    ))
}

/// Distance field of the object's contour, with iso-distance bands every
/// 8 px and the silhouette tinted blue.
pub fn distance_field_image(spec: &str, pose: &[f64]) -> Result<Vec<u8>, String> {
    let mesh = mesh_from(spec)?;
    let mask = silhouette(&mesh, &pose_from(pose)?)?;
    let contour = extract_contour_pixels(&mask);
    let mut rgba = vec![0u8; (WIDTH * HEIGHT * 4) as usize];
    if contour.is_empty() {
        return Ok(rgba);
    }
    let field = distance_transform(&contour, WIDTH, HEIGHT).map_err(|e| e.to_string())?;
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let d = field.grid().get(x, y);
            let shade = (255.0 * (-d / 60.0).exp()) as u8;
            let band = if (d % 8.0) < 1.0 { 40 } else { 0 };
            let i = 4 * (y * WIDTH + x) as usize;
            let px = if d == 0.0 {
                [255, 255, 255]
            } else if mask.get(x, y) {
                [shade / 3, shade / 2 + band, shade.saturating_add(band)]
            } else {
                [shade.saturating_add(band), shade / 2 + band, shade / 4]
            };
            rgba[i..i + 4].copy_from_slice(&[px[0], px[1], px[2], 255]);
        }
    }
    Ok(rgba)
}

/// Scene silhouette in gray with the scene contour in green and the contour
/// of `pose` in red.
pub fn overlay_image(
    spec: &str,
    gt: &[f64],
    pose: &[f64],
    occlusion: f64,
) -> Result<Vec<u8>, String> {
    let mesh = mesh_from(spec)?;
    let gt = pose_from(gt)?;
    let (depth, occ) = scene(&mesh, &gt, occlusion)?;
    let scene_mask = extract_silhouette(&depth);
    let occ_mask = match &occ {
        Some((m, p)) => Some(silhouette(m, p)?),
        None => None,
    };
    let hyp = extract_contour_pixels(&silhouette(&mesh, &pose_from(pose)?)?);
    let mut rgba = vec![0u8; (WIDTH * HEIGHT * 4) as usize];
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let i = 4 * (y * WIDTH + x) as usize;
            let px = if scene_mask.get(x, y) {
                [110, 110, 120]
            } else if occ_mask.as_ref().is_some_and(|m| m.get(x, y)) {
                [60, 45, 30]
            } else {
                [20, 20, 24]
            };
            rgba[i..i + 4].copy_from_slice(&[px[0], px[1], px[2], 255]);
        }
    }
    let mut paint = |pixels: &[(i64, i64)], color: [u8; 3]| {
        for &(x, y) in pixels {
            let i = 4 * (y as u32 * WIDTH + x as u32) as usize;
            rgba[i..i + 3].copy_from_slice(&color);
        }
    };
    paint(&extract_contour_pixels(&scene_mask), [60, 220, 90]);
    paint(&hyp, [240, 60, 50]);
    Ok(rgba)
}

#[derive(Serialize)]
struct Step {
    pose: [f64; 7],
    loss: f64,
    rotation_deg: f64,
    translation_m: f64,
}

#[derive(Serialize)]
struct RefineReport {
    steps: Vec<Step>,
    termination: String,
    error: Option<String>,
    rotation_deg: f64,
    translation_m: f64,
    add_m: f64,
    vss: f64,
}

/// Refines `init` against the scene rendered at `gt`; the JSON lists the
/// pose after every render-and-descend round, starting with `init`.
pub fn refine_report(
    spec: &str,
    gt: &[f64],
    init: &[f64],
    occlusion: f64,
    bidirectional: bool,
    max_iters: usize,
) -> Result<String, String> {
    let mesh = mesh_from(spec)?;
    let (gt, init) = (pose_from(gt)?, pose_from(init)?);
    let k = camera();
    let config = RefinementConfig {
        use_bidirectional: bidirectional,
        max_outer_iterations: max_iters.max(1),
        ..Default::default()
    };
    let window = compute_window_size(
        &mesh,
        &k,
        MIN_DISTANCE,
        WINDOW_VIEWS,
        config.window_padding_fraction,
    )
    .map_err(|e| e.to_string())?;
    let (_, occ) = scene(&mesh, &gt, occlusion)?;
    let observation = build_scene_observation(
        &mesh,
        &gt,
        &k,
        window,
        occ.as_ref().map(|(m, p)| (m, p)),
        config.contour_samples,
    )
    .map_err(|e| e.to_string())?;
    let result = refine_iterative(&init, &observation, &mesh, &k, &config, Some(&gt))
        .map_err(|e| e.to_string())?;

    let mut pose = init;
    let mut steps = Vec::new();
    let mut push = |pose: &Pose, loss: f64| {
        let e = rotation_translation_errors(&gt, pose);
        steps.push(Step {
            pose: pose_to(pose),
            loss,
            rotation_deg: e.rotation_deg,
            translation_m: e.translation_m,
        });
    };
    push(
        &pose,
        result.trace.first().map_or(f64::NAN, |r| r.initial_loss),
    );
    for (u, rec) in result.updates.iter().zip(&result.trace) {
        pose = pose.apply_update(u);
        push(&pose, rec.loss);
    }
    let fin = &result.final_pose;
    let e = rotation_translation_errors(&gt, fin);
    let report = RefineReport {
        steps,
        termination: result.termination.as_str().to_string(),
        error: result.error.clone(),
        rotation_deg: e.rotation_deg,
        translation_m: e.translation_m,
        add_m: add_error(&mesh, &gt, fin),
        vss: vss_score(&silhouette(&mesh, &gt)?, &silhouette(&mesh, fin)?)
            .map_err(|e| e.to_string())?,
    };
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Sweep {
    angles_deg: Vec<f64>,
    visual: Vec<f64>,
    bidirectional: Vec<f64>,
}

/// Mean per-point loss at the identity update for hypotheses rotated away
/// from `gt` about the object-frame `axis`, at `steps` angles over a full turn.
/// Flat stretches reveal rotations the contour cannot distinguish.
pub fn loss_sweep(spec: &str, gt: &[f64], axis: &[f64], steps: usize) -> Result<String, String> {
    let mesh = mesh_from(spec)?;
    let gt = pose_from(gt)?;
    if axis.len() != 3 {
        return Err("axis needs 3 numbers".into());
    }
    let axis = Vec3::new(axis[0], axis[1], axis[2]);
    let k = camera();
    let window = compute_window_size(&mesh, &k, MIN_DISTANCE, WINDOW_VIEWS, 0.2)
        .map_err(|e| e.to_string())?;
    let samples = RefinementConfig::default().contour_samples;
    let scene = build_scene_observation(&mesh, &gt, &k, window, None, samples)
        .map_err(|e| e.to_string())?;
    let mut out = Sweep {
        angles_deg: Vec::new(),
        visual: Vec::new(),
        bidirectional: Vec::new(),
    };
    let steps = steps.clamp(2, 720);
    for i in 0..=steps {
        let angle = -180.0 + 360.0 * i as f64 / steps as f64;
        let spin =
            UnitQuaternion::from_axis_angle(axis, angle.to_radians()).map_err(|e| e.to_string())?;
        let hyp_pose = Pose::new(gt.rotation.compose(&spin), gt.translation);
        let depth = render_depth(&mesh, &hyp_pose, &k).map_err(|e| e.to_string())?;
        let hyp =
            SceneObservation::from_depth(&depth, &k, window, samples).map_err(|e| e.to_string())?;
        let id = UpdateParams::IDENTITY;
        let v = visual_loss(&id, &scene.field, &hyp.points, &k).map_err(|e| e.to_string())?;
        let b = bidirectional_loss(
            &id,
            &scene.field,
            &hyp.points,
            &hyp.field,
            &scene.points,
            &k,
        )
        .map_err(|e| e.to_string())?;
        out.angles_deg.push(angle);
        out.visual.push(v.mean());
        out.bidirectional.push(b.mean());
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn image_width() -> u32 {
    WIDTH
}

#[wasm_bindgen]
pub fn image_height() -> u32 {
    HEIGHT
}

#[wasm_bindgen]
pub fn object_diameter(spec: &str) -> Result<f64, JsValue> {
    mesh_from(spec)
        .and_then(|m| m.diameter().map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn render_distance_field(spec: &str, pose: &[f64]) -> Result<Vec<u8>, JsValue> {
    distance_field_image(spec, pose).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn render_overlay(
    spec: &str,
    gt: &[f64],
    pose: &[f64],
    occlusion: f64,
) -> Result<Vec<u8>, JsValue> {
    overlay_image(spec, gt, pose, occlusion).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn refine(
    spec: &str,
    gt: &[f64],
    init: &[f64],
    occlusion: f64,
    bidirectional: bool,
    max_iters: usize,
) -> Result<String, JsValue> {
    refine_report(spec, gt, init, occlusion, bidirectional, max_iters)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn symmetry_sweep(
    spec: &str,
    gt: &[f64],
    axis: &[f64],
    steps: usize,
) -> Result<String, JsValue> {
    loss_sweep(spec, gt, axis, steps).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GT: [f64; 7] = [0.92, 0.3, 0.2, 0.1, 0.0, 0.0, 0.6];

    #[test]
    fn distance_field_image_is_full_rgba() {
        let img = distance_field_image("cube:0.1", &GT).unwrap();
        assert_eq!(img.len(), (WIDTH * HEIGHT * 4) as usize);
        assert!(img.chunks(4).all(|p| p[3] == 255));
        assert!(img.chunks(4).any(|p| p[..3] == [255, 255, 255]));
        assert!(distance_field_image("cube:0.1", &GT[..6]).is_err());
        assert!(distance_field_image("teapot", &GT).is_err());
    }

    #[test]
    fn overlay_marks_both_contours() {
        let mut off = GT;
        off[4] = 0.02;
        let img = overlay_image("lbracket", &GT, &off, 0.3).unwrap();
        assert!(img.chunks(4).any(|p| p[..3] == [60, 220, 90]));
        assert!(img.chunks(4).any(|p| p[..3] == [240, 60, 50]));
    }

    #[test]
    fn refine_report_starts_at_init_and_improves() {
        let mut init = GT;
        init[4] = 0.015;
        let json: serde_json::Value =
            serde_json::from_str(&refine_report("cube:0.1", &GT, &init, 0.0, true, 10).unwrap())
                .unwrap();
        let steps = json["steps"].as_array().unwrap();
        assert_eq!(steps[0]["pose"][4], 0.015);
        assert!(steps.len() >= 2);
        assert!(json["translation_m"].as_f64().unwrap() < 0.005, "{json}");
        assert_eq!(json["termination"], "converged");
    }

    #[test]
    fn sweep_is_flat_for_a_symmetric_axis_only() {
        let parse = |s: String| serde_json::from_str::<serde_json::Value>(&s).unwrap();
        let spread = |v: &serde_json::Value| {
            let xs: Vec<f64> = v
                .as_array()
                .unwrap()
                .iter()
                .map(|x| x.as_f64().unwrap())
                .collect();
            xs.iter().cloned().fold(f64::MIN, f64::max)
                - xs.iter().cloned().fold(f64::MAX, f64::min)
        };
        let sphere = parse(loss_sweep("icosphere:0.05:3", &GT, &[0.0, 1.0, 0.0], 12).unwrap());
        assert_eq!(sphere["angles_deg"].as_array().unwrap().len(), 13);
        assert!(spread(&sphere["visual"]) < 1.0);
        let bracket = parse(loss_sweep("lbracket", &GT, &[0.0, 1.0, 0.0], 12).unwrap());
        assert!(spread(&bracket["visual"]) > 2.0);
    }
}
