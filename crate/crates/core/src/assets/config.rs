//! JSON experiment description. One file drives a full benchmark run:
//!
//! ```json
//! {
//!   "objects": [{ "name": "bracket", "primitive": "lbracket:1.0" },
//!               { "mesh": "models/part.obj" }],
//!   "intrinsics": { "fx": 572.4, "fy": 573.6, "cx": 325.3, "cy": 242.0,
//!                   "width": 640, "height": 480 },
//!   "min_distance": 0.5,
//!   "refinement": { "max_outer_iterations": 10 },
//!   "perturbation": { "rotation_levels_deg": [5, 15], "translation_fractions": [0.1],
//!                     "trials_per_level": 20 },
//!   "output": { "csv": "results.csv", "summary": "summary.json" },
//!   "seed": 7
//! }
//! ```
//!
//! Mesh and output paths are relative to the config file's directory.
//! The top-level `seed` replaces `perturbation.seed`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{BenchSetup, PerturbationSpec, DEFAULT_WINDOW_VIEWS};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, TriangleMesh};
use crate::refine::RefinementConfig;

use super::{load_mesh_obj, parse_primitive_spec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectSource {
    /// `name[:param...]`, see [`super::builtin_primitive`].
    Primitive(String),
    Mesh(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub source: ObjectSource,
}

impl ObjectSpec {
    pub fn display_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.source {
            ObjectSource::Primitive(p) => p.split(':').next().unwrap_or_default().to_string(),
            ObjectSource::Mesh(path) => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub summary: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            csv: "results.csv".into(),
            summary: "summary.json".into(),
        }
    }
}

fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::vga()
}

fn default_min_distance() -> f64 {
    0.5
}

fn default_window_views() -> usize {
    DEFAULT_WINDOW_VIEWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objects: Vec<ObjectSpec>,
    #[serde(default = "default_intrinsics")]
    pub intrinsics: CameraIntrinsics,
    #[serde(default = "default_min_distance")]
    pub min_distance: f64,
    #[serde(default = "default_window_views")]
    pub window_views: usize,
    /// Share of each target's silhouette hidden behind a foreground slab.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion: Option<f64>,
    #[serde(default)]
    pub refinement: RefinementConfig,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub output: OutputPaths,
    #[serde(default)]
    pub seed: u64,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses and validates a config file, including that every
    /// referenced mesh loads.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let cfg = Self::from_json(&text, &base)?;
        cfg.load_objects()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::Config("at least one object is required".into()));
        }
        self.intrinsics
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.min_distance > 0.0 && self.min_distance.is_finite()) {
            return Err(Error::Config(format!(
                "min_distance must be positive, got {}",
                self.min_distance
            )));
        }
        if self.window_views == 0 {
            return Err(Error::Config("window_views must be at least 1".into()));
        }
        if let Some(f) = self.occlusion {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!(
                    "occlusion fraction {f} outside [0, 1)"
                )));
            }
        }
        self.refinement.validate()?;
        self.perturbation.validate()?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_objects(&self) -> Result<Vec<(String, TriangleMesh)>> {
        self.objects
            .iter()
            .map(|o| {
                let mesh = match &o.source {
                    ObjectSource::Primitive(s) => parse_primitive_spec(s),
                    ObjectSource::Mesh(p) => load_mesh_obj(&self.resolve(p)),
                }
                .map_err(|e| Error::Config(format!("object '{}': {e}", o.display_name())))?;
                Ok((o.display_name(), mesh))
            })
            .collect()
    }

    pub fn bench_setups(&self) -> Result<Vec<BenchSetup>> {
        Ok(self
            .load_objects()?
            .into_iter()
            .map(|(name, mesh)| BenchSetup {
                name,
                mesh,
                k: self.intrinsics,
                min_distance: self.min_distance,
                window_views: self.window_views,
                occlusion: self.occlusion,
            })
            .collect())
    }

    /// Perturbation spec with the experiment seed applied.
    pub fn perturbation_spec(&self) -> PerturbationSpec {
        PerturbationSpec {
            seed: self.seed,
            ..self.perturbation.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "objects": [{"name": "bracket", "primitive": "lbracket:1.0"}, {"primitive": "cube:0.1"}],
        "min_distance": 0.6,
        "refinement": {"max_outer_iterations": 5, "use_bidirectional": false},
        "perturbation": {"rotation_levels_deg": [5, 15], "translation_fractions": [0.1], "trials_per_level": 2},
        "output": {"csv": "out.csv", "summary": "out.json"},
        "seed": 42
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_json(EXAMPLE, Path::new("/tmp")).unwrap();
        assert_eq!(c.intrinsics, CameraIntrinsics::vga());
        assert_eq!(c.refinement.max_outer_iterations, 5);
        assert!(!c.refinement.use_bidirectional);
        assert_eq!(c.refinement.stop_rotation_deg, 1.5);
        assert_eq!(c.perturbation_spec().seed, 42);
        let objs = c.load_objects().unwrap();
        assert_eq!(objs[0].0, "bracket");
        assert_eq!(objs[1].0, "cube");
        assert_eq!(c.resolve(Path::new("out.csv")), Path::new("/tmp/out.csv"));
    }

    #[test]
    fn round_trips_field_by_field() {
        let c = ExperimentConfig::from_json(EXAMPLE, Path::new("/x")).unwrap();
        let back = ExperimentConfig::from_json(&c.to_json().unwrap(), Path::new("/x")).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn rejects_bad_values_eagerly() {
        let bad = [
            r#"{"objects": []}"#,
            r#"{"objects": [{"primitive": "cube"}], "min_distance": -1}"#,
            r#"{"objects": [{"primitive": "cube"}], "refinement": {"stop_rotation_deg": 0}}"#,
            r#"{"objects": [{"primitive": "cube"}], "perturbation": {"translation_fractions": [2.0]}}"#,
            r#"{"objects": [{"primitive": "cube"}], "occlusion": 1.0}"#,
            r#"{"objects": [{"primitive": "cube"}], "unknown_key": 1}"#,
            r#"{"objects": [{"primitive": "cube"}], "intrinsics": {"fx": 0, "fy": 1, "cx": 0, "cy": 0, "width": 4, "height": 4}}"#,
        ];
        for text in bad {
            assert!(
                ExperimentConfig::from_json(text, Path::new(".")).is_err(),
                "{text}"
            );
        }
    }

    #[test]
    fn unresolvable_mesh_fails_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        std::fs::write(&path, r#"{"objects": [{"mesh": "missing.obj"}]}"#).unwrap();
        let err = ExperimentConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("missing.obj"), "{err}");

        std::fs::write(
            dir.path().join("tri.obj"),
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n",
        )
        .unwrap();
        std::fs::write(&path, r#"{"objects": [{"mesh": "tri.obj"}]}"#).unwrap();
        let c = ExperimentConfig::load(&path).unwrap();
        assert_eq!(c.load_objects().unwrap()[0].0, "tri");
    }
}
