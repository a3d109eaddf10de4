//! Subcommand configuration schemas.
//!
//! Every run is driven by a single JSON file, schema-validated before any
//! computation; unknown keys are rejected and errors carry the JSON pointer
//! of the offending key.

use crate::error::CliError;
use isoflow::field::{ParamField, Vec3};
use isoflow::losses::{CameraSpec, ConstraintSphere};
use isoflow::mesher::GridSpec;
use isoflow::mlp::MlpSpec;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Parses `T` from JSON with pointer-annotated errors.
pub fn parse_config<T: for<'de> Deserialize<'de>>(raw: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = path_to_pointer(&e.path().to_string());
        CliError::Config(format!("config error at {pointer}: {}", e.inner()))
    })
}

/// `serde_path_to_error` paths look like `grid.resolution` or `shapes[0].id`;
/// reformat as a JSON pointer `/grid/resolution`, `/shapes/0/id`.
fn path_to_pointer(path: &str) -> String {
    let mut out = String::from("/");
    let dotted = path.replace('[', ".").replace(']', "");
    out.push_str(&dotted.replace('.', "/"));
    out
}

pub fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(T, Vec<u8>), CliError> {
    let raw = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let text = String::from_utf8(raw.clone())
        .map_err(|e| CliError::Config(format!("config is not UTF-8: {e}")))?;
    Ok((parse_config(&text)?, raw))
}

/// Field source: an inline checkpoint document or a path to one.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSource {
    #[serde(default)]
    pub field: Option<serde_json::Value>,
    #[serde(default)]
    pub field_checkpoint: Option<PathBuf>,
}

impl FieldSource {
    pub fn load(&self, base: &Path) -> Result<ParamField, CliError> {
        match (&self.field, &self.field_checkpoint) {
            (Some(doc), None) => ParamField::from_json(doc)
                .map_err(|e| CliError::Config(format!("config error at /field: {e}"))),
            (None, Some(path)) => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                let raw = std::fs::read_to_string(&full).map_err(|e| {
                    CliError::Config(format!("cannot read checkpoint {}: {e}", full.display()))
                })?;
                ParamField::from_json_str(&raw)
                    .map_err(|e| CliError::Config(format!("bad checkpoint {}: {e}", full.display())))
            }
            _ => Err(CliError::Config(
                "config error at /field: provide exactly one of `field` or `field_checkpoint`"
                    .into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    pub resolution: usize,
    #[serde(default = "default_min")]
    pub min: [f64; 3],
    #[serde(default = "default_max")]
    pub max: [f64; 3],
}

fn default_min() -> [f64; 3] {
    [-1.0; 3]
}

fn default_max() -> [f64; 3] {
    [1.0; 3]
}

impl GridCfg {
    pub fn build(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(self.resolution, Vec3::from(self.min), Vec3::from(self.max))
            .map_err(|e| CliError::Config(format!("config error at /grid: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "snake_case")]
pub enum CameraCfg {
    Orthographic {
        dir: [f64; 3],
        up: [f64; 3],
        half_extent: f64,
        width: usize,
        height: usize,
    },
    Pinhole {
        position: [f64; 3],
        dir: [f64; 3],
        up: [f64; 3],
        fov_y_deg: f64,
        width: usize,
        height: usize,
    },
}

impl CameraCfg {
    pub fn build(&self) -> Result<CameraSpec, CliError> {
        let spec = match *self {
            CameraCfg::Orthographic { dir, up, half_extent, width, height } => {
                CameraSpec::orthographic(Vec3::from(dir), Vec3::from(up), half_extent, width, height)
            }
            CameraCfg::Pinhole { position, dir, up, fov_y_deg, width, height } => {
                CameraSpec::pinhole(
                    Vec3::from(position),
                    Vec3::from(dir),
                    Vec3::from(up),
                    fov_y_deg,
                    width,
                    height,
                )
            }
        };
        spec.map_err(|e| CliError::Config(format!("config error at /camera: {e}")))
    }
}

/// Morph/refine targets: a field to mesh and sample, or a mesh file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetCfg {
    #[serde(default)]
    pub field: Option<serde_json::Value>,
    #[serde(default)]
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereCfg {
    pub center: [f64; 3],
    pub radius: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn default_probes() -> usize {
    32
}

impl SphereCfg {
    pub fn build(&self) -> ConstraintSphere {
        ConstraintSphere {
            center: Vec3::from(self.center),
            radius: self.radius,
            probes: self.probes,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(flatten)]
    pub field: FieldSource,
    pub grid: GridCfg,
    /// Iso-level override; defaults to the field convention's level.
    #[serde(default)]
    pub level: Option<f64>,
    /// Occupancy fields: apply the inverse-sigmoid pre-map (default on).
    #[serde(default = "default_true")]
    pub premap: bool,
    /// Also write the sampled grid as raw f64 plus a JSON sidecar.
    #[serde(default)]
    pub dump_grid: bool,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

pub fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradcheckMode {
    /// Analytic field derivatives against finite differences of the value.
    Field,
    /// Backward pass against finite differences of the full forward
    /// pipeline (sample -> marching cubes -> vertex chamfer).
    Pipeline,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    #[serde(flatten)]
    pub field: FieldSource,
    pub mode: GradcheckMode,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub fd_step: Option<f64>,
    /// Surface points to aggregate over (field mode).
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub grid: Option<GridCfg>,
    /// Test hook: corrupt the analytic gradient to exercise the failure
    /// path.
    #[serde(default)]
    pub corrupt_gradient: bool,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_points() -> usize {
    32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossCfg {
    Chamfer,
    Contour,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphConfig {
    #[serde(flatten)]
    pub field: FieldSource,
    pub target: TargetCfg,
    #[serde(default = "default_loss")]
    pub loss: LossCfg,
    #[serde(default)]
    pub camera: Option<CameraCfg>,
    pub grid: GridCfg,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Banded re-extraction between iterations (default on).
    #[serde(default = "default_true")]
    pub band: bool,
    #[serde(default = "default_snapshot")]
    pub snapshot_every: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_loss() -> LossCfg {
    LossCfg::Chamfer
}

fn default_steps() -> usize {
    400
}

fn default_lr() -> f64 {
    1e-3
}

fn default_samples() -> usize {
    2048
}

fn default_snapshot() -> usize {
    25
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    #[serde(flatten)]
    pub field: FieldSource,
    pub target: TargetCfg,
    pub camera: CameraCfg,
    pub grid: GridCfg,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_true")]
    pub band: bool,
    #[serde(default = "default_snapshot")]
    pub snapshot_every: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DragProxyCfg {
    #[serde(default = "default_p0")]
    pub p0: f64,
}

fn default_p0() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DragConfig {
    #[serde(flatten)]
    pub field: FieldSource,
    pub grid: GridCfg,
    #[serde(default)]
    pub proxy: Option<DragProxyCfg>,
    #[serde(default)]
    pub constraint_spheres: Vec<SphereCfg>,
    #[serde(default = "default_constraint_weight")]
    pub constraint_weight: f64,
    /// Latent codes for the kNN regularizer (MLP fields).
    #[serde(default)]
    pub latent_table: Option<PathBuf>,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    #[serde(default = "default_knn_alpha")]
    pub knn_alpha: f64,
    #[serde(default = "default_drag_steps")]
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_true")]
    pub band: bool,
    #[serde(default = "default_snapshot")]
    pub snapshot_every: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_constraint_weight() -> f64 {
    10.0
}

fn default_knn_k() -> usize {
    10
}

fn default_knn_alpha() -> f64 {
    0.2
}

fn default_drag_steps() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitShapeCfg {
    pub id: String,
    pub field: serde_json::Value,
    #[serde(default = "default_fit_samples")]
    pub samples: usize,
}

fn default_fit_samples() -> usize {
    3000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub spec: MlpSpec,
    pub shapes: Vec<FitShapeCfg>,
    #[serde(default = "default_lambda")]
    pub lambda_reg: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_fit_lr")]
    pub lr: f64,
    #[serde(default = "default_holdout")]
    pub holdout_samples: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_lambda() -> f64 {
    1e-4
}

fn default_epochs() -> usize {
    150
}

fn default_batch() -> usize {
    256
}

fn default_fit_lr() -> f64 {
    3e-3
}

fn default_holdout() -> usize {
    1000
}
