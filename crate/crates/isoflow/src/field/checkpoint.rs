//! Field checkpoints: a JSON document
//! `{kind, convention, level, params, metadata}` per field, nesting child
//! documents for composite families. Values round-trip exactly (serde_json
//! emits shortest-roundtrip representations).

use super::{FieldConvention, FieldError, FieldFlavor, FieldKind, ParamField, Vec3};
use crate::mesher::TriMesh;
use crate::mlp::MlpSpec;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unknown field kind {0:?}")]
    UnknownKind(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Serialize, Deserialize)]
struct Doc {
    kind: String,
    convention: FieldFlavor,
    level: f64,
    params: Vec<f64>,
    #[serde(default)]
    metadata: Value,
}

fn doc_of(kind: &FieldKind, convention: FieldConvention, params: &[f64]) -> Doc {
    let metadata = match kind {
        FieldKind::Sphere | FieldKind::Torus | FieldKind::Cuboid => json!({}),
        FieldKind::Metaballs { count, threshold } => {
            json!({ "count": count, "threshold": threshold })
        }
        FieldKind::Blend { a, b } => {
            let na = a.kind.param_len();
            let nb = b.kind.param_len();
            let da = doc_of(&a.kind, a.convention, &params[..na]);
            let db = doc_of(&b.kind, b.convention, &params[na..na + nb]);
            json!({
                "a": serde_json::to_value(da).unwrap(),
                "b": serde_json::to_value(db).unwrap(),
            })
        }
        FieldKind::ThinShell { surface } => {
            let vertices: Vec<[f64; 3]> = surface.vertices().iter().map(|v| (*v).into()).collect();
            json!({ "vertices": vertices, "faces": surface.faces() })
        }
        FieldKind::OccupancyWrap { inner, sharpness } => {
            let di = doc_of(&inner.kind, inner.convention, params);
            json!({ "sharpness": sharpness, "inner": serde_json::to_value(di).unwrap() })
        }
        FieldKind::Mlp { spec } => json!({ "spec": serde_json::to_value(spec).unwrap() }),
    };
    Doc {
        kind: kind.name().to_string(),
        convention: convention.flavor,
        level: convention.level,
        params: params.to_vec(),
        metadata,
    }
}

fn field_of(doc: Doc) -> Result<ParamField, CheckpointError> {
    let convention = FieldConvention { flavor: doc.convention, level: doc.level };
    let meta = &doc.metadata;
    let kind = match doc.kind.as_str() {
        "sphere" => FieldKind::Sphere,
        "torus" => FieldKind::Torus,
        "box" => FieldKind::Cuboid,
        "metaballs" => FieldKind::Metaballs {
            count: get(meta, "count")?,
            threshold: get(meta, "threshold")?,
        },
        "blend" => {
            let a = field_of(get_doc(meta, "a")?)?;
            let b = field_of(get_doc(meta, "b")?)?;
            if a.convention != b.convention {
                return Err(FieldError::ConventionMismatch.into());
            }
            FieldKind::Blend { a: Box::new(a), b: Box::new(b) }
        }
        "thin_shell" => {
            let vertices: Vec<[f64; 3]> = get(meta, "vertices")?;
            let faces: Vec<[usize; 3]> = get(meta, "faces")?;
            let mesh = TriMesh::new(vertices.into_iter().map(Vec3::from).collect(), faces);
            mesh.validate()
                .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            if doc.params.first().map_or(true, |&e| e <= 0.0) {
                return Err(CheckpointError::Malformed(
                    "thin_shell epsilon must be positive".into(),
                ));
            }
            let shell = ParamField::thin_shell_from_mesh(&mesh, doc.params[0])?;
            match shell.kind {
                k @ FieldKind::ThinShell { .. } => k,
                _ => unreachable!(),
            }
        }
        "occupancy_wrap" => {
            let inner = field_of(get_doc(meta, "inner")?)?;
            let sharpness: f64 = get(meta, "sharpness")?;
            if sharpness <= 0.0 {
                return Err(CheckpointError::Malformed("sharpness must be positive".into()));
            }
            if inner.convention.flavor != FieldFlavor::SignedDistance {
                return Err(CheckpointError::Malformed(
                    "occupancy_wrap needs a signed-distance inner field".into(),
                ));
            }
            FieldKind::OccupancyWrap { inner: Box::new(inner), sharpness }
        }
        "mlp" => {
            let spec: MlpSpec = serde_json::from_value(
                meta.get("spec")
                    .cloned()
                    .ok_or_else(|| CheckpointError::Malformed("missing metadata.spec".into()))?,
            )?;
            spec.validate()
                .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            FieldKind::Mlp { spec }
        }
        other => return Err(CheckpointError::UnknownKind(other.to_string())),
    };
    Ok(ParamField::new(kind, convention, doc.params)?)
}

fn get<T: for<'de> Deserialize<'de>>(meta: &Value, key: &str) -> Result<T, CheckpointError> {
    let v = meta
        .get(key)
        .cloned()
        .ok_or_else(|| CheckpointError::Malformed(format!("missing metadata.{key}")))?;
    Ok(serde_json::from_value(v)?)
}

fn get_doc(meta: &Value, key: &str) -> Result<Doc, CheckpointError> {
    get(meta, key)
}

impl ParamField {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(doc_of(&self.kind, self.convention, &self.params)).unwrap()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).unwrap()
    }

    pub fn from_json(value: &Value) -> Result<Self, CheckpointError> {
        field_of(serde_json::from_value(value.clone())?)
    }

    pub fn from_json_str(s: &str) -> Result<Self, CheckpointError> {
        field_of(serde_json::from_str(s)?)
    }
}
