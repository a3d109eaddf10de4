//! Parameterized implicit fields.
//!
//! A [`ParamField`] is a scalar field `f(c, x)` over 3D space, where `c` is a
//! flat vector of real parameters. Every family exposes the value together
//! with exact analytic derivatives with respect to both the query point
//! (`grad_x`, the surface normal on the zero set) and the parameters
//! (`grad_c`), which is what the iso-surface backward pass consumes.
//!
//! Fields are immutable during evaluation and safe to share across threads;
//! parameter updates go through [`ParamField::set_params`] between passes.

mod analytic;
mod checkpoint;
mod shell;

pub use checkpoint::CheckpointError;
pub use shell::ShellSurface;

use crate::mesher::TriMesh;
use crate::mlp::MlpSpec;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// 3D point / vector type used throughout the crate.
pub type Vec3 = Vector3<f64>;

/// Whether field values are signed distances or occupancy probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFlavor {
    SignedDistance,
    Occupancy,
}

/// Flavor plus the iso-level at which the surface lives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConvention {
    pub flavor: FieldFlavor,
    pub level: f64,
}

impl FieldConvention {
    pub fn signed_distance() -> Self {
        Self { flavor: FieldFlavor::SignedDistance, level: 0.0 }
    }

    pub fn occupancy() -> Self {
        Self { flavor: FieldFlavor::Occupancy, level: 0.5 }
    }
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("field is not differentiable at ({0:?})")]
    NonDifferentiablePoint([f64; 3]),
    #[error("fields have different conventions and cannot be combined")]
    ConventionMismatch,
    #[error("surface mesh has no triangles")]
    EmptyMesh,
    #[error("parameter vector has length {got}, family declares {want}")]
    ParamCount { want: usize, got: usize },
    #[error("{0}")]
    InvalidArgument(String),
}

/// Value and exact first derivatives of a field at one point.
#[derive(Debug, Clone)]
pub struct FieldEval {
    /// Field value `f(c, x)`.
    pub value: f64,
    /// Spatial gradient; on the surface this is the (unnormalized) normal.
    pub grad_x: Vec3,
    /// Parameter gradient, one entry per element of `c`.
    pub grad_c: Vec<f64>,
}

/// One soft blob of a metaball field.
#[derive(Debug, Clone, Copy)]
pub struct Metaball {
    pub center: Vec3,
    pub radius: f64,
    pub weight: f64,
}

/// Field family tag plus family-specific constants.
#[derive(Debug, Clone)]
pub enum FieldKind {
    /// Exact sphere SDF. Params `[cx, cy, cz, r]`.
    Sphere,
    /// Exact torus SDF, ring in the xz-plane. Params `[cx, cy, cz, major, minor]`.
    Torus,
    /// Exact axis-aligned box SDF. Params `[cx, cy, cz, hx, hy, hz]`.
    Cuboid,
    /// Gaussian blob sum, `threshold - sum_i w_i exp(-|x-c_i|^2 / r_i^2)`.
    /// Params per ball `[cx, cy, cz, r, w]`.
    Metaballs { count: usize, threshold: f64 },
    /// Linear interpolation of two fields. Params `[a... , b..., t]`.
    Blend { a: Box<ParamField>, b: Box<ParamField> },
    /// Unsigned distance to a triangle soup minus epsilon. Params `[epsilon]`.
    ThinShell { surface: Arc<ShellSurface> },
    /// Logistic squash of an SDF into occupancy. Params are the inner field's.
    OccupancyWrap { inner: Box<ParamField>, sharpness: f64 },
    /// Small MLP decoder. Params `[z | theta]`.
    Mlp { spec: MlpSpec },
}

impl FieldKind {
    /// Declared parameter count of the family.
    pub fn param_len(&self) -> usize {
        match self {
            FieldKind::Sphere => 4,
            FieldKind::Torus => 5,
            FieldKind::Cuboid => 6,
            FieldKind::Metaballs { count, .. } => 5 * count,
            FieldKind::Blend { a, b } => a.kind.param_len() + b.kind.param_len() + 1,
            FieldKind::ThinShell { .. } => 1,
            FieldKind::OccupancyWrap { inner, .. } => inner.kind.param_len(),
            FieldKind::Mlp { spec } => spec.latent_dim + spec.theta_len(),
        }
    }

    /// Serialized family name.
    pub fn name(&self) -> &'static str {
        match self {
            FieldKind::Sphere => "sphere",
            FieldKind::Torus => "torus",
            FieldKind::Cuboid => "box",
            FieldKind::Metaballs { .. } => "metaballs",
            FieldKind::Blend { .. } => "blend",
            FieldKind::ThinShell { .. } => "thin_shell",
            FieldKind::OccupancyWrap { .. } => "occupancy_wrap",
            FieldKind::Mlp { .. } => "mlp",
        }
    }
}

/// A scalar field `f(c, x)` with a flat real parameter vector `c`.
#[derive(Debug, Clone)]
pub struct ParamField {
    kind: FieldKind,
    convention: FieldConvention,
    params: Vec<f64>,
}

impl ParamField {
    pub fn new(kind: FieldKind, convention: FieldConvention, params: Vec<f64>) -> Result<Self, FieldError> {
        let want = kind.param_len();
        if params.len() != want {
            return Err(FieldError::ParamCount { want, got: params.len() });
        }
        Ok(Self { kind, convention, params })
    }

    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Self {
            kind: FieldKind::Sphere,
            convention: FieldConvention::signed_distance(),
            params: vec![center.x, center.y, center.z, radius],
        }
    }

    pub fn torus(center: Vec3, major: f64, minor: f64) -> Self {
        Self {
            kind: FieldKind::Torus,
            convention: FieldConvention::signed_distance(),
            params: vec![center.x, center.y, center.z, major, minor],
        }
    }

    pub fn cuboid(center: Vec3, half_extents: Vec3) -> Self {
        Self {
            kind: FieldKind::Cuboid,
            convention: FieldConvention::signed_distance(),
            params: vec![
                center.x,
                center.y,
                center.z,
                half_extents.x,
                half_extents.y,
                half_extents.z,
            ],
        }
    }

    pub fn metaballs(balls: &[Metaball], threshold: f64) -> Self {
        let mut params = Vec::with_capacity(5 * balls.len());
        for b in balls {
            assert!(b.radius > 0.0, "metaball radius must be positive");
            params.extend_from_slice(&[b.center.x, b.center.y, b.center.z, b.radius, b.weight]);
        }
        Self {
            kind: FieldKind::Metaballs { count: balls.len(), threshold },
            convention: FieldConvention::signed_distance(),
            params,
        }
    }

    /// Field with value `f_a + t * (f_b - f_a)`; `t` is appended to the
    /// parameter vector so gradients flow into it.
    pub fn blend(a: ParamField, b: ParamField, t: f64) -> Result<Self, FieldError> {
        if a.convention != b.convention {
            return Err(FieldError::ConventionMismatch);
        }
        let convention = a.convention;
        let mut params = a.params.clone();
        params.extend_from_slice(&b.params);
        params.push(t);
        Ok(Self {
            kind: FieldKind::Blend { a: Box::new(a), b: Box::new(b) },
            convention,
            params,
        })
    }

    /// Watertight shell of half-thickness `epsilon` around an arbitrary
    /// (possibly open) triangle surface: `f(x) = dist(x, surface) - epsilon`.
    pub fn thin_shell_from_mesh(surface: &TriMesh, epsilon: f64) -> Result<Self, FieldError> {
        assert!(epsilon > 0.0, "shell epsilon must be positive");
        if surface.faces.is_empty() {
            return Err(FieldError::EmptyMesh);
        }
        Ok(Self {
            kind: FieldKind::ThinShell { surface: Arc::new(ShellSurface::new(surface)) },
            convention: FieldConvention::signed_distance(),
            params: vec![epsilon],
        })
    }

    /// `logistic(-sharpness * sdf)`, an occupancy view of an SDF field.
    pub fn occupancy_wrap(inner: ParamField, sharpness: f64) -> Result<Self, FieldError> {
        if inner.convention.flavor != FieldFlavor::SignedDistance {
            return Err(FieldError::InvalidArgument(
                "occupancy_wrap requires a signed-distance inner field".into(),
            ));
        }
        assert!(sharpness > 0.0, "sharpness must be positive");
        let params = inner.params.clone();
        Ok(Self {
            kind: FieldKind::OccupancyWrap { inner: Box::new(inner), sharpness },
            convention: FieldConvention::occupancy(),
            params,
        })
    }

    /// MLP decoder field with parameter vector `[z | theta]`.
    pub fn mlp(spec: MlpSpec, z: &[f64], theta: &[f64]) -> Result<Self, FieldError> {
        if z.len() != spec.latent_dim || theta.len() != spec.theta_len() {
            return Err(FieldError::ParamCount {
                want: spec.latent_dim + spec.theta_len(),
                got: z.len() + theta.len(),
            });
        }
        let convention = match spec.flavor {
            FieldFlavor::SignedDistance => FieldConvention::signed_distance(),
            FieldFlavor::Occupancy => FieldConvention::occupancy(),
        };
        let mut params = z.to_vec();
        params.extend_from_slice(theta);
        Ok(Self { kind: FieldKind::Mlp { spec }, convention, params })
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn convention(&self) -> FieldConvention {
        self.convention
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param_len(&self) -> usize {
        self.params.len()
    }

    /// Replace the parameter vector (between optimization passes).
    pub fn set_params(&mut self, params: &[f64]) -> Result<(), FieldError> {
        if params.len() != self.params.len() {
            return Err(FieldError::ParamCount { want: self.params.len(), got: params.len() });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Field value at `x`. Total on finite inputs and deterministic.
    pub fn eval(&self, x: Vec3) -> f64 {
        analytic::eval(&self.kind, &self.params, x)
    }

    /// Value plus exact derivatives with respect to `x` and `c`.
    pub fn eval_full(&self, x: Vec3) -> Result<FieldEval, FieldError> {
        let mut grad_c = vec![0.0; self.params.len()];
        let (value, grad_x) = analytic::eval_full(&self.kind, &self.params, x, 1.0, &mut grad_c)?;
        Ok(FieldEval { value, grad_x, grad_c })
    }

    /// Vector-Jacobian product against a scalar seed: accumulates
    /// `seed * df/dc` into `acc` and returns `(value, seed * df/dx)`.
    pub fn eval_vjp(&self, x: Vec3, seed: f64, acc: &mut [f64]) -> Result<(f64, Vec3), FieldError> {
        assert_eq!(acc.len(), self.params.len(), "accumulator length mismatch");
        let (value, grad_x) = analytic::eval_full(&self.kind, &self.params, x, seed, acc)?;
        Ok((value, grad_x * seed))
    }
}
