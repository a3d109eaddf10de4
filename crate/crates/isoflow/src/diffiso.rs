//! Backward pass through iso-surface extraction.
//!
//! Mesh extraction itself is not differentiable, but a surface point's
//! dependence on the field parameters has the closed form
//! `dv/dc = -(n / ||n||^2) * df/dc` with `n = grad_x f(c, v)`, valid wherever
//! the field gradient does not vanish. [`backward`] assembles
//! `dL/dc = sum_v dL/dv . dv/dc` from per-vertex upstream gradients;
//! [`ift_project_oracle`] provides an independent numerical check by
//! root-finding along the frozen normal direction.

use crate::field::{FieldError, ParamField, Vec3};
use crate::mesher::TriMesh;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffisoError {
    #[error("upstream gradient has {got} entries, mesh has {want} vertices")]
    AlignmentError { want: usize, got: usize },
    #[error("every vertex normal fell below the norm floor")]
    AllVerticesSkipped,
    #[error("start point is not on the surface: |f| = {0}")]
    NotOnSurface(f64),
    #[error("field gradient vanishes at the start point")]
    DegenerateNormal,
    #[error("no sign change found along the normal within the bracket")]
    NoRootInBracket,
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Per-vertex upstream gradients `dL/dv`, aligned with mesh vertices.
#[derive(Debug, Clone)]
pub struct VertexGrad(pub Vec<Vec3>);

impl VertexGrad {
    pub fn zeros(n: usize) -> Self {
        Self(vec![Vec3::zeros(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Downstream gradient over the field parameters, plus diagnostics.
#[derive(Debug, Clone)]
pub struct ParamGrad {
    pub grad: Vec<f64>,
    /// Vertices dropped because `||n||` fell below the floor (or the field
    /// was not differentiable there).
    pub skipped_vertices: usize,
    pub normal_norm_min: f64,
    pub normal_norm_max: f64,
    pub normal_norm_mean: f64,
}

impl ParamGrad {
    pub fn norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct BackwardConfig {
    /// Vertices with `||n||` below this are skipped and counted.
    pub normal_norm_floor: f64,
    /// Treat `||n|| = 1` (exact for ideal SDFs); the direction is kept.
    pub sdf_unit_normal: bool,
}

impl Default for BackwardConfig {
    fn default() -> Self {
        Self { normal_norm_floor: 1e-8, sdf_unit_normal: false }
    }
}

/// Routes per-vertex loss gradients into the field parameters:
/// `dL/dc = sum_v -(dL/dv . n / ||n||^2) * df/dc` evaluated at each vertex.
///
/// `df/dc` is recomputed at the vertex positions (they lie on grid edges,
/// not grid nodes). Accumulation runs in fixed vertex order, so the result
/// is bit-reproducible and additive over vertex partitions.
pub fn backward(
    field: &ParamField,
    mesh: &TriMesh,
    up: &VertexGrad,
    cfg: &BackwardConfig,
) -> Result<ParamGrad, DiffisoError> {
    if up.len() != mesh.vertices.len() {
        return Err(DiffisoError::AlignmentError {
            want: mesh.vertices.len(),
            got: up.len(),
        });
    }
    let mut grad = vec![0.0; field.param_len()];
    let mut skipped = 0usize;
    let mut norm_min = f64::INFINITY;
    let mut norm_max = 0.0f64;
    let mut norm_sum = 0.0;
    let mut used = 0usize;

    for (v, g_up) in mesh.vertices.iter().zip(&up.0) {
        let eval = match field.eval_full(*v) {
            Ok(e) => e,
            Err(FieldError::NonDifferentiablePoint(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let n = eval.grad_x;
        let norm = n.norm();
        if norm < cfg.normal_norm_floor {
            skipped += 1;
            continue;
        }
        norm_min = norm_min.min(norm);
        norm_max = norm_max.max(norm);
        norm_sum += norm;
        used += 1;

        let denom = if cfg.sdf_unit_normal { 1.0 } else { norm * norm };
        let coef = -(g_up.dot(&n)) / denom;
        for (dst, dfdc) in grad.iter_mut().zip(&eval.grad_c) {
            *dst += coef * dfdc;
        }
    }
    if used == 0 && !mesh.vertices.is_empty() {
        return Err(DiffisoError::AllVerticesSkipped);
    }
    Ok(ParamGrad {
        grad,
        skipped_vertices: skipped,
        normal_norm_min: if used == 0 { 0.0 } else { norm_min },
        normal_norm_max: norm_max,
        normal_norm_mean: if used == 0 { 0.0 } else { norm_sum / used as f64 },
    })
}

/// The per-vertex parameter Jacobian `dv/dc` as columns (one 3-vector per
/// parameter); every column is parallel to the normal by construction.
pub fn vertex_jacobian(
    field: &ParamField,
    v: Vec3,
    cfg: &BackwardConfig,
) -> Result<Vec<Vec3>, DiffisoError> {
    let eval = field.eval_full(v)?;
    let n = eval.grad_x;
    let norm = n.norm();
    if norm < cfg.normal_norm_floor {
        return Err(DiffisoError::DegenerateNormal);
    }
    let denom = if cfg.sdf_unit_normal { 1.0 } else { norm * norm };
    Ok(eval.grad_c.iter().map(|&dfdc| -(n / denom) * dfdc).collect())
}

/// Numerical realization of the implicit map `p*(c)`: starting from `v0` on
/// the `c0`-surface, finds the point where the `c1`-surface crosses the line
/// through `v0` along the frozen normal `n(c0, v0)`.
///
/// Central differences of this oracle over parameter perturbations validate
/// the closed-form `dv/dc` independently of the backward implementation.
pub fn ift_project_oracle(
    field: &ParamField,
    v0: Vec3,
    c0: &[f64],
    c1: &[f64],
) -> Result<Vec3, DiffisoError> {
    let mut f0 = field.clone();
    f0.set_params(c0)?;
    let on_surface = f0.eval(v0) - f0.convention().level;
    if on_surface.abs() > 1e-6 {
        return Err(DiffisoError::NotOnSurface(on_surface.abs()));
    }
    let eval = f0.eval_full(v0)?;
    let norm = eval.grad_x.norm();
    if norm < 1e-12 {
        return Err(DiffisoError::DegenerateNormal);
    }
    let dir = eval.grad_x / norm;

    let mut f1 = field.clone();
    f1.set_params(c1)?;
    let level = f1.convention().level;
    let g = |t: f64| f1.eval(v0 + t * dir) - level;

    let g0 = g(0.0);
    if g0 == 0.0 {
        return Ok(v0);
    }

    // Expand a bracket around 0 until the sign flips; take the nearest root.
    let mut bracket: Option<(f64, f64)> = None;
    let mut b = 1e-9;
    let mut prev = 0.0;
    while b <= 1.0 {
        if g(b).signum() != g0.signum() {
            bracket = Some((prev, b));
            break;
        }
        if g(-b).signum() != g0.signum() {
            bracket = Some((-b, -prev));
            break;
        }
        prev = b;
        b *= 4.0;
    }
    let (mut lo, mut hi) = bracket.ok_or(DiffisoError::NoRootInBracket)?;

    // Bisection to machine precision.
    let mut g_lo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return Ok(v0 + mid * dir);
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Ok(v0 + 0.5 * (lo + hi) * dir)
}

#[cfg(test)]
mod tests;
