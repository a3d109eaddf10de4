//! Aerodynamic drag objective with soft keep-out constraints.
//!
//! The drag integral is discretized per face as `sum_f p_f * n_x,f * A_f`
//! with pressure from a pluggable proxy; its vertex gradient is assembled
//! from the analytic derivatives of the per-face area vector. Constraint
//! spheres are sampled with probe points at which the field must stay
//! non-positive (the shape must enclose them).

use super::LossError;
use crate::diffiso::VertexGrad;
use crate::field::{FieldError, ParamField, Vec3};
use crate::mesher::TriMesh;

/// Pressure as a function of surface position and unit normal.
pub trait PressureProxy: Sync {
    fn pressure(&self, x: Vec3, n: Vec3) -> f64;
    /// `(p, dp/dx, dp/dn)`.
    fn pressure_grad(&self, x: Vec3, n: Vec3) -> (f64, Vec3, Vec3);
}

/// Stagnation-pressure caricature `p = p0 * max(0, -n_x)^2`: pressure loads
/// the upstream-facing surface, nothing else.
#[derive(Debug, Clone, Copy)]
pub struct StagnationProxy {
    pub p0: f64,
}

impl PressureProxy for StagnationProxy {
    fn pressure(&self, _x: Vec3, n: Vec3) -> f64 {
        let m = (-n.x).max(0.0);
        self.p0 * m * m
    }

    fn pressure_grad(&self, _x: Vec3, n: Vec3) -> (f64, Vec3, Vec3) {
        let m = (-n.x).max(0.0);
        let dp_dn = Vec3::new(-2.0 * self.p0 * m, 0.0, 0.0);
        (self.p0 * m * m, Vec3::zeros(), dp_dn)
    }
}

/// Uniform pressure; the drag integral of a closed mesh is then zero by the
/// divergence theorem, which the tests exploit.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPressure(pub f64);

impl PressureProxy for ConstantPressure {
    fn pressure(&self, _x: Vec3, _n: Vec3) -> f64 {
        self.0
    }

    fn pressure_grad(&self, _x: Vec3, _n: Vec3) -> (f64, Vec3, Vec3) {
        (self.0, Vec3::zeros(), Vec3::zeros())
    }
}

/// Drag integral `sum_f p(x_f, n_f) * w_x,f * A_f` over a watertight mesh,
/// where `w = -n` is the loaded (inward) surface normal, so windward
/// overpressure decelerates the body and the integral is the positive drag
/// force along +x. Vertex gradients are exact (pressure dependence on
/// centroid and normal included). Uniform pressure integrates to zero on any
/// closed mesh.
pub fn drag_integral(
    mesh: &TriMesh,
    proxy: &dyn PressureProxy,
) -> Result<(f64, VertexGrad), LossError> {
    if !mesh.is_watertight() {
        return Err(LossError::OpenMesh);
    }
    // Direction of d(area-weighted w_x)/d(area vector): w_x = -a.x.
    let ex = Vec3::new(-1.0, 0.0, 0.0);
    let mut drag = 0.0;
    let mut vg = VertexGrad::zeros(mesh.vertices.len());
    for (fi, f) in mesh.faces.iter().enumerate() {
        let a = mesh.face_area_vector(fi);
        let area = a.norm();
        if area == 0.0 {
            continue;
        }
        let n = a / area;
        let centroid = mesh.face_centroid(fi);
        let (p, dp_dx, dp_dn) = proxy.pressure_grad(centroid, n);
        let ax = -a.x;
        drag += p * ax;

        // dn/da = (I - n n^T) / area, applied to dp/dn.
        let wa = (dp_dn - n * n.dot(&dp_dn)) / area;
        // For vertex v with opposite edge vector e_v, da/dv^T u = e_v x u / 2.
        let combined = ax * wa + p * ex;
        let [i0, i1, i2] = *f;
        let (v0, v1, v2) = (mesh.vertices[i0], mesh.vertices[i1], mesh.vertices[i2]);
        let edges = [(i0, v1 - v2), (i1, v2 - v0), (i2, v0 - v1)];
        for (vi, e) in edges {
            vg.0[vi] += (ax / 3.0) * dp_dx + 0.5 * e.cross(&combined);
        }
    }
    Ok((drag, vg))
}

/// A keep-out sphere sampled with `probes` deterministic surface points.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintSphere {
    pub center: Vec3,
    pub radius: f64,
    pub probes: usize,
}

/// Deterministic Fibonacci lattice on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

/// Hinge-squared penalty `sum max(0, f(probe))^2` over all probe points,
/// with its direct parameter gradient. Probes where the field is not
/// differentiable contribute their value but no gradient.
pub fn constraint_penalty(field: &ParamField, spheres: &[ConstraintSphere]) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; field.param_len()];
    for s in spheres {
        for dir in fibonacci_sphere(s.probes) {
            let p = s.center + s.radius * dir;
            let fv = field.eval(p);
            if fv > 0.0 {
                value += fv * fv;
                match field.eval_vjp(p, 2.0 * fv, &mut grad) {
                    Ok(_) | Err(FieldError::NonDifferentiablePoint(_)) => {}
                    Err(e) => unreachable!("field evaluation is total: {e}"),
                }
            }
        }
    }
    (value, grad)
}

/// Maximum field value over all constraint probes (<= 0 means satisfied).
pub fn constraint_max_violation(field: &ParamField, spheres: &[ConstraintSphere]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for s in spheres {
        for dir in fibonacci_sphere(s.probes) {
            worst = worst.max(field.eval(s.center + s.radius * dir));
        }
    }
    worst
}

/// Combined drag objective: integral term plus weighted constraint penalty.
/// The vertex gradient covers the integral; the constraint contributes a
/// direct parameter gradient (it evaluates the field, not the mesh).
#[derive(Debug, Clone)]
pub struct DragObjective {
    pub value: f64,
    pub drag: f64,
    pub constraint: f64,
    pub vertex_grad: VertexGrad,
    pub direct_param_grad: Vec<f64>,
}

pub fn drag_objective(
    mesh: &TriMesh,
    proxy: &dyn PressureProxy,
    field: &ParamField,
    spheres: &[ConstraintSphere],
    constraint_weight: f64,
) -> Result<DragObjective, LossError> {
    let (drag, vertex_grad) = drag_integral(mesh, proxy)?;
    let (penalty, mut direct) = constraint_penalty(field, spheres);
    for g in &mut direct {
        *g *= constraint_weight;
    }
    Ok(DragObjective {
        value: drag + constraint_weight * penalty,
        drag,
        constraint: penalty,
        vertex_grad,
        direct_param_grad: direct,
    })
}
