//! Value and derivative kernels for the analytic field families.
//!
//! All functions take the parameter vector as an explicit slice so that
//! composite families (blend, occupancy wrap) can evaluate children on
//! sub-slices of the parent's flat parameter vector.

use super::{FieldError, FieldKind, Vec3};
use crate::util::{clamp_occupancy, logistic};

/// `fa + t (fb - fa)` with exact endpoints, so t=0 reproduces `fa` and t=1
/// reproduces `fb` bit-for-bit.
#[inline]
fn blend_value(fa: f64, fb: f64, t: f64) -> f64 {
    if t == 0.0 {
        fa
    } else if t == 1.0 {
        fb
    } else {
        fa + t * (fb - fa)
    }
}

pub(super) fn eval(kind: &FieldKind, params: &[f64], x: Vec3) -> f64 {
    match kind {
        FieldKind::Sphere => {
            let center = Vec3::new(params[0], params[1], params[2]);
            (x - center).norm() - params[3]
        }
        FieldKind::Torus => {
            let center = Vec3::new(params[0], params[1], params[2]);
            let d = x - center;
            let rho = (d.x * d.x + d.z * d.z).sqrt();
            let u = rho - params[3];
            (u * u + d.y * d.y).sqrt() - params[4]
        }
        FieldKind::Cuboid => {
            let center = Vec3::new(params[0], params[1], params[2]);
            let d = x - center;
            let q = Vec3::new(
                d.x.abs() - params[3],
                d.y.abs() - params[4],
                d.z.abs() - params[5],
            );
            let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0));
            outside.norm() + q.x.max(q.y).max(q.z).min(0.0)
        }
        FieldKind::Metaballs { count, threshold } => {
            let mut sum = 0.0;
            for i in 0..*count {
                let p = &params[5 * i..5 * i + 5];
                let d = x - Vec3::new(p[0], p[1], p[2]);
                let r = p[3];
                sum += p[4] * (-d.norm_squared() / (r * r)).exp();
            }
            threshold - sum
        }
        FieldKind::Blend { a, b } => {
            let na = a.kind.param_len();
            let nb = b.kind.param_len();
            let t = params[na + nb];
            let fa = eval(&a.kind, &params[..na], x);
            let fb = eval(&b.kind, &params[na..na + nb], x);
            blend_value(fa, fb, t)
        }
        FieldKind::ThinShell { surface } => surface.distance(x) - params[0],
        FieldKind::OccupancyWrap { inner, sharpness } => {
            let s = eval(&inner.kind, params, x);
            clamp_occupancy(logistic(-sharpness * s))
        }
        FieldKind::Mlp { spec } => crate::mlp::field_value(spec, params, x),
    }
}

/// Computes the value and `df/dx`, and accumulates `seed * df/dc` into
/// `grad_c`. Returns the *unscaled* spatial gradient.
pub(super) fn eval_full(
    kind: &FieldKind,
    params: &[f64],
    x: Vec3,
    seed: f64,
    grad_c: &mut [f64],
) -> Result<(f64, Vec3), FieldError> {
    match kind {
        FieldKind::Sphere => {
            let center = Vec3::new(params[0], params[1], params[2]);
            let d = x - center;
            let n = d.norm();
            if n == 0.0 {
                return Err(FieldError::NonDifferentiablePoint(x.into()));
            }
            let dir = d / n;
            for k in 0..3 {
                grad_c[k] += seed * -dir[k];
            }
            grad_c[3] += seed * -1.0;
            Ok((n - params[3], dir))
        }
        FieldKind::Torus => {
            let center = Vec3::new(params[0], params[1], params[2]);
            let d = x - center;
            let rho = (d.x * d.x + d.z * d.z).sqrt();
            let u = rho - params[3];
            let len = (u * u + d.y * d.y).sqrt();
            if rho == 0.0 || len == 0.0 {
                return Err(FieldError::NonDifferentiablePoint(x.into()));
            }
            let grad_x = Vec3::new(
                u * d.x / (rho * len),
                d.y / len,
                u * d.z / (rho * len),
            );
            for k in 0..3 {
                grad_c[k] += seed * -grad_x[k];
            }
            grad_c[3] += seed * -(u / len);
            grad_c[4] += seed * -1.0;
            Ok((len - params[4], grad_x))
        }
        FieldKind::Cuboid => {
            let center = Vec3::new(params[0], params[1], params[2]);
            let d = x - center;
            let q = Vec3::new(
                d.x.abs() - params[3],
                d.y.abs() - params[4],
                d.z.abs() - params[5],
            );
            let m = q.x.max(q.y).max(q.z);
            let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0));
            let value = outside.norm() + m.min(0.0);

            // dvalue/dq, then chain through q = |d| - h.
            let mut g = Vec3::zeros();
            if m > 0.0 {
                let n = outside.norm();
                for k in 0..3 {
                    if q[k] > 0.0 {
                        g[k] = q[k] / n;
                    }
                }
            } else {
                // Interior: the max-composition subgradient. An exact tie of
                // the leading components is the medial axis.
                let argmax = if q.x >= q.y && q.x >= q.z {
                    0
                } else if q.y >= q.z {
                    1
                } else {
                    2
                };
                for k in 0..3 {
                    if k != argmax && q[k] == m {
                        return Err(FieldError::NonDifferentiablePoint(x.into()));
                    }
                }
                g[argmax] = 1.0;
            }
            let mut grad_x = Vec3::zeros();
            for k in 0..3 {
                if g[k] != 0.0 {
                    if d[k] == 0.0 {
                        return Err(FieldError::NonDifferentiablePoint(x.into()));
                    }
                    let s = d[k].signum();
                    grad_x[k] = g[k] * s;
                    grad_c[k] += seed * -g[k] * s;
                }
                grad_c[3 + k] += seed * -g[k];
            }
            Ok((value, grad_x))
        }
        FieldKind::Metaballs { count, threshold } => {
            let mut sum = 0.0;
            let mut grad_x = Vec3::zeros();
            for i in 0..*count {
                let p = &params[5 * i..5 * i + 5];
                let d = x - Vec3::new(p[0], p[1], p[2]);
                let r = p[3];
                let w = p[4];
                let e = (-d.norm_squared() / (r * r)).exp();
                sum += w * e;
                // f = threshold - sum w_i e_i
                let common = w * e * 2.0 / (r * r);
                grad_x += common * d;
                for k in 0..3 {
                    grad_c[5 * i + k] += seed * -common * d[k];
                }
                grad_c[5 * i + 3] += seed * -(w * e * 2.0 * d.norm_squared() / (r * r * r));
                grad_c[5 * i + 4] += seed * -e;
            }
            Ok((threshold - sum, grad_x))
        }
        FieldKind::Blend { a, b } => {
            let na = a.kind.param_len();
            let nb = b.kind.param_len();
            let t = params[na + nb];
            let (grad_a, grad_rest) = grad_c.split_at_mut(na);
            let (grad_b, grad_t) = grad_rest.split_at_mut(nb);
            let (fa, gxa) = eval_full(&a.kind, &params[..na], x, seed * (1.0 - t), grad_a)?;
            let (fb, gxb) = eval_full(&b.kind, &params[na..na + nb], x, seed * t, grad_b)?;
            grad_t[0] += seed * (fb - fa);
            let grad_x = if t == 0.0 {
                gxa
            } else if t == 1.0 {
                gxb
            } else {
                gxa + t * (gxb - gxa)
            };
            Ok((blend_value(fa, fb, t), grad_x))
        }
        FieldKind::ThinShell { surface } => {
            let (dist, closest) = surface.closest(x);
            if dist == 0.0 {
                return Err(FieldError::NonDifferentiablePoint(x.into()));
            }
            grad_c[0] += seed * -1.0;
            Ok((dist - params[0], (x - closest) / dist))
        }
        FieldKind::OccupancyWrap { inner, sharpness } => {
            // v = logistic(-k s); dv/ds = -k v (1 - v). The chain factor is
            // needed before the inner pass, so the value is evaluated first.
            let s = eval(&inner.kind, params, x);
            let v = logistic(-sharpness * s);
            let dvds = -sharpness * v * (1.0 - v);
            let (_, gx) = eval_full(&inner.kind, params, x, seed * dvds, grad_c)?;
            Ok((clamp_occupancy(v), gx * dvds))
        }
        FieldKind::Mlp { spec } => crate::mlp::field_eval_full(spec, params, x, seed, grad_c),
    }
}
