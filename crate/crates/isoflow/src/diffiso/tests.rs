use super::*;
use crate::field::{Metaball, ParamField, Vec3};
use crate::losses::{chamfer3d_vertex_grad, sample_surface};
use crate::mesher::{marching_cubes, sample_grid, GridSpec};
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn metaball_field() -> ParamField {
    ParamField::metaballs(
        &[
            Metaball { center: Vec3::new(0.25, 0.05, -0.1), radius: 0.35, weight: 2.0 },
            Metaball { center: Vec3::new(-0.25, -0.05, 0.1), radius: 0.4, weight: 1.8 },
        ],
        1.0,
    )
}

fn extract(field: &ParamField, n: usize) -> crate::mesher::TriMesh {
    marching_cubes(&sample_grid(field, &GridSpec::unit(n)), field.convention().level).unwrap()
}

/// Newton-project a point onto the exact zero level set along the gradient.
fn project_to_surface(field: &ParamField, mut x: Vec3) -> Vec3 {
    for _ in 0..30 {
        let e = field.eval_full(x).unwrap();
        let step = e.value / e.grad_x.norm_squared();
        x -= step * e.grad_x;
        if e.value.abs() < 1e-13 {
            break;
        }
    }
    x
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let field = ParamField::sphere(Vec3::zeros(), 0.7);
    let mesh = extract(&field, 16);
    let up = VertexGrad::zeros(mesh.vertices.len());
    let pg = backward(&field, &mesh, &up, &BackwardConfig::default()).unwrap();
    assert!(pg.grad.iter().all(|&g| g == 0.0));
    assert_eq!(pg.skipped_vertices, 0);
}

#[test]
fn sphere_radius_gradient_closed_form() {
    // With upstream dL/dv = n_hat per vertex, Theorem 1 gives dv/dr = n_hat
    // (df/dr = -1, unit normal), so dL/dr sums to exactly one per vertex.
    let field = ParamField::sphere(Vec3::zeros(), 0.7);
    let mesh = extract(&field, 24);
    let up = VertexGrad(
        mesh.vertices
            .iter()
            .map(|&v| field.eval_full(v).unwrap().grad_x)
            .collect(),
    );
    let pg = backward(&field, &mesh, &up, &BackwardConfig::default()).unwrap();
    assert_eq!(pg.skipped_vertices, 0);
    assert_eq!(pg.grad[3], mesh.vertices.len() as f64);
    // Center components nearly cancel by symmetry.
    for k in 0..3 {
        assert!(pg.grad[k].abs() < 1e-9 * mesh.vertices.len() as f64);
    }
    // Normals of an exact SDF have unit norm.
    assert_relative_eq!(pg.normal_norm_mean, 1.0, epsilon = 1e-12);
}

#[test]
fn alignment_error_on_wrong_length() {
    let field = ParamField::sphere(Vec3::zeros(), 0.7);
    let mesh = extract(&field, 12);
    let up = VertexGrad::zeros(mesh.vertices.len() + 1);
    assert!(matches!(
        backward(&field, &mesh, &up, &BackwardConfig::default()),
        Err(DiffisoError::AlignmentError { .. })
    ));
}

#[test]
fn all_vertices_skipped_when_floor_exceeds_normals() {
    let field = ParamField::sphere(Vec3::zeros(), 0.7);
    let mesh = extract(&field, 12);
    let up = VertexGrad::zeros(mesh.vertices.len());
    let cfg = BackwardConfig { normal_norm_floor: 1e9, sdf_unit_normal: false };
    assert!(matches!(
        backward(&field, &mesh, &up, &cfg),
        Err(DiffisoError::AllVerticesSkipped)
    ));
}

#[test]
fn sdf_unit_normal_changes_little_on_exact_sdfs() {
    let field = ParamField::sphere(Vec3::new(0.1, 0.0, 0.0), 0.6);
    let mesh = extract(&field, 24);
    let samples = sample_surface(&mesh, 512, 7).unwrap();
    let target: Vec<Vec3> = samples.points.iter().map(|p| p * 1.1).collect();
    let (_, up) = chamfer3d_vertex_grad(&mesh, &samples, &target);

    let exact = backward(&field, &mesh, &up, &BackwardConfig::default()).unwrap();
    let approx_cfg = BackwardConfig { sdf_unit_normal: true, ..Default::default() };
    let approx_pg = backward(&field, &mesh, &up, &approx_cfg).unwrap();
    let diff: f64 = exact
        .grad
        .iter()
        .zip(&approx_pg.grad)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    assert!(diff / exact.norm() < 0.01, "relative change {}", diff / exact.norm());
}

#[test]
fn backward_is_additive_over_vertex_partitions() {
    let field = metaball_field();
    let mesh = extract(&field, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let up_full = VertexGrad(
        (0..mesh.vertices.len())
            .map(|_| Vec3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect(),
    );
    let k = mesh.vertices.len() / 2;
    let mut up_a = up_full.clone();
    let mut up_b = up_full.clone();
    for v in k..mesh.vertices.len() {
        up_a.0[v] = Vec3::zeros();
    }
    for v in 0..k {
        up_b.0[v] = Vec3::zeros();
    }
    let cfg = BackwardConfig::default();
    let full = backward(&field, &mesh, &up_full, &cfg).unwrap();
    let a = backward(&field, &mesh, &up_a, &cfg).unwrap();
    let b = backward(&field, &mesh, &up_b, &cfg).unwrap();
    for j in 0..full.grad.len() {
        let sum = a.grad[j] + b.grad[j];
        assert_relative_eq!(sum, full.grad[j], max_relative = 1e-12, epsilon = 1e-15);
    }
}

#[test]
fn theorem1_columns_are_parallel_to_the_normal() {
    let field = metaball_field();
    let mesh = extract(&field, 20);
    let cfg = BackwardConfig::default();
    for v in mesh.vertices.iter().step_by(17) {
        let n = field.eval_full(*v).unwrap().grad_x;
        for col in vertex_jacobian(&field, *v, &cfg).unwrap() {
            assert!(col.cross(&n).norm() <= 1e-12 * col.norm().max(1.0) * n.norm());
        }
    }
}

#[test]
fn ift_oracle_identity_perturbation_returns_start() {
    let field = ParamField::sphere(Vec3::zeros(), 0.7);
    let c0 = field.params().to_vec();
    let v0 = project_to_surface(&field, Vec3::new(0.7, 0.0, 0.0));
    let p = ift_project_oracle(&field, v0, &c0, &c0).unwrap();
    assert!((p - v0).norm() < 1e-9);
}

#[test]
fn ift_oracle_sphere_radius_growth_is_exact() {
    let field = ParamField::sphere(Vec3::zeros(), 0.7);
    let c0 = field.params().to_vec();
    let mut c1 = c0.clone();
    let delta = 1e-3;
    c1[3] += delta;
    let v0 = project_to_surface(&field, Vec3::new(0.3, 0.5, 0.31).normalize() * 0.7);
    let n = v0 / v0.norm();
    let p = ift_project_oracle(&field, v0, &c0, &c1).unwrap();
    assert!((p - (v0 + delta * n)).norm() < 1e-9, "oracle {p:?}");
}

#[test]
fn ift_oracle_rejects_points_off_the_surface() {
    let field = ParamField::sphere(Vec3::zeros(), 0.7);
    let c0 = field.params().to_vec();
    assert!(matches!(
        ift_project_oracle(&field, Vec3::new(0.9, 0.0, 0.0), &c0, &c0),
        Err(DiffisoError::NotOnSurface(_))
    ));
}

#[test]
fn ift_oracle_no_root_when_surface_vanishes() {
    // Shrink the metaball weights until the surface near v0 disappears.
    let field = ParamField::metaballs(
        &[Metaball { center: Vec3::zeros(), radius: 0.3, weight: 2.0 }],
        1.0,
    );
    let c0 = field.params().to_vec();
    let mut c1 = c0.clone();
    c1[4] = 0.5; // weight below the threshold: no zero level set at all
    let v0 = project_to_surface(&field, Vec3::new(0.2, 0.1, 0.05));
    assert!(matches!(
        ift_project_oracle(&field, v0, &c0, &c1),
        Err(DiffisoError::NoRootInBracket)
    ));
}

#[test]
fn theorem1_jacobian_matches_oracle_differences_on_metaballs() {
    let field = metaball_field();
    let mesh = extract(&field, 24);
    let cfg = BackwardConfig::default();
    let c0 = field.params().to_vec();
    let delta = 1e-4;
    let mut checked = 0;
    for v in mesh.vertices.iter().step_by(23) {
        let v0 = project_to_surface(&field, *v);
        let cols = vertex_jacobian(&field, v0, &cfg).unwrap();
        for j in 0..c0.len() {
            let mut plus = c0.clone();
            let mut minus = c0.clone();
            plus[j] += delta;
            minus[j] -= delta;
            let p = ift_project_oracle(&field, v0, &c0, &plus).unwrap();
            let m = ift_project_oracle(&field, v0, &c0, &minus).unwrap();
            let fd = (p - m) / (2.0 * delta);
            let scale = fd.norm().max(cols[j].norm());
            if scale < 1e-9 {
                continue;
            }
            assert!(
                (fd - cols[j]).norm() / scale < 1e-3,
                "param {j}: fd {fd:?} vs closed form {:?}",
                cols[j]
            );
            // The oracle displacement is along the frozen normal.
            let n = field.eval_full(v0).unwrap().grad_x;
            assert!(fd.cross(&n).norm() / (fd.norm().max(1e-12) * n.norm()) < 1e-6);
            checked += 1;
        }
    }
    assert!(checked > 20);
}

/// Finite differences of the whole forward pipeline (resample -> marching
/// cubes -> vertex chamfer). The chamfer treats the mesh vertices as the
/// surface sampling, so the loss is a smooth function of the parameters as
/// long as the extraction topology does not change; the step shrinks until
/// the crossing-edge set is the same on both sides (topology held fixed).
fn pipeline_fd_gradient(
    field: &ParamField,
    grid: &GridSpec,
    target: &[Vec3],
    h0: f64,
) -> Vec<f64> {
    let eval = |params: &[f64]| -> (f64, usize) {
        let mut f = field.clone();
        f.set_params(params).unwrap();
        let mesh = marching_cubes(&sample_grid(&f, grid), f.convention().level).unwrap();
        (crate::losses::chamfer3d(&mesh.vertices, target).0, mesh.vertices.len())
    };
    let c0 = field.params().to_vec();
    let base_count = eval(&c0).1;
    (0..c0.len())
        .map(|j| {
            let mut h = h0;
            loop {
                let mut p = c0.clone();
                p[j] += h;
                let (plus, n_plus) = eval(&p);
                p[j] -= 2.0 * h;
                let (minus, n_minus) = eval(&p);
                if n_plus == base_count && n_minus == base_count {
                    return (plus - minus) / (2.0 * h);
                }
                h *= 0.25;
                assert!(h > 1e-9, "could not hold topology fixed for param {j}");
            }
        })
        .collect()
}

#[test]
fn backward_matches_pipeline_finite_differences() {
    let field = metaball_field();
    let grid = GridSpec::unit(48);
    let mesh = marching_cubes(&sample_grid(&field, &grid), 0.0).unwrap();
    // A fixed off-surface target so the gradient is non-trivial.
    let target: Vec<Vec3> = sample_surface(&mesh, 1024, 11)
        .unwrap()
        .points
        .iter()
        .map(|p| p * 1.15 + Vec3::new(0.02, -0.01, 0.015))
        .collect();

    let (_, point_grads) = crate::losses::chamfer3d(&mesh.vertices, &target);
    let up = VertexGrad(point_grads);
    let analytic = backward(&field, &mesh, &up, &BackwardConfig::default()).unwrap();
    let fd = pipeline_fd_gradient(&field, &grid, &target, 1e-4);

    let dot: f64 = analytic.grad.iter().zip(&fd).map(|(a, b)| a * b).sum();
    let na = analytic.norm();
    let nf = fd.iter().map(|g| g * g).sum::<f64>().sqrt();
    let cosine = dot / (na * nf);
    let mag_err = (na - nf).abs() / nf;
    assert!(cosine > 0.99, "cosine similarity {cosine}");
    assert!(mag_err < 5e-2, "relative magnitude error {mag_err}");
}

#[test]
fn one_descent_step_decreases_chamfer_across_seeds() {
    // Line-searched steepest descent must make progress from the Theorem-1
    // gradient for a morphing-style chamfer problem.
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = ParamField::metaballs(
            &[
                Metaball {
                    center: Vec3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), 0.0),
                    radius: rng.gen_range(0.3..0.45),
                    weight: 2.0,
                },
                Metaball {
                    center: Vec3::new(rng.gen_range(-0.2..0.2), 0.1, rng.gen_range(-0.2..0.2)),
                    radius: rng.gen_range(0.3..0.45),
                    weight: 1.5,
                },
            ],
            1.0,
        );
        let grid = GridSpec::unit(24);
        let target_field = ParamField::sphere(Vec3::new(0.05, 0.0, 0.0), 0.55);
        let target_mesh = marching_cubes(&sample_grid(&target_field, &grid), 0.0).unwrap();
        let target = sample_surface(&target_mesh, 512, seed).unwrap().points;

        let loss_of = |f: &ParamField| -> f64 {
            let mesh = marching_cubes(&sample_grid(f, &grid), 0.0).unwrap();
            let samples = sample_surface(&mesh, 512, seed + 1).unwrap();
            crate::losses::chamfer3d(&samples.points, &target).0
        };

        let mesh = marching_cubes(&sample_grid(&field, &grid), 0.0).unwrap();
        let samples = sample_surface(&mesh, 512, seed + 1).unwrap();
        let (l0, up) = chamfer3d_vertex_grad(&mesh, &samples, &target);
        let pg = backward(&field, &mesh, &up, &BackwardConfig::default()).unwrap();

        // Backtracking line search along -grad.
        let mut step = 1e-2 / pg.norm().max(1e-12);
        let mut improved = false;
        for _ in 0..12 {
            let params: Vec<f64> = field
                .params()
                .iter()
                .zip(&pg.grad)
                .map(|(p, g)| p - step * g)
                .collect();
            let mut trial = field.clone();
            trial.set_params(&params).unwrap();
            if loss_of(&trial) < l0 {
                improved = true;
                break;
            }
            step *= 0.5;
        }
        assert!(improved, "seed {seed}: no descent step found");
    }
}
