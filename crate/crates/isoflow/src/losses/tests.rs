use super::*;
use crate::field::{Metaball, ParamField};
use crate::mesher::{marching_cubes, sample_grid, GridSpec};
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sphere_mesh(r: f64, n: usize) -> TriMesh {
    let field = ParamField::sphere(Vec3::zeros(), r);
    marching_cubes(&sample_grid(&field, &GridSpec::unit(n)), 0.0).unwrap()
}

fn single_triangle() -> TriMesh {
    TriMesh::new(
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2]],
    )
}

#[test]
fn samples_on_single_triangle_stay_inside() {
    let mesh = single_triangle();
    let s = sample_surface(&mesh, 256, 0).unwrap();
    for ((face, bary), p) in s.parents.iter().zip(&s.points) {
        assert_eq!(*face, 0);
        assert!(bary.iter().all(|&b| b >= 0.0));
        assert_relative_eq!(bary.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // Inside the triangle: x, y >= 0, x + y <= 1, z = 0.
        assert!(p.x >= -1e-12 && p.y >= -1e-12 && p.x + p.y <= 1.0 + 1e-12);
        assert_eq!(p.z, 0.0);
    }
}

#[test]
fn sampling_is_area_weighted() {
    // Two triangles with areas in ratio 3:1.
    let mesh = TriMesh::new(
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(3.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(11.0, 0.0, 0.0),
            Vec3::new(10.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2], [3, 4, 5]],
    );
    let n = 4000;
    let s = sample_surface(&mesh, n, 42).unwrap();
    let on_big = s.parents.iter().filter(|(f, _)| *f == 0).count();
    // Binomial(n, 3/4): mean 3000, sigma = sqrt(n * 3/16) ~ 27.4.
    let sigma = (n as f64 * 3.0 / 16.0).sqrt();
    assert!(
        (on_big as f64 - 0.75 * n as f64).abs() < 3.0 * sigma,
        "{on_big} samples on the larger triangle"
    );
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let mesh = sphere_mesh(0.7, 16);
    let a = sample_surface(&mesh, 2048, 9).unwrap();
    let b = sample_surface(&mesh, 2048, 9).unwrap();
    assert!(a
        .points
        .iter()
        .zip(&b.points)
        .all(|(p, q)| p.x.to_bits() == q.x.to_bits()
            && p.y.to_bits() == q.y.to_bits()
            && p.z.to_bits() == q.z.to_bits()));
    let c = sample_surface(&mesh, 2048, 10).unwrap();
    assert!(a.points.iter().zip(&c.points).any(|(p, q)| p != q));
}

#[test]
fn sample_surface_rejects_empty_mesh() {
    assert!(matches!(
        sample_surface(&TriMesh::default(), 16, 0),
        Err(LossError::EmptyMesh)
    ));
}

#[test]
fn chamfer_of_identical_clouds_is_zero() {
    let mesh = sphere_mesh(0.6, 12);
    let s = sample_surface(&mesh, 512, 3).unwrap();
    let (loss, grads) = chamfer3d(&s.points, &s.points);
    assert_eq!(loss, 0.0);
    assert!(grads.iter().all(|g| g.norm() == 0.0));
}

#[test]
fn chamfer_two_point_closed_form() {
    let p = [Vec3::new(0.0, 0.0, 0.0)];
    let q = [Vec3::new(1.0, 0.0, 0.0)];
    let (loss, grads) = chamfer3d(&p, &q);
    // 1 + 1 from the two directions; both gradients pull p toward q.
    assert_eq!(loss, 2.0);
    assert_eq!(grads[0], Vec3::new(-4.0, 0.0, 0.0));
}

#[test]
fn chamfer_matches_brute_force_on_random_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cloud = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect()
    };
    let p = cloud(&mut rng, 50);
    let q = cloud(&mut rng, 50);
    let brute: f64 = p
        .iter()
        .map(|a| q.iter().map(|b| (a - b).norm_squared()).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        + q.iter()
            .map(|b| p.iter().map(|a| (a - b).norm_squared()).fold(f64::INFINITY, f64::min))
            .sum::<f64>();
    let (loss, _) = chamfer3d(&p, &q);
    assert_eq!(loss, brute);
}

#[test]
fn chamfer_point_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let p: Vec<Vec3> = (0..20)
        .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
        .collect();
    let q: Vec<Vec3> = (0..25)
        .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
        .collect();
    let (_, grads) = chamfer3d(&p, &q);
    let h = 1e-7;
    for i in (0..p.len()).step_by(4) {
        for k in 0..3 {
            let mut pp = p.clone();
            pp[i][k] += h;
            let plus = chamfer3d(&pp, &q).0;
            pp[i][k] -= 2.0 * h;
            let minus = chamfer3d(&pp, &q).0;
            let fd = (plus - minus) / (2.0 * h);
            assert_relative_eq!(fd, grads[i][k], max_relative = 1e-5, epsilon = 1e-8);
        }
    }
}

fn ortho_cam(res: usize) -> CameraSpec {
    CameraSpec::orthographic(
        Vec3::new(0.0, 0.0, -1.0),
        Vec3::new(0.0, 1.0, 0.0),
        1.2,
        res,
        res,
    )
    .unwrap()
}

#[test]
fn silhouette_of_sphere_is_a_disc() {
    let mesh = sphere_mesh(0.8, 32);
    let sil = silhouette_render(&mesh, &ortho_cam(128)).unwrap();
    let r_px = 0.8 / 1.2 * 64.0;
    let expected = std::f64::consts::PI * r_px * r_px;
    let area = sil.coverage() as f64;
    assert!(
        (area - expected).abs() / expected < 0.02,
        "disc area {area} vs {expected}"
    );
    // Contour points sit on boundary pixels of the mask.
    assert!(!sil.contour.is_empty());
    for c in &sil.contour {
        let ix = (((c[0] + 1.0) * 0.5 * 128.0) - 0.5).round() as usize;
        let iy = (((1.0 - c[1]) * 0.5 * 128.0) - 0.5).round() as usize;
        assert!(sil.mask[iy * 128 + ix]);
    }
}

#[test]
fn silhouette_render_is_bit_deterministic() {
    let mesh = sphere_mesh(0.7, 24);
    let a = silhouette_render(&mesh, &ortho_cam(96)).unwrap();
    let b = silhouette_render(&mesh, &ortho_cam(96)).unwrap();
    assert_eq!(a.mask, b.mask);
    assert_eq!(a.contour, b.contour);
}

#[test]
fn mesh_behind_pinhole_camera_renders_empty() {
    let mesh = sphere_mesh(0.5, 16);
    // Camera ahead of the mesh, looking away from it.
    let cam = CameraSpec::pinhole(
        Vec3::new(0.0, 0.0, 3.0),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.0, 1.0, 0.0),
        45.0,
        64,
        64,
    )
    .unwrap();
    let sil = silhouette_render(&mesh, &cam).unwrap();
    assert_eq!(sil.coverage(), 0);
    assert!(sil.contour.is_empty());
}

#[test]
fn camera_rejects_parallel_up() {
    assert!(CameraSpec::orthographic(
        Vec3::new(0.0, 0.0, -1.0),
        Vec3::new(0.0, 0.0, 2.0),
        1.0,
        32,
        32
    )
    .is_err());
}

#[test]
fn silhouette_l1_metric_cases() {
    let mesh = sphere_mesh(0.7, 24);
    let cam = ortho_cam(128);
    let own = silhouette_render(&mesh, &cam).unwrap();
    assert_eq!(silhouette_l1(&mesh, &cam, &own).unwrap(), 0.0);

    // Full vs empty mask -> 1.0 normalized.
    let full = Silhouette {
        width: 128,
        height: 128,
        mask: vec![true; 128 * 128],
        contour: Vec::new(),
    };
    let empty = Silhouette { mask: vec![false; 128 * 128], ..full.clone() };
    let diff = full
        .mask
        .iter()
        .zip(&empty.mask)
        .filter(|(a, b)| a != b)
        .count();
    assert_eq!(diff as f64 / (128.0 * 128.0), 1.0);

    let small = Silhouette { width: 64, height: 64, mask: vec![false; 64 * 64], contour: vec![] };
    assert!(matches!(
        silhouette_l1(&mesh, &cam, &small),
        Err(LossError::ResolutionMismatch(..))
    ));
}

#[test]
fn silhouette_l1_of_nested_discs_matches_annulus_area() {
    let cam = ortho_cam(128);
    let small = silhouette_render(&sphere_mesh(0.5, 32), &cam).unwrap();
    let l1 = silhouette_l1(&sphere_mesh(0.6, 32), &cam, &small).unwrap();
    // Annulus between radii 0.5 and 0.6 in a window of half-extent 1.2.
    let px = |r: f64| std::f64::consts::PI * (r / 1.2 * 64.0).powi(2);
    let expected = (px(0.6) - px(0.5)) / (128.0 * 128.0);
    assert!((l1 - expected).abs() / expected < 0.03, "l1 {l1} vs {expected}");
}

#[test]
fn contour_chamfer_self_match_is_zero() {
    let mesh = sphere_mesh(0.7, 24);
    let cam = ortho_cam(96);
    let first = contour_chamfer(&mesh, &cam, &[[0.0, 0.0]]).unwrap();
    // Use the projected silhouette endpoints themselves as the target.
    let cc = contour_chamfer(&mesh, &cam, &first.b_points).unwrap();
    assert_eq!(cc.loss, 0.0);
    assert!(cc.vertex_grad.0.iter().all(|g| g.norm() == 0.0));
}

#[test]
fn contour_chamfer_gradient_matches_finite_differences() {
    let mesh = sphere_mesh(0.7, 20);
    let cam = ortho_cam(96);
    // Target: the silhouette of a larger sphere.
    let target = silhouette_render(&sphere_mesh(0.85, 20), &cam).unwrap().contour;
    let cc = contour_chamfer(&mesh, &cam, &target).unwrap();

    // The analytic gradient differentiates the loss with the silhouette
    // selection and correspondences frozen, so the finite difference is
    // taken on the same frozen quantity.
    let h = 1e-6;
    let mut checked = 0;
    for &v in cc.b_vertices.iter().step_by(5) {
        for k in 0..3 {
            let mut m = mesh.clone();
            m.vertices[v][k] += h;
            let plus = cc.loss_with_fixed_correspondences(&m, &cam, &target);
            m.vertices[v][k] -= 2.0 * h;
            let minus = cc.loss_with_fixed_correspondences(&m, &cam, &target);
            let fd = (plus - minus) / (2.0 * h);
            let g = cc.vertex_grad.0[v][k];
            let scale = fd.abs().max(g.abs()).max(1e-6);
            assert!(
                (fd - g).abs() / scale < 1e-4,
                "vertex {v} axis {k}: fd {fd} vs analytic {g}"
            );
            checked += 1;
        }
    }
    assert!(checked >= 20);
    // And the frozen loss at the unperturbed mesh is the reported loss.
    assert_relative_eq!(
        cc.loss_with_fixed_correspondences(&mesh, &cam, &target),
        cc.loss,
        max_relative = 1e-12
    );
}

#[test]
fn contour_chamfer_gradient_lies_in_the_image_plane() {
    let mesh = sphere_mesh(0.7, 20);
    let cam = ortho_cam(96);
    let target = silhouette_render(&sphere_mesh(0.85, 20), &cam).unwrap().contour;
    let cc = contour_chamfer(&mesh, &cam, &target).unwrap();
    let dir = cam.view_dir();
    for g in &cc.vertex_grad.0 {
        assert!(g.dot(&dir).abs() <= 1e-12 * g.norm().max(1.0));
    }
}

#[test]
fn growing_target_pushes_silhouette_outward() {
    let mesh = sphere_mesh(0.6, 24);
    let cam = ortho_cam(128);
    let target = silhouette_render(&sphere_mesh(0.8, 24), &cam).unwrap().contour;
    let cc = contour_chamfer(&mesh, &cam, &target).unwrap();
    let (right, up, _) = cam.basis();
    let mut outward = 0usize;
    let mut total = 0usize;
    for (&v, _) in cc.b_vertices.iter().zip(&cc.b_points) {
        let p = mesh.vertices[v];
        let radial = Vec3::new(p.dot(&right), p.dot(&up), 0.0);
        let g = cc.vertex_grad.0[v];
        let g_img = Vec3::new(g.dot(&right), g.dot(&up), 0.0);
        if radial.norm() < 1e-9 || g_img.norm() == 0.0 {
            continue;
        }
        total += 1;
        // Descent direction (-grad) should have positive radial component.
        if -g_img.dot(&radial) > 0.0 {
            outward += 1;
        }
    }
    assert!(total > 20);
    assert!(
        outward as f64 >= 0.95 * total as f64,
        "only {outward}/{total} vertices pushed outward"
    );
}

#[test]
fn contour_chamfer_needs_silhouette_edges() {
    let mesh = sphere_mesh(0.7, 16);
    let cam = ortho_cam(64);
    assert!(matches!(
        contour_chamfer(&mesh, &cam, &[]),
        Err(LossError::NoSilhouetteEdges)
    ));
}

#[test]
fn boundary_edges_of_open_meshes_are_silhouette_edges() {
    let mesh = single_triangle();
    let cam = ortho_cam(64);
    let edges = silhouette_edges(&mesh, &cam);
    assert_eq!(edges.len(), 3);
}

#[test]
fn constant_pressure_drag_vanishes_on_closed_meshes() {
    let mesh = sphere_mesh(0.75, 24);
    let (drag, _) = drag_integral(&mesh, &ConstantPressure(3.7)).unwrap();
    assert!(
        drag.abs() <= 1e-9 * mesh.total_area(),
        "constant-pressure drag {drag}"
    );
}

#[test]
fn drag_rejects_open_meshes() {
    assert!(matches!(
        drag_integral(&single_triangle(), &ConstantPressure(1.0)),
        Err(LossError::OpenMesh)
    ));
}

#[test]
fn stagnation_drag_matches_sphere_quadrature() {
    // Quadrature oracle over the analytic sphere: with p = p0 max(0, -n_x)^2,
    // the integrand p * n_x is nonzero on the upstream hemisphere.
    let r: f64 = 0.75;
    let p0 = 2.0;
    let steps = 4000;
    let mut oracle = 0.0;
    for i in 0..steps {
        let theta = (i as f64 + 0.5) / steps as f64 * std::f64::consts::PI;
        let nx = theta.cos();
        let p = if -nx > 0.0 { p0 * nx * nx } else { 0.0 };
        oracle += p * -nx * 2.0 * std::f64::consts::PI * r * r * theta.sin()
            * (std::f64::consts::PI / steps as f64);
    }
    assert!(oracle > 0.0, "windward loading decelerates the body");

    let mesh = sphere_mesh(r, 48);
    assert!(mesh.faces.len() > 10_000);
    let (drag, _) = drag_integral(&mesh, &StagnationProxy { p0 }).unwrap();
    assert!(
        (drag - oracle).abs() / oracle.abs() < 0.01,
        "drag {drag} vs quadrature {oracle}"
    );
}

#[test]
fn drag_vertex_gradients_match_finite_differences() {
    let mesh = sphere_mesh(0.6, 8);
    let proxy = StagnationProxy { p0 : 1.5 };
    let (_, vg) = drag_integral(&mesh, &proxy).unwrap();
    let h = 1e-6;
    for v in (0..mesh.vertices.len()).step_by(5) {
        for k in 0..3 {
            let mut m = mesh.clone();
            m.vertices[v][k] += h;
            let plus = drag_integral(&m, &proxy).unwrap().0;
            m.vertices[v][k] -= 2.0 * h;
            let minus = drag_integral(&m, &proxy).unwrap().0;
            let fd = (plus - minus) / (2.0 * h);
            let g = vg.0[v][k];
            let scale = fd.abs().max(g.abs()).max(1e-9);
            assert!(
                (fd - g).abs() / scale < 1e-5,
                "vertex {v} axis {k}: fd {fd} vs analytic {g}"
            );
        }
    }
}

#[test]
fn constraint_penalty_and_probes() {
    let field = ParamField::sphere(Vec3::zeros(), 0.5);
    // Probes inside the shape: satisfied, zero penalty and gradient.
    let inside = [ConstraintSphere { center: Vec3::zeros(), radius: 0.2, probes: 32 }];
    let (pen, grad) = constraint_penalty(&field, &inside);
    assert_eq!(pen, 0.0);
    assert!(grad.iter().all(|&g| g == 0.0));
    assert!(constraint_max_violation(&field, &inside) <= 0.0);

    // Probes poking outside: positive penalty, gradient matches FD.
    let outside = [ConstraintSphere { center: Vec3::zeros(), radius: 0.7, probes: 16 }];
    let (pen, grad) = constraint_penalty(&field, &outside);
    assert!(pen > 0.0);
    let h = 1e-6;
    for j in 0..4 {
        let mut fp = field.clone();
        let mut params = field.params().to_vec();
        params[j] += h;
        fp.set_params(&params).unwrap();
        let plus = constraint_penalty(&fp, &outside).0;
        params[j] -= 2.0 * h;
        fp.set_params(&params).unwrap();
        let minus = constraint_penalty(&fp, &outside).0;
        let fd = (plus - minus) / (2.0 * h);
        assert_relative_eq!(fd, grad[j], max_relative = 1e-5, epsilon = 1e-9);
    }
}

#[test]
fn fibonacci_points_lie_on_the_unit_sphere() {
    for p in fibonacci_sphere(64) {
        assert_relative_eq!(p.norm(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn normal_consistency_self_is_one() {
    let mesh = sphere_mesh(0.7, 20);
    let nc = normal_consistency(&mesh, &mesh, 64).unwrap();
    assert!(nc > 0.999999, "self NC {nc}");
}

#[test]
fn normal_consistency_flipped_is_minus_one() {
    let mesh = sphere_mesh(0.7, 20);
    let flipped = TriMesh::new(
        mesh.vertices.clone(),
        mesh.faces.iter().map(|f| [f[0], f[2], f[1]]).collect(),
    );
    let nc = normal_consistency(&mesh, &flipped, 64).unwrap();
    assert!(nc < -0.999999, "flipped NC {nc}");
}

#[test]
fn normal_consistency_is_symmetric() {
    let sphere = sphere_mesh(0.7, 20);
    let mut ellipsoid = sphere.clone();
    for v in &mut ellipsoid.vertices {
        v.z *= 1.2;
    }
    let ab = normal_consistency(&sphere, &ellipsoid, 64).unwrap();
    let ba = normal_consistency(&ellipsoid, &sphere, 64).unwrap();
    assert!((ab - ba).abs() < 1e-6);
    assert!(ab < 1.0 && ab > 0.8);
}

#[test]
fn normal_consistency_reports_no_overlap() {
    let small = sphere_mesh(0.15, 16);
    let mut far = small.clone();
    for v in &mut far.vertices {
        v.x += 1.5;
    }
    assert!(matches!(
        normal_consistency(&small, &far, 32),
        Err(LossError::NoOverlap)
    ));
}

#[test]
fn image_writers_produce_valid_headers() {
    let mesh = sphere_mesh(0.6, 12);
    let sil = silhouette_render(&mesh, &ortho_cam(32)).unwrap();
    let mut pgm = Vec::new();
    write_pgm_mask(&sil, &mut pgm).unwrap();
    let header = b"P5\n32 32\n255\n";
    assert!(pgm.starts_with(header));
    assert_eq!(pgm.len(), header.len() + 32 * 32);

    let map = render_normal_map(&mesh, Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 1.0, 0.0), 1.0, 16)
        .unwrap();
    let mut ppm = Vec::new();
    write_ppm_normal_map(&map, &mut ppm).unwrap();
    let header = b"P6\n16 16\n255\n";
    assert!(ppm.starts_with(header));
    assert_eq!(ppm.len(), header.len() + 3 * 16 * 16);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Chamfer is symmetric in its arguments and non-negative, with zero
    /// exactly when every point has a zero-distance partner.
    #[test]
    fn chamfer_symmetry_and_nonnegativity(
        seed in 0u64..1000,
        np in 2usize..30,
        nq in 2usize..30,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<Vec3> = (0..np).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let q: Vec<Vec3> = (0..nq).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let (pq, _) = chamfer3d(&p, &q);
        let (qp, _) = chamfer3d(&q, &p);
        prop_assert_eq!(pq, qp);
        prop_assert!(pq >= 0.0);
    }

    /// Sampled chamfer to the own sample set is identically zero.
    #[test]
    fn chamfer_zero_iff_coincident(seed in 0u64..100) {
        let field = ParamField::metaballs(
            &[Metaball { center: Vec3::zeros(), radius: 0.4, weight: 2.0 }],
            1.0,
        );
        let mesh = marching_cubes(&sample_grid(&field, &GridSpec::unit(10)), 0.0).unwrap();
        let s = sample_surface(&mesh, 64, seed).unwrap();
        let (loss, _) = chamfer3d(&s.points, &s.points);
        prop_assert_eq!(loss, 0.0);
    }
}
