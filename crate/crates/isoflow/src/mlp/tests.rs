use super::*;
use crate::field::FieldFlavor;
use crate::losses::{chd_metric, sample_surface};
use crate::mesher::{marching_cubes, sample_grid, GridSpec};
use approx::assert_relative_eq;
use std::sync::OnceLock;

fn tiny_spec(flavor: FieldFlavor) -> MlpSpec {
    MlpSpec {
        latent_dim: 2,
        hidden: vec![8, 8],
        activation: Activation::Tanh,
        residual: vec![false, false],
        flavor,
    }
}

fn train_spec(flavor: FieldFlavor) -> MlpSpec {
    MlpSpec {
        latent_dim: 2,
        hidden: vec![32, 32],
        activation: Activation::Tanh,
        residual: vec![false, false],
        flavor,
    }
}

fn unit_bounds() -> (Vec3, Vec3) {
    (Vec3::repeat(-1.0), Vec3::repeat(1.0))
}

fn sphere_training_set(flavor: FieldFlavor, n: usize, seed: u64) -> TrainingSamples {
    let target = ParamField::sphere(Vec3::zeros(), 0.6);
    let (points, targets) = sample_training_data(&target, flavor, unit_bounds(), n, seed);
    TrainingSamples {
        shapes: vec![ShapeSamples { id: "sphere".into(), points, targets }],
    }
}

fn sphere_train_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 150,
        batch_size: 256,
        adam: AdamConfig { lr: 3e-3, ..Default::default() },
        seed: 3,
        ..Default::default()
    }
}

/// One trained sphere net shared by the fine-tuning tests.
fn trained_sphere_net() -> &'static (MlpWeights, Vec<f64>) {
    static NET: OnceLock<(MlpWeights, Vec<f64>)> = OnceLock::new();
    NET.get_or_init(|| {
        let spec = train_spec(FieldFlavor::SignedDistance);
        let samples = sphere_training_set(FieldFlavor::SignedDistance, 3000, 7);
        let (w, table, _) = train_implicit(&spec, &samples, &sphere_train_cfg()).unwrap();
        let z = table.codes["sphere"].clone();
        (w, z)
    })
}

#[test]
fn zero_network_is_identically_zero_with_zero_gradients() {
    let w = MlpWeights::zeros(tiny_spec(FieldFlavor::SignedDistance)).unwrap();
    let e = mlp_eval_full(&w, &[0.3, -0.2], Vec3::new(0.1, 0.5, -0.4)).unwrap();
    assert_eq!(e.value, 0.0);
    assert_eq!(e.grad_x, Vec3::zeros());
    assert!(e.grad_z.iter().all(|&g| g == 0.0));
}

fn fd_check(spec: MlpSpec, seed: u64, tol: f64) {
    let w = MlpWeights::init(spec.clone(), seed).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 1);
    use rand::Rng;
    use rand::SeedableRng;
    let z: Vec<f64> = (0..spec.latent_dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let x = Vec3::new(
        rng.gen_range(-0.8..0.8),
        rng.gen_range(-0.8..0.8),
        rng.gen_range(-0.8..0.8),
    );
    let eval = mlp_eval_full(&w, &z, x).unwrap();
    let h = 1e-5;

    // d/dz against central differences.
    for j in 0..z.len() {
        let mut zp = z.clone();
        zp[j] += h;
        let plus = mlp_eval_full(&w, &zp, x).unwrap().value;
        zp[j] -= 2.0 * h;
        let minus = mlp_eval_full(&w, &zp, x).unwrap().value;
        let fd = (plus - minus) / (2.0 * h);
        let scale = fd.abs().max(eval.grad_z[j].abs()).max(1e-4);
        assert!(
            (fd - eval.grad_z[j]).abs() / scale < tol,
            "dz[{j}]: fd {fd} vs {}",
            eval.grad_z[j]
        );
    }
    // d/dx.
    for k in 0..3 {
        let mut e = Vec3::zeros();
        e[k] = h;
        let fd = (mlp_eval_full(&w, &z, x + e).unwrap().value
            - mlp_eval_full(&w, &z, x - e).unwrap().value)
            / (2.0 * h);
        let scale = fd.abs().max(eval.grad_x[k].abs()).max(1e-4);
        assert!((fd - eval.grad_x[k]).abs() / scale < tol);
    }
    // d/dtheta on 20 random weight entries.
    let picks: Vec<usize> = (0..20).map(|_| rng.gen_range(0..w.theta.len())).collect();
    for j in picks {
        let mut wp = w.clone();
        wp.theta[j] += h;
        let plus = mlp_eval_full(&wp, &z, x).unwrap().value;
        wp.theta[j] -= 2.0 * h;
        let minus = mlp_eval_full(&wp, &z, x).unwrap().value;
        let fd = (plus - minus) / (2.0 * h);
        let scale = fd.abs().max(eval.grad_theta[j].abs()).max(1e-4);
        assert!(
            (fd - eval.grad_theta[j]).abs() / scale < tol,
            "dtheta[{j}]: fd {fd} vs {}",
            eval.grad_theta[j]
        );
    }
}

#[test]
fn gradients_match_finite_differences_tanh() {
    fd_check(tiny_spec(FieldFlavor::SignedDistance), 11, 1e-5);
}

#[test]
fn gradients_match_finite_differences_softplus_occupancy() {
    let spec = MlpSpec {
        activation: Activation::Softplus,
        ..tiny_spec(FieldFlavor::Occupancy)
    };
    fd_check(spec, 13, 1e-5);
}

#[test]
fn gradients_match_finite_differences_with_residual_layers() {
    let spec = MlpSpec {
        latent_dim: 2,
        hidden: vec![8, 8],
        activation: Activation::Tanh,
        // First layer cannot skip (widths differ from the input); second can.
        residual: vec![false, true],
        flavor: FieldFlavor::SignedDistance,
    };
    fd_check(spec, 17, 1e-5);
}

#[test]
fn residual_spec_requires_matching_widths() {
    let spec = MlpSpec {
        latent_dim: 2,
        hidden: vec![8, 16],
        activation: Activation::Tanh,
        residual: vec![false, true],
        flavor: FieldFlavor::SignedDistance,
    };
    assert!(matches!(spec.validate(), Err(MlpError::InvalidSpec(_))));
    // Residual into the input layer would also need width 5.
    let spec2 = MlpSpec {
        residual: vec![true, false],
        ..tiny_spec(FieldFlavor::SignedDistance)
    };
    assert!(spec2.validate().is_err());
}

#[test]
fn occupancy_outputs_stay_strictly_inside_unit_interval() {
    let w = MlpWeights::init(tiny_spec(FieldFlavor::Occupancy), 19).unwrap();
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
    for _ in 0..200 {
        let v = mlp_eval_full(
            &w,
            &[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
            Vec3::new(rng.gen_range(-2.0..2.0), rng.gen(), rng.gen()),
        )
        .unwrap()
        .value;
        assert!(v > 0.0 && v < 1.0);
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let w = MlpWeights::init(tiny_spec(FieldFlavor::SignedDistance), 29).unwrap();
    assert!(matches!(
        mlp_eval_full(&w, &[0.0; 3], Vec3::zeros()),
        Err(MlpError::DimensionMismatch(_))
    ));
}

#[test]
fn training_fits_a_sphere_sdf() {
    let (w, z) = trained_sphere_net().clone();
    let target = ParamField::sphere(Vec3::zeros(), 0.6);
    let (hp, ht) =
        sample_training_data(&target, FieldFlavor::SignedDistance, unit_bounds(), 1000, 99);
    let field = ParamField::mlp(w.spec.clone(), &z, &w.theta).unwrap();
    let err: f64 = hp
        .iter()
        .zip(&ht)
        .map(|(p, t)| (field.eval(*p) - t).abs())
        .sum::<f64>()
        / hp.len() as f64;
    assert!(err < 0.02, "held-out mean |f - s| = {err}");
}

#[test]
fn training_loss_decreases_over_epochs() {
    let spec = train_spec(FieldFlavor::SignedDistance);
    let samples = sphere_training_set(FieldFlavor::SignedDistance, 2000, 7);
    let cfg = TrainConfig { epochs: 40, ..sphere_train_cfg() };
    let (_, _, report) = train_implicit(&spec, &samples, &cfg).unwrap();
    assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);
}

#[test]
fn occupancy_training_classifies_heldout_points() {
    let spec = train_spec(FieldFlavor::Occupancy);
    let samples = sphere_training_set(FieldFlavor::Occupancy, 3000, 7);
    let cfg = TrainConfig { epochs: 500, ..sphere_train_cfg() };
    let (w, table, _) = train_implicit(&spec, &samples, &cfg).unwrap();
    let field = ParamField::mlp(spec, &table.codes["sphere"], &w.theta).unwrap();
    let target = ParamField::sphere(Vec3::zeros(), 0.6);
    let (hp, ht) = sample_training_data(&target, FieldFlavor::Occupancy, unit_bounds(), 1000, 99);
    let correct = hp
        .iter()
        .zip(&ht)
        .filter(|(p, t)| {
            let label = if field.eval(**p) > 0.5 { 1.0 } else { 0.0 };
            label == **t
        })
        .count();
    let acc = correct as f64 / hp.len() as f64;
    assert!(acc > 0.98, "held-out accuracy {acc}");
}

#[test]
fn large_regularizer_shrinks_latent_codes() {
    let spec = train_spec(FieldFlavor::SignedDistance);
    let samples = sphere_training_set(FieldFlavor::SignedDistance, 1500, 7);
    let base = TrainConfig { epochs: 60, latent_init_std: 0.3, ..sphere_train_cfg() };
    let norm_of = |lambda: f64| -> f64 {
        let cfg = TrainConfig { lambda_reg: lambda, ..base.clone() };
        let (_, table, _) = train_implicit(&spec, &samples, &cfg).unwrap();
        table.codes["sphere"].iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let free = norm_of(0.0);
    let squeezed = norm_of(50.0);
    assert!(
        squeezed < 0.1 * free,
        "||z|| {squeezed} vs unregularized {free}"
    );
}

#[test]
fn training_is_bit_reproducible_for_a_seed() {
    let spec = train_spec(FieldFlavor::SignedDistance);
    let samples = sphere_training_set(FieldFlavor::SignedDistance, 800, 7);
    let cfg = TrainConfig { epochs: 10, ..sphere_train_cfg() };
    let (w1, t1, _) = train_implicit(&spec, &samples, &cfg).unwrap();
    let (w2, t2, _) = train_implicit(&spec, &samples, &cfg).unwrap();
    assert!(w1
        .theta
        .iter()
        .zip(&w2.theta)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(t1.codes, t2.codes);
}

#[test]
fn diverged_training_is_detected() {
    let spec = train_spec(FieldFlavor::SignedDistance);
    let samples = sphere_training_set(FieldFlavor::SignedDistance, 500, 7);
    let cfg = TrainConfig {
        adam: AdamConfig { lr: 1e300, ..Default::default() },
        epochs: 5,
        ..sphere_train_cfg()
    };
    assert!(matches!(
        train_implicit(&spec, &samples, &cfg),
        Err(MlpError::DivergedTraining(_))
    ));
}

#[test]
fn training_validates_targets() {
    let mut samples = sphere_training_set(FieldFlavor::Occupancy, 100, 7);
    samples.shapes[0].targets[3] = 0.5;
    assert!(matches!(
        train_implicit(&train_spec(FieldFlavor::Occupancy), &samples, &sphere_train_cfg()),
        Err(MlpError::BadTargets(_))
    ));
    assert!(matches!(
        train_implicit(
            &train_spec(FieldFlavor::SignedDistance),
            &TrainingSamples::default(),
            &sphere_train_cfg()
        ),
        Err(MlpError::BadTargets(_))
    ));
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    let (w, z) = trained_sphere_net().clone();
    let mut latents = LatentTable::default();
    latents.codes.insert("sphere".into(), z);
    let doc = MlpCheckpoint::from_parts(&w, &latents);
    let json = serde_json::to_string(&doc).unwrap();
    let parsed: MlpCheckpoint = serde_json::from_str(&json).unwrap();
    let (w2, l2) = parsed.into_parts().unwrap();
    assert_eq!(w2.spec, w.spec);
    assert!(w2.theta.iter().zip(&w.theta).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(l2.codes, latents.codes);
}

#[test]
fn finetune_with_own_surface_target_is_a_fixed_point() {
    let (w, z) = trained_sphere_net().clone();
    let grid = GridSpec::unit(24);
    let field = ParamField::mlp(w.spec.clone(), &z, &w.theta).unwrap();
    let mesh = marching_cubes(&sample_grid(&field, &grid), 0.0).unwrap();
    let cfg = FinetuneConfig {
        steps: 10,
        grid,
        adam: AdamConfig::default(),
        seed: 21,
        samples: 512,
        band: None,
    };
    // Target = the field's own surface samples, drawn exactly as the loop
    // draws them: the chamfer is zero and the gradient vanishes.
    let target = sample_surface(&mesh, cfg.samples, cfg.seed).unwrap().points;
    let (w2, z2, log) = finetune_chamfer(&w, &z, &target, &cfg).unwrap();
    assert!(log.records[0].grad_norm == 0.0);
    assert!(w2.theta.iter().zip(&w.theta).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(z2, z);

    // The loss stays put across the run and the extracted surface is the
    // same one, so identically-seeded samplings coincide exactly.
    let first = log.records.first().unwrap().loss;
    let last = log.records.last().unwrap().loss;
    assert!((last - first).abs() < 1e-6, "CHD change {}", (last - first).abs());
    let f2 = ParamField::mlp(w2.spec.clone(), &z2, &w2.theta).unwrap();
    let m2 = marching_cubes(&sample_grid(&f2, &grid), 0.0).unwrap();
    let s0 = sample_surface(&mesh, 1024, 3).unwrap().points;
    let s2 = sample_surface(&m2, 1024, 3).unwrap().points;
    let (chd, _) = crate::losses::chamfer3d(&s0, &s2);
    assert!(chd < 1e-6, "CHD between identical surfaces {chd}");
}

#[test]
fn finetune_halves_chamfer_toward_a_larger_sphere() {
    let (w, z) = trained_sphere_net().clone();
    let grid = GridSpec::unit(24);
    let big = ParamField::sphere(Vec3::zeros(), 0.7);
    let big_mesh = marching_cubes(&sample_grid(&big, &grid), 0.0).unwrap();
    let target = sample_surface(&big_mesh, 1024, 5).unwrap().points;
    let cfg = FinetuneConfig {
        steps: 200,
        grid,
        adam: AdamConfig { lr: 3e-3, ..Default::default() },
        seed: 5,
        samples: 1024,
        band: Some(crate::mesher::default_band_threshold(&grid)),
    };
    let (w2, z2, _) = finetune_chamfer(&w, &z, &target, &cfg).unwrap();

    let f0 = ParamField::mlp(w.spec.clone(), &z, &w.theta).unwrap();
    let f1 = ParamField::mlp(w2.spec.clone(), &z2, &w2.theta).unwrap();
    let m0 = marching_cubes(&sample_grid(&f0, &grid), 0.0).unwrap();
    let m1 = marching_cubes(&sample_grid(&f1, &grid), 0.0).unwrap();
    let before = chd_metric(&m0, &big_mesh, 2048, 11).unwrap();
    let after = chd_metric(&m1, &big_mesh, 2048, 11).unwrap();
    assert!(
        after < 0.5 * before,
        "CHD {before} -> {after} did not halve"
    );
}

#[test]
fn desk_default_spec_shape() {
    let spec = MlpSpec::desk_default(FieldFlavor::SignedDistance);
    assert_eq!(spec.latent_dim, 2);
    assert_eq!(spec.hidden, vec![64, 64]);
    assert_relative_eq!(
        spec.theta_len() as f64,
        (5 * 64 + 64 + 64 * 64 + 64 + 64 + 1) as f64
    );
}
