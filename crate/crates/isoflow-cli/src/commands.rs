//! Subcommand implementations.

use crate::config::*;
use crate::error::CliError;
use crate::output::{emit_iteration, RunOutput};
use isoflow::diffiso::{backward, BackwardConfig, VertexGrad};
use isoflow::field::{FieldFlavor, ParamField, Vec3};
use isoflow::losses::{
    chamfer3d, sample_surface, silhouette_render, Silhouette, StagnationProxy,
};
use isoflow::mesher::{
    default_band_threshold, marching_cubes, occupancy_premap, read_obj, sample_grid,
    write_grid_dump, write_obj, write_ply, GridSpec, SampledGrid, TriMesh,
};
use isoflow::mlp::{
    sample_training_data, train_implicit, LatentTable, MlpCheckpoint, ShapeSamples, TrainConfig,
    TrainingSamples,
};
use isoflow::optim::{
    run_drag, run_morph, run_refine, AdamConfig, LatentKnnReg, MorphLoss, RunConfig, RunLog,
    RunOutcome,
};
use serde_json::json;
use std::path::Path;

/// Extraction honoring the field convention: occupancy grids go through the
/// logit pre-map by default.
fn extract(
    field: &ParamField,
    grid: &GridSpec,
    level: Option<f64>,
    premap: bool,
) -> Result<(SampledGrid, TriMesh), CliError> {
    let level = level.unwrap_or(field.convention().level);
    let sampled = sample_grid(field, grid);
    let mesh = match field.convention().flavor {
        FieldFlavor::Occupancy if premap => {
            let mapped = occupancy_premap(&sampled, level)?;
            marching_cubes(&mapped, 0.0)?
        }
        _ => marching_cubes(&sampled, level)?,
    };
    Ok((sampled, mesh))
}

fn mesh_stats(mesh: &TriMesh) -> serde_json::Value {
    json!({
        "vertices": mesh.vertices.len(),
        "faces": mesh.faces.len(),
        "euler_characteristic": mesh.euler_characteristic(),
        "watertight": mesh.is_watertight(),
        "components": mesh.connected_components(),
    })
}

fn target_mesh(target: &TargetCfg, base: &Path, grid: &GridSpec) -> Result<TriMesh, CliError> {
    match (&target.field, &target.mesh) {
        (Some(doc), None) => {
            let field = ParamField::from_json(doc)
                .map_err(|e| CliError::Config(format!("config error at /target/field: {e}")))?;
            let (_, mesh) = extract(&field, grid, None, true)?;
            Ok(mesh)
        }
        (None, Some(path)) => {
            let full = if path.is_absolute() { path.clone() } else { base.join(path) };
            let file = std::fs::File::open(&full).map_err(|e| {
                CliError::Config(format!("cannot read target mesh {}: {e}", full.display()))
            })?;
            Ok(read_obj(std::io::BufReader::new(file))?)
        }
        _ => Err(CliError::Config(
            "config error at /target: provide exactly one of `field` or `mesh`".into(),
        )),
    }
}

fn write_mesh_outputs(
    out: &mut RunOutput,
    name: &str,
    mesh: &TriMesh,
) -> Result<(), CliError> {
    out.write_file(&format!("{name}.obj"), |w| write_obj(mesh, w).map_err(CliError::from))?;
    out.write_file(&format!("{name}.ply"), |w| write_ply(mesh, w).map_err(CliError::from))
}

fn write_runlog(out: &mut RunOutput, log: &RunLog) -> Result<(), CliError> {
    out.write_file("runlog.csv", |w| log.write_csv(w).map_err(CliError::from))
}

fn write_snapshots(out: &mut RunOutput, outcome: &RunOutcome) -> Result<(), CliError> {
    for (step, mesh) in &outcome.snapshots {
        out.write_file(&format!("snapshot_{step:05}.obj"), |w| {
            write_obj(mesh, w).map_err(CliError::from)
        })?;
    }
    Ok(())
}

fn mirror_log(log: &RunLog) {
    let stride = (log.records.len() / 20).max(1);
    for r in log.records.iter().step_by(stride) {
        emit_iteration(r.step, r.loss, r.grad_norm, r.evals);
    }
}

pub fn cmd_mesh(cfg: MeshConfig, config_bytes: &[u8], base: &Path) -> Result<(), CliError> {
    let field = cfg.field.load(base)?;
    let grid = cfg.grid.build()?;
    let mut out = RunOutput::new(&cfg.output_dir, "mesh", config_bytes, cfg.seed)?;

    if field.convention().flavor == FieldFlavor::Occupancy && !cfg.premap {
        eprintln!(
            "warning: meshing an occupancy field without the logit pre-map \
             produces stair-step artifacts"
        );
    }
    let (sampled, mesh) = extract(&field, &grid, cfg.level, cfg.premap)?;
    write_mesh_outputs(&mut out, "mesh", &mesh)?;
    if cfg.dump_grid {
        let raw_path = out.path("grid.raw");
        let sidecar_path = out.path("grid.json");
        let mut raw = std::io::BufWriter::new(std::fs::File::create(raw_path)?);
        let mut sidecar = std::io::BufWriter::new(std::fs::File::create(sidecar_path)?);
        write_grid_dump(&sampled, &mut raw, &mut sidecar)?;
    }
    let stats = mesh_stats(&mesh);
    out.write_json("stats.json", &stats)?;
    out.finish(&stats)
}

pub fn cmd_gradcheck(cfg: GradcheckConfig, config_bytes: &[u8], base: &Path) -> Result<(), CliError> {
    let field = cfg.field.load(base)?;
    let mut out = RunOutput::new(&cfg.output_dir, "gradcheck", config_bytes, cfg.seed)?;
    let grid = match &cfg.grid {
        Some(g) => g.build()?,
        None => GridSpec::unit(32),
    };

    let (analytic, fd): (Vec<f64>, Vec<f64>) = match cfg.mode {
        GradcheckMode::Field => field_gradcheck(&field, &grid, cfg.points, cfg.fd_step.unwrap_or(1e-6))?,
        GradcheckMode::Pipeline => pipeline_gradcheck(&field, &grid, cfg.fd_step.unwrap_or(1e-4))?,
    };
    let tolerance = cfg.tolerance.unwrap_or(match cfg.mode {
        GradcheckMode::Field => 1e-6,
        GradcheckMode::Pipeline => 5e-2,
    });

    let mut analytic = analytic;
    if cfg.corrupt_gradient {
        // Negative-control hook for tests.
        analytic[0] += 0.5 * analytic[0].abs().max(1.0);
    }

    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for (j, (a, f)) in analytic.iter().zip(&fd).enumerate() {
        let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-12);
        worst = worst.max(rel);
        rows.push((j, *a, *f, rel));
    }
    out.write_file("gradcheck.csv", |w| {
        use std::io::Write;
        writeln!(w, "param,analytic,finite_diff,rel_err")?;
        for (j, a, f, rel) in &rows {
            writeln!(w, "{j},{a},{f},{rel}")?;
        }
        Ok(())
    })?;
    let result = json!({ "mode": format!("{:?}", cfg.mode), "params": analytic.len(),
                          "max_rel_err": worst, "tolerance": tolerance });
    out.finish(&result)?;
    if worst > tolerance {
        return Err(CliError::Gradcheck(format!(
            "max relative error {worst:.3e} exceeds tolerance {tolerance:.3e}"
        )));
    }
    Ok(())
}

/// Field-level check: analytic `df/dc` summed over surface points against
/// central differences of the summed values.
fn field_gradcheck(
    field: &ParamField,
    grid: &GridSpec,
    points: usize,
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let (_, mesh) = extract(field, grid, None, true)?;
    let stride = (mesh.vertices.len() / points.max(1)).max(1);
    let pts: Vec<Vec3> = mesh.vertices.iter().step_by(stride).copied().collect();

    let mut analytic = vec![0.0; field.param_len()];
    for p in &pts {
        let e = field
            .eval_full(*p)
            .map_err(|e| CliError::Other(format!("gradient evaluation failed: {e}")))?;
        for (a, g) in analytic.iter_mut().zip(&e.grad_c) {
            *a += g;
        }
    }
    let sum_of = |params: &[f64]| -> f64 {
        let mut f = field.clone();
        f.set_params(params).unwrap();
        pts.iter().map(|p| f.eval(*p)).sum()
    };
    let c0 = field.params().to_vec();
    let fd = (0..c0.len())
        .map(|j| {
            let mut p = c0.clone();
            p[j] += h;
            let plus = sum_of(&p);
            p[j] -= 2.0 * h;
            let minus = sum_of(&p);
            (plus - minus) / (2.0 * h)
        })
        .collect();
    Ok((analytic, fd))
}

/// Pipeline check: the iso-surface backward against central differences of
/// the full forward (sample -> marching cubes -> vertex chamfer against a
/// fixed target cloud), with the step shrunk until the extraction topology
/// is the same on both sides.
fn pipeline_gradcheck(
    field: &ParamField,
    grid: &GridSpec,
    h0: f64,
) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let (_, mesh) = extract(field, grid, None, true)?;
    // Fixed target: the initial surface scaled outward.
    let target: Vec<Vec3> = mesh.vertices.iter().map(|v| v * 1.1).collect();

    let (_, point_grads) = chamfer3d(&mesh.vertices, &target);
    let pg = backward(field, &mesh, &VertexGrad(point_grads), &BackwardConfig::default())?;

    let eval = |params: &[f64]| -> Result<(f64, usize), CliError> {
        let mut f = field.clone();
        f.set_params(params).unwrap();
        let (_, m) = extract(&f, grid, None, true)?;
        Ok((chamfer3d(&m.vertices, &target).0, m.vertices.len()))
    };
    let base_count = mesh.vertices.len();
    let c0 = field.params().to_vec();
    let mut fd = Vec::with_capacity(c0.len());
    for j in 0..c0.len() {
        let mut h = h0;
        loop {
            let mut p = c0.clone();
            p[j] += h;
            let (plus, n_plus) = eval(&p)?;
            p[j] -= 2.0 * h;
            let (minus, n_minus) = eval(&p)?;
            if n_plus == base_count && n_minus == base_count {
                fd.push((plus - minus) / (2.0 * h));
                break;
            }
            h *= 0.25;
            if h < 1e-10 {
                return Err(CliError::Gradcheck(format!(
                    "could not hold extraction topology fixed for parameter {j}"
                )));
            }
        }
    }
    Ok((pg.grad, fd))
}

pub fn cmd_morph(cfg: MorphConfig, config_bytes: &[u8], base: &Path) -> Result<(), CliError> {
    let field = cfg.field.load(base)?;
    let grid = cfg.grid.build()?;
    let mut out = RunOutput::new(&cfg.output_dir, "morph", config_bytes, cfg.seed)?;

    let tmesh = target_mesh(&cfg.target, base, &grid)?;
    let target_points = sample_surface(&tmesh, cfg.samples, cfg.seed)?.points;

    let run_cfg = RunConfig {
        steps: cfg.steps,
        grid,
        adam: AdamConfig { lr: cfg.lr, ..Default::default() },
        seed: cfg.seed,
        samples_per_iter: cfg.samples,
        band: cfg.band.then(|| default_band_threshold(&grid)),
        snapshot_every: cfg.snapshot_every,
        constraint_weight: 0.0,
    };
    let loss = match cfg.loss {
        LossCfg::Chamfer => MorphLoss::Chamfer,
        LossCfg::Contour => {
            let cam = cfg
                .camera
                .as_ref()
                .ok_or_else(|| {
                    CliError::Config("config error at /camera: required for contour loss".into())
                })?
                .build()?;
            let sil = silhouette_render(&tmesh, &cam)?;
            MorphLoss::Contour { cam, target: sil.contour }
        }
    };
    let outcome = run_morph(&field, &target_points, loss, &run_cfg)?;
    mirror_log(&outcome.log);

    let final_samples = sample_surface(&outcome.best_mesh, cfg.samples, cfg.seed.wrapping_add(1))?;
    let target_resampled = sample_surface(&tmesh, cfg.samples, cfg.seed.wrapping_add(2))?;
    let final_chd = chamfer3d(&final_samples.points, &target_resampled.points).0;
    let nc = isoflow::losses::normal_consistency(&outcome.best_mesh, &tmesh, 128).ok();

    write_runlog(&mut out, &outcome.log)?;
    write_snapshots(&mut out, &outcome)?;
    write_mesh_outputs(&mut out, "final_mesh", &outcome.best_mesh)?;
    out.write_file("final_field.json", |w| {
        use std::io::Write;
        writeln!(w, "{}", outcome.field.to_json_string()).map_err(CliError::from)
    })?;
    let metrics = json!({
        "initial_loss": outcome.initial_loss,
        "best_loss": outcome.best_loss,
        "best_step": outcome.best_step,
        "final_chd": final_chd,
        "normal_consistency": nc,
        "fallbacks": outcome.log.fallbacks,
        "mesh": mesh_stats(&outcome.best_mesh),
    });
    out.write_json("metrics.json", &metrics)?;
    out.finish(&metrics)
}

pub fn cmd_refine(cfg: RefineConfig, config_bytes: &[u8], base: &Path) -> Result<(), CliError> {
    let field = cfg.field.load(base)?;
    let grid = cfg.grid.build()?;
    let cam = cfg.camera.build()?;
    let mut out = RunOutput::new(&cfg.output_dir, "refine", config_bytes, cfg.seed)?;

    let tmesh = target_mesh(&cfg.target, base, &grid)?;
    let target_sil: Silhouette = silhouette_render(&tmesh, &cam)?;

    let run_cfg = RunConfig {
        steps: cfg.steps,
        grid,
        adam: AdamConfig { lr: cfg.lr, ..Default::default() },
        seed: cfg.seed,
        samples_per_iter: 0,
        band: cfg.band.then(|| default_band_threshold(&grid)),
        snapshot_every: cfg.snapshot_every,
        constraint_weight: 0.0,
    };
    let refined = run_refine(&field, &cam, &target_sil, &run_cfg)?;
    mirror_log(&refined.run.log);

    let final_sil = silhouette_render(&refined.run.best_mesh, &cam)?;
    write_runlog(&mut out, &refined.run.log)?;
    write_snapshots(&mut out, &refined.run)?;
    write_mesh_outputs(&mut out, "final_mesh", &refined.run.best_mesh)?;
    out.write_file("target_mask.pgm", |w| {
        isoflow::losses::write_pgm_mask(&target_sil, w).map_err(CliError::from)
    })?;
    out.write_file("final_mask.pgm", |w| {
        isoflow::losses::write_pgm_mask(&final_sil, w).map_err(CliError::from)
    })?;
    out.write_file("final_field.json", |w| {
        use std::io::Write;
        writeln!(w, "{}", refined.run.field.to_json_string()).map_err(CliError::from)
    })?;
    let metrics = json!({
        "silhouette_l1_before": refined.sil_l1_before,
        "silhouette_l1_after": refined.sil_l1_after,
        "best_loss": refined.run.best_loss,
        "best_step": refined.run.best_step,
        "mesh": mesh_stats(&refined.run.best_mesh),
    });
    out.write_json("metrics.json", &metrics)?;
    out.finish(&metrics)
}

pub fn cmd_drag(cfg: DragConfig, config_bytes: &[u8], base: &Path) -> Result<(), CliError> {
    let field = cfg.field.load(base)?;
    let grid = cfg.grid.build()?;
    let mut out = RunOutput::new(&cfg.output_dir, "drag", config_bytes, cfg.seed)?;

    let proxy = StagnationProxy { p0: cfg.proxy.as_ref().map_or(1.0, |p| p.p0) };
    let spheres: Vec<_> = cfg.constraint_spheres.iter().map(|s| s.build()).collect();
    let reg = match &cfg.latent_table {
        Some(path) => {
            let full = if path.is_absolute() { path.clone() } else { base.join(path) };
            let raw = std::fs::read_to_string(&full).map_err(|e| {
                CliError::Config(format!("cannot read latent table {}: {e}", full.display()))
            })?;
            let ckpt: MlpCheckpoint = serde_json::from_str(&raw)
                .map_err(|e| CliError::Config(format!("bad latent table: {e}")))?;
            let (_, latents): (_, LatentTable) = ckpt.into_parts()?;
            Some(LatentKnnReg {
                table: latents.codes.into_values().collect(),
                k: cfg.knn_k,
                alpha: cfg.knn_alpha,
            })
        }
        None => None,
    };

    let run_cfg = RunConfig {
        steps: cfg.steps,
        grid,
        adam: AdamConfig { lr: cfg.lr, ..Default::default() },
        seed: cfg.seed,
        samples_per_iter: 0,
        band: cfg.band.then(|| default_band_threshold(&grid)),
        snapshot_every: cfg.snapshot_every,
        constraint_weight: cfg.constraint_weight,
    };
    let outcome = run_drag(&field, &proxy, &spheres, reg.as_ref(), &run_cfg)?;
    mirror_log(&outcome.run.log);

    write_runlog(&mut out, &outcome.run.log)?;
    write_snapshots(&mut out, &outcome.run)?;
    write_mesh_outputs(&mut out, "final_mesh", &outcome.run.best_mesh)?;
    out.write_file("final_field.json", |w| {
        use std::io::Write;
        writeln!(w, "{}", outcome.run.field.to_json_string()).map_err(CliError::from)
    })?;
    let metrics = json!({
        "initial_objective": outcome.initial_objective,
        "final_objective": outcome.final_objective,
        "relative_objective": outcome.relative_objective,
        "max_constraint_violation": outcome.final_max_violation,
        "mesh": mesh_stats(&outcome.run.best_mesh),
    });
    out.write_json("metrics.json", &metrics)?;
    out.finish(&metrics)
}

pub fn cmd_fit(cfg: FitConfig, config_bytes: &[u8], _base: &Path) -> Result<(), CliError> {
    let mut out = RunOutput::new(&cfg.output_dir, "fit", config_bytes, cfg.seed)?;
    if cfg.shapes.is_empty() {
        return Err(CliError::Config("config error at /shapes: at least one shape".into()));
    }
    let bounds = (Vec3::repeat(-1.0), Vec3::repeat(1.0));
    let mut shapes = Vec::new();
    let mut targets = Vec::new();
    for (i, shape) in cfg.shapes.iter().enumerate() {
        let target = ParamField::from_json(&shape.field).map_err(|e| {
            CliError::Config(format!("config error at /shapes/{i}/field: {e}"))
        })?;
        if target.convention().flavor != FieldFlavor::SignedDistance {
            return Err(CliError::Config(format!(
                "config error at /shapes/{i}/field: training targets need a signed-distance field"
            )));
        }
        let (points, values) = sample_training_data(
            &target,
            cfg.spec.flavor,
            bounds,
            shape.samples,
            cfg.seed.wrapping_add(i as u64),
        );
        shapes.push(ShapeSamples { id: shape.id.clone(), points, targets: values });
        targets.push(target);
    }
    let samples = TrainingSamples { shapes };
    let train_cfg = TrainConfig {
        lambda_reg: cfg.lambda_reg,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: AdamConfig { lr: cfg.lr, ..Default::default() },
        seed: cfg.seed,
        ..Default::default()
    };
    let (weights, latents, report) = train_implicit(&cfg.spec, &samples, &train_cfg)?;

    // Held-out evaluation per shape: mean |f - s| for SDF, accuracy for
    // occupancy.
    let mut per_shape = serde_json::Map::new();
    for (shape, target) in cfg.shapes.iter().zip(&targets) {
        let z = &latents.codes[&shape.id];
        let field = ParamField::mlp(cfg.spec.clone(), z, &weights.theta)?;
        let (hp, ht) = sample_training_data(
            target,
            cfg.spec.flavor,
            bounds,
            cfg.holdout_samples,
            cfg.seed.wrapping_add(9999),
        );
        let metric = match cfg.spec.flavor {
            FieldFlavor::SignedDistance => {
                let err: f64 = hp
                    .iter()
                    .zip(&ht)
                    .map(|(p, t)| (field.eval(*p) - t).abs())
                    .sum::<f64>()
                    / hp.len() as f64;
                json!({ "holdout_mean_abs_err": err })
            }
            FieldFlavor::Occupancy => {
                let correct = hp
                    .iter()
                    .zip(&ht)
                    .filter(|(p, t)| {
                        let label = if field.eval(**p) > 0.5 { 1.0 } else { 0.0 };
                        label == **t
                    })
                    .count();
                json!({ "holdout_accuracy": correct as f64 / hp.len() as f64 })
            }
        };
        per_shape.insert(shape.id.clone(), metric);
    }

    let ckpt = MlpCheckpoint::from_parts(&weights, &latents);
    out.write_json("mlp_checkpoint.json", &serde_json::to_value(&ckpt).unwrap())?;
    // A ready-to-use field checkpoint for the first shape.
    let first = &cfg.shapes[0].id;
    let field0 = ParamField::mlp(cfg.spec.clone(), &latents.codes[first], &weights.theta)?;
    out.write_file("field_checkpoint.json", |w| {
        use std::io::Write;
        writeln!(w, "{}", field0.to_json_string()).map_err(CliError::from)
    })?;
    out.write_file("train_log.csv", |w| {
        use std::io::Write;
        writeln!(w, "epoch,loss")?;
        for (e, l) in report.epoch_losses.iter().enumerate() {
            writeln!(w, "{e},{l}")?;
        }
        Ok(())
    })?;
    let metrics = json!({
        "epochs": cfg.epochs,
        "final_epoch_loss": report.epoch_losses.last(),
        "shapes": per_shape,
    });
    out.write_json("metrics.json", &metrics)?;
    out.finish(&metrics)
}
