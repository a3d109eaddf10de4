//! Gradient-descent drivers tying field, mesher, losses, and the
//! iso-surface backward together: Adam, the morph / refine / drag loops,
//! and per-iteration logging.

use crate::diffiso::{backward, BackwardConfig, DiffisoError};
use crate::field::{FieldError, FieldFlavor, ParamField, Vec3};
use crate::losses::{
    self, chamfer3d_vertex_grad, sample_surface, silhouette_l1, CameraSpec, ConstraintSphere,
    LossError, PressureProxy, Silhouette,
};
use crate::mesher::{
    marching_cubes, occupancy_premap, resample_band, sample_grid, GridSpec, MesherError,
    SampledGrid, TriMesh,
};
use std::io::Write;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("parameter, gradient, and moment shapes disagree")]
    ShapeMismatch,
    #[error("initial extraction failed: field has no zero crossing")]
    EmptySurface,
    #[error(transparent)]
    Mesher(#[from] MesherError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Diffiso(#[from] DiffisoError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Adam hyperparameters; the standard defaults of the cited optimizer.
#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    /// Standard Adam update with bias correction.
    pub fn step(
        &mut self,
        cfg: &AdamConfig,
        params: &mut [f64],
        grad: &[f64],
    ) -> Result<(), OptimError> {
        if params.len() != grad.len() || params.len() != self.m.len() {
            return Err(OptimError::ShapeMismatch);
        }
        self.step += 1;
        let b1t = 1.0 - cfg.beta1.powi(self.step as i32);
        let b2t = 1.0 - cfg.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

/// Free-function form of the Adam update.
pub fn adam_step(
    state: &mut AdamState,
    cfg: &AdamConfig,
    params: &mut [f64],
    grad: &[f64],
) -> Result<(), OptimError> {
    state.step(cfg, params, grad)
}

/// One per-iteration record of an optimization run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub skipped: usize,
    /// Field evaluations spent on grid sampling this iteration.
    pub evals: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub records: Vec<RunRecord>,
    /// Band violations that forced a full resample.
    pub fallbacks: usize,
    /// Set when the surface collapsed mid-run and the loop stopped early.
    pub aborted_empty_surface: bool,
}

impl RunLog {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "step,loss,grad_norm,skipped,evals,wall_ms")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.step, r.loss, r.grad_norm, r.skipped, r.evals, r.wall_ms
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub steps: usize,
    pub grid: GridSpec,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Surface samples per iteration for sample-based losses.
    pub samples_per_iter: usize,
    /// Banded re-extraction half-width; `None` resamples fully every step.
    pub band: Option<f64>,
    /// Write a mesh snapshot every this many steps (0 disables).
    pub snapshot_every: usize,
    /// Weight of the keep-out constraint penalty (drag runs only).
    pub constraint_weight: f64,
}

impl RunConfig {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            steps: 400,
            grid,
            adam: AdamConfig::default(),
            seed: 0,
            samples_per_iter: 2048,
            band: Some(crate::mesher::default_band_threshold(&grid)),
            snapshot_every: 25,
            constraint_weight: 10.0,
        }
    }
}

/// Result of an optimization run; `field` carries the best-loss parameters.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub field: ParamField,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub best_step: usize,
    pub best_mesh: TriMesh,
    pub log: RunLog,
    pub snapshots: Vec<(usize, TriMesh)>,
}

/// Loss minimized by [`run_morph`].
pub enum MorphLoss {
    /// 3D chamfer against a fixed target point cloud.
    Chamfer,
    /// 2D contour chamfer against a fixed target contour.
    Contour { cam: CameraSpec, target: Vec<[f64; 2]> },
}

/// Extraction with optional banded re-sampling. On a band violation the
/// caller's policy is a full resample, counted in the log.
fn extract(
    field: &ParamField,
    grid_spec: &GridSpec,
    prev: Option<&SampledGrid>,
    band: Option<f64>,
    fallbacks: &mut usize,
) -> Result<(SampledGrid, TriMesh, usize), MesherError> {
    let level = field.convention().level;
    let full = |evals: &mut usize| -> SampledGrid {
        let g = sample_grid(field, grid_spec);
        *evals += g.evaluated;
        g
    };
    let mesh_of = |grid: &SampledGrid| -> Result<TriMesh, MesherError> {
        match grid.flavor {
            FieldFlavor::SignedDistance => marching_cubes(grid, level),
            FieldFlavor::Occupancy => {
                let premapped = occupancy_premap(grid, level)?;
                marching_cubes(&premapped, 0.0)
            }
        }
    };

    let mut evals = 0usize;
    if let (Some(prev), Some(threshold)) = (prev, band) {
        let banded = resample_band(field, prev, threshold);
        evals += banded.evaluated;
        match mesh_of(&banded) {
            Ok(mesh) => return Ok((banded, mesh, evals)),
            Err(MesherError::BandViolation) => {
                *fallbacks += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let grid = full(&mut evals);
    let mesh = mesh_of(&grid)?;
    Ok((grid, mesh, evals))
}

/// Mean field-gradient magnitude at the surface, measured in the units the
/// band test uses (plain field units for SDFs, logit units for occupancy).
/// The default band width assumes a unit-gradient SDF; other fields need
/// the half-width scaled by this factor.
fn band_gradient_scale(field: &ParamField, mesh: &TriMesh) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    let stride = (mesh.vertices.len() / 64).max(1);
    for v in mesh.vertices.iter().step_by(stride) {
        if let Ok(e) = field.eval_full(*v) {
            let g = match field.convention().flavor {
                FieldFlavor::SignedDistance => e.grad_x.norm(),
                // d logit(v)/dx = grad / (v (1 - v)).
                FieldFlavor::Occupancy => {
                    let v = e.value.clamp(1e-6, 1.0 - 1e-6);
                    e.grad_x.norm() / (v * (1.0 - v))
                }
            };
            if g.is_finite() {
                sum += g;
                count += 1;
            }
        }
    }
    if count == 0 {
        1.0
    } else {
        (sum / count as f64).max(1.0)
    }
}

/// The generic optimization loop: evaluates the loss on the current mesh,
/// routes vertex gradients into the parameters, applies Adam, and
/// re-extracts (banded when configured). Keeps the best-loss iterate. On a
/// mid-run surface collapse the step is rejected and the learning rate
/// halved once; a second collapse stops the run at the best iterate.
fn run_loop<F>(
    field: &ParamField,
    cfg: &RunConfig,
    mut loss_fn: F,
) -> Result<RunOutcome, OptimError>
where
    F: FnMut(&TriMesh, &ParamField, usize) -> Result<(f64, crate::diffiso::VertexGrad, Vec<f64>), OptimError>,
{
    let mut field = field.clone();
    let mut params = field.params().to_vec();
    let mut adam = AdamState::new(params.len());
    let mut adam_cfg = cfg.adam.clone();
    let bcfg = BackwardConfig::default();
    let mut log = RunLog::default();
    let mut snapshots = Vec::new();
    let mut lr_halved = false;

    let mut fallbacks = 0usize;
    let (mut grid, mut mesh, mut evals) =
        extract(&field, &cfg.grid, None, None, &mut fallbacks).map_err(|e| match e {
            MesherError::EmptySurface => OptimError::EmptySurface,
            other => OptimError::Mesher(other),
        })?;
    let band = cfg.band.map(|t| t * band_gradient_scale(&field, &mesh));

    let mut initial_loss = f64::NAN;
    let mut best_loss = f64::INFINITY;
    let mut best_step = 0usize;
    let mut best_params = params.clone();
    let mut best_mesh = mesh.clone();

    for step in 0..=cfg.steps {
        let t0 = Instant::now();
        let (loss, vgrad, extra_grad) = loss_fn(&mesh, &field, step)?;
        if step == 0 {
            initial_loss = loss;
        }
        if loss < best_loss {
            best_loss = loss;
            best_step = step;
            best_params.copy_from_slice(&params);
            best_mesh = mesh.clone();
        }
        if cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0 {
            snapshots.push((step, mesh.clone()));
        }
        if step == cfg.steps {
            log.records.push(RunRecord {
                step,
                loss,
                grad_norm: 0.0,
                skipped: 0,
                evals,
                wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            });
            break;
        }

        let pg = backward(&field, &mesh, &vgrad, &bcfg)?;
        let mut grad = pg.grad;
        if !extra_grad.is_empty() {
            for (g, e) in grad.iter_mut().zip(&extra_grad) {
                *g += e;
            }
        }
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();

        let prev_params = params.clone();
        let prev_adam = adam.clone();
        adam.step(&adam_cfg, &mut params, &grad)?;
        field.set_params(&params)?;

        let mut step_evals = 0usize;
        match extract(&field, &cfg.grid, Some(&grid), band, &mut fallbacks) {
            Ok((g, m, e)) => {
                grid = g;
                mesh = m;
                step_evals = e;
            }
            Err(MesherError::EmptySurface) => {
                if lr_halved {
                    log.aborted_empty_surface = true;
                    log.records.push(RunRecord {
                        step,
                        loss,
                        grad_norm,
                        skipped: pg.skipped_vertices,
                        evals,
                        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
                    });
                    break;
                }
                // Reject the step and retry from the previous iterate with a
                // halved learning rate.
                lr_halved = true;
                adam_cfg.lr *= 0.5;
                params = prev_params;
                adam = prev_adam;
                field.set_params(&params)?;
            }
            Err(e) => return Err(e.into()),
        }

        log.records.push(RunRecord {
            step,
            loss,
            grad_norm,
            skipped: pg.skipped_vertices,
            evals,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        evals = step_evals;
    }

    log.fallbacks = fallbacks;
    field.set_params(&best_params)?;
    Ok(RunOutcome {
        field,
        initial_loss,
        best_loss,
        best_step,
        best_mesh,
        log,
        snapshots,
    })
}

/// Morphs `source` toward `target` by chamfer (or contour-chamfer) descent.
/// Topology is free to change across iterations.
pub fn run_morph(
    source: &ParamField,
    target: &[Vec3],
    loss: MorphLoss,
    cfg: &RunConfig,
) -> Result<RunOutcome, OptimError> {
    match loss {
        MorphLoss::Chamfer => run_loop(source, cfg, |mesh, _field, _step| {
            let samples = sample_surface(mesh, cfg.samples_per_iter, cfg.seed)?;
            let (loss, vg) = chamfer3d_vertex_grad(mesh, &samples, target);
            Ok((loss, vg, Vec::new()))
        }),
        MorphLoss::Contour { cam, target } => run_loop(source, cfg, move |mesh, _field, _step| {
            let cc = losses::contour_chamfer(mesh, &cam, &target)?;
            Ok((cc.loss, cc.vertex_grad, Vec::new()))
        }),
    }
}

/// Outcome of silhouette-driven refinement, with the image-space L1 metric
/// before and after.
#[derive(Debug)]
pub struct RefineOutcome {
    pub run: RunOutcome,
    pub sil_l1_before: f64,
    pub sil_l1_after: f64,
}

/// Refines the field so that its projected contour matches the target
/// silhouette; reports the (non-differentiable) mask L1 before and after.
pub fn run_refine(
    field: &ParamField,
    cam: &CameraSpec,
    target: &Silhouette,
    cfg: &RunConfig,
) -> Result<RefineOutcome, OptimError> {
    if target.contour.is_empty() {
        return Err(OptimError::Loss(LossError::NoSilhouetteEdges));
    }
    let mut fallbacks = 0usize;
    let (_, mesh0, _) = extract(field, &cfg.grid, None, None, &mut fallbacks).map_err(|e| {
        match e {
            MesherError::EmptySurface => OptimError::EmptySurface,
            other => OptimError::Mesher(other),
        }
    })?;
    // Surface the no-silhouette-edge error before the loop starts.
    losses::contour_chamfer(&mesh0, cam, &target.contour)?;
    let sil_l1_before = silhouette_l1(&mesh0, cam, target)?;

    let run = run_morph(
        field,
        &[],
        MorphLoss::Contour { cam: cam.clone(), target: target.contour.clone() },
        cfg,
    )?;
    let sil_l1_after = silhouette_l1(&run.best_mesh, cam, target)?;
    Ok(RefineOutcome { run, sil_l1_before, sil_l1_after })
}

/// kNN latent regularizer `alpha * mean_{z' in kNN(z)} ||z - z'||^2` toward
/// a table of known codes; applied to the leading `dim` parameters of an
/// MLP field.
#[derive(Debug, Clone)]
pub struct LatentKnnReg {
    pub table: Vec<Vec<f64>>,
    pub k: usize,
    pub alpha: f64,
}

impl LatentKnnReg {
    pub fn new(table: Vec<Vec<f64>>) -> Self {
        Self { table, k: 10, alpha: 0.2 }
    }

    /// `(value, gradient over z)`.
    pub fn eval(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let k = self.k.min(self.table.len());
        if k == 0 {
            return (0.0, vec![0.0; z.len()]);
        }
        let mut dists: Vec<(f64, usize)> = self
            .table
            .iter()
            .enumerate()
            .map(|(i, zp)| {
                let d2: f64 = z.iter().zip(zp).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut value = 0.0;
        let mut grad = vec![0.0; z.len()];
        for &(d2, i) in dists.iter().take(k) {
            value += d2;
            for (g, (a, b)) in grad.iter_mut().zip(z.iter().zip(&self.table[i])) {
                *g += 2.0 * (a - b);
            }
        }
        let scale = self.alpha / k as f64;
        (value * scale, grad.iter().map(|g| g * scale).collect())
    }
}

/// Outcome of a drag run, with the relative objective `L / L_step0`.
#[derive(Debug)]
pub struct DragOutcome {
    pub run: RunOutcome,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub relative_objective: f64,
    /// Worst constraint-probe field value at the best iterate (<= 0 is
    /// satisfied).
    pub final_max_violation: f64,
}

/// Minimizes the drag objective plus constraints (plus the kNN latent
/// regularizer for MLP fields with a code table).
pub fn run_drag(
    field: &ParamField,
    proxy: &dyn PressureProxy,
    spheres: &[ConstraintSphere],
    reg: Option<&LatentKnnReg>,
    cfg: &RunConfig,
) -> Result<DragOutcome, OptimError> {
    let run = run_loop(field, cfg, |mesh, field, _step| {
        let obj = losses::drag_objective(mesh, proxy, field, spheres, cfg.constraint_weight)?;
        let mut extra = obj.direct_param_grad;
        let mut value = obj.value;
        if let Some(reg) = reg {
            let dim = reg.table.first().map_or(0, |z| z.len());
            let (rv, rg) = reg.eval(&field.params()[..dim.min(field.param_len())]);
            value += rv;
            for (e, g) in extra.iter_mut().zip(&rg) {
                *e += g;
            }
        }
        Ok((value, obj.vertex_grad, extra))
    })?;
    let initial = run.initial_loss;
    let final_objective = run.best_loss;
    let final_max_violation = losses::constraint_max_violation(&run.field, spheres);
    Ok(DragOutcome {
        initial_objective: initial,
        final_objective,
        relative_objective: final_objective / initial,
        final_max_violation,
        run,
    })
}
