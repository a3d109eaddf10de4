//! Small MLP implicit decoder with exact reverse-mode derivatives.
//!
//! The network maps `[z | x]` to a scalar field value. One hand-written
//! backward pass yields the derivatives with respect to the query point, the
//! latent code, and the weights, which is everything the iso-surface
//! backward pass needs for `c = z` or `c = [z | theta]`.

use crate::field::{FieldError, FieldFlavor, ParamField, Vec3};
use crate::mesher::GridSpec;
use crate::optim::{self, AdamConfig, AdamState, RunLog};
use crate::util::{clamp_occupancy, logistic};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training targets: {0}")]
    BadTargets(String),
    #[error("training loss became non-finite at step {0}")]
    DivergedTraining(usize),
    #[error("field has no zero crossing on the grid")]
    EmptySurface,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Smooth default; keeps the surface normal continuous.
    Tanh,
    Softplus,
    /// Piecewise-linear; gradient checks need looser tolerances across the
    /// activation kinks.
    Relu,
}

impl Activation {
    #[inline]
    fn apply(&self, u: f64) -> f64 {
        match self {
            Activation::Tanh => u.tanh(),
            Activation::Softplus => {
                // ln(1 + e^u), stable for large |u|.
                if u > 30.0 {
                    u
                } else if u < -30.0 {
                    u.exp()
                } else {
                    u.exp().ln_1p()
                }
            }
            Activation::Relu => u.max(0.0),
        }
    }

    #[inline]
    fn derivative(&self, u: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = u.tanh();
                1.0 - t * t
            }
            Activation::Softplus => logistic(u),
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Architecture of the decoder; the output layer always has width 1 and the
/// occupancy flavor appends a logistic squashing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Identity skip around each hidden layer; requires matching widths.
    pub residual: Vec<bool>,
    pub flavor: FieldFlavor,
}

impl MlpSpec {
    /// Desk-scale default: Z=2, two tanh layers of width 64.
    pub fn desk_default(flavor: FieldFlavor) -> Self {
        Self {
            latent_dim: 2,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            residual: vec![false, false],
            flavor,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.latent_dim + 3
    }

    /// `(rows, cols)` for each layer including the final scalar layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim();
        for &w in &self.hidden {
            shapes.push((w, prev));
            prev = w;
        }
        shapes.push((1, prev));
        shapes
    }

    pub fn theta_len(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c + r).sum()
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        if self.residual.len() != self.hidden.len() {
            return Err(MlpError::InvalidSpec(format!(
                "residual flags ({}) must match hidden layers ({})",
                self.residual.len(),
                self.hidden.len()
            )));
        }
        let mut prev = self.input_dim();
        for (l, &w) in self.hidden.iter().enumerate() {
            if w == 0 {
                return Err(MlpError::InvalidSpec("hidden width 0".into()));
            }
            if self.residual[l] && w != prev {
                return Err(MlpError::InvalidSpec(format!(
                    "residual at layer {l} needs width {prev}, got {w}"
                )));
            }
            prev = w;
        }
        Ok(())
    }
}

/// Trained decoder parameters: the spec plus a flat weight vector laid out
/// layer by layer, row-major weights then bias.
#[derive(Debug, Clone)]
pub struct MlpWeights {
    pub spec: MlpSpec,
    pub theta: Vec<f64>,
}

impl MlpWeights {
    /// Seeded Xavier-uniform initialization with zero biases.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self, MlpError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; spec.theta_len()];
        let mut off = 0;
        for (rows, cols) in spec.layer_shapes() {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            for w in &mut theta[off..off + rows * cols] {
                *w = rng.gen_range(-a..a);
            }
            off += rows * cols + rows;
        }
        Ok(Self { spec, theta })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self, MlpError> {
        spec.validate()?;
        let theta = vec![0.0; spec.theta_len()];
        Ok(Self { spec, theta })
    }
}

/// Per-shape latent codes, keyed by shape id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LatentTable {
    pub codes: BTreeMap<String, Vec<f64>>,
}

impl LatentTable {
    pub fn dim(&self) -> Option<usize> {
        self.codes.values().next().map(|z| z.len())
    }
}

struct ForwardCache {
    /// Layer inputs: `h[0] = [z | x]`, then one entry per hidden layer output.
    h: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Output pre-squash (the SDF value, or the occupancy logit).
    y: f64,
}

fn forward(spec: &MlpSpec, theta: &[f64], input: &[f64]) -> ForwardCache {
    let shapes = spec.layer_shapes();
    let mut h = Vec::with_capacity(shapes.len());
    let mut pre = Vec::with_capacity(spec.hidden.len());
    h.push(input.to_vec());
    let mut off = 0;
    for (l, &(rows, cols)) in shapes.iter().enumerate() {
        let w = &theta[off..off + rows * cols];
        let b = &theta[off + rows * cols..off + rows * cols + rows];
        off += rows * cols + rows;
        let x = h.last().unwrap();
        let mut out = vec![0.0; rows];
        for r in 0..rows {
            let mut acc = b[r];
            let row = &w[r * cols..(r + 1) * cols];
            for c in 0..cols {
                acc += row[c] * x[c];
            }
            out[r] = acc;
        }
        if l + 1 == shapes.len() {
            return ForwardCache { h, pre, y: out[0] };
        }
        let mut act: Vec<f64> = out.iter().map(|&u| spec.activation.apply(u)).collect();
        if spec.residual[l] {
            for (a, &prev) in act.iter_mut().zip(x.iter()) {
                *a += prev;
            }
        }
        pre.push(out);
        h.push(act);
    }
    unreachable!("layer_shapes always ends with the output layer")
}

/// Reverse pass from an output seed `d_y` (gradient of some scalar with
/// respect to the pre-squash output). Accumulates into `grad_input` and,
/// when given, `grad_theta`.
fn backprop(
    spec: &MlpSpec,
    theta: &[f64],
    cache: &ForwardCache,
    d_y: f64,
    grad_input: &mut [f64],
    mut grad_theta: Option<&mut [f64]>,
) {
    let shapes = spec.layer_shapes();
    let offsets: Vec<usize> = {
        let mut v = Vec::with_capacity(shapes.len());
        let mut off = 0;
        for &(rows, cols) in &shapes {
            v.push(off);
            off += rows * cols + rows;
        }
        v
    };

    // Output layer (1 row).
    let last = shapes.len() - 1;
    let (_, cols) = shapes[last];
    let w_out = &theta[offsets[last]..offsets[last] + cols];
    let h_last = &cache.h[last];
    if let Some(gt) = grad_theta.as_deref_mut() {
        for c in 0..cols {
            gt[offsets[last] + c] += d_y * h_last[c];
        }
        gt[offsets[last] + cols] += d_y;
    }
    let mut g: Vec<f64> = w_out.iter().map(|&w| d_y * w).collect();

    for l in (0..spec.hidden.len()).rev() {
        let (rows, cols) = shapes[l];
        let w = &theta[offsets[l]..offsets[l] + rows * cols];
        let x = &cache.h[l];
        let pre = &cache.pre[l];
        let mut g_prev = vec![0.0; cols];
        for r in 0..rows {
            let d_pre = g[r] * spec.activation.derivative(pre[r]);
            if d_pre != 0.0 {
                let row = &w[r * cols..(r + 1) * cols];
                for c in 0..cols {
                    g_prev[c] += row[c] * d_pre;
                }
                if let Some(gt) = grad_theta.as_deref_mut() {
                    let base = offsets[l] + r * cols;
                    for c in 0..cols {
                        gt[base + c] += d_pre * x[c];
                    }
                    gt[offsets[l] + rows * cols + r] += d_pre;
                }
            }
        }
        if spec.residual[l] {
            for (gp, gr) in g_prev.iter_mut().zip(g.iter()) {
                *gp += gr;
            }
        }
        g = g_prev;
    }
    for (gi, gv) in grad_input.iter_mut().zip(g.iter()) {
        *gi += gv;
    }
}

fn squash(spec: &MlpSpec, y: f64) -> f64 {
    match spec.flavor {
        FieldFlavor::SignedDistance => y,
        FieldFlavor::Occupancy => clamp_occupancy(logistic(y)),
    }
}

/// d(value)/d(y) of the output squashing.
fn squash_derivative(spec: &MlpSpec, y: f64) -> f64 {
    match spec.flavor {
        FieldFlavor::SignedDistance => 1.0,
        FieldFlavor::Occupancy => {
            let s = logistic(y);
            s * (1.0 - s)
        }
    }
}

/// Field value for `params = [z | theta]` (used by `ParamField`).
pub(crate) fn field_value(spec: &MlpSpec, params: &[f64], x: Vec3) -> f64 {
    let z = &params[..spec.latent_dim];
    let theta = &params[spec.latent_dim..];
    let mut input = Vec::with_capacity(spec.input_dim());
    input.extend_from_slice(z);
    input.extend_from_slice(&[x.x, x.y, x.z]);
    squash(spec, forward(spec, theta, &input).y)
}

/// Full evaluation for `params = [z | theta]`: accumulates `seed * df/dc`
/// into `grad_c` and returns `(value, df/dx)`.
pub(crate) fn field_eval_full(
    spec: &MlpSpec,
    params: &[f64],
    x: Vec3,
    seed: f64,
    grad_c: &mut [f64],
) -> Result<(f64, Vec3), FieldError> {
    let z = &params[..spec.latent_dim];
    let theta = &params[spec.latent_dim..];
    let mut input = Vec::with_capacity(spec.input_dim());
    input.extend_from_slice(z);
    input.extend_from_slice(&[x.x, x.y, x.z]);
    let cache = forward(spec, theta, &input);
    let d_y = squash_derivative(spec, cache.y);

    let mut grad_input = vec![0.0; spec.input_dim()];
    let mut grad_theta = vec![0.0; theta.len()];
    backprop(spec, theta, &cache, d_y, &mut grad_input, Some(&mut grad_theta));

    for (dst, g) in grad_c[..spec.latent_dim].iter_mut().zip(&grad_input) {
        *dst += seed * g;
    }
    for (dst, g) in grad_c[spec.latent_dim..].iter_mut().zip(&grad_theta) {
        *dst += seed * g;
    }
    let grad_x = Vec3::new(
        grad_input[spec.latent_dim],
        grad_input[spec.latent_dim + 1],
        grad_input[spec.latent_dim + 2],
    );
    Ok((squash(spec, cache.y), grad_x))
}

/// Value plus exact gradients with respect to point, latent, and weights.
#[derive(Debug, Clone)]
pub struct MlpEval {
    pub value: f64,
    pub grad_x: Vec3,
    pub grad_z: Vec<f64>,
    pub grad_theta: Vec<f64>,
}

pub fn mlp_eval_full(weights: &MlpWeights, z: &[f64], x: Vec3) -> Result<MlpEval, MlpError> {
    let spec = &weights.spec;
    if z.len() != spec.latent_dim {
        return Err(MlpError::DimensionMismatch(format!(
            "latent has length {}, spec declares {}",
            z.len(),
            spec.latent_dim
        )));
    }
    if weights.theta.len() != spec.theta_len() {
        return Err(MlpError::DimensionMismatch(format!(
            "theta has length {}, spec declares {}",
            weights.theta.len(),
            spec.theta_len()
        )));
    }
    let mut params = z.to_vec();
    params.extend_from_slice(&weights.theta);
    let mut grad_c = vec![0.0; params.len()];
    let (value, grad_x) = field_eval_full(spec, &params, x, 1.0, &mut grad_c)
        .expect("MLP evaluation is total");
    let grad_theta = grad_c.split_off(spec.latent_dim);
    Ok(MlpEval { value, grad_x, grad_z: grad_c, grad_theta })
}

/// Per-shape training points with scalar targets: signed distances, or
/// occupancy labels in {0, 1}.
#[derive(Debug, Clone)]
pub struct ShapeSamples {
    pub id: String,
    pub points: Vec<Vec3>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingSamples {
    pub shapes: Vec<ShapeSamples>,
}

impl TrainingSamples {
    fn validate(&self, flavor: FieldFlavor) -> Result<(), MlpError> {
        if self.shapes.is_empty() {
            return Err(MlpError::BadTargets("no shapes".into()));
        }
        for s in &self.shapes {
            if s.points.is_empty() || s.points.len() != s.targets.len() {
                return Err(MlpError::BadTargets(format!(
                    "shape {:?} has {} points and {} targets",
                    s.id,
                    s.points.len(),
                    s.targets.len()
                )));
            }
            for &t in &s.targets {
                match flavor {
                    FieldFlavor::SignedDistance if !t.is_finite() => {
                        return Err(MlpError::BadTargets("non-finite SDF target".into()));
                    }
                    FieldFlavor::Occupancy if t != 0.0 && t != 1.0 => {
                        return Err(MlpError::BadTargets(format!(
                            "occupancy target {t} is not 0 or 1"
                        )));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Weight of the latent-norm regularizer.
    pub lambda_reg: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub latent_init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_reg: 1e-4,
            epochs: 200,
            batch_size: 256,
            adam: AdamConfig::default(),
            seed: 0,
            latent_init_std: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Mean objective per epoch (data term plus regularizer).
    pub epoch_losses: Vec<f64>,
}

/// Auto-decoder training: codes and weights are optimized jointly to
/// minimize the data term (L1 for SDF targets, BCE for occupancy labels)
/// plus `lambda_reg * sum ||z_S||^2`. Single-threaded and bit-reproducible
/// for a fixed seed.
pub fn train_implicit(
    spec: &MlpSpec,
    samples: &TrainingSamples,
    cfg: &TrainConfig,
) -> Result<(MlpWeights, LatentTable, TrainReport), MlpError> {
    spec.validate()?;
    samples.validate(spec.flavor)?;

    let n_shapes = samples.shapes.len();
    let z_dim = spec.latent_dim;
    let init = MlpWeights::init(spec.clone(), cfg.seed)?;

    // Parameter vector: all codes, then theta.
    let mut params = vec![0.0; n_shapes * z_dim + init.theta.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    for p in params[..n_shapes * z_dim].iter_mut() {
        *p = (rng.gen::<f64>() * 2.0 - 1.0) * cfg.latent_init_std;
    }
    params[n_shapes * z_dim..].copy_from_slice(&init.theta);

    let mut flat: Vec<(usize, usize)> = Vec::new();
    for (si, s) in samples.shapes.iter().enumerate() {
        for pi in 0..s.points.len() {
            flat.push((si, pi));
        }
    }

    let mut adam = AdamState::new(params.len());
    let mut grad = vec![0.0; params.len()];
    let mut grad_input = vec![0.0; spec.input_dim()];
    let mut report = TrainReport::default();
    let mut step = 0usize;

    for _epoch in 0..cfg.epochs {
        // Seeded Fisher-Yates shuffle.
        for i in (1..flat.len()).rev() {
            let j = rng.gen_range(0..=i);
            flat.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for batch in flat.chunks(cfg.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &(si, pi) in batch {
                let shape = &samples.shapes[si];
                let weight = 1.0 / shape.points.len() as f64;
                let z = &params[si * z_dim..(si + 1) * z_dim];
                let theta = &params[n_shapes * z_dim..];
                let p = shape.points[pi];
                let mut input = Vec::with_capacity(spec.input_dim());
                input.extend_from_slice(z);
                input.extend_from_slice(&[p.x, p.y, p.z]);
                let cache = forward(spec, theta, &input);
                let target = shape.targets[pi];

                // d(loss)/dy on the pre-squash output.
                let (loss, d_y) = match spec.flavor {
                    FieldFlavor::SignedDistance => {
                        let err = cache.y - target;
                        let sign = if err > 0.0 {
                            1.0
                        } else if err < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        (err.abs(), sign)
                    }
                    FieldFlavor::Occupancy => {
                        // BCE on logits: t*softplus(-y) + (1-t)*softplus(y).
                        let sp = Activation::Softplus;
                        let loss = target * sp.apply(-cache.y)
                            + (1.0 - target) * sp.apply(cache.y);
                        (loss, logistic(cache.y) - target)
                    }
                };
                batch_loss += weight * loss;

                grad_input.iter_mut().for_each(|g| *g = 0.0);
                backprop(
                    spec,
                    &params[n_shapes * z_dim..],
                    &cache,
                    weight * d_y,
                    &mut grad_input,
                    Some(&mut grad[n_shapes * z_dim..]),
                );
                for (dst, g) in grad[si * z_dim..(si + 1) * z_dim]
                    .iter_mut()
                    .zip(&grad_input[..z_dim])
                {
                    *dst += g;
                }
                // Regularizer, spread per-sample so an epoch sums to
                // lambda * sum ||z_S||^2.
                let z = &params[si * z_dim..(si + 1) * z_dim];
                let znorm2: f64 = z.iter().map(|v| v * v).sum();
                batch_loss += weight * cfg.lambda_reg * znorm2;
                for (dst, &zv) in grad[si * z_dim..(si + 1) * z_dim].iter_mut().zip(z) {
                    *dst += weight * cfg.lambda_reg * 2.0 * zv;
                }
            }
            if !batch_loss.is_finite() {
                return Err(MlpError::DivergedTraining(step));
            }
            epoch_loss += batch_loss;
            adam.step(&cfg.adam, &mut params, &grad).expect("shapes match");
            step += 1;
        }
        report.epoch_losses.push(epoch_loss);
    }

    let weights = MlpWeights { spec: spec.clone(), theta: params[n_shapes * z_dim..].to_vec() };
    let mut table = LatentTable::default();
    for (si, s) in samples.shapes.iter().enumerate() {
        table
            .codes
            .insert(s.id.clone(), params[si * z_dim..(si + 1) * z_dim].to_vec());
    }
    Ok((weights, table, report))
}

#[derive(Debug, Clone)]
pub struct FinetuneConfig {
    pub steps: usize,
    pub grid: GridSpec,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Surface samples drawn from the extracted mesh per iteration.
    pub samples: usize,
    /// Banded re-extraction threshold; `None` disables banding.
    pub band: Option<f64>,
}

/// End-to-end fine-tuning through the extracted mesh: minimizes the chamfer
/// distance to `target` with respect to `c = [z | theta]`, keeping the
/// best-loss iterate.
pub fn finetune_chamfer(
    weights: &MlpWeights,
    z: &[f64],
    target: &[Vec3],
    cfg: &FinetuneConfig,
) -> Result<(MlpWeights, Vec<f64>, RunLog), MlpError> {
    let field = ParamField::mlp(weights.spec.clone(), z, &weights.theta)
        .map_err(|e| MlpError::DimensionMismatch(e.to_string()))?;
    let run_cfg = optim::RunConfig {
        steps: cfg.steps,
        grid: cfg.grid,
        adam: cfg.adam.clone(),
        seed: cfg.seed,
        samples_per_iter: cfg.samples,
        band: cfg.band,
        snapshot_every: 0,
        constraint_weight: 0.0,
    };
    let outcome = optim::run_morph(&field, target, optim::MorphLoss::Chamfer, &run_cfg)
        .map_err(|e| match e {
            optim::OptimError::EmptySurface => MlpError::EmptySurface,
            other => MlpError::InvalidSpec(other.to_string()),
        })?;
    let best = outcome.field.params();
    let z_dim = weights.spec.latent_dim;
    let tuned = MlpWeights { spec: weights.spec.clone(), theta: best[z_dim..].to_vec() };
    Ok((tuned, best[..z_dim].to_vec(), outcome.log))
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// On-disk checkpoint: spec, per-layer weights, and latent codes.
#[derive(Debug, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    spec: MlpSpec,
    layers: Vec<LayerDoc>,
    latents: BTreeMap<String, Vec<f64>>,
}

impl MlpCheckpoint {
    pub fn from_parts(weights: &MlpWeights, latents: &LatentTable) -> Self {
        let mut layers = Vec::new();
        let mut off = 0;
        for (rows, cols) in weights.spec.layer_shapes() {
            layers.push(LayerDoc {
                rows,
                cols,
                weights: weights.theta[off..off + rows * cols].to_vec(),
                bias: weights.theta[off + rows * cols..off + rows * cols + rows].to_vec(),
            });
            off += rows * cols + rows;
        }
        Self { spec: weights.spec.clone(), layers, latents: latents.codes.clone() }
    }

    pub fn into_parts(self) -> Result<(MlpWeights, LatentTable), MlpError> {
        self.spec.validate()?;
        let shapes = self.spec.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(MlpError::DimensionMismatch(format!(
                "checkpoint has {} layers, spec declares {}",
                self.layers.len(),
                shapes.len()
            )));
        }
        let mut theta = Vec::with_capacity(self.spec.theta_len());
        for (doc, (rows, cols)) in self.layers.iter().zip(shapes) {
            if doc.rows != rows
                || doc.cols != cols
                || doc.weights.len() != rows * cols
                || doc.bias.len() != rows
            {
                return Err(MlpError::DimensionMismatch(format!(
                    "layer shape {}x{} does not match spec {rows}x{cols}",
                    doc.rows, doc.cols
                )));
            }
            theta.extend_from_slice(&doc.weights);
            theta.extend_from_slice(&doc.bias);
        }
        Ok((
            MlpWeights { spec: self.spec, theta },
            LatentTable { codes: self.latents },
        ))
    }
}

/// Draws training points for a signed-distance target field: 80% inside the
/// near-surface band `|s| < 0.1`, 20% uniform over the bounds. For occupancy
/// output the targets become inside/outside labels.
pub fn sample_training_data(
    target: &ParamField,
    flavor: FieldFlavor,
    bounds: (Vec3, Vec3),
    n: usize,
    seed: u64,
) -> (Vec<Vec3>, Vec<f64>) {
    assert_eq!(
        target.convention().flavor,
        FieldFlavor::SignedDistance,
        "training targets come from a signed-distance field"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = bounds;
    let uniform = |rng: &mut ChaCha8Rng| {
        Vec3::new(
            rng.gen_range(lo.x..hi.x),
            rng.gen_range(lo.y..hi.y),
            rng.gen_range(lo.z..hi.z),
        )
    };
    let n_band = (n as f64 * 0.8) as usize;
    let mut points = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while points.len() < n_band && attempts < n_band * 10_000 {
        let p = uniform(&mut rng);
        attempts += 1;
        if target.eval(p).abs() < 0.1 {
            points.push(p);
        }
    }
    while points.len() < n {
        points.push(uniform(&mut rng));
    }
    let targets = points
        .iter()
        .map(|&p| {
            let s = target.eval(p);
            match flavor {
                FieldFlavor::SignedDistance => s,
                FieldFlavor::Occupancy => {
                    if s < 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect();
    (points, targets)
}

#[cfg(test)]
mod tests;
