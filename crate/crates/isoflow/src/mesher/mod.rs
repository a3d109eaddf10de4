//! Regular-grid field sampling and iso-surface extraction.
//!
//! The forward pass of the pipeline: sample a [`ParamField`] on a lattice,
//! then run marching cubes on the samples. Includes the occupancy logit
//! pre-map and banded re-sampling for iterative optimization.

mod io;
mod mc;
mod tables;
mod trimesh;

pub use io::{read_obj, write_grid_dump, write_obj, write_ply, MeshIoError};
pub use mc::marching_cubes;
pub use trimesh::{TriMesh, VertexProvenance};

use crate::field::{FieldFlavor, ParamField, Vec3};
use crate::util::{clamp_occupancy, logit};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MesherError {
    #[error("no zero crossing: the field does not change sign on the grid")]
    EmptySurface,
    #[error("surface reached a stale grid point; full resampling required")]
    BandViolation,
    #[error("operation requires an occupancy-flavored grid")]
    FlavorMismatch,
    #[error("grid resolution must be at least 2, got {0}")]
    BadResolution(usize),
    #[error("grid bounds must satisfy min < max per axis")]
    BadBounds,
}

/// Axis-aligned regular sampling lattice with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub min: Vec3,
    pub max: Vec3,
}

impl GridSpec {
    pub fn new(n: usize, min: Vec3, max: Vec3) -> Result<Self, MesherError> {
        if n < 2 {
            return Err(MesherError::BadResolution(n));
        }
        if !(min.x < max.x && min.y < max.y && min.z < max.z) {
            return Err(MesherError::BadBounds);
        }
        Ok(Self { n, min, max })
    }

    /// The default `[-1, 1]^3` domain.
    pub fn unit(n: usize) -> Self {
        Self::new(n, Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap()
    }

    pub fn cell_size(&self) -> Vec3 {
        (self.max - self.min) / (self.n as f64 - 1.0)
    }

    pub fn min_cell(&self) -> f64 {
        let c = self.cell_size();
        c.x.min(c.y).min(c.z)
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.cell_size().norm()
    }

    pub fn point_count(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let c = self.cell_size();
        Vec3::new(
            self.min.x + c.x * i as f64,
            self.min.y + c.y * j as f64,
            self.min.z + c.z * k as f64,
        )
    }

    #[inline]
    pub fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + j) * self.n + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.n;
        let j = (idx / self.n) % self.n;
        let k = idx / (self.n * self.n);
        (i, j, k)
    }
}

/// Field values on a [`GridSpec`] lattice, with a validity mask used by
/// banded re-sampling. Invalid entries hold stale values.
#[derive(Debug, Clone)]
pub struct SampledGrid {
    pub spec: GridSpec,
    pub flavor: FieldFlavor,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    /// Number of field evaluations performed by the call that produced this
    /// grid (instrumentation for the banded-acceleration benchmark).
    pub evaluated: usize,
}

impl SampledGrid {
    pub fn fully_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }
}

/// Evaluates the field at every lattice point. Deterministic: the value at
/// each point is independent of evaluation order and thread count.
pub fn sample_grid(field: &ParamField, spec: &GridSpec) -> SampledGrid {
    let mut values = vec![0.0; spec.point_count()];
    values.par_iter_mut().enumerate().for_each(|(idx, v)| {
        let (i, j, k) = spec.coords(idx);
        *v = field.eval(spec.point(i, j, k));
    });
    SampledGrid {
        spec: *spec,
        flavor: field.convention().flavor,
        values,
        valid: vec![true; spec.point_count()],
        evaluated: spec.point_count(),
    }
}

/// Replaces occupancy values with `logit(clamp(v)) - logit(level)` so that
/// marching cubes can run at level 0 in the locally-linear logit regime.
pub fn occupancy_premap(grid: &SampledGrid, level: f64) -> Result<SampledGrid, MesherError> {
    if grid.flavor != FieldFlavor::Occupancy {
        return Err(MesherError::FlavorMismatch);
    }
    let shift = logit(clamp_occupancy(level));
    let values = grid
        .values
        .iter()
        .map(|&v| logit(clamp_occupancy(v)) - shift)
        .collect();
    Ok(SampledGrid {
        spec: grid.spec,
        flavor: grid.flavor,
        values,
        valid: grid.valid.clone(),
        evaluated: 0,
    })
}

/// Band membership test for re-sampling: distance to the iso-level measured
/// in field units for SDFs and in logit units for occupancy grids.
fn in_band(flavor: FieldFlavor, value: f64, level: f64, threshold: f64) -> bool {
    match flavor {
        FieldFlavor::SignedDistance => (value - level).abs() < threshold,
        FieldFlavor::Occupancy => {
            (logit(clamp_occupancy(value)) - logit(clamp_occupancy(level))).abs() < threshold
        }
    }
}

/// Default band half-width for signed-distance fields.
pub fn default_band_threshold(spec: &GridSpec) -> f64 {
    2.0 * spec.cell_diagonal()
}

/// Re-evaluates the field only near the previous surface. Points outside the
/// band keep their stale values and are flagged invalid; marching cubes
/// reports [`MesherError::BandViolation`] if the surface reaches them.
pub fn resample_band(field: &ParamField, prev: &SampledGrid, threshold: f64) -> SampledGrid {
    assert!(threshold > 0.0, "band threshold must be positive");
    let spec = prev.spec;
    let level = field.convention().level;
    let flavor = field.convention().flavor;
    let mut values = prev.values.clone();
    let mut valid = vec![false; spec.point_count()];
    let slots: Vec<(usize, f64)> = (0..spec.point_count())
        .into_par_iter()
        .filter(|&idx| prev.valid[idx] && in_band(prev.flavor, prev.values[idx], level, threshold))
        .map(|idx| {
            let (i, j, k) = spec.coords(idx);
            (idx, field.eval(spec.point(i, j, k)))
        })
        .collect();
    let evaluated = slots.len();
    for (idx, v) in slots {
        values[idx] = v;
        valid[idx] = true;
    }
    SampledGrid { spec, flavor, values, valid, evaluated }
}
