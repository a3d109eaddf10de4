//! Task losses and evaluation metrics.
//!
//! Everything here produces either a scalar metric or a scalar loss plus
//! per-vertex gradients ([`VertexGrad`]) that feed straight into the
//! iso-surface backward pass.

mod drag;
mod kdtree;
mod normals;
mod silhouette;

pub use drag::{
    constraint_max_violation, constraint_penalty, drag_integral, drag_objective,
    fibonacci_sphere, ConstantPressure, ConstraintSphere, DragObjective, PressureProxy,
    StagnationProxy,
};
pub use kdtree::KdTree;
pub use normals::{normal_consistency, render_normal_map, write_ppm_normal_map, NormalMap};
pub use silhouette::{
    contour_chamfer, silhouette_edges, silhouette_l1, silhouette_render, write_pgm_mask,
    CameraSpec, ContourChamfer, Silhouette,
};

use crate::diffiso::VertexGrad;
use crate::field::Vec3;
use crate::mesher::TriMesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("mesh has no faces to sample")]
    EmptyMesh,
    #[error("mesh has no silhouette edges from this viewpoint")]
    NoSilhouetteEdges,
    #[error("mask resolutions differ: {0}x{1} vs {2}x{3}")]
    ResolutionMismatch(usize, usize, usize, usize),
    #[error("drag integral needs a watertight mesh")]
    OpenMesh,
    #[error("no pixel is covered by both normal maps")]
    NoOverlap,
    #[error("camera direction and up vector are parallel or zero")]
    BadCamera,
}

/// Points sampled on a mesh surface, with the owning face and barycentric
/// coordinates so gradients can be pulled back onto vertices.
#[derive(Debug, Clone)]
pub struct SurfaceSamples {
    pub points: Vec<Vec3>,
    /// `(face index, barycentric coords)` per sample.
    pub parents: Vec<(usize, [f64; 3])>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Pull per-sample point gradients back to mesh vertices through the
    /// barycentric weights.
    pub fn accumulate_vertex_grads(
        &self,
        mesh: &TriMesh,
        point_grads: &[Vec3],
    ) -> VertexGrad {
        assert_eq!(point_grads.len(), self.points.len());
        let mut vg = VertexGrad::zeros(mesh.vertices.len());
        for ((face, bary), g) in self.parents.iter().zip(point_grads) {
            let f = mesh.faces[*face];
            for k in 0..3 {
                vg.0[f[k]] += bary[k] * g;
            }
        }
        vg
    }
}

/// Area-weighted uniform surface sampling, deterministic for a fixed seed.
/// The default sample count used by the chamfer metric is 2048.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<SurfaceSamples, LossError> {
    if mesh.faces.is_empty() {
        return Err(LossError::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(LossError::EmptyMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut parents = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.gen::<f64>() * total;
        let face = cumulative.partition_point(|&c| c <= r).min(mesh.faces.len() - 1);
        // Square-root trick for uniform barycentric coordinates.
        let su = rng.gen::<f64>().sqrt();
        let v = rng.gen::<f64>();
        let bary = [1.0 - su, su * (1.0 - v), su * v];
        let [a, b, c] = mesh.faces[face];
        points.push(
            bary[0] * mesh.vertices[a] + bary[1] * mesh.vertices[b] + bary[2] * mesh.vertices[c],
        );
        parents.push((face, bary));
    }
    Ok(SurfaceSamples { points, parents })
}

/// Symmetric squared-distance chamfer between a sample set and a fixed point
/// cloud. Returns the loss and its gradient with respect to each sample
/// point (both directions contribute: the sample's own nearest neighbor and
/// the pulled-back terms from cloud points whose nearest neighbor it is).
pub fn chamfer3d(p: &[Vec3], q: &[Vec3]) -> (f64, Vec<Vec3>) {
    assert!(!p.is_empty() && !q.is_empty(), "chamfer needs non-empty clouds");
    let q_tree = KdTree::build(q);
    let p_tree = KdTree::build(p);
    // The two directions accumulate separately so the value is exactly
    // symmetric under argument swap.
    let mut p_to_q = 0.0;
    let mut q_to_p = 0.0;
    let mut grads = vec![Vec3::zeros(); p.len()];
    for (i, &pt) in p.iter().enumerate() {
        let (j, d2) = q_tree.nearest(pt);
        p_to_q += d2;
        grads[i] += 2.0 * (pt - q[j]);
    }
    for &qt in q {
        let (i, d2) = p_tree.nearest(qt);
        q_to_p += d2;
        grads[i] += 2.0 * (p[i] - qt);
    }
    (p_to_q + q_to_p, grads)
}

/// Chamfer loss of a mesh against a target cloud, with gradients chained to
/// the mesh vertices. Convenience composition used by the morph loop.
pub fn chamfer3d_vertex_grad(
    mesh: &TriMesh,
    samples: &SurfaceSamples,
    target: &[Vec3],
) -> (f64, VertexGrad) {
    let (loss, point_grads) = chamfer3d(&samples.points, target);
    (loss, samples.accumulate_vertex_grads(mesh, &point_grads))
}

/// Chamfer distance metric between two meshes over `n` seeded samples each.
pub fn chd_metric(a: &TriMesh, b: &TriMesh, n: usize, seed: u64) -> Result<f64, LossError> {
    let sa = sample_surface(a, n, seed)?;
    let sb = sample_surface(b, n, seed.wrapping_add(1))?;
    Ok(chamfer3d(&sa.points, &sb.points).0)
}

#[cfg(test)]
mod tests;
