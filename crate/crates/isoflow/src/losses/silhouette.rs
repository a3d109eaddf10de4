//! Binary silhouette rendering and the 2D contour chamfer loss.
//!
//! The rasterizer is a plain coverage test (no shading, no anti-aliasing)
//! and is deliberately non-differentiable; it produces refinement targets
//! and the image-space L1 metric. The differentiable path is
//! [`contour_chamfer`], which matches projected silhouette-edge endpoints to
//! a target contour and needs no rasterizer in the backward.

use super::LossError;
use crate::diffiso::VertexGrad;
use crate::field::Vec3;
use crate::mesher::TriMesh;
use std::collections::HashMap;
use std::io::Write;

/// View for projection and rasterization. Directions are normalized at
/// construction; `dir` and `up` must not be parallel.
#[derive(Debug, Clone, PartialEq)]
pub enum CameraSpec {
    Orthographic {
        dir: Vec3,
        up: Vec3,
        /// World half-width of the `[-1, 1]^2` image window.
        half_extent: f64,
        width: usize,
        height: usize,
    },
    Pinhole {
        position: Vec3,
        dir: Vec3,
        up: Vec3,
        fov_y_deg: f64,
        width: usize,
        height: usize,
    },
}

impl CameraSpec {
    pub fn orthographic(
        dir: Vec3,
        up: Vec3,
        half_extent: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, LossError> {
        let (dir, up) = normalize_pair(dir, up)?;
        Ok(CameraSpec::Orthographic { dir, up, half_extent, width, height })
    }

    pub fn pinhole(
        position: Vec3,
        dir: Vec3,
        up: Vec3,
        fov_y_deg: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, LossError> {
        let (dir, up) = normalize_pair(dir, up)?;
        Ok(CameraSpec::Pinhole { position, dir, up, fov_y_deg, width, height })
    }

    pub fn resolution(&self) -> (usize, usize) {
        match self {
            CameraSpec::Orthographic { width, height, .. }
            | CameraSpec::Pinhole { width, height, .. } => (*width, *height),
        }
    }

    pub fn view_dir(&self) -> Vec3 {
        match self {
            CameraSpec::Orthographic { dir, .. } | CameraSpec::Pinhole { dir, .. } => *dir,
        }
    }

    /// Camera basis `(right, up, dir)`.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let (dir, up) = match self {
            CameraSpec::Orthographic { dir, up, .. } | CameraSpec::Pinhole { dir, up, .. } => {
                (*dir, *up)
            }
        };
        let right = dir.cross(&up).normalize();
        let up_cam = right.cross(&dir);
        (right, up_cam, dir)
    }

    /// Image coordinates in `[-1, 1]^2`; `None` when the point is behind a
    /// pinhole camera.
    pub fn project(&self, p: Vec3) -> Option<[f64; 2]> {
        let (right, up_cam, dir) = self.basis();
        match self {
            CameraSpec::Orthographic { half_extent, .. } => {
                Some([p.dot(&right) / half_extent, p.dot(&up_cam) / half_extent])
            }
            CameraSpec::Pinhole { position, fov_y_deg, .. } => {
                let rel = p - position;
                let zc = rel.dot(&dir);
                if zc <= 1e-9 {
                    return None;
                }
                let s = 1.0 / (fov_y_deg.to_radians() * 0.5).tan();
                Some([s * rel.dot(&right) / zc, s * rel.dot(&up_cam) / zc])
            }
        }
    }

    /// Rows of the 2x3 projection Jacobian at `p`.
    pub fn projection_jacobian(&self, p: Vec3) -> Option<[Vec3; 2]> {
        let (right, up_cam, dir) = self.basis();
        match self {
            CameraSpec::Orthographic { half_extent, .. } => {
                Some([right / *half_extent, up_cam / *half_extent])
            }
            CameraSpec::Pinhole { position, fov_y_deg, .. } => {
                let rel = p - position;
                let zc = rel.dot(&dir);
                if zc <= 1e-9 {
                    return None;
                }
                let s = 1.0 / (fov_y_deg.to_radians() * 0.5).tan();
                let xc = rel.dot(&right);
                let yc = rel.dot(&up_cam);
                Some([
                    s * (right / zc - dir * (xc / (zc * zc))),
                    s * (up_cam / zc - dir * (yc / (zc * zc))),
                ])
            }
        }
    }
}

fn normalize_pair(dir: Vec3, up: Vec3) -> Result<(Vec3, Vec3), LossError> {
    let dn = dir.norm();
    let un = up.norm();
    if dn == 0.0 || un == 0.0 {
        return Err(LossError::BadCamera);
    }
    let dir = dir / dn;
    let up = up / un;
    if dir.cross(&up).norm() < 1e-9 {
        return Err(LossError::BadCamera);
    }
    Ok((dir, up))
}

/// Binary coverage mask plus its boundary contour.
#[derive(Debug, Clone)]
pub struct Silhouette {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
    /// Boundary pixel centers in `[-1, 1]^2`, in scanline order.
    pub contour: Vec<[f64; 2]>,
}

impl Silhouette {
    pub fn coverage(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

fn pixel_center(ix: usize, iy: usize, w: usize, h: usize) -> [f64; 2] {
    [
        -1.0 + 2.0 * (ix as f64 + 0.5) / w as f64,
        1.0 - 2.0 * (iy as f64 + 0.5) / h as f64,
    ]
}

/// Rasterizes the mesh into a binary mask and extracts the boundary-pixel
/// contour. Deterministic; faces behind a pinhole camera are skipped.
pub fn silhouette_render(mesh: &TriMesh, cam: &CameraSpec) -> Result<Silhouette, LossError> {
    if mesh.faces.is_empty() {
        return Err(LossError::EmptyMesh);
    }
    let (w, h) = cam.resolution();
    let mut mask = vec![false; w * h];
    // Pixel-space coordinates: pixel (ix, iy) has center (ix + 0.5, iy + 0.5).
    let to_px = |uv: [f64; 2]| -> [f64; 2] {
        [(uv[0] + 1.0) * 0.5 * w as f64, (1.0 - uv[1]) * 0.5 * h as f64]
    };
    for f in &mesh.faces {
        let pv: Option<Vec<[f64; 2]>> = f
            .iter()
            .map(|&v| cam.project(mesh.vertices[v]).map(to_px))
            .collect();
        let Some(p) = pv else { continue };
        let min_x = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
        let max_x = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
        let min_y = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
        let max_y = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (min_x - 0.5).floor().max(0.0) as usize;
        let x1 = (max_x + 0.5).ceil().min(w as f64) as usize;
        let y0 = (min_y - 0.5).floor().max(0.0) as usize;
        let y1 = (max_y + 0.5).ceil().min(h as f64) as usize;
        let edge = |a: [f64; 2], b: [f64; 2], q: [f64; 2]| -> f64 {
            (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])
        };
        for iy in y0..y1 {
            for ix in x0..x1 {
                let q = [ix as f64 + 0.5, iy as f64 + 0.5];
                let w0 = edge(p[0], p[1], q);
                let w1 = edge(p[1], p[2], q);
                let w2 = edge(p[2], p[0], q);
                if (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0)
                    || (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0)
                {
                    mask[iy * w + ix] = true;
                }
            }
        }
    }
    let contour = extract_contour(&mask, w, h);
    Ok(Silhouette { width: w, height: h, mask, contour })
}

/// Boundary pixels: covered pixels with an uncovered 4-neighbor (or on the
/// image border), reported as pixel centers in scanline order.
fn extract_contour(mask: &[bool], w: usize, h: usize) -> Vec<[f64; 2]> {
    let mut contour = Vec::new();
    for iy in 0..h {
        for ix in 0..w {
            if !mask[iy * w + ix] {
                continue;
            }
            let boundary = ix == 0
                || iy == 0
                || ix + 1 == w
                || iy + 1 == h
                || !mask[iy * w + ix - 1]
                || !mask[iy * w + ix + 1]
                || !mask[(iy - 1) * w + ix]
                || !mask[(iy + 1) * w + ix];
            if boundary {
                contour.push(pixel_center(ix, iy, w, h));
            }
        }
    }
    contour
}

/// Normalized pixel count of the symmetric mask difference (the image-space
/// L1 refinement metric; no gradients).
pub fn silhouette_l1(
    mesh: &TriMesh,
    cam: &CameraSpec,
    target: &Silhouette,
) -> Result<f64, LossError> {
    let (w, h) = cam.resolution();
    if w != target.width || h != target.height {
        return Err(LossError::ResolutionMismatch(w, h, target.width, target.height));
    }
    let own = silhouette_render(mesh, cam)?;
    let diff = own
        .mask
        .iter()
        .zip(&target.mask)
        .filter(|(a, b)| a != b)
        .count();
    Ok(diff as f64 / (w * h) as f64)
}

/// Result of the contour chamfer loss, including the frozen silhouette
/// selection and nearest-neighbor correspondences used in the backward.
#[derive(Debug, Clone)]
pub struct ContourChamfer {
    pub loss: f64,
    pub vertex_grad: VertexGrad,
    /// Mesh vertex ids whose projections form the `B` point set.
    pub b_vertices: Vec<usize>,
    /// Projected positions of those vertices in `[-1, 1]^2`.
    pub b_points: Vec<[f64; 2]>,
    /// For each B point, the index of its nearest target point.
    pub nn_a_for_b: Vec<usize>,
    /// For each target point, the index of its nearest B point.
    pub nn_b_for_a: Vec<usize>,
}

impl ContourChamfer {
    /// Re-evaluates the loss at new vertex positions with the selection and
    /// correspondences held fixed (the quantity whose exact gradient
    /// `vertex_grad` is).
    pub fn loss_with_fixed_correspondences(
        &self,
        mesh: &TriMesh,
        cam: &CameraSpec,
        target: &[[f64; 2]],
    ) -> f64 {
        let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        let proj: Vec<[f64; 2]> = self
            .b_vertices
            .iter()
            .map(|&v| cam.project(mesh.vertices[v]).expect("projectable vertex"))
            .collect();
        let mut b_to_a = 0.0;
        for (bi, &ai) in self.nn_a_for_b.iter().enumerate() {
            b_to_a += d2(proj[bi], target[ai]);
        }
        let mut a_to_b = 0.0;
        for (ai, &bi) in self.nn_b_for_a.iter().enumerate() {
            a_to_b += d2(proj[bi], target[ai]);
        }
        b_to_a + a_to_b
    }
}

/// Mesh edges adjacent to one front-facing and one back-facing triangle
/// (boundary edges of open meshes included), as pairs of vertex ids.
pub fn silhouette_edges(mesh: &TriMesh, cam: &CameraSpec) -> Vec<(usize, usize)> {
    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            let key = if a < b { (a, b) } else { (b, a) };
            edge_faces.entry(key).or_default().push(fi);
        }
    }
    let front: Vec<bool> = (0..mesh.faces.len())
        .map(|fi| {
            let n = mesh.face_normal(fi);
            match cam {
                CameraSpec::Orthographic { .. } => n.dot(&cam.view_dir()) < 0.0,
                CameraSpec::Pinhole { position, .. } => {
                    n.dot(&(mesh.face_centroid(fi) - position)) < 0.0
                }
            }
        })
        .collect();
    let mut edges: Vec<(usize, usize)> = edge_faces
        .into_iter()
        .filter_map(|(e, faces)| match faces.len() {
            1 => Some(e),
            2 if front[faces[0]] != front[faces[1]] => Some(e),
            _ => None,
        })
        .collect();
    edges.sort_unstable();
    edges
}

/// Two-sided squared 2D chamfer between a target contour `A` and the
/// projected silhouette-edge endpoints `B`. The silhouette-edge selection
/// and nearest-neighbor correspondences are held fixed in the backward;
/// gradients reach the 3D endpoint vertices through the projection
/// Jacobian.
pub fn contour_chamfer(
    mesh: &TriMesh,
    cam: &CameraSpec,
    target: &[[f64; 2]],
) -> Result<ContourChamfer, LossError> {
    if mesh.faces.is_empty() {
        return Err(LossError::EmptyMesh);
    }
    let edges = silhouette_edges(mesh, cam);
    let mut b_vertices: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    b_vertices.sort_unstable();
    b_vertices.dedup();
    let mut ids = Vec::with_capacity(b_vertices.len());
    let mut b_points = Vec::with_capacity(b_vertices.len());
    for &v in &b_vertices {
        if let Some(p) = cam.project(mesh.vertices[v]) {
            ids.push(v);
            b_points.push(p);
        }
    }
    if ids.is_empty() || target.is_empty() {
        return Err(LossError::NoSilhouetteEdges);
    }

    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut loss = 0.0;
    let mut grad2d = vec![[0.0; 2]; ids.len()];
    let mut nn_a_for_b = Vec::with_capacity(ids.len());
    let mut nn_b_for_a = Vec::with_capacity(target.len());
    // B -> A terms.
    for (bi, &bp) in b_points.iter().enumerate() {
        let (mut best, mut best_d) = (0usize, f64::INFINITY);
        for (ai, &ap) in target.iter().enumerate() {
            let d = d2(bp, ap);
            if d < best_d {
                best = ai;
                best_d = d;
            }
        }
        loss += best_d;
        nn_a_for_b.push(best);
        grad2d[bi][0] += 2.0 * (bp[0] - target[best][0]);
        grad2d[bi][1] += 2.0 * (bp[1] - target[best][1]);
    }
    // A -> B terms, pulled back onto the matched B point.
    for &ap in target {
        let (mut best, mut best_d) = (0usize, f64::INFINITY);
        for (bi, &bp) in b_points.iter().enumerate() {
            let d = d2(bp, ap);
            if d < best_d {
                best = bi;
                best_d = d;
            }
        }
        loss += best_d;
        nn_b_for_a.push(best);
        grad2d[best][0] += 2.0 * (b_points[best][0] - ap[0]);
        grad2d[best][1] += 2.0 * (b_points[best][1] - ap[1]);
    }

    let mut vg = VertexGrad::zeros(mesh.vertices.len());
    for (slot, &v) in ids.iter().enumerate() {
        if let Some([ju, jv]) = cam.projection_jacobian(mesh.vertices[v]) {
            vg.0[v] = ju * grad2d[slot][0] + jv * grad2d[slot][1];
        }
    }
    Ok(ContourChamfer {
        loss,
        vertex_grad: vg,
        b_vertices: ids,
        b_points,
        nn_a_for_b,
        nn_b_for_a,
    })
}

/// Binary PGM (P5), covered pixels white.
pub fn write_pgm_mask<W: Write>(s: &Silhouette, w: &mut W) -> std::io::Result<()> {
    write!(w, "P5\n{} {}\n255\n", s.width, s.height)?;
    let bytes: Vec<u8> = s.mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    w.write_all(&bytes)
}
