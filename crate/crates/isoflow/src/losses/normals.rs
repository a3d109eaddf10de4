//! Normal-map rendering and the normal-consistency metric.

use super::LossError;
use crate::bvh::TriBvh;
use crate::field::Vec3;
use crate::mesher::TriMesh;
use rayon::prelude::*;
use std::io::Write;

/// World-space unit normals per pixel; `None` is background.
#[derive(Debug, Clone)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Option<Vec3>>,
}

/// Renders a normal map by orthographic ray casting along `dir` toward the
/// origin. The image window spans `[-half_extent, half_extent]^2` in the
/// plane orthogonal to `dir`.
pub fn render_normal_map(
    mesh: &TriMesh,
    dir: Vec3,
    up: Vec3,
    half_extent: f64,
    resolution: usize,
) -> Result<NormalMap, LossError> {
    if mesh.faces.is_empty() {
        return Err(LossError::EmptyMesh);
    }
    let dir = dir.normalize();
    let right = dir.cross(&up);
    if right.norm() < 1e-9 {
        return Err(LossError::BadCamera);
    }
    let right = right.normalize();
    let up_cam = right.cross(&dir);
    let tris: Vec<[Vec3; 3]> = mesh
        .faces
        .iter()
        .map(|f| [mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]])
        .collect();
    let bvh = TriBvh::build(tris);
    let pullback = 4.0 * half_extent.max(1.0);

    let w = resolution;
    let mut normals = vec![None; w * w];
    normals.par_iter_mut().enumerate().for_each(|(idx, out)| {
        let ix = idx % w;
        let iy = idx / w;
        let u = (-1.0 + 2.0 * (ix as f64 + 0.5) / w as f64) * half_extent;
        let v = (1.0 - 2.0 * (iy as f64 + 0.5) / w as f64) * half_extent;
        let origin = right * u + up_cam * v - dir * pullback;
        if let Some((_, tri)) = bvh.ray_hit(origin, dir, 1e-9) {
            let t = &bvh.triangles()[tri];
            let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
            let norm = n.norm();
            if norm > 0.0 {
                *out = Some(n / norm);
            }
        }
    });
    Ok(NormalMap { width: w, height: w, normals })
}

/// The 8 viewpoints: vertices of a side-2 cube, cameras looking at the
/// origin.
fn cube_view_dirs() -> [Vec3; 8] {
    let mut dirs = [Vec3::zeros(); 8];
    let mut i = 0;
    for &x in &[-1.0, 1.0] {
        for &y in &[-1.0, 1.0] {
            for &z in &[-1.0, 1.0] {
                dirs[i] = -Vec3::new(x, y, z).normalize();
                i += 1;
            }
        }
    }
    dirs
}

/// Average pixelwise cosine similarity of rendered normal maps over the 8
/// cube-vertex viewpoints; pixels must be hit in both maps to count.
pub fn normal_consistency(
    a: &TriMesh,
    b: &TriMesh,
    resolution: usize,
) -> Result<f64, LossError> {
    if a.faces.is_empty() || b.faces.is_empty() {
        return Err(LossError::EmptyMesh);
    }
    let radius = |m: &TriMesh| {
        m.vertices
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max)
    };
    let half_extent = 1.1 * radius(a).max(radius(b)).max(1e-6);
    let up = Vec3::new(0.0, 0.0, 1.0);
    let mut per_view = Vec::new();
    for dir in cube_view_dirs() {
        // Cube corners are never parallel to z, so a fixed up vector works.
        let na = render_normal_map(a, dir, up, half_extent, resolution)?;
        let nb = render_normal_map(b, dir, up, half_extent, resolution)?;
        let mut sum = 0.0;
        let mut count = 0usize;
        for (pa, pb) in na.normals.iter().zip(&nb.normals) {
            if let (Some(va), Some(vb)) = (pa, pb) {
                sum += va.dot(vb);
                count += 1;
            }
        }
        if count > 0 {
            per_view.push(sum / count as f64);
        }
    }
    if per_view.is_empty() {
        return Err(LossError::NoOverlap);
    }
    Ok(per_view.iter().sum::<f64>() / per_view.len() as f64)
}

/// PPM (P6) encoding of a normal map, `rgb = (n + 1) / 2`; background black.
pub fn write_ppm_normal_map<W: Write>(map: &NormalMap, w: &mut W) -> std::io::Result<()> {
    write!(w, "P6\n{} {}\n255\n", map.width, map.height)?;
    let mut bytes = Vec::with_capacity(map.normals.len() * 3);
    for n in &map.normals {
        match n {
            Some(v) => {
                for k in 0..3 {
                    bytes.push(((v[k] + 1.0) * 0.5 * 255.0).round().clamp(0.0, 255.0) as u8);
                }
            }
            None => bytes.extend_from_slice(&[0, 0, 0]),
        }
    }
    w.write_all(&bytes)
}
