//! Thin-shell support surface: unsigned distance queries against a fixed
//! triangle soup.

use crate::bvh::TriBvh;
use crate::field::Vec3;
use crate::mesher::TriMesh;

/// Immutable triangle surface shared by thin-shell fields.
#[derive(Debug)]
pub struct ShellSurface {
    bvh: TriBvh,
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl ShellSurface {
    pub fn new(mesh: &TriMesh) -> Self {
        let tris = mesh
            .faces
            .iter()
            .map(|f| [mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]])
            .collect();
        Self {
            bvh: TriBvh::build(tris),
            vertices: mesh.vertices.clone(),
            faces: mesh.faces.clone(),
        }
    }

    /// Unsigned distance from `x` to the surface.
    pub fn distance(&self, x: Vec3) -> f64 {
        self.bvh.closest(x).0
    }

    /// Distance and the closest surface point.
    pub fn closest(&self, x: Vec3) -> (f64, Vec3) {
        self.bvh.closest(x)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }
}
