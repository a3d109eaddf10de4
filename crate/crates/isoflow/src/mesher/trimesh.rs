//! Triangle mesh with per-vertex extraction provenance.

use crate::field::Vec3;
use std::collections::HashMap;
use thiserror::Error;

/// Which grid edge produced a vertex, and where along it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexProvenance {
    /// Canonical grid-edge id: `owning_point_linear_index * 3 + axis`.
    pub edge_id: u64,
    /// Interpolation parameter `x = s_i / (s_i - s_j)`, measured from the
    /// edge endpoint with the nonnegative signed value.
    pub x: f64,
    /// True when the nonnegative endpoint is the edge's lower grid corner.
    pub positive_at_min: bool,
}

#[derive(Debug, Error)]
pub enum MeshDefect {
    #[error("face {face} references vertex {vertex} out of range")]
    IndexOutOfRange { face: usize, vertex: usize },
    #[error("face {0} repeats a vertex index")]
    DegenerateFace(usize),
}

/// Explicit surface: vertices, triangle faces, optional provenance.
#[derive(Debug, Clone, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Aligned with `vertices` when the mesh came out of marching cubes;
    /// empty for meshes loaded from files.
    pub provenance: Vec<VertexProvenance>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        Self { vertices, faces, provenance: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), MeshDefect> {
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                if v >= self.vertices.len() {
                    return Err(MeshDefect::IndexOutOfRange { face: fi, vertex: v });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshDefect::DegenerateFace(fi));
            }
        }
        Ok(())
    }

    /// Undirected edge -> number of incident faces.
    pub fn edge_use_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = if a < b { (a, b) } else { (b, a) };
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Closed 2-manifold test: every edge borders exactly two faces.
    pub fn is_watertight(&self) -> bool {
        !self.faces.is_empty() && self.edge_use_counts().values().all(|&c| c == 2)
    }

    /// V - E + F over distinct undirected edges.
    pub fn euler_characteristic(&self) -> i64 {
        let e = self.edge_use_counts().len() as i64;
        self.vertices.len() as i64 - e + self.faces.len() as i64
    }

    /// Number of edge-connected face components.
    pub fn connected_components(&self) -> usize {
        if self.faces.is_empty() {
            return 0;
        }
        let mut parent: Vec<usize> = (0..self.faces.len()).collect();
        fn find(parent: &mut Vec<usize>, mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = if a < b { (a, b) } else { (b, a) };
                match edge_face.entry(key) {
                    std::collections::hash_map::Entry::Occupied(o) => {
                        let other = *o.get();
                        let (ra, rb) = (find(&mut parent, fi), find(&mut parent, other));
                        if ra != rb {
                            parent[ra] = rb;
                        }
                    }
                    std::collections::hash_map::Entry::Vacant(v) => {
                        v.insert(fi);
                    }
                }
            }
        }
        let mut roots: Vec<usize> =
            (0..self.faces.len()).map(|f| find(&mut parent, f)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    /// Half the cross product of the face's edge vectors; its norm is the
    /// area and its direction the (winding-defined) normal.
    pub fn face_area_vector(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f];
        (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a])) * 0.5
    }

    pub fn face_area(&self, f: usize) -> f64 {
        self.face_area_vector(f).norm()
    }

    /// Unit face normal; zero vector for degenerate faces.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let a = self.face_area_vector(f);
        let n = a.norm();
        if n == 0.0 {
            Vec3::zeros()
        } else {
            a / n
        }
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f];
        (self.vertices[a] + self.vertices[b] + self.vertices[c]) / 3.0
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        if self.vertices.is_empty() {
            return None;
        }
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            min = min.inf(v);
            max = max.sup(v);
        }
        Some((min, max))
    }
}
