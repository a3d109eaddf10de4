//! Marching cubes over a sampled grid.
//!
//! Vertices are created on sign-changing grid edges in canonical edge order
//! (point-major, axis-minor), then cells are triangulated from the 256-case
//! table. The canonical ordering makes the output independent of evaluation
//! order and thread count; shared vertices are deduplicated by grid edge id.

use super::tables::{CELL_EDGES, CORNER_OFFSETS, TRI_TABLE};
use super::{MesherError, SampledGrid, TriMesh, VertexProvenance};
use crate::field::FieldFlavor;
use std::collections::HashMap;

/// Extracts the iso-surface of `grid` at `level`.
///
/// Values are canonicalized to "negative inside": `v - level` for signed
/// distances and `level - v` for occupancy, so faces wind consistently with
/// outward normals for both flavors. Grid samples exactly at the level are
/// perturbed by `1e-12 * cell` to avoid the degenerate interpolation case.
pub fn marching_cubes(grid: &SampledGrid, level: f64) -> Result<TriMesh, MesherError> {
    let spec = &grid.spec;
    let n = spec.n;
    let tiny = 1e-12 * spec.min_cell();
    let signed = |idx: usize| -> f64 {
        let v = grid.values[idx];
        let s = match grid.flavor {
            FieldFlavor::SignedDistance => v - level,
            FieldFlavor::Occupancy => level - v,
        };
        if s == 0.0 {
            tiny
        } else {
            s
        }
    };

    // Pass 1: one vertex per sign-changing grid edge, in canonical order.
    let mut vertices = Vec::new();
    let mut provenance = Vec::new();
    let mut edge_vertex: HashMap<u64, usize> = HashMap::new();
    let strides = [1usize, n, n * n];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let p_idx = spec.linear(i, j, k);
                let sp = signed(p_idx);
                for axis in 0..3 {
                    let in_range = match axis {
                        0 => i + 1 < n,
                        1 => j + 1 < n,
                        _ => k + 1 < n,
                    };
                    if !in_range {
                        continue;
                    }
                    let q_idx = p_idx + strides[axis];
                    let sq = signed(q_idx);
                    if (sp < 0.0) == (sq < 0.0) {
                        continue;
                    }
                    if !grid.valid[p_idx] || !grid.valid[q_idx] {
                        return Err(MesherError::BandViolation);
                    }
                    let p_pos = spec.point(i, j, k);
                    let q_pos = match axis {
                        0 => spec.point(i + 1, j, k),
                        1 => spec.point(i, j + 1, k),
                        _ => spec.point(i, j, k + 1),
                    };
                    // Interpolate from the nonnegative end: x = s_i / (s_i - s_j).
                    let (si, sj, gi, gj, positive_at_min) = if sp > 0.0 {
                        (sp, sq, p_pos, q_pos, true)
                    } else {
                        (sq, sp, q_pos, p_pos, false)
                    };
                    let x = si / (si - sj);
                    let pos = gi + x * (gj - gi);
                    let vid = vertices.len();
                    vertices.push(pos);
                    provenance.push(VertexProvenance {
                        edge_id: p_idx as u64 * 3 + axis as u64,
                        x,
                        positive_at_min,
                    });
                    edge_vertex.insert(p_idx as u64 * 3 + axis as u64, vid);
                }
            }
        }
    }
    if vertices.is_empty() {
        return Err(MesherError::EmptySurface);
    }

    // Pass 2: triangulate cells from the case table.
    let mut faces = Vec::new();
    for k in 0..n - 1 {
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let mut case = 0usize;
                for (c, &(dx, dy, dz)) in CORNER_OFFSETS.iter().enumerate() {
                    if signed(spec.linear(i + dx, j + dy, k + dz)) < 0.0 {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRI_TABLE[case];
                let mut t = 0;
                while row[t] >= 0 {
                    let mut tri = [0usize; 3];
                    for (slot, &e) in row[t..t + 3].iter().enumerate() {
                        let (_, _, (dx, dy, dz), axis) = CELL_EDGES[e as usize];
                        let owner = spec.linear(i + dx, j + dy, k + dz);
                        tri[slot] = edge_vertex[&(owner as u64 * 3 + axis as u64)];
                    }
                    // The table winds toward the inside; flip for outward
                    // normals under the negative-inside convention.
                    faces.push([tri[0], tri[2], tri[1]]);
                    t += 3;
                }
            }
        }
    }

    Ok(TriMesh { vertices, faces, provenance })
}
