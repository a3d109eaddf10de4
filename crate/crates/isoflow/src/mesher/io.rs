//! Mesh and grid file formats: ASCII OBJ in/out, binary PLY out, raw grid
//! dumps with a JSON sidecar.

use super::{SampledGrid, TriMesh};
use serde::Serialize;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Writes `v`/`f` lines. Coordinates use the shortest representation that
/// round-trips the exact f64 value.
pub fn write_obj<W: Write>(mesh: &TriMesh, w: &mut W) -> Result<(), MeshIoError> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

/// Reads `v` and `f` lines; `f` entries may carry `/vt/vn` suffixes and
/// polygons are fan-triangulated. Other line types are ignored.
pub fn read_obj<R: BufRead>(r: R) -> Result<TriMesh, MeshIoError> {
    let mut mesh = TriMesh::default();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut coord = [0.0; 3];
                for c in &mut coord {
                    let tok = it.next().ok_or_else(|| MeshIoError::Parse {
                        line: ln + 1,
                        message: "vertex needs three coordinates".into(),
                    })?;
                    *c = tok.parse().map_err(|_| MeshIoError::Parse {
                        line: ln + 1,
                        message: format!("bad coordinate {tok:?}"),
                    })?;
                }
                mesh.vertices.push(coord.into());
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or(tok);
                    let i: i64 = first.parse().map_err(|_| MeshIoError::Parse {
                        line: ln + 1,
                        message: format!("bad face index {tok:?}"),
                    })?;
                    let resolved = if i > 0 {
                        (i - 1) as usize
                    } else {
                        // Negative indices count from the end.
                        (mesh.vertices.len() as i64 + i) as usize
                    };
                    idx.push(resolved);
                }
                if idx.len() < 3 {
                    return Err(MeshIoError::Parse {
                        line: ln + 1,
                        message: "face needs at least three vertices".into(),
                    });
                }
                for t in 1..idx.len() - 1 {
                    mesh.faces.push([idx[0], idx[t], idx[t + 1]]);
                }
            }
            _ => {}
        }
    }
    mesh.validate().map_err(|e| MeshIoError::Parse { line: 0, message: e.to_string() })?;
    Ok(mesh)
}

/// Binary little-endian PLY with double-precision vertices.
pub fn write_ply<W: Write>(mesh: &TriMesh, w: &mut W) -> Result<(), MeshIoError> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\n\
         element vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    )?;
    for v in &mesh.vertices {
        for k in 0..3 {
            w.write_all(&v[k].to_le_bytes())?;
        }
    }
    for f in &mesh.faces {
        w.write_all(&[3u8])?;
        for &i in f {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GridSidecar {
    n: usize,
    bounds: GridBounds,
}

#[derive(Serialize)]
struct GridBounds {
    min: [f64; 3],
    max: [f64; 3],
}

/// Raw little-endian f64 values (x fastest) plus a JSON sidecar describing
/// the lattice.
pub fn write_grid_dump<W: Write, S: Write>(
    grid: &SampledGrid,
    raw: &mut W,
    sidecar: &mut S,
) -> Result<(), MeshIoError> {
    for v in &grid.values {
        raw.write_all(&v.to_le_bytes())?;
    }
    let doc = GridSidecar {
        n: grid.spec.n,
        bounds: GridBounds { min: grid.spec.min.into(), max: grid.spec.max.into() },
    };
    serde_json::to_writer_pretty(&mut *sidecar, &doc).map_err(std::io::Error::other)?;
    sidecar.write_all(b"\n")?;
    Ok(())
}
