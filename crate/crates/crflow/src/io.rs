//! File formats: plain-text mesh exchange, legacy-VTK output, CSV ledgers.
//!
//! Mesh exchange format:
//! ```text
//! <n_vertices>
//! x y            (n_vertices lines)
//! <n_cells>
//! i j k          (n_cells lines, 0-based vertex indices)
//! ```
//! Lines starting with `#` and blank lines are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::geometry::Vec2;
use crate::mesh::{build_mesh, Mesh, MeshError};
use crate::spaces::{CRVectorField, ScalarCellField};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {what}")]
    Parse { line: usize, what: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

pub fn read_mesh_ascii(path: &Path) -> Result<Mesh, IoError> {
    let text = fs::read_to_string(path)?;
    parse_mesh_ascii(&text)
}

pub fn parse_mesh_ascii(text: &str) -> Result<Mesh, IoError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| IoError::Parse {
                line: 0,
                what: format!("unexpected end of file, expected {what}"),
            })
    };

    let (ln, l) = next("vertex count")?;
    let nv: usize = l.parse().map_err(|_| IoError::Parse {
        line: ln,
        what: format!("bad vertex count {l:?}"),
    })?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = next("vertex coordinates")?;
        let mut it = l.split_whitespace().map(|t| t.parse::<f64>());
        match (it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y))) => vertices.push(Vec2::new(x, y)),
            _ => {
                return Err(IoError::Parse {
                    line: ln,
                    what: format!("bad vertex line {l:?}"),
                })
            }
        }
    }

    let (ln, l) = next("cell count")?;
    let nc: usize = l.parse().map_err(|_| IoError::Parse {
        line: ln,
        what: format!("bad cell count {l:?}"),
    })?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, l) = next("cell vertex triple")?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| IoError::Parse {
                line: ln,
                what: format!("bad cell line {l:?}"),
            })?;
        if idx.len() != 3 {
            return Err(IoError::Parse {
                line: ln,
                what: format!("expected 3 vertex indices, got {}", idx.len()),
            });
        }
        for &i in &idx {
            if i >= nv {
                return Err(IoError::Parse {
                    line: ln,
                    what: format!("vertex index {i} out of range (n_vertices = {nv})"),
                });
            }
        }
        cells.push([idx[0], idx[1], idx[2]]);
    }

    Ok(build_mesh(vertices, cells)?)
}

pub fn write_mesh_ascii(path: &Path, mesh: &Mesh) -> Result<(), IoError> {
    let mut s = String::new();
    let _ = writeln!(s, "{}", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:.17e} {:.17e}", v.x, v.y);
    }
    let _ = writeln!(s, "{}", mesh.n_cells());
    for c in &mesh.cells {
        let _ = writeln!(s, "{} {} {}", c[0], c[1], c[2]);
    }
    fs::write(path, s)?;
    Ok(())
}

/// Legacy-VTK ASCII unstructured grid. Scalar cell fields are written as
/// CELL_DATA; the CR velocity is written as POINT_DATA on a disconnected
/// triangle soup (each cell keeps its own three points), so the cell-wise
/// affine restriction is sampled exactly at the corners.
pub fn write_vtk(
    path: &Path,
    mesh: &Mesh,
    cell_fields: &[(&str, &ScalarCellField)],
    velocity: Option<&CRVectorField>,
) -> Result<(), IoError> {
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "crflow snapshot");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let nc = mesh.n_cells();
    let _ = writeln!(s, "POINTS {} double", 3 * nc);
    for cell in &mesh.cells {
        for &v in cell {
            let p = mesh.vertices[v];
            let _ = writeln!(s, "{:.17e} {:.17e} 0.0", p.x, p.y);
        }
    }
    let _ = writeln!(s, "CELLS {} {}", nc, 4 * nc);
    for c in 0..nc {
        let _ = writeln!(s, "3 {} {} {}", 3 * c, 3 * c + 1, 3 * c + 2);
    }
    let _ = writeln!(s, "CELL_TYPES {nc}");
    for _ in 0..nc {
        let _ = writeln!(s, "5");
    }
    if !cell_fields.is_empty() {
        let _ = writeln!(s, "CELL_DATA {nc}");
        for (name, field) in cell_fields {
            let _ = writeln!(s, "SCALARS {name} double 1");
            let _ = writeln!(s, "LOOKUP_TABLE default");
            for v in &field.values {
                let _ = writeln!(s, "{v:.17e}");
            }
        }
    }
    if let Some(u) = velocity {
        let _ = writeln!(s, "POINT_DATA {}", 3 * nc);
        let _ = writeln!(s, "VECTORS velocity double");
        for (c, cell) in mesh.cells.iter().enumerate() {
            for &v in cell {
                let val = u.value_in_cell(c, mesh.vertices[v]);
                let _ = writeln!(s, "{:.17e} {:.17e} 0.0", val.x, val.y);
            }
        }
    }
    fs::write(path, s)?;
    Ok(())
}

/// CSV with a header row; all numbers written as full-precision scientific
/// notation so identical inputs produce byte-identical files.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), IoError> {
    let mut s = String::new();
    let _ = writeln!(s, "{}", header.join(","));
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                s.push(',');
            }
            let _ = write!(s, "{v:.17e}");
            first = false;
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}
