//! Mesh serialization: a self-describing ASCII format for round-tripping and
//! a legacy-VTK ASCII export for external viewers.
//!
//! The native format is line oriented:
//!
//! ```text
//! elastopb-mesh 1
//! h <fine spacing>
//! bbox <lo x y z> <hi x y z>
//! vertices <n>
//! <x> <y> <z>          (n lines)
//! cells <n>
//! <v0> <v1> <v2> <v3> <region>    (n lines, region in {MF, MR, SOLVENT})
//! faces <n>
//! <v0> <v1> <v2> <tag> <cell_in> <cell_out|->   (n lines)
//! ```

use super::{BoundaryFace, FaceTag, Mesh, Region};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

const MAGIC: &str = "elastopb-mesh 1";

fn region_name(r: Region) -> &'static str {
    match r {
        Region::Mf => "MF",
        Region::Mr => "MR",
        Region::Solvent => "SOLVENT",
    }
}

fn parse_region(s: &str, line: usize) -> Result<Region> {
    match s {
        "MF" => Ok(Region::Mf),
        "MR" => Ok(Region::Mr),
        "SOLVENT" => Ok(Region::Solvent),
        _ => Err(Error::Parse {
            line,
            message: format!("unknown region tag '{s}'"),
        }),
    }
}

fn tag_name(t: FaceTag) -> &'static str {
    match t {
        FaceTag::GammaF => "GAMMA_F",
        FaceTag::GammaF0 => "GAMMA_F0",
        FaceTag::GammaR => "GAMMA_R",
        FaceTag::Outer => "OUTER",
    }
}

fn parse_tag(s: &str, line: usize) -> Result<FaceTag> {
    match s {
        "GAMMA_F" => Ok(FaceTag::GammaF),
        "GAMMA_F0" => Ok(FaceTag::GammaF0),
        "GAMMA_R" => Ok(FaceTag::GammaR),
        "OUTER" => Ok(FaceTag::Outer),
        _ => Err(Error::Parse {
            line,
            message: format!("unknown face tag '{s}'"),
        }),
    }
}

pub fn write_mesh_ascii(mesh: &Mesh, path: &Path) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "h {:.17e}", mesh.h).unwrap();
    let (lo, hi) = mesh.bbox;
    writeln!(
        s,
        "bbox {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
        lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]
    )
    .unwrap();
    writeln!(s, "vertices {}", mesh.vertices.len()).unwrap();
    for v in &mesh.vertices {
        writeln!(s, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2]).unwrap();
    }
    writeln!(s, "cells {}", mesh.cells.len()).unwrap();
    for (cell, &region) in mesh.cells.iter().zip(&mesh.cell_region) {
        writeln!(
            s,
            "{} {} {} {} {}",
            cell[0],
            cell[1],
            cell[2],
            cell[3],
            region_name(region)
        )
        .unwrap();
    }
    writeln!(s, "faces {}", mesh.boundary_faces.len()).unwrap();
    for f in &mesh.boundary_faces {
        let out = f
            .cell_out
            .map(|c| c.to_string())
            .unwrap_or_else(|| "-".into());
        writeln!(
            s,
            "{} {} {} {} {} {}",
            f.verts[0],
            f.verts[1],
            f.verts[2],
            tag_name(f.tag),
            f.cell_in,
            out
        )
        .unwrap();
    }
    std::fs::File::create(path)?.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_mesh_ascii(path: &Path) -> Result<Mesh> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    read_mesh(reader)
}

fn read_mesh<R: Read>(reader: BufReader<R>) -> Result<Mesh> {
    let mut lines = reader.lines().enumerate();
    let mut next = |expect: &str| -> Result<(usize, String)> {
        for (i, line) in lines.by_ref() {
            let line = line?;
            let t = line.trim();
            if !t.is_empty() {
                return Ok((i + 1, t.to_string()));
            }
        }
        Err(Error::Parse {
            line: 0,
            message: format!("unexpected end of file, expected {expect}"),
        })
    };

    let (ln, magic) = next("header")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            line: ln,
            message: format!("bad header '{magic}'"),
        });
    }

    let parse_f64 = |tok: &str, ln: usize| -> Result<f64> {
        tok.parse().map_err(|_| Error::Parse {
            line: ln,
            message: format!("bad number '{tok}'"),
        })
    };
    let parse_usize = |tok: &str, ln: usize| -> Result<usize> {
        tok.parse().map_err(|_| Error::Parse {
            line: ln,
            message: format!("bad index '{tok}'"),
        })
    };
    let keyword_count = |line: &str, key: &str, ln: usize| -> Result<usize> {
        let mut it = line.split_whitespace();
        match (it.next(), it.next()) {
            (Some(k), Some(n)) if k == key => parse_usize(n, ln),
            _ => Err(Error::Parse {
                line: ln,
                message: format!("expected '{key} <count>', got '{line}'"),
            }),
        }
    };

    let (ln, hl) = next("h")?;
    let h = match hl.strip_prefix("h ") {
        Some(rest) => parse_f64(rest.trim(), ln)?,
        None => {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected 'h <value>', got '{hl}'"),
            })
        }
    };

    let (ln, bl) = next("bbox")?;
    let toks: Vec<&str> = bl.split_whitespace().collect();
    if toks.len() != 7 || toks[0] != "bbox" {
        return Err(Error::Parse {
            line: ln,
            message: "expected 'bbox <6 floats>'".into(),
        });
    }
    let mut bb = [0.0; 6];
    for (slot, tok) in bb.iter_mut().zip(&toks[1..]) {
        *slot = parse_f64(tok, ln)?;
    }
    let bbox = ([bb[0], bb[1], bb[2]], [bb[3], bb[4], bb[5]]);

    let (ln, vl) = next("vertices")?;
    let nv = keyword_count(&vl, "vertices", ln)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, line) = next("vertex")?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::Parse {
                line: ln,
                message: "vertex line needs 3 coordinates".into(),
            });
        }
        vertices.push([
            parse_f64(toks[0], ln)?,
            parse_f64(toks[1], ln)?,
            parse_f64(toks[2], ln)?,
        ]);
    }

    let (ln, cl) = next("cells")?;
    let nc = keyword_count(&cl, "cells", ln)?;
    let mut cells = Vec::with_capacity(nc);
    let mut cell_region = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, line) = next("cell")?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(Error::Parse {
                line: ln,
                message: "cell line needs 4 vertex indices and a region".into(),
            });
        }
        let mut cell = [0usize; 4];
        for (slot, tok) in cell.iter_mut().zip(&toks[..4]) {
            *slot = parse_usize(tok, ln)?;
            if *slot >= nv {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("vertex index {} out of range", slot),
                });
            }
        }
        cells.push(cell);
        cell_region.push(parse_region(toks[4], ln)?);
    }

    let (ln, fl) = next("faces")?;
    let nf = keyword_count(&fl, "faces", ln)?;
    let mut boundary_faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, line) = next("face")?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 6 {
            return Err(Error::Parse {
                line: ln,
                message: "face line needs 3 vertices, tag, cell_in, cell_out".into(),
            });
        }
        let mut verts = [0usize; 3];
        for (slot, tok) in verts.iter_mut().zip(&toks[..3]) {
            *slot = parse_usize(tok, ln)?;
        }
        let tag = parse_tag(toks[3], ln)?;
        let cell_in = parse_usize(toks[4], ln)?;
        let cell_out = if toks[5] == "-" {
            None
        } else {
            Some(parse_usize(toks[5], ln)?)
        };
        boundary_faces.push(BoundaryFace {
            verts,
            tag,
            cell_in,
            cell_out,
        });
    }

    Ok(Mesh {
        vertices,
        cells,
        cell_region,
        boundary_faces,
        h,
        bbox,
    })
}

/// Legacy-VTK ASCII export with region ids as cell data; optional nodal
/// scalar and vector fields are appended as point data.
pub fn export_vtk(
    mesh: &Mesh,
    path: &Path,
    scalars: &[(&str, &[f64])],
    vectors: &[(&str, &[[f64; 3]])],
) -> Result<()> {
    for (name, f) in scalars {
        if f.len() != mesh.n_vertices() {
            return Err(Error::LayoutMismatch(format!(
                "scalar field '{name}' has {} values for {} vertices",
                f.len(),
                mesh.n_vertices()
            )));
        }
    }
    for (name, f) in vectors {
        if f.len() != mesh.n_vertices() {
            return Err(Error::LayoutMismatch(format!(
                "vector field '{name}' has {} values for {} vertices",
                f.len(),
                mesh.n_vertices()
            )));
        }
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 2.0\n");
    s.push_str("elastopb mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {} double", mesh.n_vertices()).unwrap();
    for v in &mesh.vertices {
        writeln!(s, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2]).unwrap();
    }
    writeln!(s, "CELLS {} {}", mesh.n_cells(), 5 * mesh.n_cells()).unwrap();
    for c in &mesh.cells {
        writeln!(s, "4 {} {} {} {}", c[0], c[1], c[2], c[3]).unwrap();
    }
    writeln!(s, "CELL_TYPES {}", mesh.n_cells()).unwrap();
    for _ in 0..mesh.n_cells() {
        s.push_str("10\n"); // VTK_TETRA
    }
    writeln!(s, "CELL_DATA {}", mesh.n_cells()).unwrap();
    s.push_str("SCALARS region int 1\nLOOKUP_TABLE default\n");
    for &r in &mesh.cell_region {
        let id = match r {
            Region::Mf => 1,
            Region::Mr => 2,
            Region::Solvent => 0,
        };
        writeln!(s, "{id}").unwrap();
    }
    if !scalars.is_empty() || !vectors.is_empty() {
        writeln!(s, "POINT_DATA {}", mesh.n_vertices()).unwrap();
        for (name, f) in scalars {
            writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
            for v in *f {
                writeln!(s, "{v:.17e}").unwrap();
            }
        }
        for (name, f) in vectors {
            writeln!(s, "VECTORS {name} double").unwrap();
            for v in *f {
                writeln!(s, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2]).unwrap();
            }
        }
    }
    std::fs::File::create(path)?.write_all(s.as_bytes())?;
    Ok(())
}

/// Legacy-VTK export with one scalar value per cell.
pub fn export_vtk_cell_scalar(
    mesh: &Mesh,
    path: &Path,
    name: &str,
    values: &[f64],
) -> Result<()> {
    if values.len() != mesh.n_cells() {
        return Err(Error::LayoutMismatch(format!(
            "cell field '{name}' has {} values for {} cells",
            values.len(),
            mesh.n_cells()
        )));
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 2.0\n");
    s.push_str("elastopb cell data\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {} double", mesh.n_vertices()).unwrap();
    for v in &mesh.vertices {
        writeln!(s, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2]).unwrap();
    }
    writeln!(s, "CELLS {} {}", mesh.n_cells(), 5 * mesh.n_cells()).unwrap();
    for c in &mesh.cells {
        writeln!(s, "4 {} {} {} {}", c[0], c[1], c[2], c[3]).unwrap();
    }
    writeln!(s, "CELL_TYPES {}", mesh.n_cells()).unwrap();
    for _ in 0..mesh.n_cells() {
        s.push_str("10\n");
    }
    writeln!(s, "CELL_DATA {}", mesh.n_cells()).unwrap();
    writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
    for v in values {
        writeln!(s, "{v:.17e}").unwrap();
    }
    std::fs::File::create(path)?.write_all(s.as_bytes())?;
    Ok(())
}

/// Legacy-VTK export of selected boundary faces as triangles with one vector
/// per face (e.g. surface forces).
pub fn export_vtk_surface(
    mesh: &Mesh,
    path: &Path,
    name: &str,
    faces: &[(usize, [f64; 3])],
) -> Result<()> {
    for (f, _) in faces {
        if *f >= mesh.boundary_faces.len() {
            return Err(Error::LayoutMismatch(format!(
                "face index {f} out of range ({} boundary faces)",
                mesh.boundary_faces.len()
            )));
        }
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 2.0\n");
    s.push_str("elastopb surface data\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {} double", mesh.n_vertices()).unwrap();
    for v in &mesh.vertices {
        writeln!(s, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2]).unwrap();
    }
    writeln!(s, "CELLS {} {}", faces.len(), 4 * faces.len()).unwrap();
    for (f, _) in faces {
        let [a, b, c] = mesh.boundary_faces[*f].verts;
        writeln!(s, "3 {a} {b} {c}").unwrap();
    }
    writeln!(s, "CELL_TYPES {}", faces.len()).unwrap();
    for _ in 0..faces.len() {
        s.push_str("5\n"); // VTK_TRIANGLE
    }
    writeln!(s, "CELL_DATA {}", faces.len()).unwrap();
    writeln!(s, "VECTORS {name} double").unwrap();
    for (_, v) in faces {
        writeln!(s, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2]).unwrap();
    }
    std::fs::File::create(path)?.write_all(s.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_ball_in_box;

    #[test]
    fn mesh_roundtrip_exact() {
        let mesh = build_ball_in_box([0.0; 3], 1.0, 4.0, 0.5, Region::Mf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mesh");
        write_mesh_ascii(&mesh, &path).unwrap();
        let back = read_mesh_ascii(&path).unwrap();
        assert_eq!(mesh.vertices, back.vertices);
        assert_eq!(mesh.cells, back.cells);
        assert_eq!(mesh.cell_region, back.cell_region);
        assert_eq!(mesh.boundary_faces.len(), back.boundary_faces.len());
        for (a, b) in mesh.boundary_faces.iter().zip(&back.boundary_faces) {
            assert_eq!(a.verts, b.verts);
            assert_eq!(a.tag, b.tag);
            assert_eq!(a.cell_in, b.cell_in);
            assert_eq!(a.cell_out, b.cell_out);
        }
        assert_eq!(mesh.h, back.h);
        assert_eq!(mesh.bbox, back.bbox);
    }

    #[test]
    fn bad_header_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mesh");
        std::fs::write(&path, "not a mesh\n").unwrap();
        match read_mesh_ascii(&path) {
            Err(Error::Parse { .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn vtk_export_well_formed() {
        let mesh = build_ball_in_box([0.0; 3], 1.0, 4.0, 0.5, Region::Mf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vtk");
        let phi: Vec<f64> = (0..mesh.n_vertices()).map(|i| i as f64).collect();
        let u: Vec<[f64; 3]> = vec![[0.0; 3]; mesh.n_vertices()];
        export_vtk(&mesh, &path, &[("phi", &phi)], &[("u", &u)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 2.0"));
        assert!(text.contains(&format!("POINTS {} double", mesh.n_vertices())));
        assert!(text.contains("SCALARS phi double 1"));
        assert!(text.contains("VECTORS u double"));
    }

    #[test]
    fn vtk_rejects_mismatched_field() {
        let mesh = build_ball_in_box([0.0; 3], 1.0, 4.0, 0.5, Region::Mf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vtk");
        let short = vec![1.0; 3];
        assert!(export_vtk(&mesh, &path, &[("phi", &short)], &[]).is_err());
    }
}
