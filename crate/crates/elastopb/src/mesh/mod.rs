//! Tagged simplicial tetrahedral meshes of the computational box: the
//! flexible molecule region, optional rigid molecule region, and solvent,
//! with explicit interface faces so that dielectric jump conditions can be
//! imposed as face integrals.

mod builder;
mod io;

pub use builder::{build_ball_in_box, build_balls_in_box, SphereSpec};
pub use io::{
    export_vtk, export_vtk_cell_scalar, export_vtk_surface, read_mesh_ascii, write_mesh_ascii,
};

use crate::error::{Error, Result};
use crate::la::{self, Vec3};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Flexible molecule.
    Mf,
    /// Rigid molecule.
    Mr,
    Solvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceTag {
    GammaF,
    /// Dirichlet subset of the flexible-molecule surface.
    GammaF0,
    GammaR,
    Outer,
}

impl FaceTag {
    /// GammaF0 faces are part of the flexible-molecule surface.
    pub fn is_gamma_f(self) -> bool {
        matches!(self, FaceTag::GammaF | FaceTag::GammaF0)
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub verts: [usize; 3],
    pub tag: FaceTag,
    /// Adjacent cell on the molecule side (interface) or the single adjacent
    /// cell (outer boundary).
    pub cell_in: usize,
    /// Adjacent cell on the solvent side; `None` on the outer boundary.
    pub cell_out: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    /// Vertex coordinates in Angstrom.
    pub vertices: Vec<Vec3>,
    pub cells: Vec<[usize; 4]>,
    pub cell_region: Vec<Region>,
    pub boundary_faces: Vec<BoundaryFace>,
    /// Target edge length in the fine zone (Angstrom).
    pub h: f64,
    /// Axis-aligned box bounds.
    pub bbox: (Vec3, Vec3),
}

pub fn tet_volume(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> f64 {
    la::dot(la::cross(la::sub(b, a), la::sub(c, a)), la::sub(d, a)) / 6.0
}

pub fn triangle_area_normal(a: Vec3, b: Vec3, c: Vec3) -> (f64, Vec3) {
    let n = la::cross(la::sub(b, a), la::sub(c, a));
    let len = la::norm(n);
    (0.5 * len, la::scale(n, 1.0 / len))
}

impl Mesh {
    pub fn cell_volume(&self, c: usize) -> f64 {
        let [a, b, cc, d] = self.cells[c];
        tet_volume(
            self.vertices[a],
            self.vertices[b],
            self.vertices[cc],
            self.vertices[d],
        )
    }

    pub fn cell_centroid(&self, c: usize) -> Vec3 {
        let [a, b, cc, d] = self.cells[c];
        let mut s = [0.0; 3];
        for &v in &[a, b, cc, d] {
            s = la::add(s, self.vertices[v]);
        }
        la::scale(s, 0.25)
    }

    pub fn face_centroid(&self, verts: &[usize; 3]) -> Vec3 {
        let mut s = [0.0; 3];
        for &v in verts {
            s = la::add(s, self.vertices[v]);
        }
        la::scale(s, 1.0 / 3.0)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Vertices incident to at least one cell of `region`.
    pub fn region_vertex_mask(&self, region: Region) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for (c, cell) in self.cells.iter().enumerate() {
            if self.cell_region[c] == region {
                for &v in cell {
                    mask[v] = true;
                }
            }
        }
        mask
    }

    /// Vertices on faces with the given tag (GammaF includes GammaF0).
    pub fn face_vertex_mask(&self, tag: FaceTag) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for f in &self.boundary_faces {
            let hit = if tag == FaceTag::GammaF {
                f.tag.is_gamma_f()
            } else {
                f.tag == tag
            };
            if hit {
                for &v in &f.verts {
                    mask[v] = true;
                }
            }
        }
        mask
    }

    /// Volume-weighted centroid of all cells in a region.
    pub fn region_centroid(&self, region: Region) -> Option<Vec3> {
        let mut acc = [0.0; 3];
        let mut vol = 0.0;
        for c in 0..self.n_cells() {
            if self.cell_region[c] == region {
                let v = self.cell_volume(c);
                acc = la::add(acc, la::scale(self.cell_centroid(c), v));
                vol += v;
            }
        }
        if vol > 0.0 {
            Some(la::scale(acc, 1.0 / vol))
        } else {
            None
        }
    }

    pub fn region_volume(&self, region: Region) -> f64 {
        (0..self.n_cells())
            .filter(|&c| self.cell_region[c] == region)
            .map(|c| self.cell_volume(c))
            .sum()
    }

    /// Retag flexible-surface faces within a spherical cap (axis `dir` from
    /// `center`, half-opening `angle` radians) as the Dirichlet patch.
    pub fn mark_dirichlet_cap(&mut self, center: Vec3, dir: Vec3, angle: f64) -> usize {
        let dir = la::normalize(dir);
        let cos_a = angle.cos();
        let mut count = 0;
        for i in 0..self.boundary_faces.len() {
            if self.boundary_faces[i].tag == FaceTag::GammaF {
                let c = self.face_centroid(&self.boundary_faces[i].verts);
                let r = la::normalize(la::sub(c, center));
                if la::dot(r, dir) >= cos_a {
                    self.boundary_faces[i].tag = FaceTag::GammaF0;
                    count += 1;
                }
            }
        }
        count
    }

    /// Locate the cell containing `p` (barycentric test with tolerance).
    pub fn find_cell(&self, p: Vec3) -> Option<usize> {
        for c in 0..self.n_cells() {
            if self.barycentric(c, p).iter().all(|&l| l >= -1e-10) {
                return Some(c);
            }
        }
        None
    }

    /// Barycentric coordinates of `p` in cell `c`.
    pub fn barycentric(&self, c: usize, p: Vec3) -> [f64; 4] {
        let [a, b, cc, d] = self.cells[c];
        let (va, vb, vc, vd) = (
            self.vertices[a],
            self.vertices[b],
            self.vertices[cc],
            self.vertices[d],
        );
        let vol = tet_volume(va, vb, vc, vd);
        [
            tet_volume(p, vb, vc, vd) / vol,
            tet_volume(va, p, vc, vd) / vol,
            tet_volume(va, vb, p, vd) / vol,
            tet_volume(va, vb, vc, p) / vol,
        ]
    }
}

/// Interface faces with outward (molecule -> solvent) normals.
#[derive(Debug, Clone)]
pub struct InterfacePatch {
    pub faces: Vec<PatchFace>,
    pub total_area: f64,
}

#[derive(Debug, Clone)]
pub struct PatchFace {
    pub verts: [usize; 3],
    pub normal: Vec3,
    pub area: f64,
    pub cell_in: usize,
    pub cell_out: usize,
    pub tag: FaceTag,
}

/// Extract an interface patch; `GammaF` includes the `GammaF0` subset.
/// An absent tag yields an empty patch, not an error.
pub fn extract_interface(mesh: &Mesh, tag: FaceTag) -> Result<InterfacePatch> {
    let mut faces = Vec::new();
    let mut total_area = 0.0;
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for f in &mesh.boundary_faces {
        let hit = if tag == FaceTag::GammaF {
            f.tag.is_gamma_f()
        } else {
            f.tag == tag
        };
        if !hit {
            continue;
        }
        let cell_out = f.cell_out.ok_or_else(|| {
            Error::Topology(format!("face {:?} has no solvent-side cell", f.verts))
        })?;
        let [a, b, c] = f.verts;
        let (area, mut normal) =
            triangle_area_normal(mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        // Orient away from the molecule-side cell.
        let to_face = la::sub(mesh.face_centroid(&f.verts), mesh.cell_centroid(f.cell_in));
        if la::dot(normal, to_face) < 0.0 {
            normal = la::scale(normal, -1.0);
        }
        for (i, j) in [(a, b), (b, c), (c, a)] {
            let key = (i.min(j), i.max(j));
            *edge_count.entry(key).or_insert(0) += 1;
        }
        total_area += area;
        faces.push(PatchFace {
            verts: f.verts,
            normal,
            area,
            cell_in: f.cell_in,
            cell_out,
            tag: f.tag,
        });
    }
    // Watertightness check only makes sense for complete surfaces, not the
    // GammaF0 cap subset taken alone.
    if tag != FaceTag::GammaF0 {
        for (edge, count) in &edge_count {
            if *count != 2 {
                return Err(Error::Topology(format!(
                    "interface edge {edge:?} shared by {count} faces (expected 2)"
                )));
            }
        }
    }
    Ok(InterfacePatch { faces, total_area })
}

#[derive(Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Report-only mesh validation: positive volumes, watertight interfaces,
/// region adjacency, outer faces on the box, and the Debye-length clearance
/// between molecular surfaces and the outer boundary.
pub fn validate_mesh(mesh: &Mesh, debye_length: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    for c in 0..mesh.n_cells() {
        let v = mesh.cell_volume(c);
        if v <= 0.0 {
            report
                .violations
                .push(format!("cell {c} has non-positive volume {v:.3e}"));
        }
    }
    for tag in [FaceTag::GammaF, FaceTag::GammaR] {
        if let Err(e) = extract_interface(mesh, tag) {
            report.violations.push(format!("{tag:?}: {e}"));
        }
    }
    // Molecules must not touch.
    let mut face_owner: HashMap<[usize; 3], (usize, Region)> = HashMap::new();
    for c in 0..mesh.n_cells() {
        let [a, b, cc, d] = mesh.cells[c];
        for f in [[a, b, cc], [a, b, d], [a, cc, d], [b, cc, d]] {
            let mut key = f;
            key.sort_unstable();
            if let Some(&(other, region)) = face_owner.get(&key) {
                let r = mesh.cell_region[c];
                if (r == Region::Mf && region == Region::Mr)
                    || (r == Region::Mr && region == Region::Mf)
                {
                    report
                        .violations
                        .push(format!("MF cell and MR cell share a face ({c} / {other})"));
                }
            } else {
                face_owner.insert(key, (c, mesh.cell_region[c]));
            }
        }
    }
    // Outer faces must lie on the box boundary.
    let (lo, hi) = mesh.bbox;
    let tol = 1e-9 * (hi[0] - lo[0]).abs().max(1.0);
    for f in &mesh.boundary_faces {
        if f.tag == FaceTag::Outer {
            let on_box = (0..3).any(|axis| {
                f.verts.iter().all(|&v| {
                    (mesh.vertices[v][axis] - lo[axis]).abs() < tol
                        || (mesh.vertices[v][axis] - hi[axis]).abs() < tol
                })
            });
            if !on_box {
                report
                    .violations
                    .push(format!("outer face {:?} not on box boundary", f.verts));
            }
        }
    }
    // Debye clearance (heuristic threshold: two Debye lengths).
    if debye_length > 0.0 {
        let mut min_dist = f64::INFINITY;
        for f in &mesh.boundary_faces {
            if f.tag.is_gamma_f() || f.tag == FaceTag::GammaR {
                let c = mesh.face_centroid(&f.verts);
                for axis in 0..3 {
                    min_dist = min_dist.min((c[axis] - lo[axis]).abs());
                    min_dist = min_dist.min((hi[axis] - c[axis]).abs());
                }
            }
        }
        if min_dist < 2.0 * debye_length {
            report.warnings.push(format!(
                "molecular surface within {min_dist:.3} A of outer boundary \
                 (< 2 Debye lengths = {:.3} A); boundary datum may be inaccurate",
                2.0 * debye_length
            ));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Single positively oriented reference tet tagged as a molecule with all
    /// four faces as interface faces against a fictitious solvent cell.
    pub fn single_tet_mesh() -> Mesh {
        let vertices = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            // far vertex forming a fake solvent cell
            [1.0, 1.0, 1.0],
        ];
        let cells = vec![[0, 1, 2, 3], [1, 2, 3, 4]];
        let boundary_faces = vec![
            BoundaryFace {
                verts: [0, 1, 2],
                tag: FaceTag::GammaF,
                cell_in: 0,
                cell_out: Some(1),
            },
            BoundaryFace {
                verts: [0, 1, 3],
                tag: FaceTag::GammaF,
                cell_in: 0,
                cell_out: Some(1),
            },
            BoundaryFace {
                verts: [0, 2, 3],
                tag: FaceTag::GammaF,
                cell_in: 0,
                cell_out: Some(1),
            },
            BoundaryFace {
                verts: [1, 2, 3],
                tag: FaceTag::GammaF,
                cell_in: 0,
                cell_out: Some(1),
            },
        ];
        Mesh {
            vertices,
            cells,
            cell_region: vec![Region::Mf, Region::Solvent],
            boundary_faces,
            h: 1.0,
            bbox: ([0.0; 3], [1.0; 3]),
        }
    }

    #[test]
    fn single_tet_patch_outward_normals() {
        let mesh = single_tet_mesh();
        let patch = extract_interface(&mesh, FaceTag::GammaF).unwrap();
        assert_eq!(patch.faces.len(), 4);
        let centroid = mesh.region_centroid(Region::Mf).unwrap();
        for f in &patch.faces {
            let to_face = la::sub(mesh.face_centroid(&f.verts), centroid);
            assert!(la::dot(f.normal, to_face) > 0.0, "normal not outward");
            assert!((la::norm(f.normal) - 1.0).abs() < 1e-12);
        }
        // area: 3 unit right triangles + sqrt(3)/2 hypotenuse face
        let expected = 1.5 + 0.75f64.sqrt();
        assert!((patch.total_area - expected).abs() < 1e-12);
    }

    #[test]
    fn missing_tag_yields_empty_patch() {
        let mesh = single_tet_mesh();
        let patch = extract_interface(&mesh, FaceTag::GammaR).unwrap();
        assert!(patch.faces.is_empty());
        assert_eq!(patch.total_area, 0.0);
    }

    #[test]
    fn negative_volume_cell_flagged() {
        let mut mesh = single_tet_mesh();
        mesh.cells[0] = [1, 0, 2, 3]; // permuted -> negative volume
        let report = validate_mesh(&mesh, 0.0);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("non-positive volume")));
    }
}
