//! Interface-fitted mesh generation for spheres in a box.
//!
//! Pipeline: graded tensor-product grid -> Kuhn subdivision of each hex into
//! six tets -> per sphere, snap near-surface vertices onto the sphere and cut
//! crossing tets along exact segment-sphere intersections -> tag regions by
//! centroid and collect interface/outer faces.
//!
//! Cut quadrilaterals are triangulated by a global min-vertex diagonal rule so
//! neighboring tets agree on the shared face; wedge-shaped cut pieces are
//! tetrahedralized by a Steiner centroid fan, which is conforming for any
//! diagonal choice.

use super::{tet_volume, BoundaryFace, FaceTag, Mesh, Region};
use crate::error::{Error, Result};
use crate::la::{self, Vec3};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy)]
pub struct SphereSpec {
    pub center: Vec3,
    pub radius: f64,
    pub region: Region,
}

/// Mesh a single sphere centered in a cube of half-width `box_half_width`.
pub fn build_ball_in_box(
    center: Vec3,
    radius: f64,
    box_half_width: f64,
    h: f64,
    region: Region,
) -> Result<Mesh> {
    build_balls_in_box(
        &[SphereSpec {
            center,
            radius,
            region,
        }],
        box_half_width,
        h,
    )
}

/// Mesh one or more disjoint spheres in the cube [-W, W]^3.
pub fn build_balls_in_box(spheres: &[SphereSpec], box_half_width: f64, h: f64) -> Result<Mesh> {
    if spheres.is_empty() {
        return Err(Error::Validation("no spheres given".into()));
    }
    for s in spheres {
        if s.radius <= 0.0 {
            return Err(Error::Validation(format!(
                "sphere radius must be positive, got {}",
                s.radius
            )));
        }
        if s.region == Region::Solvent {
            return Err(Error::Validation("sphere region must be MF or MR".into()));
        }
        if box_half_width < 4.0 * s.radius {
            return Err(Error::Validation(format!(
                "box_half_width {} < 4 * radius {} (outer boundary too close for the \
                 Debye-Hueckel datum)",
                box_half_width, s.radius
            )));
        }
        if h > s.radius / 2.0 {
            return Err(Error::Validation(format!(
                "h = {} exceeds radius/2 = {}",
                h,
                s.radius / 2.0
            )));
        }
        for axis in 0..3 {
            if s.center[axis].abs() + s.radius > box_half_width - 2.0 * h {
                return Err(Error::Validation(
                    "sphere too close to the box boundary".into(),
                ));
            }
        }
    }
    for (i, a) in spheres.iter().enumerate() {
        for b in spheres.iter().skip(i + 1) {
            let gap = la::norm(la::sub(a.center, b.center)) - a.radius - b.radius;
            if gap < 2.0 * h {
                return Err(Error::Validation(format!(
                    "spheres too close: surface gap {gap:.3} < 2h"
                )));
            }
        }
    }

    let w = box_half_width;
    let axes: Vec<Vec<f64>> = (0..3)
        .map(|axis| {
            let lo = spheres
                .iter()
                .map(|s| s.center[axis] - s.radius)
                .fold(f64::INFINITY, f64::min)
                - 1.5 * h;
            let hi = spheres
                .iter()
                .map(|s| s.center[axis] + s.radius)
                .fold(f64::NEG_INFINITY, f64::max)
                + 1.5 * h;
            graded_axis(lo.max(-w + 2.0 * h), hi.min(w - 2.0 * h), -w, w, h)
        })
        .collect();

    let (mut vertices, mut cells) = tensor_tets(&axes);
    let mut cell_region: Vec<Region> = vec![Region::Solvent; cells.len()];

    // Vertices on the box boundary are pinned so the outer surface stays flat.
    let pinned: Vec<bool> = vertices
        .iter()
        .map(|v| v.iter().any(|&c| (c.abs() - w).abs() < 1e-12 * w.max(1.0)))
        .collect();

    for s in spheres {
        // Chordal facets of an inscribed triangulation systematically
        // undershoot the ball volume by O(h^2); biasing the vertex radius
        // outward by a fraction of the mean sagitta centers the piecewise
        // linear surface on the true sphere. The offset stays well inside
        // the h^2/radius placement tolerance.
        let s_cut = SphereSpec {
            radius: s.radius + 0.06 * h * h / s.radius,
            ..*s
        };
        snap_to_sphere(&mut vertices, &pinned, &s_cut, 0.35 * h);
        let (new_cells, new_regions) = cut_cells(&mut vertices, &cells, &cell_region, &s_cut)?;
        cells = new_cells;
        cell_region = new_regions;
    }

    for (i, cell) in cells.iter().enumerate() {
        let vol = tet_volume(
            vertices[cell[0]],
            vertices[cell[1]],
            vertices[cell[2]],
            vertices[cell[3]],
        );
        if vol <= 1e-14 * h * h * h {
            return Err(Error::DegenerateCell {
                cell: i,
                volume: vol,
            });
        }
    }

    let boundary_faces = collect_boundary_faces(&vertices, &cells, &cell_region)?;

    Ok(Mesh {
        vertices,
        cells,
        cell_region,
        boundary_faces,
        h,
        bbox: ([-w; 3], [w; 3]),
    })
}

/// 1-D coordinates: uniform spacing `h` on [fine_lo, fine_hi], geometric
/// coarsening (ratio 1.4) out to the box walls.
fn graded_axis(fine_lo: f64, fine_hi: f64, lo: f64, hi: f64, h: f64) -> Vec<f64> {
    let mut coords = Vec::new();
    let n_fine = ((fine_hi - fine_lo) / h).ceil().max(1.0) as usize;
    let h_fine = (fine_hi - fine_lo) / n_fine as f64;
    for i in 0..=n_fine {
        coords.push(fine_lo + i as f64 * h_fine);
    }
    let grow = |start: f64, end: f64| -> Vec<f64> {
        // intervals from start toward end (end may be < start)
        let span = (end - start).abs();
        if span < 1e-12 {
            return Vec::new();
        }
        let mut steps = Vec::new();
        let mut step = h * 1.4;
        let mut total = 0.0;
        while total + step < span {
            steps.push(step);
            total += step;
            step *= 1.4;
        }
        steps.push(span - total);
        // Merge a trailing sliver into the previous step.
        if steps.len() >= 2 && *steps.last().unwrap() < 0.5 * h {
            let last = steps.pop().unwrap();
            *steps.last_mut().unwrap() += last;
        }
        let dir = (end - start).signum();
        let mut pts = Vec::new();
        let mut x = start;
        for s in &steps {
            x += dir * s;
            pts.push(x);
        }
        if let Some(p) = pts.last_mut() {
            *p = end; // exact wall
        }
        pts
    };
    let mut left = grow(fine_lo, lo);
    left.reverse();
    let right = grow(fine_hi, hi);
    let mut all = left;
    all.extend(coords);
    all.extend(right);
    all
}

/// Tensor-product vertices and Kuhn six-tet subdivision of every hex. The
/// Kuhn pattern puts the same main diagonal in every hex, so faces of
/// neighboring hexes are triangulated identically.
fn tensor_tets(axes: &[Vec<f64>]) -> (Vec<Vec3>, Vec<[usize; 4]>) {
    let (nx, ny, nz) = (axes[0].len(), axes[1].len(), axes[2].len());
    let idx = |i: usize, j: usize, k: usize| (i * ny + j) * nz + k;
    let mut vertices = Vec::with_capacity(nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                vertices.push([axes[0][i], axes[1][j], axes[2][k]]);
            }
        }
    }
    // Six tets per hex: paths from corner 000 to corner 111 adding one axis
    // at a time, one tet per permutation of (x, y, z).
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut cells = Vec::with_capacity((nx - 1) * (ny - 1) * (nz - 1) * 6);
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            for k in 0..nz - 1 {
                for perm in PERMS {
                    let mut ofs = [0usize; 3];
                    let mut tet = [idx(i, j, k); 4];
                    for (step, &axis) in perm.iter().enumerate() {
                        ofs[axis] = 1;
                        tet[step + 1] = idx(i + ofs[0], j + ofs[1], k + ofs[2]);
                    }
                    // orient positively
                    let vol = tet_volume(
                        vertices[tet[0]],
                        vertices[tet[1]],
                        vertices[tet[2]],
                        vertices[tet[3]],
                    );
                    if vol < 0.0 {
                        tet.swap(2, 3);
                    }
                    cells.push(tet);
                }
            }
        }
    }
    (vertices, cells)
}

fn snap_to_sphere(vertices: &mut [Vec3], pinned: &[bool], s: &SphereSpec, tol: f64) {
    for (v, &pin) in vertices.iter_mut().zip(pinned) {
        if pin {
            continue;
        }
        let r = la::sub(*v, s.center);
        let d = la::norm(r) - s.radius;
        if d.abs() <= tol && la::norm(r) > 1e-12 {
            *v = la::add(s.center, la::scale(la::normalize(r), s.radius));
        }
    }
}

fn vertex_sign(v: Vec3, s: &SphereSpec) -> i8 {
    let d = la::norm(la::sub(v, s.center)) - s.radius;
    let tol = 1e-9 * s.radius;
    if d > tol {
        1
    } else if d < -tol {
        -1
    } else {
        0
    }
}

/// Cut all tets crossing the sphere surface. Pieces on the inside get the
/// sphere's region, pieces outside keep the cell's previous region; labeling
/// by construction keeps the region boundary exactly on the cut surface.
fn cut_cells(
    vertices: &mut Vec<Vec3>,
    cells: &[[usize; 4]],
    regions: &[Region],
    s: &SphereSpec,
) -> Result<(Vec<[usize; 4]>, Vec<Region>)> {
    let signs: Vec<i8> = vertices.iter().map(|&v| vertex_sign(v, s)).collect();
    let mut cut_points: HashMap<(usize, usize), usize> = HashMap::new();
    let mut out = Vec::with_capacity(cells.len() + cells.len() / 4);
    let mut out_region = Vec::with_capacity(cells.len() + cells.len() / 4);

    for (cell, &prev) in cells.iter().zip(regions) {
        let cs: Vec<i8> = cell.iter().map(|&v| signs[v]).collect();
        let has_neg = cs.iter().any(|&x| x < 0);
        let has_pos = cs.iter().any(|&x| x > 0);
        if !(has_neg && has_pos) {
            let inside = if has_neg {
                true
            } else if has_pos {
                false
            } else {
                // every vertex on the sphere: classify by centroid
                let mut c = [0.0; 3];
                for &v in cell.iter() {
                    c = la::add(c, vertices[v]);
                }
                la::norm(la::sub(la::scale(c, 0.25), s.center)) < s.radius
            };
            out.push(*cell);
            out_region.push(if inside { s.region } else { prev });
            continue;
        }
        let neg: Vec<usize> = (0..4).filter(|&i| cs[i] < 0).map(|i| cell[i]).collect();
        let pos: Vec<usize> = (0..4).filter(|&i| cs[i] > 0).map(|i| cell[i]).collect();
        let zer: Vec<usize> = (0..4).filter(|&i| cs[i] == 0).map(|i| cell[i]).collect();

        let mut cut = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            if let Some(&idx) = cut_points.get(&key) {
                return idx;
            }
            let p = segment_sphere_intersection(vertices[a], vertices[b], s);
            vertices.push(p);
            let idx = vertices.len() - 1;
            cut_points.insert(key, idx);
            idx
        };

        let inside = s.region;
        let emit = |tet: [usize; 4], r: Region, out: &mut Vec<[usize; 4]>,
                    out_region: &mut Vec<Region>, vertices: &[Vec3]| {
            let mut t = tet;
            let vol = tet_volume(vertices[t[0]], vertices[t[1]], vertices[t[2]], vertices[t[3]]);
            if vol < 0.0 {
                t.swap(2, 3);
            }
            out.push(t);
            out_region.push(r);
        };

        match (neg.len(), zer.len(), pos.len()) {
            (1, 0, 3) | (3, 0, 1) => {
                // apex on one side, triangle cut, prism on the other side
                let apex_inside = neg.len() == 1;
                let (apex, base) = if apex_inside {
                    (neg[0], pos.clone())
                } else {
                    (pos[0], neg.clone())
                };
                let (r_apex, r_prism) = if apex_inside {
                    (inside, prev)
                } else {
                    (prev, inside)
                };
                let p: Vec<usize> = base.iter().map(|&b| cut(apex, b, vertices)).collect();
                emit([apex, p[0], p[1], p[2]], r_apex, &mut out, &mut out_region, vertices);
                let tris = prism_boundary(&base, &p);
                centroid_fan(&tris, r_prism, vertices, &mut out, &mut out_region);
            }
            (2, 0, 2) => {
                let (a, b) = (neg[0], neg[1]);
                let (c, d) = (pos[0], pos[1]);
                let pac = cut(a, c, vertices);
                let pad = cut(a, d, vertices);
                let pbc = cut(b, c, vertices);
                let pbd = cut(b, d, vertices);
                // negative wedge {a, b, pac, pad, pbc, pbd}
                let mut tris = vec![[a, pac, pad], [b, pbc, pbd]];
                tris.extend(quad_triangles([a, b, pbc, pac]));
                tris.extend(quad_triangles([a, b, pbd, pad]));
                tris.extend(quad_triangles([pac, pbc, pbd, pad]));
                centroid_fan(&tris, inside, vertices, &mut out, &mut out_region);
                // positive wedge {c, d, pac, pad, pbc, pbd}
                let mut tris = vec![[c, pac, pbc], [d, pad, pbd]];
                tris.extend(quad_triangles([c, d, pad, pac]));
                tris.extend(quad_triangles([c, d, pbd, pbc]));
                tris.extend(quad_triangles([pac, pbc, pbd, pad]));
                centroid_fan(&tris, prev, vertices, &mut out, &mut out_region);
            }
            (1, 1, 2) | (2, 1, 1) => {
                let apex_inside = neg.len() == 1;
                let (apex, far) = if apex_inside {
                    (neg[0], pos.clone())
                } else {
                    (pos[0], neg.clone())
                };
                let (r_apex, r_far) = if apex_inside {
                    (inside, prev)
                } else {
                    (prev, inside)
                };
                let z = zer[0];
                let (c, d) = (far[0], far[1]);
                let pc = cut(apex, c, vertices);
                let pd = cut(apex, d, vertices);
                emit([apex, z, pc, pd], r_apex, &mut out, &mut out_region, vertices);
                // piece {z, c, d, pc, pd}; quad (pc, c, d, pd) on the shared
                // face splits by the global diagonal rule
                for t in quad_triangles([pc, c, d, pd]) {
                    emit([z, t[0], t[1], t[2]], r_far, &mut out, &mut out_region, vertices);
                }
            }
            (1, 2, 1) => {
                let p = cut(neg[0], pos[0], vertices);
                emit([neg[0], zer[0], zer[1], p], inside, &mut out, &mut out_region, vertices);
                emit([pos[0], zer[0], zer[1], p], prev, &mut out, &mut out_region, vertices);
            }
            other => {
                return Err(Error::Topology(format!(
                    "unexpected sign pattern {other:?} while cutting cell"
                )))
            }
        }
    }
    Ok((out, out_region))
}

/// Boundary triangles of the prism between triangle `base` and the cut
/// triangle `top` (top[i] lies on the edge apex-base[i]).
fn prism_boundary(base: &[usize], top: &[usize]) -> Vec<[usize; 3]> {
    let mut tris = vec![
        [base[0], base[1], base[2]],
        [top[0], top[1], top[2]],
    ];
    for i in 0..3 {
        let j = (i + 1) % 3;
        tris.extend(quad_triangles([base[i], base[j], top[j], top[i]]));
    }
    tris
}

/// Split the quad cycle q0-q1-q2-q3 by the diagonal through its globally
/// smallest vertex index; neighbors sharing the quad make the same choice.
fn quad_triangles(q: [usize; 4]) -> [[usize; 3]; 2] {
    let min_pos = (0..4).min_by_key(|&i| q[i]).unwrap();
    if min_pos % 2 == 0 {
        [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
    } else {
        [[q[1], q[2], q[3]], [q[1], q[3], q[0]]]
    }
}

/// Tetrahedralize a star-shaped polyhedron given its boundary triangles by
/// fanning from the vertex centroid (a new Steiner vertex).
fn centroid_fan(
    tris: &[[usize; 3]],
    region: Region,
    vertices: &mut Vec<Vec3>,
    out: &mut Vec<[usize; 4]>,
    out_region: &mut Vec<Region>,
) {
    let mut uniq: Vec<usize> = tris.iter().flatten().copied().collect();
    uniq.sort_unstable();
    uniq.dedup();
    let mut c = [0.0; 3];
    for &v in &uniq {
        c = la::add(c, vertices[v]);
    }
    let c = la::scale(c, 1.0 / uniq.len() as f64);
    vertices.push(c);
    let ci = vertices.len() - 1;
    for t in tris {
        let mut tet = [ci, t[0], t[1], t[2]];
        let vol = tet_volume(
            vertices[tet[0]],
            vertices[tet[1]],
            vertices[tet[2]],
            vertices[tet[3]],
        );
        if vol < 0.0 {
            tet.swap(2, 3);
        }
        out.push(tet);
        out_region.push(region);
    }
}

/// Intersection of segment a-b with the sphere (endpoints strictly on
/// opposite sides). The returned point lies on the sphere to roundoff.
fn segment_sphere_intersection(a: Vec3, b: Vec3, s: &SphereSpec) -> Vec3 {
    let d = la::sub(b, a);
    let m = la::sub(a, s.center);
    let qa = la::dot(d, d);
    let qb = 2.0 * la::dot(m, d);
    let qc = la::dot(m, m) - s.radius * s.radius;
    let disc = qb * qb - 4.0 * qa * qc;
    let t = if disc >= 0.0 {
        let sq = disc.sqrt();
        let t1 = (-qb - sq) / (2.0 * qa);
        let t2 = (-qb + sq) / (2.0 * qa);
        if (0.0..=1.0).contains(&t1) {
            t1
        } else {
            t2
        }
    } else {
        // fall back to linear interpolation of the signed distances
        let da = la::norm(m) - s.radius;
        let db = la::norm(la::sub(b, s.center)) - s.radius;
        da / (da - db)
    };
    let t = t.clamp(1e-6, 1.0 - 1e-6);
    let p = la::add(a, la::scale(d, t));
    // project exactly onto the sphere
    la::add(s.center, la::scale(la::normalize(la::sub(p, s.center)), s.radius))
}

fn collect_boundary_faces(
    vertices: &[Vec3],
    cells: &[[usize; 4]],
    cell_region: &[Region],
) -> Result<Vec<BoundaryFace>> {
    let mut face_cells: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
    for (ci, cell) in cells.iter().enumerate() {
        let [a, b, c, d] = *cell;
        for f in [[a, b, c], [a, b, d], [a, c, d], [b, c, d]] {
            let mut key = f;
            key.sort_unstable();
            face_cells.entry(key).or_default().push(ci);
        }
    }
    let mut faces = Vec::new();
    // Deterministic order: sort keys.
    let mut keys: Vec<[usize; 3]> = face_cells.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let owners = &face_cells[&key];
        match owners.len() {
            1 => {
                faces.push(BoundaryFace {
                    verts: key,
                    tag: FaceTag::Outer,
                    cell_in: owners[0],
                    cell_out: None,
                });
            }
            2 => {
                let (r0, r1) = (cell_region[owners[0]], cell_region[owners[1]]);
                if r0 == r1 {
                    continue;
                }
                let (mol, sol, tag) = match (r0, r1) {
                    (Region::Mf, Region::Solvent) => (owners[0], owners[1], FaceTag::GammaF),
                    (Region::Solvent, Region::Mf) => (owners[1], owners[0], FaceTag::GammaF),
                    (Region::Mr, Region::Solvent) => (owners[0], owners[1], FaceTag::GammaR),
                    (Region::Solvent, Region::Mr) => (owners[1], owners[0], FaceTag::GammaR),
                    _ => {
                        return Err(Error::Topology(
                            "MF cell adjacent to MR cell (molecules must not touch)".into(),
                        ))
                    }
                };
                faces.push(BoundaryFace {
                    verts: key,
                    tag,
                    cell_in: mol,
                    cell_out: Some(sol),
                });
            }
            n => {
                return Err(Error::Topology(format!(
                    "face {key:?} incident to {n} cells"
                )))
            }
        }
    }
    let _ = vertices;
    Ok(faces)
}
