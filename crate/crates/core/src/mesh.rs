//! Simplicial meshes of planar and 3D domains.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Inner product threshold below which two face normals mark a corner.
pub fn corner_cosine() -> f64 {
    (20.0f64).to_radians().cos()
}

#[derive(Clone, Debug, Serialize)]
pub struct VertexNormal {
    pub normal: Vec<f64>,
    pub faces: Vec<usize>,
    pub corner: bool,
}

#[derive(Clone, Debug)]
pub struct SimplicialMesh {
    n: usize,
    coords: Vec<f64>,
    cells: Vec<usize>,
    faces: Vec<usize>,
    face_cell: Vec<usize>,
    face_normals: Vec<f64>,
    vertex_normals: Vec<Option<VertexNormal>>,
    interior_face_overuse: Vec<(Vec<usize>, usize)>,
    boundary_mismatch: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MeshSpec {
    Square { a: f64, b: f64, m: usize },
    Disk { r: f64, m: usize },
    Annulus { r0: f64, r1: f64, m: usize },
    Cube { a: f64, m: usize },
}

impl SimplicialMesh {
    /// Build from raw arrays. Structural errors fail; geometric defects are left for
    /// [`validate_mesh`].
    pub fn from_parts(n: usize, coords: Vec<f64>, cells: Vec<usize>, boundary: Option<Vec<usize>>) -> Result<Self> {
        if n != 2 && n != 3 {
            return Err(Error::MeshInvalid(format!("only dimensions 2 and 3 are meshed, got {n}")));
        }
        if coords.len() % n != 0 {
            return Err(Error::MeshInvalid("coordinate array length is not a multiple of the dimension".into()));
        }
        let nv = coords.len() / n;
        if cells.len() % (n + 1) != 0 {
            return Err(Error::MeshInvalid("cell array length is not a multiple of n+1".into()));
        }
        if let Some(bad) = cells.iter().find(|&&v| v >= nv) {
            return Err(Error::MeshInvalid(format!("cell references vertex {bad} but only {nv} vertices exist")));
        }
        let mut face_use: HashMap<Vec<usize>, Vec<(usize, usize)>> = HashMap::new();
        for (c, cell) in cells.chunks(n + 1).enumerate() {
            for skip in 0..=n {
                let mut f: Vec<usize> = (0..=n).filter(|&i| i != skip).map(|i| cell[i]).collect();
                f.sort_unstable();
                face_use.entry(f).or_default().push((c, skip));
            }
        }
        let mut keys: Vec<&Vec<usize>> = face_use.keys().collect();
        keys.sort();
        let mut faces = Vec::new();
        let mut face_cell = Vec::new();
        let mut overuse = Vec::new();
        for key in keys {
            let uses = &face_use[key];
            if uses.len() == 1 {
                let (c, skip) = uses[0];
                let cell = &cells[c * (n + 1)..(c + 1) * (n + 1)];
                faces.extend((0..=n).filter(|&i| i != skip).map(|i| cell[i]));
                face_cell.push(c);
            } else if uses.len() > 2 {
                overuse.push((key.clone(), uses.len()));
            }
        }
        let mut boundary_mismatch = None;
        if let Some(b) = boundary {
            if b.len() % n != 0 {
                return Err(Error::MeshInvalid("boundary array length is not a multiple of n".into()));
            }
            if let Some(bad) = b.iter().find(|&&v| v >= nv) {
                return Err(Error::MeshInvalid(format!("boundary face references vertex {bad}")));
            }
            let mut given: Vec<Vec<usize>> = b
                .chunks(n)
                .map(|f| {
                    let mut f = f.to_vec();
                    f.sort_unstable();
                    f
                })
                .collect();
            given.sort();
            let mut derived: Vec<Vec<usize>> = faces
                .chunks(n)
                .map(|f| {
                    let mut f = f.to_vec();
                    f.sort_unstable();
                    f
                })
                .collect();
            derived.sort();
            if given != derived {
                let dangling = given.iter().find(|f| !derived.contains(f));
                let missing = derived.iter().find(|f| !given.contains(f));
                boundary_mismatch = Some(match (dangling, missing) {
                    (Some(f), _) => format!("listed boundary face {f:?} is not a free face of the cell complex"),
                    (None, Some(f)) => format!("free face {f:?} is missing from the boundary list"),
                    _ => "boundary list has duplicate faces".into(),
                });
            }
        }
        let mut mesh = SimplicialMesh {
            n,
            coords,
            cells,
            faces,
            face_cell,
            face_normals: Vec::new(),
            vertex_normals: Vec::new(),
            interior_face_overuse: overuse,
            boundary_mismatch,
        };
        mesh.compute_normals();
        Ok(mesh)
    }

    fn compute_normals(&mut self) {
        let n = self.n;
        let nf = self.face_cell.len();
        let mut normals = Vec::with_capacity(nf * n);
        for f in 0..nf {
            let verts = self.face(f);
            let cell = self.cell(self.face_cell[f]);
            let opposite = *cell.iter().find(|v| !verts.contains(v)).expect("cell has a vertex off the face");
            let nu = face_normal_raw(self, verts, opposite);
            normals.extend(nu);
        }
        self.face_normals = normals;
        let mut incident: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for f in 0..nf {
            for &v in self.face(f) {
                incident.entry(v).or_default().push(f);
            }
        }
        let mut vn = vec![None; self.num_vertices()];
        let cosc = corner_cosine();
        for (v, fs) in incident {
            let mut acc = vec![0.0; n];
            for &f in &fs {
                let w = if n == 2 { 1.0 } else { face_angle_at(self, f, v) };
                for (a, b) in acc.iter_mut().zip(self.face_normal(f)) {
                    *a += w * b;
                }
            }
            let len = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
            if len > 0.0 {
                acc.iter_mut().for_each(|x| *x /= len);
            }
            let mut corner = false;
            for i in 0..fs.len() {
                for j in i + 1..fs.len() {
                    if dot(self.face_normal(fs[i]), self.face_normal(fs[j])) < cosc {
                        corner = true;
                    }
                }
            }
            vn[v] = Some(VertexNormal { normal: acc, faces: fs, corner });
        }
        self.vertex_normals = vn;
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn num_vertices(&self) -> usize {
        self.coords.len() / self.n
    }
    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.n + 1)
    }
    pub fn num_boundary_faces(&self) -> usize {
        self.face_cell.len()
    }
    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.coords[v * self.n..(v + 1) * self.n]
    }
    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c * (self.n + 1)..(c + 1) * (self.n + 1)]
    }
    pub fn face(&self, f: usize) -> &[usize] {
        &self.faces[f * self.n..(f + 1) * self.n]
    }
    pub fn face_cell(&self, f: usize) -> usize {
        self.face_cell[f]
    }
    pub fn face_normal(&self, f: usize) -> &[f64] {
        &self.face_normals[f * self.n..(f + 1) * self.n]
    }
    pub fn vertex_normal(&self, v: usize) -> Option<&VertexNormal> {
        self.vertex_normals[v].as_ref()
    }
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_normals[v].is_some()
    }

    /// Overwrite a face normal; used to construct defective meshes in tests.
    #[doc(hidden)]
    pub fn set_face_normal(&mut self, f: usize, nu: &[f64]) {
        let n = self.n;
        self.face_normals[f * n..(f + 1) * n].copy_from_slice(nu);
    }

    pub fn cell_points(&self, c: usize) -> Vec<&[f64]> {
        self.cell(c).iter().map(|&v| self.vertex(v)).collect()
    }

    /// Signed volume of cell `c`.
    pub fn signed_volume(&self, c: usize) -> f64 {
        let p = self.cell_points(c);
        let n = self.n;
        let m = DMatrix::from_fn(n, n, |i, j| p[j + 1][i] - p[0][i]);
        m.determinant() / factorial(n)
    }

    pub fn volume(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.signed_volume(c)).sum()
    }

    /// `(n-1)`-dimensional measure of a boundary face.
    pub fn face_measure(&self, f: usize) -> f64 {
        let p: Vec<&[f64]> = self.face(f).iter().map(|&v| self.vertex(v)).collect();
        simplex_measure(&p, self.n)
    }

    /// Gradients of the barycentric coordinates of cell `c` (one row per vertex).
    pub fn barycentric_gradients(&self, c: usize) -> Vec<Vec<f64>> {
        let p = self.cell_points(c);
        let n = self.n;
        let jac = DMatrix::from_fn(n, n, |i, j| p[j + 1][i] - p[0][i]);
        let inv = jac.try_inverse().unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
        let mut g = vec![vec![0.0; n]; n + 1];
        for a in 1..=n {
            for i in 0..n {
                g[a][i] = inv[(a - 1, i)];
                g[0][i] -= inv[(a - 1, i)];
            }
        }
        g
    }

    /// Physical point from barycentric coordinates in cell `c`.
    pub fn cell_point(&self, c: usize, bary: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (a, &v) in self.cell(c).iter().enumerate() {
            for i in 0..self.n {
                x[i] += bary[a] * self.vertex(v)[i];
            }
        }
        x
    }

    pub fn face_point(&self, f: usize, bary: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (a, &v) in self.face(f).iter().enumerate() {
            for i in 0..self.n {
                x[i] += bary[a] * self.vertex(v)[i];
            }
        }
        x
    }

    /// Sorted unique edges.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for c in 0..self.num_cells() {
            let cell = self.cell(c);
            for i in 0..cell.len() {
                for j in i + 1..cell.len() {
                    let (a, b) = (cell[i].min(cell[j]), cell[i].max(cell[j]));
                    e.push((a, b));
                }
            }
        }
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Maximum edge length.
    pub fn h(&self) -> f64 {
        self.edges().iter().map(|&(a, b)| dist(self.vertex(a), self.vertex(b))).fold(0.0, f64::max)
    }

    pub fn euler_characteristic(&self) -> i64 {
        let v = self.num_vertices() as i64;
        let e = self.edges().len() as i64;
        if self.n == 2 {
            return v - e + self.num_cells() as i64;
        }
        let mut tris = Vec::new();
        for c in 0..self.num_cells() {
            let cell = self.cell(c);
            for skip in 0..4 {
                let mut f: Vec<usize> = (0..4).filter(|&i| i != skip).map(|i| cell[i]).collect();
                f.sort_unstable();
                tris.push(f);
            }
        }
        tris.sort();
        tris.dedup();
        v - e + tris.len() as i64 - self.num_cells() as i64
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| self.is_boundary_vertex(v)).collect()
    }

    /// Connected components of the boundary, as vertex lists.
    pub fn boundary_components(&self) -> Vec<Vec<usize>> {
        let nv = self.num_vertices();
        let mut uf = UnionFind::new(nv);
        for f in 0..self.num_boundary_faces() {
            let fv = self.face(f);
            for w in fv.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        group(&mut uf, &self.boundary_vertices())
    }

    /// Connected components of the domain, as vertex lists.
    pub fn domain_components(&self) -> Vec<Vec<usize>> {
        let nv = self.num_vertices();
        let mut uf = UnionFind::new(nv);
        for c in 0..self.num_cells() {
            let cell = self.cell(c);
            for w in cell.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        let all: Vec<usize> = (0..nv).collect();
        group(&mut uf, &all)
    }

    /// Number of corner vertices.
    pub fn corner_count(&self) -> usize {
        self.vertex_normals.iter().flatten().filter(|v| v.corner).count()
    }

    pub fn to_ascii(&self) -> String {
        let n = self.n;
        let mut s = String::new();
        let _ = writeln!(s, "dim {n}");
        let _ = writeln!(s, "vertices {}", self.num_vertices());
        for v in 0..self.num_vertices() {
            let row: Vec<String> = self.vertex(v).iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        let _ = writeln!(s, "cells {}", self.num_cells());
        for c in 0..self.num_cells() {
            let row: Vec<String> = self.cell(c).iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        let _ = writeln!(s, "boundary {}", self.num_boundary_faces());
        for f in 0..self.num_boundary_faces() {
            let row: Vec<String> = self.face(f).iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }
    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn group(uf: &mut UnionFind, verts: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &v in verts {
        let r = uf.find(v);
        groups.entry(r).or_default().push(v);
    }
    groups.into_values().collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Measure of an (m)-simplex with `m+1` points embedded in `R^n` (Gram determinant).
fn simplex_measure(p: &[&[f64]], n: usize) -> f64 {
    let m = p.len() - 1;
    if m == 0 {
        return 1.0;
    }
    let e: Vec<Vec<f64>> = (1..=m).map(|j| (0..n).map(|i| p[j][i] - p[0][i]).collect()).collect();
    let g = DMatrix::from_fn(m, m, |a, b| dot(&e[a], &e[b]));
    g.determinant().max(0.0).sqrt() / factorial(m)
}

fn face_normal_raw(mesh: &SimplicialMesh, verts: &[usize], opposite: usize) -> Vec<f64> {
    let n = mesh.n;
    let p0 = mesh.vertex(verts[0]);
    let mut nu = if n == 2 {
        let p1 = mesh.vertex(verts[1]);
        vec![p1[1] - p0[1], -(p1[0] - p0[0])]
    } else {
        let p1 = mesh.vertex(verts[1]);
        let p2 = mesh.vertex(verts[2]);
        let a = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
        let b = [p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]];
        vec![a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    };
    let len = nu.iter().map(|x| x * x).sum::<f64>().sqrt();
    nu.iter_mut().for_each(|x| *x /= len);
    let q = mesh.vertex(opposite);
    let towards: f64 = (0..n).map(|i| (q[i] - p0[i]) * nu[i]).sum();
    if towards > 0.0 {
        nu.iter_mut().for_each(|x| *x = -*x);
    }
    nu
}

fn face_angle_at(mesh: &SimplicialMesh, f: usize, v: usize) -> f64 {
    let fv = mesh.face(f);
    let others: Vec<usize> = fv.iter().copied().filter(|&w| w != v).collect();
    let p = mesh.vertex(v);
    let a: Vec<f64> = (0..3).map(|i| mesh.vertex(others[0])[i] - p[i]).collect();
    let b: Vec<f64> = (0..3).map(|i| mesh.vertex(others[1])[i] - p[i]).collect();
    let c = dot(&a, &b) / (dot(&a, &a).sqrt() * dot(&b, &b).sqrt());
    c.clamp(-1.0, 1.0).acos()
}

// ---- generators ----

pub fn generate_mesh(spec: &MeshSpec) -> Result<SimplicialMesh> {
    match *spec {
        MeshSpec::Square { a, b, m } => square(a, b, m),
        MeshSpec::Disk { r, m } => disk(r, m),
        MeshSpec::Annulus { r0, r1, m } => annulus(r0, r1, m),
        MeshSpec::Cube { a, m } => cube(a, m),
    }
}

fn check_m(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::MeshInvalid(format!("resolution m must be at least 2, got {m}")));
    }
    Ok(())
}

fn orient(coords: &[f64], n: usize, cells: &mut [usize]) {
    for cell in cells.chunks_mut(n + 1) {
        let p = |v: usize| &coords[v * n..(v + 1) * n];
        let m = DMatrix::from_fn(n, n, |i, j| p(cell[j + 1])[i] - p(cell[0])[i]);
        if m.determinant() < 0.0 {
            cell.swap(0, 1);
        }
    }
}

fn square(a: f64, b: f64, m: usize) -> Result<SimplicialMesh> {
    check_m(m)?;
    if !(b > a) || !a.is_finite() || !b.is_finite() {
        return Err(Error::MeshInvalid(format!("square needs a < b, got a = {a}, b = {b}")));
    }
    let mut coords = Vec::with_capacity(2 * (m + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=m {
            coords.push(a + (b - a) * i as f64 / m as f64);
            coords.push(a + (b - a) * j as f64 / m as f64);
        }
    }
    let id = |i: usize, j: usize| j * (m + 1) + i;
    let mut cells = Vec::with_capacity(6 * m * m);
    for j in 0..m {
        for i in 0..m {
            cells.extend([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            cells.extend([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    SimplicialMesh::from_parts(2, coords, cells, None)
}

/// Triangulate the band between two closed rings of points given in angular order.
fn zip_rings(inner: &[usize], inner_ang: &[f64], outer: &[usize], outer_ang: &[f64], cells: &mut Vec<usize>) {
    let (ni, no) = (inner.len(), outer.len());
    if ni == 1 {
        for o in 0..no {
            cells.extend([inner[0], outer[o], outer[(o + 1) % no]]);
        }
        return;
    }
    let (mut i, mut o) = (0usize, 0usize);
    while i < ni || o < no {
        let ai = if i < ni { inner_ang[(i + 1) % ni] + if i + 1 == ni { 2.0 * PI } else { 0.0 } } else { f64::INFINITY };
        let ao = if o < no { outer_ang[(o + 1) % no] + if o + 1 == no { 2.0 * PI } else { 0.0 } } else { f64::INFINITY };
        if ao <= ai {
            cells.extend([inner[i % ni], outer[o % no], outer[(o + 1) % no]]);
            o += 1;
        } else {
            cells.extend([inner[i % ni], outer[o % no], inner[(i + 1) % ni]]);
            i += 1;
        }
    }
}

fn disk(r: f64, m: usize) -> Result<SimplicialMesh> {
    check_m(m)?;
    if !(r > 0.0) {
        return Err(Error::MeshInvalid(format!("disk radius must be positive, got {r}")));
    }
    let mut coords = vec![0.0, 0.0];
    let mut rings: Vec<(Vec<usize>, Vec<f64>)> = vec![(vec![0], vec![0.0])];
    for j in 1..=m {
        let count = 6 * j;
        let rad = if j == m { r } else { r * j as f64 / m as f64 };
        let mut ids = Vec::with_capacity(count);
        let mut angs = Vec::with_capacity(count);
        for t in 0..count {
            let th = 2.0 * PI * t as f64 / count as f64;
            ids.push(coords.len() / 2);
            angs.push(th);
            coords.push(rad * th.cos());
            coords.push(rad * th.sin());
        }
        rings.push((ids, angs));
    }
    let mut cells = Vec::new();
    for j in 1..=m {
        zip_rings(&rings[j - 1].0, &rings[j - 1].1, &rings[j].0, &rings[j].1, &mut cells);
    }
    orient(&coords, 2, &mut cells);
    SimplicialMesh::from_parts(2, coords, cells, None)
}

fn annulus(r0: f64, r1: f64, m: usize) -> Result<SimplicialMesh> {
    check_m(m)?;
    if !(r0 > 0.0 && r1 > r0) {
        return Err(Error::MeshInvalid(format!("annulus needs 0 < r0 < r1, got r0 = {r0}, r1 = {r1}")));
    }
    let hr = (r1 - r0) / m as f64;
    let count = ((2.0 * PI * 0.5 * (r0 + r1) / hr).ceil() as usize).max(8);
    let mut coords = Vec::new();
    for j in 0..=m {
        let rad = if j == m { r1 } else { r0 + hr * j as f64 };
        for t in 0..count {
            // stagger alternate rings by half a step for better shaped triangles
            let th = 2.0 * PI * (t as f64 + 0.5 * (j % 2) as f64) / count as f64;
            coords.push(rad * th.cos());
            coords.push(rad * th.sin());
        }
    }
    let id = |j: usize, t: usize| j * count + (t % count);
    let mut cells = Vec::new();
    for j in 0..m {
        for t in 0..count {
            if j % 2 == 0 {
                cells.extend([id(j, t), id(j, t + 1), id(j + 1, t)]);
                cells.extend([id(j, t + 1), id(j + 1, t + 1), id(j + 1, t)]);
            } else {
                cells.extend([id(j, t), id(j + 1, t + 1), id(j + 1, t)]);
                cells.extend([id(j, t), id(j, t + 1), id(j + 1, t + 1)]);
            }
        }
    }
    orient(&coords, 2, &mut cells);
    SimplicialMesh::from_parts(2, coords, cells, None)
}

fn cube(a: f64, m: usize) -> Result<SimplicialMesh> {
    check_m(m)?;
    if !(a > 0.0) {
        return Err(Error::MeshInvalid(format!("cube edge must be positive, got {a}")));
    }
    let mut coords = Vec::with_capacity(3 * (m + 1).pow(3));
    for k in 0..=m {
        for j in 0..=m {
            for i in 0..=m {
                coords.extend([a * i as f64 / m as f64, a * j as f64 / m as f64, a * k as f64 / m as f64]);
            }
        }
    }
    let id = |i: usize, j: usize, k: usize| (k * (m + 1) + j) * (m + 1) + i;
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut cells = Vec::with_capacity(24 * m * m * m);
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                for p in perms {
                    let mut cur = [i, j, k];
                    let mut tet = vec![id(cur[0], cur[1], cur[2])];
                    for &axis in &p {
                        cur[axis] += 1;
                        tet.push(id(cur[0], cur[1], cur[2]));
                    }
                    cells.extend(tet);
                }
            }
        }
    }
    orient(&coords, 3, &mut cells);
    SimplicialMesh::from_parts(3, coords, cells, None)
}

// ---- file format ----

struct LineReader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        LineReader { lines, pos: 0 }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let r = self.lines.get(self.pos).copied();
        self.pos += 1;
        r
    }

    fn last_line(&self) -> usize {
        self.lines.last().map(|l| l.0).unwrap_or(0)
    }

    /// Reads `<keyword> <count>`; `None` at end of input when `optional`.
    fn header(&mut self, want: &str, optional: bool) -> Result<Option<usize>> {
        let Some((ln, l)) = self.next() else {
            if optional {
                return Ok(None);
            }
            return Err(Error::MeshParse { line: self.last_line(), msg: format!("missing `{want}` block") });
        };
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 || toks[0] != want {
            return Err(Error::MeshParse { line: ln, msg: format!("expected `{want} <count>`, found `{l}`") });
        }
        toks[1]
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::MeshParse { line: ln, msg: format!("`{want}` needs a nonnegative integer") })
    }

    fn rows<T: std::str::FromStr>(&mut self, count: usize, width: usize, what: &str) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(count * width);
        for _ in 0..count {
            let Some((ln, l)) = self.next() else {
                return Err(Error::MeshParse { line: self.last_line(), msg: format!("unexpected end of file in {what} block") });
            };
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != width {
                return Err(Error::MeshParse {
                    line: ln,
                    msg: format!("{what} row needs {width} entries, found {}", toks.len()),
                });
            }
            for t in toks {
                out.push(t.parse::<T>().map_err(|_| Error::MeshParse { line: ln, msg: format!("bad {what} entry `{t}`") })?);
            }
        }
        Ok(out)
    }
}

pub fn parse_mesh(text: &str) -> Result<SimplicialMesh> {
    let mut r = LineReader::new(text);
    let n = r.header("dim", false)?.expect("required header");
    if n != 2 && n != 3 {
        return Err(Error::MeshParse { line: 1, msg: format!("dimension must be 2 or 3, got {n}") });
    }
    let nv = r.header("vertices", false)?.expect("required header");
    let coords: Vec<f64> = r.rows(nv, n, "vertex")?;
    let nc = r.header("cells", false)?.expect("required header");
    let cells: Vec<usize> = r.rows(nc, n + 1, "cell")?;
    let boundary = match r.header("boundary", true)? {
        None => None,
        Some(nb) => Some(r.rows::<usize>(nb, n, "boundary")?),
    };
    if let Some((ln, l)) = r.next() {
        return Err(Error::MeshParse { line: ln, msg: format!("unexpected content `{l}`") });
    }
    SimplicialMesh::from_parts(n, coords, cells, boundary)
}

/// Parse and validate a mesh file.
pub fn load_mesh(path: &Path) -> Result<SimplicialMesh> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), msg: e.to_string() })?;
    let mesh = parse_mesh(&text)?;
    let diag = validate_mesh(&mesh);
    if let Some(bad) = diag.checks.iter().find(|c| !c.passed) {
        return Err(Error::MeshInvalid(format!("{} check failed: {}", bad.name, bad.detail)));
    }
    Ok(mesh)
}

pub fn write_mesh(mesh: &SimplicialMesh, path: &Path) -> Result<()> {
    std::fs::write(path, mesh.to_ascii()).map_err(|e| Error::Io { path: path.display().to_string(), msg: e.to_string() })
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshDiagnostics {
    pub checks: Vec<MeshCheck>,
}

impl MeshDiagnostics {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
    pub fn check(&self, name: &str) -> Option<&MeshCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn validate_mesh(mesh: &SimplicialMesh) -> MeshDiagnostics {
    let n = mesh.n;
    let mut checks = Vec::new();

    // orientation
    let (mut worst, mut worst_c) = (f64::INFINITY, 0);
    for c in 0..mesh.num_cells() {
        let v = mesh.signed_volume(c);
        if v < worst {
            worst = v;
            worst_c = c;
        }
    }
    checks.push(MeshCheck {
        name: "orientation",
        passed: worst > 0.0,
        detail: format!("cell {worst_c} has the smallest signed volume {worst:e}"),
    });

    // manifoldness: repeated vertices in a cell, faces with more than two cells, coincident vertices
    let mut problem = None;
    for c in 0..mesh.num_cells() {
        let mut cell = mesh.cell(c).to_vec();
        cell.sort_unstable();
        if cell.windows(2).any(|w| w[0] == w[1]) {
            problem = Some(format!("cell {c} repeats a vertex"));
            break;
        }
    }
    if problem.is_none() {
        if let Some((f, k)) = mesh.interior_face_overuse.first() {
            problem = Some(format!("face {f:?} is shared by {k} cells"));
        }
    }
    if problem.is_none() {
        let scale = mesh.coords.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
        let mut order: Vec<usize> = (0..mesh.num_vertices()).collect();
        order.sort_by(|&a, &b| mesh.vertex(a).partial_cmp(mesh.vertex(b)).unwrap_or(std::cmp::Ordering::Equal));
        for w in order.windows(2) {
            if dist(mesh.vertex(w[0]), mesh.vertex(w[1])) <= 1e-12 * scale {
                problem = Some(format!("vertices {} and {} coincide", w[0].min(w[1]), w[0].max(w[1])));
                break;
            }
        }
    }
    checks.push(MeshCheck {
        name: "manifold",
        passed: problem.is_none(),
        detail: problem.unwrap_or_else(|| "every face is shared by at most two cells".into()),
    });

    // closedness of the boundary surface
    let mut problem = mesh.boundary_mismatch.clone();
    if problem.is_none() {
        let mut ridge_use: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for f in 0..mesh.num_boundary_faces() {
            let fv = mesh.face(f);
            for skip in 0..n {
                let mut r: Vec<usize> = (0..n).filter(|&i| i != skip).map(|i| fv[i]).collect();
                r.sort_unstable();
                *ridge_use.entry(r).or_default() += 1;
            }
        }
        if let Some((r, k)) = ridge_use.iter().find(|(_, &k)| k != 2) {
            problem = Some(format!("boundary ridge {r:?} is used by {k} boundary faces"));
        }
    }
    checks.push(MeshCheck {
        name: "closed",
        passed: problem.is_none(),
        detail: problem.unwrap_or_else(|| "boundary faces form a closed surface".into()),
    });

    // outward unit normals
    let mut problem = None;
    for f in 0..mesh.num_boundary_faces() {
        let nu = mesh.face_normal(f);
        let len = dot(nu, nu).sqrt();
        let fc: Vec<f64> = (0..n).map(|i| mesh.face(f).iter().map(|&v| mesh.vertex(v)[i]).sum::<f64>() / n as f64).collect();
        let c = mesh.face_cell(f);
        let cc: Vec<f64> =
            (0..n).map(|i| mesh.cell(c).iter().map(|&v| mesh.vertex(v)[i]).sum::<f64>() / (n + 1) as f64).collect();
        let out: f64 = (0..n).map(|i| (fc[i] - cc[i]) * nu[i]).sum();
        if (len - 1.0).abs() > 1e-10 || !(out > 0.0) {
            problem = Some(format!("face {f}: |nu| = {len}, outward component {out:e}"));
            break;
        }
    }
    checks.push(MeshCheck {
        name: "normals",
        passed: problem.is_none(),
        detail: problem.unwrap_or_else(|| "all normals are unit and outward".into()),
    });
    MeshDiagnostics { checks }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryGeometry {
    pub faces: Vec<Vec<usize>>,
    pub face_normals: Vec<Vec<f64>>,
    pub vertex_normals: BTreeMap<usize, VertexNormal>,
    pub corners: Vec<usize>,
}

pub fn boundary_geometry(mesh: &SimplicialMesh) -> BoundaryGeometry {
    let faces = (0..mesh.num_boundary_faces()).map(|f| mesh.face(f).to_vec()).collect();
    let face_normals = (0..mesh.num_boundary_faces()).map(|f| mesh.face_normal(f).to_vec()).collect();
    let mut vertex_normals = BTreeMap::new();
    let mut corners = Vec::new();
    for v in 0..mesh.num_vertices() {
        if let Some(vn) = mesh.vertex_normal(v) {
            if vn.corner {
                corners.push(v);
            }
            vertex_normals.insert(v, vn.clone());
        }
    }
    BoundaryGeometry { faces, face_normals, vertex_normals, corners }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_counts() {
        let m = square(0.0, PI, 4).unwrap();
        assert_eq!(m.num_vertices(), 25);
        assert_eq!(m.num_cells(), 32);
        assert!(validate_mesh(&m).all_passed());
        assert_eq!(m.corner_count(), 4);
        assert!((m.volume() - PI * PI).abs() < 1e-12);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn disk_boundary_on_circle() {
        let m = disk(1.0, 6).unwrap();
        assert!(validate_mesh(&m).all_passed(), "{:?}", validate_mesh(&m));
        for v in m.boundary_vertices() {
            let p = m.vertex(v);
            assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.corner_count(), 0);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn annulus_topology() {
        let m = annulus(0.5, 1.0, 4).unwrap();
        assert!(validate_mesh(&m).all_passed());
        assert_eq!(m.euler_characteristic(), 0);
        assert_eq!(m.boundary_components().len(), 2);
    }

    #[test]
    fn cube_is_valid() {
        let m = cube(1.0, 3).unwrap();
        assert!(validate_mesh(&m).all_passed());
        assert!((m.volume() - 1.0).abs() < 1e-12);
        assert_eq!(m.euler_characteristic(), 1);
        assert_eq!(m.corner_count(), 8 + 12 * 2);
    }

    #[test]
    fn interior_vertex_has_no_normal() {
        let m = square(0.0, 1.0, 4).unwrap();
        assert!(m.vertex_normal(12).is_none());
        let vn = m.vertex_normal(2).unwrap();
        assert!((vn.normal[1] + 1.0).abs() < 1e-14 && !vn.corner);
    }

    #[test]
    fn degenerate_parameters_fail() {
        assert!(square(0.0, 1.0, 1).is_err());
        assert!(annulus(1.0, 0.5, 4).is_err());
        assert!(disk(-1.0, 4).is_err());
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = parse_mesh("dim 2\nvertices 1\n0.0 abc\n").unwrap_err();
        assert!(matches!(err, Error::MeshParse { line: 3, .. }), "{err:?}");
    }
}
