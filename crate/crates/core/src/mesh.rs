//! Uniform right-triangle meshes of `[0,1] x [0,2]` and P1 assembly.
//!
//! Each of the `2^m x 2^m` cells is split along its lower-left to upper-right
//! diagonal. Vertices, and interior DOFs, are numbered lexicographically by
//! `y` then `x`. Boundary vertices carry no DOF (homogeneous Dirichlet data).

use std::io::{Read, Write};

use crate::error::{FlatError, Result};
use crate::field::NodalField;
use crate::linalg::SymSparseMatrix;

pub const MIN_LEVEL: u32 = 1;
pub const MAX_LEVEL: u32 = 8;

/// Side lengths of the rectangle.
pub const WIDTH: f64 = 1.0;
pub const HEIGHT: f64 = 2.0;

pub type Point = [f64; 2];

#[derive(Clone, Debug)]
pub struct Mesh {
    level: u32,
    cells: usize,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    dof_of_vertex: Vec<Option<usize>>,
    vertex_of_dof: Vec<usize>,
}

pub fn build_mesh(m: u32) -> Result<Mesh> {
    if !(MIN_LEVEL..=MAX_LEVEL).contains(&m) {
        return Err(FlatError::Argument(format!(
            "refinement level m = {m} outside {MIN_LEVEL}..={MAX_LEVEL}"
        )));
    }
    let n = 1usize << m;
    let hx = WIDTH / n as f64;
    let hy = HEIGHT / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;

    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    let mut dof_of_vertex = Vec::with_capacity((n + 1) * (n + 1));
    let mut vertex_of_dof = Vec::with_capacity((n - 1) * (n - 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * hx, j as f64 * hy]);
            if i > 0 && i < n && j > 0 && j < n {
                dof_of_vertex.push(Some(vertex_of_dof.len()));
                vertex_of_dof.push(idx(i, j));
            } else {
                dof_of_vertex.push(None);
            }
        }
    }

    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    Ok(Mesh {
        level: m,
        cells: n,
        vertices,
        triangles,
        dof_of_vertex,
        vertex_of_dof,
    })
}

impl Mesh {
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Number of cells along each side, `2^m`.
    pub fn cells_per_side(&self) -> usize {
        self.cells
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Number of interior DOFs, `(2^m - 1)^2`.
    pub fn num_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    pub fn vertex_of_dof(&self, dof: usize) -> usize {
        self.vertex_of_dof[dof]
    }

    pub fn dof_point(&self, dof: usize) -> Point {
        self.vertices[self.vertex_of_dof[dof]]
    }

    pub fn dof_points(&self) -> impl Iterator<Item = Point> + '_ {
        self.vertex_of_dof.iter().map(|&v| self.vertices[v])
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area (positive for counter-clockwise orientation).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.triangle_points(t);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    /// Values of a nodal field at all three corners of triangle `t` (zero on the boundary).
    pub fn corner_values(&self, t: usize, u: &NodalField) -> [f64; 3] {
        self.triangles[t].map(|v| self.dof_of_vertex[v].map_or(0.0, |d| u.0[d]))
    }

    /// Exports the vertex table as `index,x,y,dof` (dof is -1 on the boundary).
    pub fn write_vertices_csv<W: Write>(&self, mut out: W, header: &str) -> Result<()> {
        writeln!(out, "{header}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "x", "y", "dof"])?;
        for (i, p) in self.vertices.iter().enumerate() {
            let dof = self.dof_of_vertex[i].map_or(-1, |d| d as i64);
            w.write_record([i.to_string(), p[0].to_string(), p[1].to_string(), dof.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_triangles_csv<W: Write>(&self, mut out: W, header: &str) -> Result<()> {
        writeln!(out, "{header}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "v0", "v1", "v2"])?;
        for (i, t) in self.triangles.iter().enumerate() {
            w.write_record([i.to_string(), t[0].to_string(), t[1].to_string(), t[2].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Exports the interior DOF map as `dof,vertex,x,y`.
    pub fn write_dofs_csv<W: Write>(&self, mut out: W, header: &str) -> Result<()> {
        writeln!(out, "{header}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dof", "vertex", "x", "y"])?;
        for (d, &v) in self.vertex_of_dof.iter().enumerate() {
            let p = self.vertices[v];
            w.write_record([d.to_string(), v.to_string(), p[0].to_string(), p[1].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Exports a field as `x,y,value` rows, one per interior DOF.
    pub fn write_field_csv<W: Write>(&self, u: &NodalField, mut out: W, header: &str) -> Result<()> {
        assert_eq!(u.len(), self.num_dofs());
        writeln!(out, "{header}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "value"])?;
        for (p, v) in self.dof_points().zip(u.0.iter()) {
            w.write_record([p[0].to_string(), p[1].to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an `x,y,value` field file (the format written by
    /// [`Mesh::write_field_csv`]). `#` lines are comments; every interior
    /// node must appear exactly once.
    pub fn read_field_csv<R: Read>(&self, input: R) -> Result<NodalField> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.len() != 3 || &headers[0] != "x" || &headers[1] != "y" || &headers[2] != "value" {
            return Err(FlatError::Config("field CSV must have header x,y,value".into()));
        }
        let n = self.cells;
        let mut seen = vec![false; self.num_dofs()];
        let mut coeffs = vec![0.0; self.num_dofs()];
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |k: usize| -> Result<f64> {
                let s = record.get(k).unwrap_or("");
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| FlatError::Config(format!("row {}: invalid number {s:?}", line + 1)))
            };
            if record.len() != 3 {
                return Err(FlatError::Config(format!("row {}: expected 3 columns", line + 1)));
            }
            let (x, y, value) = (parse(0)?, parse(1)?, parse(2)?);
            let gi = x / WIDTH * n as f64;
            let gj = y / HEIGHT * n as f64;
            let (i, j) = (gi.round(), gj.round());
            if (gi - i).abs() > 1e-6 || (gj - j).abs() > 1e-6 || i <= 0.0 || j <= 0.0 || i >= n as f64 || j >= n as f64
            {
                return Err(FlatError::Config(format!(
                    "row {}: ({x}, {y}) is not an interior node of the m = {} mesh",
                    line + 1,
                    self.level
                )));
            }
            let dof = (j as usize - 1) * (n - 1) + (i as usize - 1);
            if std::mem::replace(&mut seen[dof], true) {
                return Err(FlatError::Config(format!(
                    "row {}: duplicate node ({x}, {y})",
                    line + 1
                )));
            }
            coeffs[dof] = value;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            let p = self.dof_point(missing);
            return Err(FlatError::Config(format!(
                "node ({}, {}) missing from field file",
                p[0], p[1]
            )));
        }
        Ok(NodalField::from_vec(coeffs))
    }
}

/// Symmetric 7-point Gauss rule on the reference triangle, exact for degree 5.
/// Entries are (barycentric coordinates, weight relative to the area).
pub fn gauss7() -> [([f64; 3], f64); 7] {
    let s15 = 15f64.sqrt();
    let (a1, b1, w1) = ((9.0 - 2.0 * s15) / 21.0, (6.0 + s15) / 21.0, (155.0 + s15) / 1200.0);
    let (a2, b2, w2) = ((9.0 + 2.0 * s15) / 21.0, (6.0 - s15) / 21.0, (155.0 - s15) / 1200.0);
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([a1, b1, b1], w1),
        ([b1, a1, b1], w1),
        ([b1, b1, a1], w1),
        ([a2, b2, b2], w2),
        ([b2, a2, b2], w2),
        ([b2, b2, a2], w2),
    ]
}

fn barycentric_point(p: &[Point; 3], l: &[f64; 3]) -> Point {
    [
        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
    ]
}

/// Assembles interior-DOF contributions of per-triangle 3x3 element matrices.
fn assemble(mesh: &Mesh, element: impl Fn(usize) -> [[f64; 3]; 3]) -> SymSparseMatrix {
    let mut triplets = Vec::with_capacity(mesh.triangles.len() * 9);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let local = element(t);
        for (a, &va) in tri.iter().enumerate() {
            let Some(ra) = mesh.dof_of_vertex[va] else { continue };
            for (b, &vb) in tri.iter().enumerate() {
                if let Some(cb) = mesh.dof_of_vertex[vb] {
                    triplets.push((ra, cb, local[a][b]));
                }
            }
        }
    }
    SymSparseMatrix::from_triplets(mesh.num_dofs(), triplets)
}

fn stiffness_element(p: &[Point; 3]) -> [[f64; 3]; 3] {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    // ∇λ_i = rot90(p_{i+2} - p_{i+1}) / (2A)
    let grads: [[f64; 2]; 3] = std::array::from_fn(|i| {
        let (q1, q2) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        [(q1[1] - q2[1]) / (2.0 * area), (q2[0] - q1[0]) / (2.0 * area)]
    });
    std::array::from_fn(|i| std::array::from_fn(|j| area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1])))
}

fn mass_element(area: f64) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { area / 6.0 } else { area / 12.0 }))
}

/// `K_ij = ∫ ∇ψ_i · ∇ψ_j` over interior DOFs.
pub fn assemble_stiffness(mesh: &Mesh) -> SymSparseMatrix {
    assemble(mesh, |t| stiffness_element(&mesh.triangle_points(t)))
}

/// `M_ij = ∫ ψ_i ψ_j` over interior DOFs.
pub fn assemble_mass(mesh: &Mesh) -> SymSparseMatrix {
    assemble(mesh, |t| mass_element(mesh.signed_area(t)))
}

/// `W_jk = ∫ w ψ_j ψ_k` where `weight(t, x, λ)` gives `w` at the point with
/// barycentric coordinates `λ` in triangle `t`. Integrated with [`gauss7`].
pub fn assemble_weighted_mass_with(mesh: &Mesh, weight: impl Fn(usize, Point, &[f64; 3]) -> f64) -> SymSparseMatrix {
    let rule = gauss7();
    assemble(mesh, |t| {
        let p = mesh.triangle_points(t);
        let area = mesh.signed_area(t);
        let mut local = [[0.0; 3]; 3];
        for (l, w) in &rule {
            let wq = area * w * weight(t, barycentric_point(&p, l), l);
            for a in 0..3 {
                for b in 0..3 {
                    local[a][b] += wq * l[a] * l[b];
                }
            }
        }
        local
    })
}

/// `W_jk = ∫ w_h ψ_j ψ_k` with `w_h` the P1 interpolant of vertex values
/// `w` (one per mesh vertex, boundary included). The cubic integrand is
/// integrated exactly.
pub fn assemble_weighted_mass(mesh: &Mesh, w: &[f64]) -> SymSparseMatrix {
    assert_eq!(w.len(), mesh.vertices.len(), "weight must be given at every vertex");
    assemble_weighted_mass_with(mesh, |t, _, l| {
        let [a, b, c] = mesh.triangles[t];
        l[0] * w[a] + l[1] * w[b] + l[2] * w[c]
    })
}

/// Load vector `ĝ_i = ∫ g ψ_i` for a pointwise integrand, integrated with [`gauss7`].
pub fn assemble_load_with(mesh: &Mesh, g: impl Fn(usize, Point, &[f64; 3]) -> f64) -> nalgebra::DVector<f64> {
    let rule = gauss7();
    let mut out = nalgebra::DVector::zeros(mesh.num_dofs());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = mesh.triangle_points(t);
        let area = mesh.signed_area(t);
        for (l, w) in &rule {
            let gq = area * w * g(t, barycentric_point(&p, l), l);
            for (a, &v) in tri.iter().enumerate() {
                if let Some(d) = mesh.dof_of_vertex[v] {
                    out[d] += gq * l[a];
                }
            }
        }
    }
    out
}

/// Nodal interpolant of `expr` at the interior vertices.
pub fn interpolate(mesh: &Mesh, expr: impl Fn(f64, f64) -> f64) -> Result<NodalField> {
    let mut coeffs = Vec::with_capacity(mesh.num_dofs());
    for (node, p) in mesh.dof_points().enumerate() {
        let value = expr(p[0], p[1]);
        if !value.is_finite() {
            return Err(FlatError::Evaluation {
                node,
                value,
                context: "interpolation",
            });
        }
        coeffs.push(value);
    }
    Ok(NodalField::from_vec(coeffs))
}
