//! Geometry morphing: free-form deformation over a Bernstein control lattice,
//! IDW and RBF point-driven deformation, and ASCII STL surface I/O.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{Interpolant, InterpolatorConfig};
use crate::io;
use crate::linalg::{self, Matrix};

/// Absolute tolerance used by [`TriMesh::weld`] by default.
pub const WELD_TOL: f64 = 1e-9;

/// Points stored as the columns of a `3 × P` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Matrix,
}

impl PointCloud {
    pub fn new(points: Matrix) -> Result<Self> {
        if points.nrows() != 3 {
            return Err(Error::Dimension(format!("point cloud needs 3 rows, got {}", points.nrows())));
        }
        linalg::ensure_finite(&points, "point coordinates")?;
        Ok(PointCloud { points })
    }

    pub fn from_points(points: &[[f64; 3]]) -> Result<Self> {
        PointCloud::new(Matrix::from_fn(3, points.len(), |i, j| points[j][i]))
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn point(&self, j: usize) -> Vector3<f64> {
        Vector3::new(self.points[(0, j)], self.points[(1, j)], self.points[(2, j)])
    }

    fn map_points<F>(&self, f: F) -> Result<PointCloud>
    where
        F: Fn(Vector3<f64>) -> Result<Vector3<f64>> + Sync,
    {
        let moved: Vec<Vector3<f64>> = (0..self.len())
            .into_par_iter()
            .map(|j| f(self.point(j)))
            .collect::<Result<_>>()?;
        PointCloud::new(Matrix::from_fn(3, moved.len(), |i, j| moved[j][i]))
    }
}

/// Bernstein polynomial `B_i^n(t)`.
pub fn bernstein(n: usize, i: usize, t: f64) -> f64 {
    if i > n {
        return 0.0;
    }
    binomial(n, i) * t.powi(i as i32) * (1.0 - t).powi((n - i) as i32)
}

fn bernstein_derivative(n: usize, i: usize, t: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let left = if i > 0 { bernstein(n - 1, i - 1, t) } else { 0.0 };
    n as f64 * (left - bernstein(n - 1, i, t))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Control lattice on an orthogonal box `origin + s·a₀ + t·a₁ + u·a₂`,
/// `(s,t,u) ∈ [0,1]³`, with `dims[d]` control points along axis `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FfdLattice {
    origin: Vector3<f64>,
    axes: [Vector3<f64>; 3],
    dims: [usize; 3],
    displacements: Vec<Vector3<f64>>,
}

/// JSON form of a lattice: displacements are listed sparsely as
/// `[i, j, k, dx, dy, dz]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FfdLatticeSpec {
    pub origin: [f64; 3],
    pub axes: [[f64; 3]; 3],
    pub dims: [usize; 3],
    #[serde(default)]
    pub displacements: Vec<(usize, usize, usize, f64, f64, f64)>,
}

impl FfdLattice {
    pub fn new(origin: [f64; 3], axes: [[f64; 3]; 3], dims: [usize; 3]) -> Result<Self> {
        let origin = Vector3::from(origin);
        let axes = axes.map(Vector3::from);
        if origin.iter().chain(axes.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("lattice origin and axes must be finite".into()));
        }
        for (d, a) in axes.iter().enumerate() {
            if a.norm() == 0.0 {
                return Err(Error::Validation(format!("lattice axis {d} has zero length")));
            }
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let c = axes[p].dot(&axes[q]).abs();
            if c > 1e-10 * axes[p].norm() * axes[q].norm() {
                return Err(Error::Validation(format!("lattice axes {p} and {q} are not orthogonal")));
            }
        }
        if let Some(d) = dims.iter().position(|&n| n < 2) {
            return Err(Error::Validation(format!(
                "lattice needs at least 2 control points per axis; axis {d} has {}",
                dims[d]
            )));
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::Validation("lattice is too large".into()))?;
        Ok(FfdLattice {
            origin,
            axes,
            dims,
            displacements: vec![Vector3::zeros(); count],
        })
    }

    pub fn from_spec(spec: &FfdLatticeSpec) -> Result<Self> {
        let mut lat = FfdLattice::new(spec.origin, spec.axes, spec.dims)?;
        let mut seen = vec![false; lat.displacements.len()];
        for &(i, j, k, dx, dy, dz) in &spec.displacements {
            let idx = lat.index(i, j, k)?;
            if seen[idx] {
                return Err(Error::Validation(format!("control point ({i}, {j}, {k}) is displaced twice")));
            }
            seen[idx] = true;
            lat.set_displacement(i, j, k, [dx, dy, dz])?;
        }
        Ok(lat)
    }

    pub fn to_spec(&self) -> FfdLatticeSpec {
        let mut displacements = Vec::new();
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    let d = self.displacements[self.flat(i, j, k)];
                    if d != Vector3::zeros() {
                        displacements.push((i, j, k, d.x, d.y, d.z));
                    }
                }
            }
        }
        FfdLatticeSpec {
            origin: self.origin.into(),
            axes: self.axes.map(Into::into),
            dims: self.dims,
            displacements,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: FfdLatticeSpec = serde_json::from_str(text)
            .map_err(|e| Error::format(format!("line {}, column {}", e.line(), e.column()), e.to_string()))?;
        FfdLattice::from_spec(&spec)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    fn index(&self, i: usize, j: usize, k: usize) -> Result<usize> {
        if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
            return Err(Error::Validation(format!(
                "control point ({i}, {j}, {k}) outside lattice {:?}",
                self.dims
            )));
        }
        Ok(self.flat(i, j, k))
    }

    pub fn displacement(&self, i: usize, j: usize, k: usize) -> Result<[f64; 3]> {
        Ok(self.displacements[self.index(i, j, k)?].into())
    }

    pub fn set_displacement(&mut self, i: usize, j: usize, k: usize, d: [f64; 3]) -> Result<()> {
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("displacement of ({i}, {j}, {k}) is not finite")));
        }
        let idx = self.index(i, j, k)?;
        self.displacements[idx] = Vector3::from(d);
        Ok(())
    }

    /// Local lattice coordinates of a point.
    pub fn local(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let r = x - self.origin;
        Vector3::from_fn(|d, _| r.dot(&self.axes[d]) / self.axes[d].norm_squared())
    }

    fn inside(s: &Vector3<f64>) -> bool {
        s.iter().all(|&v| (0.0..=1.0).contains(&v))
    }

    /// Displaced control points on the outer faces of the lattice.
    pub fn boundary_displacements(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    let on_face = [i, j, k].iter().zip(&self.dims).any(|(&c, &n)| c == 0 || c == n - 1);
                    if on_face && self.displacements[self.flat(i, j, k)] != Vector3::zeros() {
                        out.push([i, j, k]);
                    }
                }
            }
        }
        out
    }

    /// Bernstein sum of the displacements at local coordinates `s`.
    ///
    /// Evaluated relative to the first control displacement, so a uniform
    /// displacement field is reproduced exactly.
    fn displacement_at(&self, s: &Vector3<f64>) -> Vector3<f64> {
        let base = self.displacements[0];
        let [bs, bt, bu] = self.basis(s, bernstein);
        let mut acc = Vector3::zeros();
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                let w = bt[j] * bu[k];
                for i in 0..self.dims[0] {
                    let d = self.displacements[self.flat(i, j, k)] - base;
                    if d != Vector3::zeros() {
                        acc += d * (bs[i] * w);
                    }
                }
            }
        }
        base + acc
    }

    fn basis(&self, s: &Vector3<f64>, f: fn(usize, usize, f64) -> f64) -> [Vec<f64>; 3] {
        [0, 1, 2].map(|d| (0..self.dims[d]).map(|i| f(self.dims[d] - 1, i, s[d])).collect())
    }

    /// Deformed position of a single point.
    pub fn deform_point(&self, x: Vector3<f64>) -> Vector3<f64> {
        let s = self.local(&x);
        if !FfdLattice::inside(&s) {
            return x;
        }
        x + self.displacement_at(&s)
    }

    /// Analytic Jacobian `∂X'/∂X` of the map; identity outside the lattice.
    pub fn jacobian(&self, x: Vector3<f64>) -> Matrix3<f64> {
        let s = self.local(&x);
        if !FfdLattice::inside(&s) {
            return Matrix3::identity();
        }
        let b = self.basis(&s, bernstein);
        let db = self.basis(&s, bernstein_derivative);
        // ∂D/∂(s,t,u), then chain rule through s_d = (x − o)·a_d / |a_d|²
        let mut dds = Matrix3::zeros();
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    let d = self.displacements[self.flat(i, j, k)];
                    if d == Vector3::zeros() {
                        continue;
                    }
                    let grad = Vector3::new(
                        db[0][i] * b[1][j] * b[2][k],
                        b[0][i] * db[1][j] * b[2][k],
                        b[0][i] * b[1][j] * db[2][k],
                    );
                    dds += d * grad.transpose();
                }
            }
        }
        let ds_dx = Matrix3::from_rows(&self.axes.map(|a| (a / a.norm_squared()).transpose()));
        Matrix3::identity() + dds * ds_dx
    }
}

/// Free-form deformation; points outside the lattice are returned bit-for-bit.
pub fn ffd_deform(lattice: &FfdLattice, cloud: &PointCloud) -> Result<PointCloud> {
    let outer = lattice.boundary_displacements();
    if !outer.is_empty() {
        log::warn!(
            "displaced control points on the lattice boundary make the morph discontinuous there: {outer:?}"
        );
    }
    cloud.map_points(|x| Ok(lattice.deform_point(x)))
}

fn interpolated_deform(
    controls: &PointCloud,
    displacements: &Matrix,
    cloud: &PointCloud,
    config: InterpolatorConfig,
) -> Result<PointCloud> {
    if controls.is_empty() {
        return Err(Error::Validation("deformation needs at least one control point".into()));
    }
    if displacements.shape() != (3, controls.len()) {
        return Err(Error::Dimension(format!(
            "displacements are {}x{}, expected 3x{}",
            displacements.nrows(),
            displacements.ncols(),
            controls.len()
        )));
    }
    linalg::ensure_finite(displacements, "control displacements")?;
    let interp = Interpolant::fit(config, controls.points(), &displacements.transpose())?;
    cloud.map_points(|x| {
        let (d, _) = interp.evaluate(x.as_slice())?;
        Ok(x + Vector3::new(d[0], d[1], d[2]))
    })
}

/// Inverse-distance-weighted deformation driven by displaced control points.
pub fn idw_deform(controls: &PointCloud, displacements: &Matrix, cloud: &PointCloud, power: f64) -> Result<PointCloud> {
    interpolated_deform(controls, displacements, cloud, InterpolatorConfig::idw(power))
}

/// Radial-basis-function deformation; one kernel solve per Cartesian component.
pub fn rbf_deform(
    controls: &PointCloud,
    displacements: &Matrix,
    cloud: &PointCloud,
    config: &InterpolatorConfig,
) -> Result<PointCloud> {
    if matches!(config.kind, crate::interp::InterpolatorKind::Idw { .. }) {
        return Err(Error::Validation("rbf_deform needs a radial kernel, not IDW".into()));
    }
    interpolated_deform(controls, displacements, cloud, *config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: PointCloud,
    pub triangles: Vec<[usize; 3]>,
    pub name: String,
}

impl TriMesh {
    pub fn new(vertices: PointCloud, triangles: Vec<[usize; 3]>, name: impl Into<String>) -> Result<Self> {
        let n = vertices.len();
        if let Some((t, tri)) = triangles.iter().enumerate().find(|(_, tri)| tri.iter().any(|&v| v >= n)) {
            return Err(Error::Validation(format!(
                "triangle {t} references vertex {} but only {n} exist",
                tri.iter().max().copied().unwrap_or(0)
            )));
        }
        let mesh = TriMesh {
            vertices,
            triangles,
            name: name.into(),
        };
        let degenerate = mesh.degenerate_triangles();
        if !degenerate.is_empty() {
            log::warn!("{} degenerate (zero-area) triangles: {degenerate:?}", degenerate.len());
        }
        Ok(mesh)
    }

    fn corner(&self, t: usize, c: usize) -> Vector3<f64> {
        self.vertices.point(self.triangles[t][c])
    }

    /// Unit normal from the vertex winding; zero for a degenerate triangle.
    pub fn normal(&self, t: usize) -> Vector3<f64> {
        let n = (self.corner(t, 1) - self.corner(t, 0)).cross(&(self.corner(t, 2) - self.corner(t, 0)));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    pub fn degenerate_triangles(&self) -> Vec<usize> {
        (0..self.triangles.len())
            .filter(|&t| {
                let (a, b, c) = (self.corner(t, 0), self.corner(t, 1), self.corner(t, 2));
                (b - a).cross(&(c - a)).norm() == 0.0
            })
            .collect()
    }

    /// Same mesh with the vertices replaced (e.g. after a deformation).
    pub fn with_vertices(&self, vertices: PointCloud) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Dimension(format!(
                "{} vertices given for a mesh with {}",
                vertices.len(),
                self.vertices.len()
            )));
        }
        TriMesh::new(vertices, self.triangles.clone(), self.name.clone())
    }

    /// Merges vertices closer than `tol` (first occurrence wins) and drops
    /// vertices no longer referenced.
    pub fn weld(&self, tol: f64) -> Result<TriMesh> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Validation(format!("weld tolerance must be positive, got {tol}")));
        }
        let cell = |x: &Vector3<f64>| x.map(|v| (v / tol).floor() as i64);
        let mut grid: HashMap<Vector3<i64>, Vec<usize>> = HashMap::new();
        let mut kept: Vec<Vector3<f64>> = Vec::new();
        let mut remap = Vec::with_capacity(self.vertices.len());
        for j in 0..self.vertices.len() {
            let x = self.vertices.point(j);
            let c = cell(&x);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = grid.get(&(c + Vector3::new(dx, dy, dz))) {
                            if let Some(&hit) = list.iter().find(|&&v| (kept[v] - x).norm() <= tol) {
                                found = Some(hit);
                                break 'search;
                            }
                        }
                    }
                }
            }
            let id = found.unwrap_or_else(|| {
                kept.push(x);
                grid.entry(c).or_default().push(kept.len() - 1);
                kept.len() - 1
            });
            remap.push(id);
        }
        let triangles = self.triangles.iter().map(|t| t.map(|v| remap[v])).collect();
        let vertices = PointCloud::new(Matrix::from_fn(3, kept.len(), |i, j| kept[j][i]))?;
        TriMesh::new(vertices, triangles, self.name.clone())
    }

    pub fn to_stl(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "solid {}", self.name);
        for t in 0..self.triangles.len() {
            let n = self.normal(t);
            let _ = writeln!(out, "  facet normal {:e} {:e} {:e}", n.x, n.y, n.z);
            out.push_str("    outer loop\n");
            for c in 0..3 {
                let v = self.corner(t, c);
                let _ = writeln!(out, "      vertex {:e} {:e} {:e}", v.x, v.y, v.z);
            }
            out.push_str("    endloop\n  endfacet\n");
        }
        let _ = writeln!(out, "endsolid {}", self.name);
        out
    }

    pub fn parse_stl(bytes: &[u8], source: &str) -> Result<TriMesh> {
        let text = match std::str::from_utf8(bytes) {
            Ok(t) if t.trim_start().starts_with("solid") => t,
            _ if looks_like_binary_stl(bytes) => {
                return Err(Error::format(source, "binary STL is not supported; convert to ASCII STL"))
            }
            Ok(_) => return Err(Error::format(format!("{source}: line 1"), "expected `solid`")),
            Err(_) => return Err(Error::format(source, "not an ASCII STL file (non-text bytes)")),
        };
        StlParser::new(text, source).parse()
    }

    pub fn read_stl(path: &Path) -> Result<TriMesh> {
        let bytes = io::read_file(path)?;
        TriMesh::parse_stl(&bytes, &path.display().to_string())
    }

    pub fn write_stl(&self, path: &Path) -> Result<()> {
        let text = self.to_stl();
        io::atomic_write(path, |w| w.write_all(text.as_bytes()))
    }
}

fn looks_like_binary_stl(bytes: &[u8]) -> bool {
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as u64;
        if 84 + 50 * n == bytes.len() as u64 {
            return true;
        }
    }
    !bytes.is_ascii()
}

struct StlParser<'a> {
    tokens: Vec<(usize, &'a str)>,
    pos: usize,
    source: &'a str,
}

impl<'a> StlParser<'a> {
    fn new(text: &'a str, source: &'a str) -> Self {
        let tokens = text
            .lines()
            .enumerate()
            .flat_map(|(l, line)| line.split_whitespace().map(move |t| (l + 1, t)))
            .collect();
        StlParser { tokens, pos: 0, source }
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map_or(1, |t| t.0)
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::format(format!("{}: line {}", self.source, self.line()), message)
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(|t| t.1)
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        match self.peek() {
            Some(t) if t == word => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error(format!("expected `{word}`, found `{t}`"))),
            None => Err(self.error(format!("expected `{word}`, found end of file"))),
        }
    }

    fn number(&mut self) -> Result<f64> {
        let tok = self.peek().ok_or_else(|| self.error("expected a number, found end of file"))?;
        let v: f64 = tok
            .parse()
            .map_err(|_| self.error(format!("expected a number, found `{tok}`")))?;
        if !v.is_finite() {
            return Err(self.error(format!("non-finite coordinate `{tok}`")));
        }
        self.pos += 1;
        Ok(v)
    }

    /// Remaining tokens on the current line, joined (solid names may contain spaces).
    fn rest_of_line(&mut self, line: usize) -> String {
        let mut parts = Vec::new();
        while let Some(&(l, t)) = self.tokens.get(self.pos) {
            if l != line {
                break;
            }
            parts.push(t);
            self.pos += 1;
        }
        parts.join(" ")
    }

    fn parse(mut self) -> Result<TriMesh> {
        let solid_line = self.line();
        self.expect("solid")?;
        let name = self.rest_of_line(solid_line);
        let mut coords: Vec<[f64; 3]> = Vec::new();
        let mut triangles = Vec::new();
        loop {
            match self.peek() {
                Some("facet") => {}
                Some("endsolid") => {
                    let l = self.line();
                    self.pos += 1;
                    self.rest_of_line(l);
                    break;
                }
                Some(t) => return Err(self.error(format!("expected `facet` or `endsolid`, found `{t}`"))),
                None => return Err(self.error("missing `endsolid`")),
            }
            self.expect("facet")?;
            self.expect("normal")?;
            for _ in 0..3 {
                self.number()?;
            }
            let loop_line = self.line();
            self.expect("outer")?;
            self.expect("loop")?;
            let mut corners = Vec::with_capacity(3);
            while self.peek() == Some("vertex") {
                self.pos += 1;
                corners.push([self.number()?, self.number()?, self.number()?]);
            }
            if corners.len() != 3 {
                return Err(Error::format(
                    format!("{}: line {loop_line}", self.source),
                    format!("facet loop has {} vertices, expected 3", corners.len()),
                ));
            }
            self.expect("endloop")?;
            self.expect("endfacet")?;
            let base = coords.len();
            coords.extend(corners);
            triangles.push([base, base + 1, base + 2]);
        }
        if let Some(t) = self.peek() {
            return Err(self.error(format!("unexpected `{t}` after `endsolid`")));
        }
        TriMesh::new(PointCloud::from_points(&coords)?, triangles, name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const EYE: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    fn unit_lattice(n: usize) -> FfdLattice {
        FfdLattice::new([0.0; 3], EYE, [n; 3]).unwrap()
    }

    #[test]
    fn single_corner_displacement() {
        let mut lat = unit_lattice(2);
        lat.set_displacement(1, 1, 1, [1.0, 0.0, 0.0]).unwrap();
        let out = lat.deform_point(Vector3::new(0.5, 0.5, 0.5));
        assert_abs_diff_eq!(out.x, 0.625, epsilon = 1e-15);
        assert_eq!((out.y, out.z), (0.5, 0.5));
    }

    #[test]
    fn uniform_and_zero_displacement() {
        let pts = PointCloud::from_points(&[[0.1, 0.2, 0.3], [0.9, 0.5, 0.05], [2.0, 0.5, 0.5]]).unwrap();
        let lat = unit_lattice(3);
        assert_eq!(ffd_deform(&lat, &pts).unwrap(), pts);
        let mut lat = unit_lattice(3);
        for k in 0..3 {
            for j in 0..3 {
                for i in 0..3 {
                    lat.set_displacement(i, j, k, [0.25, -1.5, 3.0]).unwrap();
                }
            }
        }
        let out = ffd_deform(&lat, &pts).unwrap();
        for j in 0..2 {
            assert_eq!(out.point(j), pts.point(j) + Vector3::new(0.25, -1.5, 3.0));
        }
        assert_eq!(out.point(2), pts.point(2));
    }

    #[test]
    fn lattice_validation() {
        let zero = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(FfdLattice::new([0.0; 3], zero, [2; 3]), Err(Error::Validation(_))));
        let skew = [[1.0, 0.0, 0.0], [0.1, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(FfdLattice::new([0.0; 3], skew, [2; 3]), Err(Error::Validation(_))));
        assert!(matches!(FfdLattice::new([0.0; 3], EYE, [2, 1, 2]), Err(Error::Validation(_))));
        assert!(unit_lattice(2).set_displacement(2, 0, 0, [0.0; 3]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"origin":[0,0,0],"axes":[[2,0,0],[0,1,0],[0,0,1]],"dims":[3,2,2],
                       "displacements":[[1,1,1,0.5,0,0]]}"#;
        let lat = FfdLattice::from_json(text).unwrap();
        assert_eq!(lat.displacement(1, 1, 1).unwrap(), [0.5, 0.0, 0.0]);
        let back = serde_json::to_string(&lat.to_spec()).unwrap();
        assert_eq!(FfdLattice::from_json(&back).unwrap(), lat);
        let dup = r#"{"origin":[0,0,0],"axes":[[1,0,0],[0,1,0],[0,0,1]],"dims":[2,2,2],
                      "displacements":[[0,0,0,1,0,0],[0,0,0,2,0,0]]}"#;
        assert!(matches!(FfdLattice::from_json(dup), Err(Error::Validation(_))));
        assert!(matches!(FfdLattice::from_json("{"), Err(Error::Format { .. })));
    }

    #[test]
    fn boundary_layers_reported() {
        let mut lat = unit_lattice(3);
        lat.set_displacement(1, 1, 1, [1.0, 0.0, 0.0]).unwrap();
        assert!(lat.boundary_displacements().is_empty());
        lat.set_displacement(0, 1, 1, [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(lat.boundary_displacements(), vec![[0, 1, 1]]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut lat = FfdLattice::new([-1.0, 0.0, 0.5], [[2.0, 0.0, 0.0], [0.0, 1.5, 0.0], [0.0, 0.0, 1.0]], [3, 4, 2]).unwrap();
        lat.set_displacement(1, 2, 0, [0.3, -0.2, 0.1]).unwrap();
        lat.set_displacement(2, 1, 1, [0.0, 0.4, -0.5]).unwrap();
        let x = Vector3::new(0.1, 0.7, 0.9);
        let j = lat.jacobian(x);
        let h = 1e-6;
        for c in 0..3 {
            let mut e = Vector3::zeros();
            e[c] = h;
            let fd = (lat.deform_point(x + e) - lat.deform_point(x - e)) / (2.0 * h);
            for r in 0..3 {
                assert_abs_diff_eq!(j[(r, c)], fd[r], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn idw_examples() {
        let controls = PointCloud::from_points(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        let d = Matrix::from_column_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, -1.0, 0.0]);
        let q = PointCloud::from_points(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let out = idw_deform(&controls, &d, &q, 2.0).unwrap();
        assert_abs_diff_eq!(out.point(0).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(out.point(1), Vector3::new(1.0, 1.0, 0.0));
        let zero = idw_deform(&controls, &Matrix::zeros(3, 2), &q, 2.0).unwrap();
        assert_eq!(zero, q);
        let dup = PointCloud::from_points(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(idw_deform(&dup, &d, &q, 2.0), Err(Error::Validation(_))));
    }

    #[test]
    fn rbf_examples() {
        let g = InterpolatorConfig::gaussian(1.0, 0.0);
        let one = PointCloud::from_points(&[[0.5, 0.5, 0.5]]).unwrap();
        let d = Matrix::from_column_slice(3, 1, &[0.1, 0.2, 0.3]);
        let out = rbf_deform(&one, &d, &one, &g).unwrap();
        assert_eq!(out.point(0), Vector3::new(0.6, 0.7, 0.8));

        // two controls on the x axis, hand-solved 2x2 system
        let controls = PointCloud::from_points(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let delta = 0.3;
        let d = Matrix::from_column_slice(3, 2, &[delta, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let e = (-1.0f64).exp();
        let det = 1.0 - e * e;
        let (c0, c1) = (delta / det, -e * delta / det);
        let mid = (-0.25f64).exp();
        let q = PointCloud::from_points(&[[0.5, 0.0, 0.0]]).unwrap();
        let out = rbf_deform(&controls, &d, &q, &g).unwrap();
        assert_abs_diff_eq!(out.point(0).x, 0.5 + mid * (c0 + c1), epsilon = 1e-14);
        assert_eq!(rbf_deform(&controls, &Matrix::zeros(3, 2), &q, &g).unwrap(), q);
    }

    fn two_facets() -> TriMesh {
        let v = PointCloud::from_points(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
        ])
        .unwrap();
        TriMesh::new(v, vec![[0, 1, 2], [3, 4, 5]], "pair").unwrap()
    }

    #[test]
    fn stl_round_trip_and_weld() {
        let mesh = two_facets();
        let text = mesh.to_stl();
        assert!(text.contains("facet normal 0e0 0e0 1e0"));
        let back = TriMesh::parse_stl(text.as_bytes(), "mem").unwrap();
        assert_eq!(back, mesh);
        let welded = back.weld(WELD_TOL).unwrap();
        assert_eq!(welded.vertices.len(), 4);
        assert_eq!(welded.triangles, vec![[0, 1, 2], [1, 3, 2]]);
    }

    #[test]
    fn empty_solid() {
        let m = TriMesh::parse_stl(b"solid empty\nendsolid empty\n", "mem").unwrap();
        assert!(m.triangles.is_empty());
        assert_eq!(m.name, "empty");
    }

    #[test]
    fn stl_errors_carry_lines() {
        let four = "solid x\nfacet normal 0 0 1\nouter loop\nvertex 0 0 0\nvertex 1 0 0\nvertex 0 1 0\nvertex 1 1 0\nendloop\nendfacet\nendsolid x\n";
        match TriMesh::parse_stl(four.as_bytes(), "f.stl") {
            Err(Error::Format { location, message }) => {
                assert_eq!(location, "f.stl: line 3");
                assert!(message.contains("4 vertices"));
            }
            other => panic!("{other:?}"),
        }
        let bad = "solid x\nfacet normal 0 0 1\nouter loop\nvertex 0 zero 0\n";
        match TriMesh::parse_stl(bad.as_bytes(), "f.stl") {
            Err(Error::Format { location, .. }) => assert_eq!(location, "f.stl: line 4"),
            other => panic!("{other:?}"),
        }
        let mut binary = vec![0u8; 84 + 50];
        binary[80] = 1;
        match TriMesh::parse_stl(&binary, "b.stl") {
            Err(Error::Format { message, .. }) => assert!(message.contains("binary")),
            other => panic!("{other:?}"),
        }
    }
}
