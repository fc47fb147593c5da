//! Lowest-order Courant elements: element matrices, global assembly, nested
//! coarse/fine systems and a Jacobi-preconditioned CG solver.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Error, Result};
use crate::geom;
use crate::mesh::{Mesh, NodeId, Vertex};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Builds from triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); nrows];
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
            *rows[i].entry(j).or_insert(0.0) += v;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for (j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Csr { nrows, ncols, indptr, indices, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `self^T x`.
    pub fn mul_vec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Csr {
        Csr::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v)))
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.ncols, other.nrows);
        let mut trip = Vec::new();
        for i in 0..self.nrows {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    *acc.entry(j).or_insert(0.0) += a * b;
                }
            }
            trip.extend(acc.into_iter().map(|(j, v)| (i, j, v)));
        }
        Csr::from_triplets(self.nrows, other.ncols, trip)
    }

    /// Coordinate text format: a `rows cols nnz` header, then `i j value` lines.
    pub fn to_triplet_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.nrows, self.ncols, self.nnz());
        for (i, j, v) in self.triplets() {
            let _ = writeln!(out, "{i} {j} {v:e}");
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { rel_tol: 1e-12, max_iter: 20_000 }
    }
}

/// Solves `a x = b` by Jacobi-preconditioned CG starting from `x`. For a
/// singular `a` the right-hand side must be consistent. Returns the iteration count.
pub fn pcg(a: &Csr, b: &[f64], x: &mut [f64], opts: CgOptions) -> Result<usize> {
    let n = b.len();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let ax = a.mul_vec(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let tol = opts.rel_tol * bnorm;
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..opts.max_iter {
        if dot(&r, &r).sqrt() <= tol {
            return Ok(it);
        }
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NumericFailure {
                message: format!("CG breakdown after {it} iterations (p^T A p = {pap:e})"),
                estimate: dot(&r, &r).sqrt() / bnorm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = dot(&r, &r).sqrt() / bnorm;
    if res <= opts.rel_tol {
        return Ok(opts.max_iter);
    }
    Err(Error::NumericFailure {
        message: format!("CG did not converge in {} iterations", opts.max_iter),
        estimate: res,
    })
}

fn signed_area(p: &[Vertex; 3]) -> f64 {
    0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y))
}

/// Exact P1 mass matrix: `|T|/6` on the diagonal, `|T|/12` off it.
pub fn element_mass(p: &[Vertex; 3]) -> Result<Matrix3<f64>> {
    let area = signed_area(p).abs();
    if !(area > 0.0) || !area.is_finite() {
        return invalid(format!("degenerate triangle {p:?}"));
    }
    Ok(Matrix3::from_fn(|i, j| if i == j { area / 6.0 } else { area / 12.0 }))
}

/// Exact P1 stiffness matrix.
pub fn element_stiffness(p: &[Vertex; 3]) -> Result<Matrix3<f64>> {
    let area = signed_area(p);
    if area == 0.0 || !area.is_finite() {
        return invalid(format!("degenerate triangle {p:?}"));
    }
    // gradient of the hat at vertex i is the rotated opposite edge over 2|T|
    let g: [Vector3<f64>; 3] = std::array::from_fn(|i| {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        Vector3::new(a.y - b.y, b.x - a.x, 0.0) / (2.0 * area)
    });
    Ok(Matrix3::from_fn(|i, j| area.abs() * g[i].dot(&g[j])))
}

/// Global mass and stiffness matrices, optionally with the nested coarse data.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub mass: Csr,
    pub stiffness: Csr,
    pub nested: Option<Nested>,
}

/// Coarse system plus the maps to a nested fine space.
#[derive(Clone, Debug)]
pub struct Nested {
    pub coarse_mass: Csr,
    pub coarse_stiffness: Csr,
    /// Fine coefficients of the coarse hat functions (`n_fine x n_coarse`).
    pub prolongation: Csr,
    /// `B_ij = int phi_i^coarse phi_j^fine`.
    pub cross_mass: Csr,
}

pub fn assemble(mesh: &Mesh) -> Result<SparseSystem> {
    let (mass, stiffness) = assemble_pair(mesh)?;
    Ok(SparseSystem { mass, stiffness, nested: None })
}

fn assemble_pair(mesh: &Mesh) -> Result<(Csr, Csr)> {
    let n = mesh.num_nodes();
    let ne = mesh.num_elements();
    let mut m = Vec::with_capacity(9 * ne);
    let mut k = Vec::with_capacity(9 * ne);
    for (t, el) in mesh.elements().iter().enumerate() {
        let p = mesh.coords(t);
        let mt = element_mass(&p)?;
        let kt = element_stiffness(&p)?;
        for i in 0..3 {
            for j in 0..3 {
                m.push((el.v[i], el.v[j], mt[(i, j)]));
                k.push((el.v[i], el.v[j], kt[(i, j)]));
            }
        }
    }
    Ok((Csr::from_triplets(n, n, m), Csr::from_triplets(n, n, k)))
}

/// Uniform bucket grid over element bounding boxes for point location.
pub(crate) struct Locator {
    origin: [f64; 2],
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    pub(crate) fn new(mesh: &Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in mesh.vertices() {
            lo = [lo[0].min(v.x), lo[1].min(v.y)];
            hi = [hi[0].max(v.x), hi[1].max(v.y)];
        }
        let side = (mesh.num_elements() as f64).sqrt().ceil().max(1.0) as usize;
        let dims = [side, side];
        let cell = [
            ((hi[0] - lo[0]) / side as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / side as f64).max(f64::MIN_POSITIVE),
        ];
        let mut loc = Locator { origin: lo, cell, dims, buckets: vec![Vec::new(); side * side] };
        for t in 0..mesh.num_elements() {
            let p = mesh.coords(t);
            let (x0, x1) = (
                p.iter().map(|v| v.x).fold(f64::INFINITY, f64::min),
                p.iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max),
            );
            let (y0, y1) = (
                p.iter().map(|v| v.y).fold(f64::INFINITY, f64::min),
                p.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max),
            );
            let (i0, j0) = loc.cell_of(x0, y0);
            let (i1, j1) = loc.cell_of(x1, y1);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    loc.buckets[j * dims[0] + i].push(t);
                }
            }
        }
        loc
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let f = |v: f64, o: f64, c: f64, d: usize| (((v - o) / c).floor().max(0.0) as usize).min(d - 1);
        (f(x, self.origin[0], self.cell[0], self.dims[0]), f(y, self.origin[1], self.cell[1], self.dims[1]))
    }

    /// Candidate elements whose bounding box may contain the point.
    pub(crate) fn candidates(&self, p: &Vertex) -> &[usize] {
        let (i, j) = self.cell_of(p.x, p.y);
        &self.buckets[j * self.dims[0] + i]
    }
}

pub(crate) fn barycentric(p: &Vertex, c: &[Vertex; 3]) -> [f64; 3] {
    let a = signed_area(c);
    let l1 = signed_area(&[c[0], *p, c[2]]) / a;
    let l2 = signed_area(&[c[0], c[1], *p]) / a;
    [1.0 - l1 - l2, l1, l2]
}

/// Assembles both levels and the prolongation. Every fine element must lie
/// inside one coarse element; this is checked geometrically.
pub fn assemble_nested(coarse: &Mesh, fine: &Mesh) -> Result<SparseSystem> {
    let (cm, ck) = assemble_pair(coarse)?;
    let (fm, fk) = assemble_pair(fine)?;
    let loc = Locator::new(coarse);
    let mut host = vec![usize::MAX; fine.num_elements()];
    for t in 0..fine.num_elements() {
        let f = fine.coords(t);
        let c = fine.centroid(t);
        host[t] = loc
            .candidates(&c)
            .iter()
            .copied()
            .find(|&h| {
                let hc = coarse.coords(h);
                geom::point_in_triangle(&c, &hc) && f.iter().all(|v| geom::point_in_triangle(v, &hc))
            })
            .ok_or_else(|| Error::InvalidArgument(format!("fine element {t} is not inside a coarse element")))?;
    }
    let mut rows: Vec<Option<Vec<(usize, f64)>>> = vec![None; fine.num_nodes()];
    for (t, el) in fine.elements().iter().enumerate() {
        let hel = &coarse.elements()[host[t]];
        let hc = coarse.coords(host[t]);
        for &n in &el.v {
            if rows[n].is_none() {
                let lam = barycentric(fine.vertex(n), &hc);
                let entries = (0..3).filter(|&i| lam[i].abs() > 1e-14).map(|i| (hel.v[i], lam[i])).collect();
                rows[n] = Some(entries);
            }
        }
    }
    let mut trip = Vec::new();
    for (n, row) in rows.into_iter().enumerate() {
        let row = row.ok_or_else(|| Error::InvalidArgument(format!("fine node {n} belongs to no element")))?;
        trip.extend(row.into_iter().map(|(c, v)| (n, c as NodeId, v)));
    }
    let prolongation = Csr::from_triplets(fine.num_nodes(), coarse.num_nodes(), trip);
    let cross_mass = prolongation.transpose().matmul(&fm);
    Ok(SparseSystem {
        mass: fm,
        stiffness: fk,
        nested: Some(Nested { coarse_mass: cm, coarse_stiffness: ck, prolongation, cross_mass }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;
    use crate::refine::{uniform, UniformKind};

    fn reference() -> [Vertex; 3] {
        [Vertex::new(0.0, 0.0), Vertex::new(1.0, 0.0), Vertex::new(0.0, 1.0)]
    }

    #[test]
    fn reference_element_matrices() {
        let m = element_mass(&reference()).unwrap();
        assert!((m[(0, 0)] - 1.0 / 12.0).abs() < 1e-15);
        assert!((m[(0, 1)] - 1.0 / 24.0).abs() < 1e-15);
        let k = element_stiffness(&reference()).unwrap();
        let expect = Matrix3::new(1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5);
        assert!((k - expect).norm() < 1e-15);
        let line = [Vertex::new(0.0, 0.0), Vertex::new(1.0, 0.0), Vertex::new(2.0, 0.0)];
        assert!(element_mass(&line).is_err());
    }

    #[test]
    fn global_sums() {
        let mesh = generate::lshape6();
        let s = assemble(&mesh).unwrap();
        let total: f64 = s.mass.triplets().map(|(_, _, v)| v).sum();
        assert!((total - 3.0).abs() < 1e-12);
        let ones = vec![1.0; mesh.num_nodes()];
        assert!(s.stiffness.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pcg_solves_mass_system() {
        let mesh = generate::grid(4).unwrap();
        let s = assemble(&mesh).unwrap();
        let b: Vec<f64> = (0..mesh.num_nodes()).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; b.len()];
        pcg(&s.mass, &b, &mut x, CgOptions::default()).unwrap();
        let r = s.mass.mul_vec(&x);
        assert!(r.iter().zip(&b).all(|(r, b)| (r - b).abs() < 1e-10));
    }

    #[test]
    fn nested_prolongation_reproduces_coarse_hats() {
        let coarse = generate::lshape6();
        let fine = uniform(&coarse, UniformKind::Bisec3);
        let s = assemble_nested(&coarse, &fine).unwrap();
        let nest = s.nested.unwrap();
        for n in 0..coarse.num_nodes() {
            // coarse nodes are kept as fine nodes
            assert_eq!(nest.prolongation.get(n, n), 1.0);
        }
        let ones = vec![1.0; coarse.num_nodes()];
        assert!(nest.prolongation.mul_vec(&ones).iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(assemble_nested(&fine, &coarse).is_err());
    }
}
