//! Nodal weights, the local eigenvalue conditions built on them, and a direct
//! measurement of the H1 stability of the L2 projection.
//!
//! The weight of node `z_j` is `d_j = 2^(e_j/2)` with the integer exponent
//! `e_j = min_T (2 delta(z_j, T) - gen(T))`, where `delta` counts the elements
//! of a shortest edge-connected element path. [`PathRule::SharedNode`] lets
//! consecutive path elements share only a node instead.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fem::{assemble_nested, dot, pcg, CgOptions, SparseSystem};
use crate::mesh::{ElemId, Mesh, NodeId};

/// What consecutive elements of a path must have in common.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum PathRule {
    #[default]
    SharedEdge,
    SharedNode,
}

fn path_adjacency(mesh: &Mesh, stars: &[Vec<ElemId>], rule: PathRule) -> Vec<Vec<ElemId>> {
    match rule {
        PathRule::SharedEdge => mesh.dual_adjacency().into_iter().map(|a| a.to_vec()).collect(),
        PathRule::SharedNode => mesh
            .elements()
            .iter()
            .enumerate()
            .map(|(t, e)| {
                let mut adj: Vec<ElemId> =
                    e.v.iter().flat_map(|&k| stars[k].iter().copied()).filter(|&s| s != t).collect();
                adj.sort_unstable();
                adj.dedup();
                adj
            })
            .collect(),
    }
}

/// Element-path distances between nodes, evaluated lazily per source node.
pub struct DeltaOracle<'a> {
    mesh: &'a Mesh,
    stars: Vec<Vec<ElemId>>,
    adjacency: Vec<Vec<ElemId>>,
}

pub fn delta_distance(mesh: &Mesh) -> DeltaOracle<'_> {
    delta_distance_with(mesh, PathRule::SharedEdge)
}

pub fn delta_distance_with(mesh: &Mesh, rule: PathRule) -> DeltaOracle<'_> {
    let stars = mesh.node_stars();
    let adjacency = path_adjacency(mesh, &stars, rule);
    DeltaOracle { mesh, stars, adjacency }
}

impl DeltaOracle<'_> {
    /// Number of elements on a shortest path from the star of `j` to each element;
    /// `None` if unreachable. Elements containing `j` are at distance 1.
    pub fn element_distances(&self, j: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.mesh.num_elements()];
        let mut queue = VecDeque::new();
        for &t in &self.stars[j] {
            dist[t] = Some(1);
            queue.push_back(t);
        }
        while let Some(t) = queue.pop_front() {
            let d = dist[t].expect("queued elements have a distance");
            for &s in &self.adjacency[t] {
                if dist[s].is_none() {
                    dist[s] = Some(d + 1);
                    queue.push_back(s);
                }
            }
        }
        dist
    }

    /// `delta(z_j, z_k)` for all `k`; `None` means no connecting path.
    pub fn from_node(&self, j: NodeId) -> Vec<Option<u32>> {
        let el = self.element_distances(j);
        let mut out: Vec<Option<u32>> = vec![None; self.mesh.num_nodes()];
        for (t, e) in self.mesh.elements().iter().enumerate() {
            if let Some(d) = el[t] {
                for &k in &e.v {
                    out[k] = Some(out[k].map_or(d, |o| o.min(d)));
                }
            }
        }
        out[j] = Some(0);
        out
    }

    pub fn delta(&self, j: NodeId, k: NodeId) -> Option<u32> {
        self.from_node(j)[k]
    }
}

/// Per-node weights `d_j`. Weights computed from the mesh carry their exponents.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeWeights {
    pub d: Vec<f64>,
    pub exponent: Option<Vec<i32>>,
}

impl NodeWeights {
    pub fn from_exponents(exponent: Vec<i32>) -> Self {
        let d = exponent.iter().map(|&e| weight_from_exponent(e)).collect();
        NodeWeights { d, exponent: Some(exponent) }
    }

    /// Weights given as plain values; ratio checks then use floating point.
    pub fn from_values(d: Vec<f64>) -> Self {
        NodeWeights { d, exponent: None }
    }

    /// `node,x,y,exponent,d` rows; the exponent column is empty for plain weights.
    pub fn to_csv(&self, mesh: &Mesh) -> String {
        let mut out = String::from("node,x,y,exponent,d\n");
        for (j, v) in mesh.vertices().iter().enumerate() {
            let e = self.exponent.as_ref().map(|e| e[j].to_string()).unwrap_or_default();
            let _ = writeln!(out, "{j},{},{},{e},{}", v.x, v.y, self.d[j]);
        }
        out
    }
}

fn weight_from_exponent(e: i32) -> f64 {
    let half = 2f64.powi(e.div_euclid(2));
    if e.rem_euclid(2) == 0 {
        half
    } else {
        half * std::f64::consts::SQRT_2
    }
}

fn check_connected(mesh: &Mesh) -> Result<()> {
    if mesh.num_elements() == 0 {
        return invalid("mesh has no elements");
    }
    let dual = mesh.dual_adjacency();
    let mut seen = vec![false; mesh.num_elements()];
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    while let Some(t) = queue.pop_front() {
        for &s in &dual[t] {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
    }
    if let Some(t) = seen.iter().position(|&r| !r) {
        return invalid(format!("mesh is not edge-connected: element {t} is unreachable"));
    }
    Ok(())
}

/// Exponents `e_j` by a multi-source shortest path on the dual graph. Every
/// element `S` starts at `-max gen over the stars of its nodes` and each dual
/// step adds 2; a node then takes the better of its own finest star element
/// and `2 +` the best value among its star.
pub fn weight_exponents(mesh: &Mesh) -> Result<Vec<i32>> {
    weight_exponents_with(mesh, PathRule::SharedEdge)
}

pub fn weight_exponents_with(mesh: &Mesh, rule: PathRule) -> Result<Vec<i32>> {
    check_connected(mesh)?;
    let stars = mesh.node_stars();
    let dual = path_adjacency(mesh, &stars, rule);
    let el = mesh.elements();
    let gmax: Vec<i64> = stars.iter().map(|s| s.iter().map(|&t| el[t].gen as i64).max().unwrap_or(0)).collect();
    let mut u: Vec<i64> = el.iter().map(|e| -e.v.iter().map(|&k| gmax[k]).max().expect("three nodes")).collect();
    let mut heap: BinaryHeap<Reverse<(i64, ElemId)>> = u.iter().enumerate().map(|(t, &w)| Reverse((w, t))).collect();
    while let Some(Reverse((w, t))) = heap.pop() {
        if w > u[t] {
            continue;
        }
        for &s in &dual[t] {
            if w + 2 < u[s] {
                u[s] = w + 2;
                heap.push(Reverse((w + 2, s)));
            }
        }
    }
    Ok(stars
        .iter()
        .enumerate()
        .map(|(j, star)| {
            let via = star.iter().map(|&t| u[t]).min().map_or(i64::MAX, |m| m + 2);
            (-gmax[j]).min(via) as i32
        })
        .collect())
}

pub fn compute_weights(mesh: &Mesh) -> Result<NodeWeights> {
    compute_weights_with(mesh, PathRule::SharedEdge)
}

pub fn compute_weights_with(mesh: &Mesh, rule: PathRule) -> Result<NodeWeights> {
    Ok(NodeWeights::from_exponents(weight_exponents_with(mesh, rule)?))
}

/// Conditions evaluated on one element.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElementCondition {
    pub elem: ElemId,
    pub max_ratio: f64,
    /// `sum_{j,k} d_j^2 / d_k^2` over the element's nodes.
    pub s: f64,
    /// `5 - sqrt(s)`.
    pub lambda_min: f64,
    /// Smallest eigenvalue of the scaled matrix from a direct solve.
    pub lambda_min_eigen: f64,
    /// `1 + r^2 + r^-2 < 11` with the realized ratio `r`.
    pub relaxed_ok: bool,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub elements: Vec<ElementCondition>,
    pub c5_realized: f64,
    pub c6_realized: f64,
    pub c7: f64,
    pub c8: f64,
    pub max_s: f64,
    pub min_lambda_min: f64,
    pub max_eigen_mismatch: f64,
    pub violations: usize,
    pub relaxed_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_constant: Option<f64>,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Scaled element matrix with entries `(d_j/d_k + d_k/d_j)(1 + delta_jk)`.
pub fn scaled_matrix(d: [f64; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|j, k| (d[j] / d[k] + d[k] / d[j]) * if j == k { 2.0 } else { 1.0 })
}

/// Largest `lambda` with `num x = lambda den x`; `den` must be positive definite.
pub fn generalized_max_eigenvalue(num: &Matrix3<f64>, den: &Matrix3<f64>) -> Result<f64> {
    let chol = den.cholesky().ok_or_else(|| Error::NumericFailure {
        message: "matrix is not positive definite".into(),
        estimate: den.determinant(),
    })?;
    let linv = chol.l().try_inverse().expect("Cholesky factor is invertible");
    let c = &linv * num * linv.transpose();
    let c = (c + c.transpose()) * 0.5;
    Ok(SymmetricEigen::new(c).eigenvalues.max())
}

pub fn check_conditions(mesh: &Mesh, d: &NodeWeights) -> StabilityReport {
    let mut elements = Vec::with_capacity(mesh.num_elements());
    for (t, el) in mesh.elements().iter().enumerate() {
        let dt = el.v.map(|k| d.d[k]);
        let (max_ratio, s, ratio_ok, s_ok) = match &d.exponent {
            Some(e) => {
                let et = el.v.map(|k| e[k]);
                let spread = et.iter().max().unwrap() - et.iter().min().unwrap();
                let s: f64 =
                    (0..3).flat_map(|j| (0..3).map(move |k| (j, k))).map(|(j, k)| 2f64.powi(et[j] - et[k])).sum();
                (weight_from_exponent(spread), s, spread <= 2, s < 25.0)
            }
            None => {
                let hi = dt.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = dt.iter().copied().fold(f64::INFINITY, f64::min);
                let s: f64 =
                    (0..3).flat_map(|j| (0..3).map(move |k| (j, k))).map(|(j, k)| (dt[j] / dt[k]).powi(2)).sum();
                (hi / lo, s, hi / lo <= 2.0 * (1.0 + 1e-12), s < 25.0)
            }
        };
        let lambda_min = 5.0 - s.sqrt();
        let lambda_min_eigen = SymmetricEigen::new(scaled_matrix(dt)).eigenvalues.min();
        let h = mesh.diameter(t);
        let c6 = dt.iter().map(|&dj| (dj / h).max(h / dj)).fold(1.0, f64::max);
        let (c7, c8) = local_constants(mesh, t, dt, h).unwrap_or((f64::INFINITY, f64::INFINITY));
        elements.push(ElementCondition {
            elem: t,
            max_ratio,
            s,
            lambda_min,
            lambda_min_eigen,
            relaxed_ok: 1.0 + max_ratio * max_ratio + max_ratio.powi(-2) < 11.0,
            c6,
            c7,
            c8,
            passed: ratio_ok && s_ok && lambda_min > 0.0,
        });
    }
    let fold = |f: fn(&ElementCondition) -> f64| elements.iter().map(f).fold(0.0, f64::max);
    StabilityReport {
        c5_realized: fold(|c| c.max_ratio),
        c6_realized: fold(|c| c.c6),
        c7: fold(|c| c.c7),
        c8: fold(|c| c.c8),
        max_s: fold(|c| c.s),
        min_lambda_min: elements.iter().map(|c| c.lambda_min).fold(f64::INFINITY, f64::min),
        max_eigen_mismatch: fold(|c| (c.lambda_min - c.lambda_min_eigen).abs()),
        violations: elements.iter().filter(|c| !c.passed).count(),
        relaxed_ok: elements.iter().all(|c| c.relaxed_ok),
        elements,
        measured_constant: None,
    }
}

/// Tightest constants in the two quadratic-form bounds for one element, with
/// the scaling `diag(h / d_j)`.
fn local_constants(mesh: &Mesh, t: ElemId, d: [f64; 3], h: f64) -> Result<(f64, f64)> {
    let m = crate::fem::element_mass(&mesh.coords(t))?;
    let l2 = Matrix3::from_diagonal(&nalgebra::Vector3::from_fn(|i, _| (h / d[i]).powi(2)));
    let upper = &l2 * m * &l2;
    let sym = (&l2 * m + m * &l2) * 0.5;
    Ok((generalized_max_eigenvalue(&upper, &m)?, generalized_max_eigenvalue(&m, &sym)?))
}

/// Coarse coefficients of the L2 projection of the fine function `u`.
pub fn project_l2(system: &SparseSystem, u: &[f64]) -> Result<Vec<f64>> {
    let nest = system.nested.as_ref().ok_or_else(|| Error::InvalidArgument("system has no coarse level".into()))?;
    if u.len() != system.mass.nrows() {
        return invalid(format!("expected {} fine coefficients, got {}", system.mass.nrows(), u.len()));
    }
    let rhs = nest.cross_mass.mul_vec(u);
    solve_mass(&nest.coarse_mass, &rhs)
}

fn solve_mass(m: &crate::fem::Csr, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut c = vec![0.0; rhs.len()];
    pcg(m, rhs, &mut c, CgOptions::default())?;
    let r = m.mul_vec(&c);
    let res = r.iter().zip(rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = dot(rhs, rhs).sqrt();
    if res > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NumericFailure { message: "mass solve residual too large".into(), estimate: res / scale });
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug)]
pub struct PowerOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions { rel_tol: 1e-9, max_iter: 5000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measurement {
    pub constant: f64,
    pub iterations: usize,
    pub coarse_nodes: usize,
    pub fine_nodes: usize,
}

/// `sup ||grad P u|| / ||grad u||` over non-constant fine functions `u`, with
/// `P` the L2 projection onto the coarse space. The supremum runs over the fine
/// space only, so the value bounds the continuous operator norm from below.
pub fn measure_h1_stability(coarse: &Mesh, fine: &Mesh) -> Result<f64> {
    Ok(measure_h1_stability_with(coarse, fine, PowerOptions::default())?.constant)
}

/// Power iteration for the largest eigenvalue of `K_f^+ A` with
/// `A = B^T M_c^-1 K_c M_c^-1 B`, constants removed M-orthogonally.
pub fn measure_h1_stability_with(coarse: &Mesh, fine: &Mesh, opts: PowerOptions) -> Result<Measurement> {
    check_connected(fine)?;
    let sys = assemble_nested(coarse, fine)?;
    let nest = sys.nested.as_ref().expect("nested system");
    let n = fine.num_nodes();
    let m1 = sys.mass.mul_vec(&vec![1.0; n]);
    let total: f64 = m1.iter().sum();
    let deflate = |x: &mut Vec<f64>| {
        let c = dot(&m1, x) / total;
        x.iter_mut().for_each(|v| *v -= c);
    };
    let apply_a = |x: &[f64]| -> Result<Vec<f64>> {
        let c = solve_mass(&nest.coarse_mass, &nest.cross_mass.mul_vec(x))?;
        let y = solve_mass(&nest.coarse_mass, &nest.coarse_stiffness.mul_vec(&c))?;
        Ok(nest.cross_mass.mul_vec_t(&y))
    };
    let energy = |x: &[f64]| dot(x, &sys.stiffness.mul_vec(x));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    deflate(&mut x);
    let mut lambda_prev = f64::NAN;
    let mut lambda = 0.0;
    for it in 1..=opts.max_iter {
        let kx = energy(&x).sqrt();
        if !(kx > 0.0) {
            return Err(Error::NumericFailure {
                message: "iterate collapsed onto the constants".into(),
                estimate: lambda,
            });
        }
        x.iter_mut().for_each(|v| *v /= kx);
        let mut z = apply_a(&x)?;
        lambda = dot(&x, &z);
        if (lambda - lambda_prev).abs() <= opts.rel_tol * lambda.abs() {
            return Ok(Measurement {
                constant: lambda.sqrt(),
                iterations: it,
                coarse_nodes: coarse.num_nodes(),
                fine_nodes: n,
            });
        }
        lambda_prev = lambda;
        let mean = z.iter().sum::<f64>() / n as f64;
        z.iter_mut().for_each(|v| *v -= mean);
        let mut next: Vec<f64> = x.iter().map(|v| v * lambda).collect();
        pcg(&sys.stiffness, &z, &mut next, CgOptions { rel_tol: 1e-11, max_iter: 50_000 })?;
        deflate(&mut next);
        x = next;
    }
    Err(Error::NumericFailure {
        message: format!("power iteration did not converge in {} steps", opts.max_iter),
        estimate: lambda.sqrt(),
    })
}

/// Weights, conditions and, when a fine mesh is given, the measured constant.
pub fn stability_report(coarse: &Mesh, fine: Option<&Mesh>) -> Result<(NodeWeights, StabilityReport)> {
    let w = compute_weights(coarse)?;
    let mut report = check_conditions(coarse, &w);
    if let Some(fine) = fine {
        report.measured_constant = Some(measure_h1_stability(coarse, fine)?);
    }
    Ok((w, report))
}
