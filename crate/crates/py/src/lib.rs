//! Python module `nvbpy`: meshes, refinement, structural checks and H1-stability.

use std::collections::BTreeSet;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nvb_core::analysis::{verify_levels, verify_neighbor_rules};
use nvb_core::driver::{self, RunConfig};
use nvb_core::generate::{self, RefEdgePolicy};
use nvb_core::marking::{EdgeRule, MarkingStrategy};
use nvb_core::refine::{refine_step, Dialect, MarkingInput, PatternPolicy, UniformKind};
use nvb_core::stability::{self, NodeWeights, PathRule};
use nvb_core::{EdgeKey, Element, Error, Mesh, Vertex};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (Error::Invariant(_) | Error::NumericFailure { .. }) => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn dialect(name: &str) -> PyResult<Dialect> {
    Ok(match name {
        "refine-nvb" => Dialect::RefineNvb,
        "refine-nvb3" => Dialect::RefineNvb3,
        "refine-nvb-red" => Dialect::RefineNvbRed,
        "refine" => Dialect::Refine,
        _ => return Err(PyValueError::new_err(format!("unknown dialect {name:?}"))),
    })
}

fn policy(name: &str) -> PyResult<PatternPolicy> {
    Ok(match name {
        "bisec3" => PatternPolicy::AlwaysBisec3,
        "red" => PatternPolicy::AlwaysRed,
        "bisec5" => PatternPolicy::InteriorNode,
        _ => return Err(PyValueError::new_err(format!("unknown pattern policy {name:?}"))),
    })
}

fn path_rule(name: &str) -> PyResult<PathRule> {
    match name {
        "edge" => Ok(PathRule::SharedEdge),
        "node" => Ok(PathRule::SharedNode),
        _ => Err(PyValueError::new_err(format!("unknown path rule {name:?}"))),
    }
}

/// A conforming triangulation with NVB labels.
#[pyclass(name = "Mesh", module = "nvbpy", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMesh {
    inner: Mesh,
}

#[pymethods]
impl PyMesh {
    /// Initial mesh: element `t` is `(v0, v1, v2)` with reference edge `(v0, v1)`.
    #[new]
    fn new(vertices: Vec<(f64, f64)>, elements: Vec<[usize; 3]>) -> PyResult<Self> {
        let vertices = vertices.into_iter().map(|(x, y)| Vertex::new(x, y)).collect();
        let elements = elements.into_iter().enumerate().map(|(t, v)| Element::initial(v, t)).collect();
        Ok(PyMesh { inner: Mesh::new(vertices, elements).map_err(py_err)? })
    }

    /// `square2`, `lshape6` or `gridN`.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        Ok(PyMesh { inner: generate::builtin(name).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_nvbm(text: &str) -> PyResult<Self> {
        Ok(PyMesh { inner: nvb_core::io::parse_nvbm(text).map_err(py_err)? })
    }

    fn to_nvbm(&self) -> String {
        nvb_core::io::to_nvbm(&self.inner)
    }

    /// Re-labels reference edges: `as-given`, `longest-edge` or `random`.
    #[pyo3(signature = (policy, seed = 0))]
    fn with_reference_edges(&self, policy: &str, seed: u64) -> PyResult<Self> {
        let p = match policy {
            "as-given" => RefEdgePolicy::AsGiven,
            "longest-edge" => RefEdgePolicy::LongestEdge,
            "random" => RefEdgePolicy::Random { seed },
            _ => return Err(PyValueError::new_err(format!("unknown reference edge policy {policy:?}"))),
        };
        Ok(PyMesh { inner: generate::apply_ref_policy(&self.inner, p) })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_elements(&self) -> usize {
        self.inner.num_elements()
    }

    #[getter]
    fn vertices(&self) -> Vec<(f64, f64)> {
        self.inner.vertices().iter().map(|v| (v.x, v.y)).collect()
    }

    #[getter]
    fn elements(&self) -> Vec<[usize; 3]> {
        self.inner.elements().iter().map(|e| e.v).collect()
    }

    #[getter]
    fn generations(&self) -> Vec<u32> {
        self.inner.elements().iter().map(|e| e.gen).collect()
    }

    fn area(&self, t: usize) -> PyResult<f64> {
        self.inner.element(t).map_err(py_err)?;
        Ok(self.inner.area(t))
    }

    fn total_area(&self) -> f64 {
        self.inner.total_area()
    }

    fn is_valid(&self) -> bool {
        self.inner.validate().is_valid()
    }

    fn __len__(&self) -> usize {
        self.inner.num_elements()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(nodes={}, elements={})", self.inner.num_nodes(), self.inner.num_elements())
    }
}

/// One refinement step. Without `edges` the reference edges of the marked
/// elements are used; edges are given as node pairs.
#[pyfunction]
#[pyo3(signature = (mesh, marked, edges = None, dialect = "refine-nvb", policy = "bisec3"))]
fn refine(
    mesh: &PyMesh,
    marked: Vec<usize>,
    edges: Option<Vec<(usize, usize)>>,
    dialect: &str,
    policy: &str,
) -> PyResult<PyMesh> {
    let d = self::dialect(dialect)?;
    let p = self::policy(policy)?;
    let marking = match edges {
        None => MarkingInput::reference_edges(&mesh.inner, marked),
        Some(e) => MarkingInput::new(
            marked.into_iter().collect(),
            e.into_iter().map(|(a, b)| EdgeKey::new(a, b)).collect::<BTreeSet<_>>(),
        ),
    };
    let out = refine_step(&mesh.inner, &marking, d, &p).map_err(py_err)?;
    Ok(PyMesh { inner: out.mesh })
}

/// `bisec1` (every element once) or `bisec3` (every edge halved).
#[pyfunction]
#[pyo3(signature = (mesh, kind = "bisec3"))]
fn uniform(mesh: &PyMesh, kind: &str) -> PyResult<PyMesh> {
    let k = match kind {
        "bisec1" => UniformKind::Bisec1,
        "bisec3" => UniformKind::Bisec3,
        _ => return Err(PyValueError::new_err(format!("unknown uniform refinement {kind:?}"))),
    };
    Ok(PyMesh { inner: nvb_core::refine::uniform(&mesh.inner, k) })
}

/// Refinement loop; returns the meshes of every step, initial mesh first.
#[pyfunction]
#[pyo3(signature = (
    mesh, steps, marking = "all", p = 0.2, x = 0.0, y = 0.0, r = 0.0, theta = 0.5, alpha = 1.0,
    edges = "reference", dialect = "refine-nvb", policy = "bisec3", seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn run(
    mesh: &PyMesh,
    steps: usize,
    marking: &str,
    p: f64,
    x: f64,
    y: f64,
    r: f64,
    theta: f64,
    alpha: f64,
    edges: &str,
    dialect: &str,
    policy: &str,
    seed: u64,
) -> PyResult<Vec<PyMesh>> {
    let strategy = match marking {
        "all" => MarkingStrategy::All,
        "random" => MarkingStrategy::Random { p, seed },
        "corner" => MarkingStrategy::Corner { x, y, r },
        "dorfler" => MarkingStrategy::Dorfler { theta, alpha, x, y },
        _ => return Err(PyValueError::new_err(format!("unknown marking {marking:?}"))),
    };
    let edge_rule = match edges {
        "reference" => EdgeRule::Reference,
        "all" => EdgeRule::All,
        "random" => EdgeRule::Random { seed },
        _ => return Err(PyValueError::new_err(format!("unknown edge rule {edges:?}"))),
    };
    let config =
        RunConfig { dialect: self::dialect(dialect)?, policy: self::policy(policy)?, strategy, edge_rule, steps };
    let out = driver::run(&mesh.inner, &config).map_err(py_err)?;
    Ok(out.meshes.into_iter().map(|inner| PyMesh { inner }).collect())
}

/// Level and neighbor checks against the initial mesh, as a JSON string.
/// Neighbor rules do not hold for meshes with bisec5 refinements.
#[pyfunction]
#[pyo3(signature = (mesh, initial, nvb_only = true, neighbor_rules = true))]
fn analyze(mesh: &PyMesh, initial: &PyMesh, nvb_only: bool, neighbor_rules: bool) -> PyResult<String> {
    let levels = verify_levels(&mesh.inner, &initial.inner, nvb_only);
    let neighbors = neighbor_rules.then(|| verify_neighbor_rules(&mesh.inner, &initial.inner));
    let passed = levels.passed() && neighbors.as_ref().is_none_or(|n| n.passed());
    let v = serde_json::json!({ "passed": passed, "levels": levels, "neighbor_rules": neighbors });
    serde_json::to_string(&v).map_err(json_err)
}

/// Node weights `d_j` and their exponents `e_j` with `d_j = 2^(e_j / 2)`.
#[pyfunction]
#[pyo3(signature = (mesh, path_rule = "edge"))]
fn weights(mesh: &PyMesh, path_rule: &str) -> PyResult<(Vec<f64>, Vec<i32>)> {
    let w = stability::compute_weights_with(&mesh.inner, self::path_rule(path_rule)?).map_err(py_err)?;
    Ok((w.d, w.exponent.unwrap_or_default()))
}

/// Per-element stability conditions for given or computed weights, as a JSON string.
#[pyfunction]
#[pyo3(signature = (mesh, d = None, path_rule = "edge"))]
fn check_conditions(mesh: &PyMesh, d: Option<Vec<f64>>, path_rule: &str) -> PyResult<String> {
    let w = match d {
        Some(d) if d.len() != mesh.inner.num_nodes() => {
            return Err(PyValueError::new_err(format!("{} weights for {} nodes", d.len(), mesh.inner.num_nodes())))
        }
        Some(d) => NodeWeights::from_values(d),
        None => stability::compute_weights_with(&mesh.inner, self::path_rule(path_rule)?).map_err(py_err)?,
    };
    serde_json::to_string(&stability::check_conditions(&mesh.inner, &w)).map_err(json_err)
}

/// Ratio of the H1 seminorms of the L2 projection onto `coarse` over fine functions.
#[pyfunction]
fn h1_stability(coarse: &PyMesh, fine: &PyMesh) -> PyResult<f64> {
    stability::measure_h1_stability(&coarse.inner, &fine.inner).map_err(py_err)
}

#[pymodule]
pub fn nvbpy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(uniform, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(weights, m)?)?;
    m.add_function(wrap_pyfunction!(check_conditions, m)?)?;
    m.add_function(wrap_pyfunction!(h1_stability, m)?)?;
    Ok(())
}
