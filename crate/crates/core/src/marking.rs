//! Marking strategies for refinement loops.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geom;
use crate::mesh::{EdgeKey, ElemId, Mesh, Vertex};
use crate::refine::MarkingInput;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarkingStrategy {
    All,
    /// Each element independently with probability `p`; at least one element.
    Random {
        p: f64,
        seed: u64,
    },
    /// Elements within distance `r` of the point (closed triangles).
    Corner {
        x: f64,
        y: f64,
        r: f64,
    },
    /// Bulk criterion on the synthetic indicator `|T|^(1/2) dist(centroid, x0)^(-alpha)`.
    Dorfler {
        theta: f64,
        alpha: f64,
        x: f64,
        y: f64,
    },
}

/// Which edges of a marked element go into the seed set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EdgeRule {
    Reference,
    All,
    /// Each edge with probability 1/2; the reference edge if none was drawn.
    Random {
        seed: u64,
    },
}

impl MarkingStrategy {
    pub fn check(&self) -> Result<()> {
        match *self {
            MarkingStrategy::Random { p, .. } if !(0.0..=1.0).contains(&p) => {
                invalid(format!("marking fraction {p} outside [0, 1]"))
            }
            MarkingStrategy::Corner { r, .. } if !(r >= 0.0) => invalid("corner radius must be nonnegative"),
            MarkingStrategy::Dorfler { theta, .. } if !(theta > 0.0 && theta <= 1.0) => {
                invalid(format!("bulk parameter {theta} outside (0, 1]"))
            }
            MarkingStrategy::Dorfler { alpha, .. } if !(alpha >= 0.0) => {
                invalid("indicator exponent must be nonnegative")
            }
            _ => Ok(()),
        }
    }

    /// Marked elements for refinement step `step`.
    pub fn select(&self, mesh: &Mesh, step: usize) -> Result<BTreeSet<ElemId>> {
        self.check()?;
        let n = mesh.num_elements();
        Ok(match *self {
            MarkingStrategy::All => (0..n).collect(),
            MarkingStrategy::Random { p, seed } => {
                let mut rng = step_rng(seed, step);
                let mut out: BTreeSet<ElemId> = (0..n).filter(|_| rng.random_bool(p)).collect();
                if out.is_empty() && n > 0 {
                    out.insert(rng.random_range(0..n));
                }
                out
            }
            MarkingStrategy::Corner { x, y, r } => {
                let p = Vertex::new(x, y);
                (0..n).filter(|&t| geom::point_triangle_dist(&p, &mesh.coords(t)) <= r).collect()
            }
            MarkingStrategy::Dorfler { theta, alpha, x, y } => dorfler(mesh, theta, alpha, Vertex::new(x, y)),
        })
    }
}

fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    rng
}

fn dorfler(mesh: &Mesh, theta: f64, alpha: f64, x0: Vertex) -> BTreeSet<ElemId> {
    let eta2: Vec<f64> = (0..mesh.num_elements())
        .map(|t| {
            let d = mesh.centroid(t).dist(&x0).max(f64::MIN_POSITIVE);
            mesh.area(t) * d.powf(-2.0 * alpha)
        })
        .collect();
    let total: f64 = eta2.iter().sum();
    let mut order: Vec<ElemId> = (0..eta2.len()).collect();
    order.sort_by(|&a, &b| eta2[b].total_cmp(&eta2[a]).then(a.cmp(&b)));
    let mut acc = 0.0;
    let mut out = BTreeSet::new();
    for t in order {
        if acc >= theta * total {
            break;
        }
        acc += eta2[t];
        out.insert(t);
    }
    out
}

impl EdgeRule {
    pub fn apply(&self, mesh: &Mesh, elements: BTreeSet<ElemId>, step: usize) -> MarkingInput {
        match *self {
            EdgeRule::Reference => MarkingInput::reference_edges(mesh, elements),
            EdgeRule::All => MarkingInput::all_edges(mesh, elements),
            EdgeRule::Random { seed } => {
                let mut rng = step_rng(seed, step);
                let mut edges: BTreeSet<EdgeKey> = BTreeSet::new();
                for &t in &elements {
                    let el = &mesh.elements()[t];
                    let drawn: Vec<EdgeKey> = el.edges().into_iter().filter(|_| rng.random_bool(0.5)).collect();
                    if drawn.is_empty() {
                        edges.insert(el.reference_edge());
                    }
                    edges.extend(drawn);
                }
                MarkingInput::new(elements, edges)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;

    #[test]
    fn corner_marks_the_fan() {
        let m = generate::lshape6();
        let s = MarkingStrategy::Corner { x: 0.0, y: 0.0, r: 0.0 };
        assert_eq!(s.select(&m, 0).unwrap().len(), 6);
        let s = MarkingStrategy::Corner { x: 1.0, y: 1.0, r: 0.0 };
        assert_eq!(s.select(&m, 0).unwrap(), BTreeSet::from([0, 1]));
    }

    #[test]
    fn random_is_seeded_per_step() {
        let m = generate::grid(4).unwrap();
        let s = MarkingStrategy::Random { p: 0.3, seed: 5 };
        assert_eq!(s.select(&m, 2).unwrap(), s.select(&m, 2).unwrap());
        assert_ne!(s.select(&m, 2).unwrap(), s.select(&m, 3).unwrap());
        assert!(!MarkingStrategy::Random { p: 0.0, seed: 1 }.select(&m, 0).unwrap().is_empty());
        assert!(MarkingStrategy::Random { p: 1.5, seed: 1 }.select(&m, 0).is_err());
    }

    #[test]
    fn dorfler_is_minimal_bulk() {
        let m = generate::grid(4).unwrap();
        let s = MarkingStrategy::Dorfler { theta: 0.5, alpha: 1.0, x: 0.0, y: 0.0 };
        let marked = s.select(&m, 0).unwrap();
        let eta2 = |t: ElemId| m.area(t) / m.centroid(t).dist(&Vertex::new(0.0, 0.0)).powi(2);
        let total: f64 = (0..m.num_elements()).map(eta2).sum();
        let got: f64 = marked.iter().map(|&t| eta2(t)).sum();
        assert!(got >= 0.5 * total);
        // dropping the smallest marked indicator breaks the bulk criterion
        let smallest = marked.iter().map(|&t| eta2(t)).fold(f64::INFINITY, f64::min);
        assert!(got - smallest < 0.5 * total);
        assert!(marked.contains(&0));
    }

    #[test]
    fn edge_rules() {
        let m = generate::lshape6();
        let marked = BTreeSet::from([0, 2]);
        assert_eq!(EdgeRule::Reference.apply(&m, marked.clone(), 0).edges.len(), 2);
        assert_eq!(EdgeRule::All.apply(&m, marked.clone(), 0).edges.len(), 6);
        let r = EdgeRule::Random { seed: 3 }.apply(&m, marked, 0);
        assert!(r.validate(&m).is_ok());
    }
}
