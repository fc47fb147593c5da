//! Built-in initial meshes and reference-edge policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mesh::{Element, Mesh, Vertex};

/// How to pick the reference edge of each initial element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefEdgePolicy {
    AsGiven,
    /// Longest edge; ties go to the edge whose opposite vertex has the smallest id.
    LongestEdge,
    Random {
        seed: u64,
    },
}

fn rotate(v: [usize; 3], k: usize) -> [usize; 3] {
    [v[k % 3], v[(k + 1) % 3], v[(k + 2) % 3]]
}

fn longest_edge_rotation(mesh: &Mesh, v: [usize; 3]) -> usize {
    let p = v.map(|n| *mesh.vertex(n));
    // rotation k puts edge (v[k], v[k+1]) first; its opposite vertex is v[k+2]
    let mut best = 0;
    let mut best_key = (f64::NEG_INFINITY, usize::MAX);
    for k in 0..3 {
        let len2 = {
            let (a, b) = (p[k], p[(k + 1) % 3]);
            (a.x - b.x).powi(2) + (a.y - b.y).powi(2)
        };
        let opp = v[(k + 2) % 3];
        if len2 > best_key.0 || (len2 == best_key.0 && opp < best_key.1) {
            best = k;
            best_key = (len2, opp);
        }
    }
    best
}

/// Re-labels every element so that its reference edge follows `policy`.
/// Generations, ancestors and provenance are kept.
pub fn apply_ref_policy(mesh: &Mesh, policy: RefEdgePolicy) -> Mesh {
    let mut rng = match policy {
        RefEdgePolicy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let elements = mesh
        .elements()
        .iter()
        .map(|el| {
            let k = match policy {
                RefEdgePolicy::AsGiven => 0,
                RefEdgePolicy::LongestEdge => longest_edge_rotation(mesh, el.v),
                RefEdgePolicy::Random { .. } => rng.as_mut().map_or(0, |r| r.random_range(0..3)),
            };
            Element { v: rotate(el.v, k), ..*el }
        })
        .collect();
    Mesh::from_parts_trusted(mesh.vertices().to_vec(), elements)
}

fn initial(vertices: Vec<Vertex>, triples: &[[usize; 3]]) -> Mesh {
    let elements = triples.iter().enumerate().map(|(t, &v)| Element::initial(v, t)).collect();
    Mesh::from_parts_trusted(vertices, elements)
}

/// Unit square split along the diagonal (0,0)-(1,1), which is the reference
/// edge of both triangles.
pub fn square2() -> Mesh {
    let vertices = vec![Vertex::new(0.0, 0.0), Vertex::new(1.0, 0.0), Vertex::new(1.0, 1.0), Vertex::new(0.0, 1.0)];
    initial(vertices, &[[0, 2, 3], [2, 0, 1]])
}

/// L-shape (-1,1)^2 minus [0,1)x(-1,0] as a fan of 6 right triangles around
/// the re-entrant corner. Reference edges are the hypotenuses, so the mesh
/// has matching reference edges across every diagonal.
pub fn lshape6() -> Mesh {
    let vertices = vec![
        Vertex::new(0.0, 0.0),
        Vertex::new(1.0, 0.0),
        Vertex::new(1.0, 1.0),
        Vertex::new(0.0, 1.0),
        Vertex::new(-1.0, 1.0),
        Vertex::new(-1.0, 0.0),
        Vertex::new(-1.0, -1.0),
        Vertex::new(0.0, -1.0),
    ];
    let fan: Vec<[usize; 3]> = (1..7).map(|i| [0, i, i + 1]).collect();
    apply_ref_policy(&initial(vertices, &fan), RefEdgePolicy::LongestEdge)
}

/// `n x n` grid of the unit square, each cell cut along its
/// (i,j)-(i+1,j+1) diagonal. Reference edges follow the longest-edge rule.
pub fn grid(n: usize) -> Result<Mesh> {
    if n == 0 {
        return invalid("grid needs at least one cell per direction");
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vertex::new(i as f64 * h, j as f64 * h));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triples = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triples.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triples.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Ok(apply_ref_policy(&initial(vertices, &triples), RefEdgePolicy::LongestEdge))
}

/// Built-in mesh by name: `square2`, `lshape6` or `gridN` (e.g. `grid4`).
pub fn builtin(name: &str) -> Result<Mesh> {
    match name {
        "square2" => Ok(square2()),
        "lshape6" => Ok(lshape6()),
        _ => match name.strip_prefix("grid").and_then(|s| s.parse::<usize>().ok()) {
            Some(n) => grid(n),
            None => invalid(format!("unknown built-in mesh {name:?}")),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid() {
        for (name, nv, ne, area) in [("square2", 4, 2, 1.0), ("lshape6", 8, 6, 3.0), ("grid3", 16, 18, 1.0)] {
            let m = builtin(name).unwrap();
            assert!(m.validate().is_valid(), "{name}");
            assert_eq!((m.num_nodes(), m.num_elements()), (nv, ne));
            assert!((m.total_area() - area).abs() < 1e-12);
            assert!(m.elements().iter().all(|e| e.gen == 0 && !e.red_son));
            assert!(m.structure_flags().is_bdd, "{name}");
        }
        assert!(builtin("pentagon").is_err());
        assert!(builtin("grid0").is_err());
    }

    #[test]
    fn lshape_reference_edges_are_hypotenuses() {
        let m = lshape6();
        for t in 0..m.num_elements() {
            let [a, b, _] = m.coords(t);
            assert_eq!(a.dist(&b), 2f64.sqrt());
        }
    }

    #[test]
    fn random_policy_is_seeded() {
        let a = apply_ref_policy(&lshape6(), RefEdgePolicy::Random { seed: 7 });
        let b = apply_ref_policy(&lshape6(), RefEdgePolicy::Random { seed: 7 });
        assert_eq!(a, b);
        assert!(a.validate().is_valid());
        let differs = (0..32).any(|s| apply_ref_policy(&lshape6(), RefEdgePolicy::Random { seed: s }) != a);
        assert!(differs);
    }

    #[test]
    fn longest_edge_tie_break() {
        // isosceles, two equal longest legs
        let verts = vec![Vertex::new(0.0, 0.0), Vertex::new(2.0, 0.0), Vertex::new(1.0, 4.0)];
        let m = initial(verts, &[[0, 1, 2]]);
        let r = apply_ref_policy(&m, RefEdgePolicy::LongestEdge);
        // legs (1,2) opposite 0 and (2,0) opposite 1; vertex 0 wins
        assert_eq!(r.elements()[0].v, [1, 2, 0]);
    }
}
