//! Bisection trees over an initial mesh, and the overlay of two NVB meshes.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{invalid, Error, Result};
use crate::exact;
use crate::mesh::{EdgeKey, ElemId, Element, Mesh, NodeId, Vertex};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    /// Ordered triple in forest node numbering; reference edge `(v0, v1)`.
    pub v: [NodeId; 3],
    pub gen: u32,
    pub root: ElemId,
    pub children: Option<[usize; 2]>,
}

/// One binary bisection tree per initial element. Node ids of the initial
/// mesh are kept; midpoints get fresh ids keyed on the bisected edge.
#[derive(Clone, Debug)]
pub struct BisectionForest {
    vertices: Vec<Vertex>,
    midpoints: HashMap<EdgeKey, NodeId>,
    nodes: Vec<TreeNode>,
    initial: Mesh,
}

fn unsupported(msg: impl Into<String>) -> Error {
    Error::Unsupported(msg.into())
}

fn same_point(a: &Vertex, b: &Vertex) -> bool {
    a.x == b.x && a.y == b.y
}

impl BisectionForest {
    pub fn new(initial: &Mesh) -> Result<Self> {
        if initial.elements().iter().any(|e| e.gen != 0 || e.red_son) {
            return invalid("initial mesh must consist of generation-0 elements");
        }
        let nodes = initial
            .elements()
            .iter()
            .enumerate()
            .map(|(t, el)| TreeNode { v: el.v, gen: 0, root: t, children: None })
            .collect();
        Ok(BisectionForest {
            vertices: initial.vertices().to_vec(),
            midpoints: HashMap::new(),
            nodes,
            initial: initial.clone(),
        })
    }

    /// Forest whose leaves are exactly the elements of `mesh`.
    pub fn from_mesh(initial: &Mesh, mesh: &Mesh) -> Result<Self> {
        let mut f = Self::new(initial)?;
        f.insert_mesh(mesh)?;
        if f.num_leaves() != mesh.num_elements() {
            return invalid(format!(
                "mesh has {} elements but its bisection trees have {} leaves; it does not cover the initial mesh",
                mesh.num_elements(),
                f.num_leaves()
            ));
        }
        Ok(f)
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.is_none()).count()
    }

    fn midpoint(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let key = EdgeKey::new(a, b);
        if let Some(&m) = self.midpoints.get(&key) {
            return m;
        }
        let id = self.vertices.len();
        self.vertices.push(self.vertices[a].midpoint(&self.vertices[b]));
        self.midpoints.insert(key, id);
        id
    }

    fn bisect(&mut self, n: usize) -> [usize; 2] {
        if let Some(c) = self.nodes[n].children {
            return c;
        }
        let TreeNode { v: [a, b, c], gen, root, .. } = self.nodes[n];
        let m = self.midpoint(a, b);
        let first = self.nodes.len();
        self.nodes.push(TreeNode { v: [c, a, m], gen: gen + 1, root, children: None });
        self.nodes.push(TreeNode { v: [b, c, m], gen: gen + 1, root, children: None });
        self.nodes[n].children = Some([first, first + 1]);
        [first, first + 1]
    }

    /// Closed containment of `p`. Descent tests element centroids, which stay
    /// clear of the edges even when midpoints were rounded.
    fn contains(&self, n: usize, p: [f64; 2]) -> bool {
        let [a, b, c] = self.nodes[n].v.map(|i| self.vertices[i].xy());
        exact::orient(a, b, p) != Ordering::Less
            && exact::orient(b, c, p) != Ordering::Less
            && exact::orient(c, a, p) != Ordering::Less
    }

    /// Refines the trees until `el` (with coordinates `pts`) is a node.
    fn insert_element(&mut self, el: &Element, pts: &[Vertex; 3]) -> Result<()> {
        if el.red_son {
            return Err(unsupported("red sons cannot be generated by bisection"));
        }
        let Some(root) = (el.ancestor < self.initial.num_elements()).then_some(el.ancestor) else {
            return invalid(format!("ancestor {} is not an initial element", el.ancestor));
        };
        let centroid = [(pts[0].x + pts[1].x + pts[2].x) / 3.0, (pts[0].y + pts[1].y + pts[2].y) / 3.0];
        if !self.contains(root, centroid) {
            return invalid(format!("element {:?} does not lie in its initial ancestor", el.v));
        }
        let mut n = root;
        loop {
            let node = &self.nodes[n];
            let here = node.v.map(|i| self.vertices[i]);
            if (0..3).all(|k| same_point(&here[k], &pts[k])) {
                if node.gen != el.gen {
                    return invalid(format!(
                        "element {:?} has generation {} but is reached after {} bisections",
                        el.v, el.gen, node.gen
                    ));
                }
                return Ok(());
            }
            if node.gen >= el.gen {
                return Err(unsupported(format!("element {:?} is not reachable by newest vertex bisection", el.v)));
            }
            let [c0, c1] = self.bisect(n);
            n = if self.contains(c0, centroid) {
                c0
            } else if self.contains(c1, centroid) {
                c1
            } else {
                return Err(unsupported(format!("element {:?} straddles a bisection edge", el.v)));
            };
        }
    }

    pub fn insert_mesh(&mut self, mesh: &Mesh) -> Result<()> {
        for (t, el) in mesh.elements().iter().enumerate() {
            self.insert_element(el, &mesh.coords(t))?;
        }
        Ok(())
    }

    /// The leaves as a mesh, visited tree by tree in depth-first order.
    pub fn to_mesh(&self) -> Mesh {
        let mut used = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut elements = Vec::new();
        let mut stack = Vec::new();
        for root in 0..self.initial.num_elements() {
            stack.push(root);
            while let Some(n) = stack.pop() {
                let node = &self.nodes[n];
                match node.children {
                    Some([c0, c1]) => {
                        stack.push(c1);
                        stack.push(c0);
                    }
                    None => {
                        let v = node.v.map(|i| {
                            if used[i] == usize::MAX {
                                used[i] = vertices.len();
                                vertices.push(self.vertices[i]);
                            }
                            used[i]
                        });
                        elements.push(Element { v, gen: node.gen, ancestor: node.root, red_son: false });
                    }
                }
            }
        }
        Mesh::from_parts_trusted(vertices, elements)
    }
}

/// Coarsest common refinement of two NVB refinements of `initial`.
pub fn overlay(initial: &Mesh, a: &Mesh, b: &Mesh) -> Result<Mesh> {
    // b alone must also cover the initial mesh
    BisectionForest::from_mesh(initial, b)?;
    let mut f = BisectionForest::from_mesh(initial, a)?;
    f.insert_mesh(b)?;
    Ok(f.to_mesh())
}
