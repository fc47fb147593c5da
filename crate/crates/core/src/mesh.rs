//! Conforming triangulations with reference-edge encoding.
//!
//! An element is an ordered vertex triple `(v0, v1, v2)`. The reference edge
//! is always `(v0, v1)` and `v2` is the apex opposite to it. Triples are
//! counterclockwise. Meshes are immutable: refinement builds a new mesh that
//! keeps the node ids of all surviving nodes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};
use crate::exact::{self, Dyadic};

pub type NodeId = usize;
pub type ElemId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
}

impl Vertex {
    pub fn new(x: f64, y: f64) -> Self {
        Vertex { x, y }
    }

    pub fn midpoint(&self, other: &Vertex) -> Vertex {
        Vertex::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn dist(&self, other: &Vertex) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Unordered node pair, stored sorted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeKey(NodeId, NodeId);

impl EdgeKey {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            EdgeKey(a, b)
        } else {
            EdgeKey(b, a)
        }
    }

    pub fn nodes(&self) -> (NodeId, NodeId) {
        (self.0, self.1)
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.0 == n || self.1 == n
    }
}

/// Position of an edge inside its element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocalEdge {
    /// `(v0, v1)`
    Reference,
    /// `(v1, v2)`
    Left,
    /// `(v2, v0)`
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Element {
    pub v: [NodeId; 3],
    pub gen: u32,
    pub ancestor: ElemId,
    pub red_son: bool,
}

impl Element {
    pub fn initial(v: [NodeId; 3], ancestor: ElemId) -> Self {
        Element { v, gen: 0, ancestor, red_son: false }
    }

    pub fn reference_edge(&self) -> EdgeKey {
        EdgeKey::new(self.v[0], self.v[1])
    }

    pub fn apex(&self) -> NodeId {
        self.v[2]
    }

    /// Edges in the order reference, left, right.
    pub fn edges(&self) -> [EdgeKey; 3] {
        [EdgeKey::new(self.v[0], self.v[1]), EdgeKey::new(self.v[1], self.v[2]), EdgeKey::new(self.v[2], self.v[0])]
    }

    pub fn edge(&self, which: LocalEdge) -> EdgeKey {
        match which {
            LocalEdge::Reference => EdgeKey::new(self.v[0], self.v[1]),
            LocalEdge::Left => EdgeKey::new(self.v[1], self.v[2]),
            LocalEdge::Right => EdgeKey::new(self.v[2], self.v[0]),
        }
    }

    pub fn local_edge(&self, e: EdgeKey) -> Option<LocalEdge> {
        let [r, l, rt] = self.edges();
        if e == r {
            Some(LocalEdge::Reference)
        } else if e == l {
            Some(LocalEdge::Left)
        } else if e == rt {
            Some(LocalEdge::Right)
        } else {
            None
        }
    }

    pub fn has_node(&self, n: NodeId) -> bool {
        self.v.contains(&n)
    }

    pub fn sorted_nodes(&self) -> [NodeId; 3] {
        let mut s = self.v;
        s.sort_unstable();
        s
    }
}

/// Map from edges to the elements containing them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeTable {
    map: BTreeMap<EdgeKey, SmallVec<[ElemId; 2]>>,
}

impl EdgeTable {
    pub fn build(elements: &[Element]) -> Self {
        let mut map: BTreeMap<EdgeKey, SmallVec<[ElemId; 2]>> = BTreeMap::new();
        for (t, el) in elements.iter().enumerate() {
            for e in el.edges() {
                map.entry(e).or_default().push(t);
            }
        }
        EdgeTable { map }
    }

    /// Elements containing `e`; empty if `e` is not an edge of the mesh.
    pub fn get(&self, e: EdgeKey) -> &[ElemId] {
        self.map.get(&e).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn contains(&self, e: EdgeKey) -> bool {
        self.map.contains_key(&e)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EdgeKey, &[ElemId])> {
        self.map.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn keys(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.map.keys().copied()
    }
}

/// One `(element, edge)` incidence with the edge contained in the element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IncidencePair {
    pub elem: ElemId,
    pub edge: EdgeKey,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonFiniteVertex { node: NodeId },
    DuplicateVertex { first: NodeId, second: NodeId },
    BadElement { elem: ElemId, reason: String },
    Inverted { elem: ElemId },
    Degenerate { elem: ElemId },
    HangingNode { node: NodeId, edge: EdgeKey, elem: ElemId },
    OverSharedEdge { edge: EdgeKey, elems: Vec<ElemId> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ConformityReport {
    pub violations: Vec<Violation>,
}

impl ConformityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    NotAdjacent,
    CompatiblyDivisible,
    Incompatible,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureFlags {
    pub is_bdd: bool,
    /// Weak BDD with isolation read as `N(T) != None && N(N(T)) != T`.
    pub is_weak_bdd: bool,
    /// Weak BDD with boundary-reference-edge elements also counted as isolated.
    pub is_weak_bdd_with_boundary: bool,
    /// Elements with `N(T) != None` and `N(N(T)) != T`.
    pub isolated: BTreeSet<ElemId>,
    /// `isolated` plus every element whose reference edge lies on the boundary.
    pub isolated_with_boundary: BTreeSet<ElemId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ElementGeometry {
    pub area: f64,
    pub diameter: f64,
    pub shape_regularity: f64,
}

/// Element description independent of node and element numbering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalElement {
    pub coords: [[u64; 2]; 3],
    pub gen: u32,
    pub ancestor: ElemId,
    pub red_son: bool,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Vertex>,
    elements: Vec<Element>,
    edges: EdgeTable,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.elements == other.elements
    }
}

impl Mesh {
    /// Builds a mesh and rejects it unless it is a valid conforming triangulation.
    pub fn new(vertices: Vec<Vertex>, elements: Vec<Element>) -> Result<Self> {
        let mesh = Self::from_parts(vertices, elements)?;
        let report = mesh.validate();
        if let Some(v) = report.violations.first() {
            return invalid(format!("mesh is not conforming ({} violations, first: {v:?})", report.violations.len()));
        }
        Ok(mesh)
    }

    /// Builds a mesh checking only that node references are in range.
    /// Use [`Mesh::validate`] to diagnose geometry and conformity.
    pub fn from_parts(vertices: Vec<Vertex>, elements: Vec<Element>) -> Result<Self> {
        let nv = vertices.len();
        for (t, el) in elements.iter().enumerate() {
            if el.v.iter().any(|&n| n >= nv) {
                return invalid(format!("element {t} references a node out of range"));
            }
        }
        let edges = EdgeTable::build(&elements);
        Ok(Mesh { vertices, elements, edges })
    }

    pub(crate) fn from_parts_trusted(vertices: Vec<Vertex>, elements: Vec<Element>) -> Self {
        let edges = EdgeTable::build(&elements);
        Mesh { vertices, elements, edges }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn edge_table(&self) -> &EdgeTable {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn element(&self, t: ElemId) -> Result<&Element> {
        self.elements.get(t).ok_or_else(|| Error::InvalidArgument(format!("element id {t} out of range")))
    }

    pub fn vertex(&self, n: NodeId) -> &Vertex {
        &self.vertices[n]
    }

    pub fn coords(&self, t: ElemId) -> [Vertex; 3] {
        let v = self.elements[t].v;
        [self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]]]
    }

    pub fn centroid(&self, t: ElemId) -> Vertex {
        let [a, b, c] = self.coords(t);
        Vertex::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
    }

    pub fn edge_midpoint(&self, e: EdgeKey) -> Vertex {
        let (a, b) = e.nodes();
        self.vertices[a].midpoint(&self.vertices[b])
    }

    /// Twice the signed area, exactly when the coordinates allow it.
    pub fn exact_double_area(&self, t: ElemId) -> Option<Dyadic> {
        let [a, b, c] = self.coords(t);
        exact::double_area(a.xy(), b.xy(), c.xy())
    }

    pub fn area(&self, t: ElemId) -> f64 {
        match self.exact_double_area(t) {
            Some(d) => 0.5 * d.to_f64(),
            None => {
                let [a, b, c] = self.coords(t);
                0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
            }
        }
    }

    pub fn total_area(&self) -> f64 {
        (0..self.elements.len()).map(|t| self.area(t)).sum()
    }

    pub fn geometry(&self, t: ElemId) -> Result<ElementGeometry> {
        self.element(t)?;
        let [a, b, c] = self.coords(t);
        let area = self.area(t);
        let diameter = a.dist(&b).max(b.dist(&c)).max(c.dist(&a));
        Ok(ElementGeometry { area, diameter, shape_regularity: diameter * diameter / area })
    }

    pub fn diameter(&self, t: ElemId) -> f64 {
        let [a, b, c] = self.coords(t);
        a.dist(&b).max(b.dist(&c)).max(c.dist(&a))
    }

    /// The element across edge `e` from `t`, if any.
    pub fn neighbor_across(&self, t: ElemId, e: EdgeKey) -> Option<ElemId> {
        self.edges.get(e).iter().copied().find(|&s| s != t)
    }

    /// `N(T)`: the element sharing the reference edge of `t`.
    pub fn reference_neighbor(&self, t: ElemId) -> Result<Option<ElemId>> {
        let el = self.element(t)?;
        Ok(self.neighbor_across(t, el.reference_edge()))
    }

    fn ref_neighbor_unchecked(&self, t: ElemId) -> Option<ElemId> {
        self.neighbor_across(t, self.elements[t].reference_edge())
    }

    /// The common edge of two distinct elements, if they share one.
    pub fn shared_edge(&self, t1: ElemId, t2: ElemId) -> Option<EdgeKey> {
        let e2 = self.elements[t2].edges();
        self.elements[t1].edges().into_iter().find(|e| e2.contains(e))
    }

    pub fn classify_pair(&self, t1: ElemId, t2: ElemId) -> Result<PairClass> {
        let a = self.element(t1)?;
        let b = self.element(t2)?;
        if t1 == t2 {
            return invalid("classify_pair needs two distinct elements");
        }
        Ok(match self.shared_edge(t1, t2) {
            None => PairClass::NotAdjacent,
            Some(e) => {
                if (a.reference_edge() == e) == (b.reference_edge() == e) {
                    PairClass::CompatiblyDivisible
                } else {
                    PairClass::Incompatible
                }
            }
        })
    }

    pub fn structure_flags(&self) -> StructureFlags {
        let mut is_bdd = true;
        for (_, elems) in self.edges.iter() {
            if elems.len() == 2 && self.classify_pair(elems[0], elems[1]).ok() == Some(PairClass::Incompatible) {
                is_bdd = false;
                break;
            }
        }
        let mut isolated = BTreeSet::new();
        let mut isolated_with_boundary = BTreeSet::new();
        for t in 0..self.elements.len() {
            match self.ref_neighbor_unchecked(t) {
                None => {
                    isolated_with_boundary.insert(t);
                }
                Some(n) => {
                    if self.ref_neighbor_unchecked(n) != Some(t) {
                        isolated.insert(t);
                        isolated_with_boundary.insert(t);
                    }
                }
            }
        }
        let weak = |set: &BTreeSet<ElemId>| {
            self.edges
                .iter()
                .all(|(_, elems)| !(elems.len() == 2 && set.contains(&elems[0]) && set.contains(&elems[1])))
        };
        StructureFlags {
            is_bdd,
            is_weak_bdd: weak(&isolated),
            is_weak_bdd_with_boundary: weak(&isolated_with_boundary),
            isolated,
            isolated_with_boundary,
        }
    }

    /// All `(element, edge)` incidences, three per element.
    pub fn incidence_pairs(&self) -> impl Iterator<Item = IncidencePair> + '_ {
        self.elements
            .iter()
            .enumerate()
            .flat_map(|(t, el)| el.edges().into_iter().map(move |edge| IncidencePair { elem: t, edge }))
    }

    pub fn is_boundary_edge(&self, e: EdgeKey) -> bool {
        self.edges.get(e).len() == 1
    }

    /// Elements containing each node.
    pub fn node_stars(&self) -> Vec<Vec<ElemId>> {
        let mut stars = vec![Vec::new(); self.vertices.len()];
        for (t, el) in self.elements.iter().enumerate() {
            for &n in &el.v {
                stars[n].push(t);
            }
        }
        stars
    }

    /// Edge-neighbors of every element (up to three).
    pub fn dual_adjacency(&self) -> Vec<SmallVec<[ElemId; 3]>> {
        let mut adj = vec![SmallVec::new(); self.elements.len()];
        for (_, elems) in self.edges.iter() {
            if let [a, b] = *elems {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        adj
    }

    /// Diagnoses every violation of the mesh invariants.
    pub fn validate(&self) -> ConformityReport {
        let mut violations = Vec::new();
        for (n, v) in self.vertices.iter().enumerate() {
            if !v.x.is_finite() || !v.y.is_finite() {
                violations.push(Violation::NonFiniteVertex { node: n });
            }
        }
        let mut seen: HashMap<(u64, u64), NodeId> = HashMap::new();
        for (n, v) in self.vertices.iter().enumerate() {
            // -0.0 and 0.0 are the same point
            let key = ((v.x + 0.0).to_bits(), (v.y + 0.0).to_bits());
            if let Some(&first) = seen.get(&key) {
                violations.push(Violation::DuplicateVertex { first, second: n });
            } else {
                seen.insert(key, n);
            }
        }
        for (t, el) in self.elements.iter().enumerate() {
            let [a, b, c] = el.v;
            if a == b || b == c || a == c {
                violations.push(Violation::BadElement { elem: t, reason: "repeated node".into() });
                continue;
            }
            let [pa, pb, pc] = self.coords(t);
            match exact::orient(pa.xy(), pb.xy(), pc.xy()) {
                Ordering::Greater => {}
                Ordering::Less => violations.push(Violation::Inverted { elem: t }),
                Ordering::Equal => violations.push(Violation::Degenerate { elem: t }),
            }
        }
        let mut single: Vec<(EdgeKey, ElemId)> = Vec::new();
        for (e, elems) in self.edges.iter() {
            match elems.len() {
                1 => single.push((e, elems[0])),
                2 => {}
                _ => violations.push(Violation::OverSharedEdge { edge: e, elems: elems.to_vec() }),
            }
        }
        // A hanging node always sits in the interior of an edge that has a
        // single incident element, and it is an endpoint of other such edges.
        let mut candidates: Vec<NodeId> = single
            .iter()
            .flat_map(|(e, _)| {
                let (a, b) = e.nodes();
                [a, b]
            })
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        for &(e, t) in &single {
            let (a, b) = e.nodes();
            let (pa, pb) = (self.vertices[a].xy(), self.vertices[b].xy());
            let (lo_x, hi_x) = (pa[0].min(pb[0]), pa[0].max(pb[0]));
            let (lo_y, hi_y) = (pa[1].min(pb[1]), pa[1].max(pb[1]));
            for &n in &candidates {
                if n == a || n == b {
                    continue;
                }
                let p = self.vertices[n].xy();
                if p[0] < lo_x || p[0] > hi_x || p[1] < lo_y || p[1] > hi_y {
                    continue;
                }
                if exact::strictly_inside_segment(p, pa, pb) {
                    violations.push(Violation::HangingNode { node: n, edge: e, elem: t });
                }
            }
        }
        ConformityReport { violations }
    }

    /// Sub-mesh of all elements descending from the given initial elements.
    /// Nodes are renumbered densely in increasing order of their old ids and
    /// ancestors are renumbered by their rank in `initial_subset`.
    pub fn restrict(&self, initial_subset: &BTreeSet<ElemId>) -> Result<Mesh> {
        if initial_subset.is_empty() {
            return invalid("restriction to an empty set of initial elements");
        }
        let rank: HashMap<ElemId, ElemId> = initial_subset.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let kept: Vec<&Element> = self.elements.iter().filter(|el| rank.contains_key(&el.ancestor)).collect();
        if kept.is_empty() {
            return invalid("no element descends from the requested initial elements");
        }
        let mut used: Vec<NodeId> = kept.iter().flat_map(|el| el.v).collect();
        used.sort_unstable();
        used.dedup();
        let renumber: HashMap<NodeId, NodeId> = used.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let vertices = used.iter().map(|&n| self.vertices[n]).collect();
        let elements = kept
            .iter()
            .map(|el| Element {
                v: el.v.map(|n| renumber[&n]),
                gen: el.gen,
                ancestor: rank[&el.ancestor],
                red_son: el.red_son,
            })
            .collect();
        Ok(Mesh::from_parts_trusted(vertices, elements))
    }

    /// Sorted numbering-free description, for comparing meshes up to renumbering.
    pub fn canonical(&self) -> Vec<CanonicalElement> {
        let mut out: Vec<CanonicalElement> = self
            .elements
            .iter()
            .map(|el| CanonicalElement {
                coords: el.v.map(|n| {
                    let v = self.vertices[n];
                    [(v.x + 0.0).to_bits(), (v.y + 0.0).to_bits()]
                }),
                gen: el.gen,
                ancestor: el.ancestor,
                red_son: el.red_son,
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Lookup from sorted node triple to element id.
    pub fn element_index(&self) -> HashMap<[NodeId; 3], ElemId> {
        self.elements.iter().enumerate().map(|(t, el)| (el.sorted_nodes(), t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;

    fn v(x: f64, y: f64) -> Vertex {
        Vertex::new(x, y)
    }

    /// Unit square split along (0,0)-(1,1); the diagonal is the reference edge of `t0`,
    /// and of `t1` too when `bdd` is set.
    fn square(bdd: bool) -> Mesh {
        let verts = vec![v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)];
        let t0 = Element::initial([0, 2, 3], 0);
        let t1 = if bdd { Element::initial([2, 0, 1], 1) } else { Element::initial([0, 1, 2], 1) };
        Mesh::new(verts, vec![t0, t1]).unwrap()
    }

    /// Oracle: classify every element pair by direct geometric intersection.
    fn pairwise_hanging(mesh: &Mesh) -> usize {
        let mut found = BTreeSet::new();
        for t in 0..mesh.num_elements() {
            for s in 0..mesh.num_elements() {
                if s == t {
                    continue;
                }
                let ct = mesh.coords(t);
                for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                    for (k, n) in mesh.elements()[s].v.iter().enumerate() {
                        let p = mesh.coords(s)[k];
                        if !mesh.elements()[t].has_node(*n)
                            && exact::strictly_inside_segment(p.xy(), ct[i].xy(), ct[j].xy())
                        {
                            found.insert((*n, t, i));
                        }
                    }
                }
            }
        }
        found.len()
    }

    #[test]
    fn square_is_valid() {
        assert!(square(true).validate().is_valid());
        assert!(square(false).validate().is_valid());
    }

    #[test]
    fn clockwise_triple_reported() {
        let m = square(true);
        let mut els = m.elements().to_vec();
        els[0].v.swap(0, 1);
        let bad = Mesh::from_parts(m.vertices().to_vec(), els).unwrap();
        let report = bad.validate();
        assert_eq!(report.violations, vec![Violation::Inverted { elem: 0 }]);
        assert!(Mesh::new(bad.vertices().to_vec(), bad.elements().to_vec()).is_err());
    }

    #[test]
    fn hanging_node_reported() {
        let verts = vec![v(0.0, 0.0), v(2.0, 0.0), v(0.0, 2.0), v(2.0, 2.0), v(1.0, 1.0)];
        let els = vec![Element::initial([0, 1, 2], 0), Element::initial([1, 3, 4], 1), Element::initial([4, 3, 2], 2)];
        let m = Mesh::from_parts(verts, els).unwrap();
        let report = m.validate();
        let hanging: Vec<_> = report.violations.iter().filter(|x| matches!(x, Violation::HangingNode { .. })).collect();
        assert_eq!(hanging.len(), pairwise_hanging(&m));
        assert_eq!(hanging, vec![&Violation::HangingNode { node: 4, edge: EdgeKey::new(1, 2), elem: 0 }]);
    }

    #[test]
    fn duplicate_and_overshared() {
        let verts = vec![v(0.0, 0.0), v(1.0, 0.0), v(0.0, 1.0), v(0.0, 1.0)];
        let els = vec![Element::initial([0, 1, 2], 0)];
        let m = Mesh::from_parts(verts, els).unwrap();
        assert!(m.validate().violations.contains(&Violation::DuplicateVertex { first: 2, second: 3 }));
    }

    #[test]
    fn reference_neighbors() {
        let m = square(true);
        assert_eq!(m.reference_neighbor(0).unwrap(), Some(1));
        assert_eq!(m.reference_neighbor(1).unwrap(), Some(0));
        assert!(m.reference_neighbor(2).is_err());
        let one = Mesh::new(vec![v(0.0, 0.0), v(1.0, 0.0), v(0.0, 1.0)], vec![Element::initial([0, 1, 2], 0)]).unwrap();
        assert_eq!(one.reference_neighbor(0).unwrap(), None);
    }

    #[test]
    fn lshape_boundary_reference_edge() {
        // Rotate one fan triangle so that its reference edge is the outer leg (3,4).
        let base = generate::lshape6();
        let mut els = base.elements().to_vec();
        let [a, b, c] = els[2].v;
        els[2].v = [c, a, b];
        let m = Mesh::new(base.vertices().to_vec(), els).unwrap();
        // Oracle: the reference edge is in the table with a single incidence.
        assert_eq!(m.edge_table().get(m.elements()[2].reference_edge()).len(), 1);
        assert_eq!(m.reference_neighbor(2).unwrap(), None);
    }

    #[test]
    fn pair_classification() {
        let bdd = square(true);
        assert_eq!(bdd.classify_pair(0, 1).unwrap(), PairClass::CompatiblyDivisible);
        let inc = square(false);
        assert_eq!(inc.classify_pair(0, 1).unwrap(), PairClass::Incompatible);
        assert_eq!(inc.classify_pair(1, 0).unwrap(), PairClass::Incompatible);
        assert!(inc.classify_pair(0, 0).is_err());
        let verts = vec![v(0.0, 0.0), v(1.0, 0.0), v(0.0, 1.0), v(-1.0, 0.0), v(0.0, -1.0)];
        let els = vec![Element::initial([0, 1, 2], 0), Element::initial([0, 3, 4], 1)];
        let touch = Mesh::new(verts, els).unwrap();
        assert_eq!(touch.classify_pair(0, 1).unwrap(), PairClass::NotAdjacent);
    }

    #[test]
    fn flags() {
        let f = square(true).structure_flags();
        assert!(f.is_bdd && f.is_weak_bdd);
        assert!(f.isolated.is_empty());
        let g = square(false).structure_flags();
        assert!(!g.is_bdd);
        // t1's reference edge (0,1) is on the boundary.
        assert!(g.isolated_with_boundary.contains(&1));
        assert!(!g.isolated.contains(&1));
        // N(t0) = t1 but N(t1) is empty, so t0 is isolated.
        assert!(g.isolated.contains(&0));
    }

    #[test]
    fn right_triangle_geometry() {
        let one = Mesh::new(vec![v(0.0, 0.0), v(1.0, 0.0), v(0.0, 1.0)], vec![Element::initial([0, 1, 2], 0)]).unwrap();
        let g = one.geometry(0).unwrap();
        assert_eq!(g.area, 0.5);
        assert_eq!(g.diameter, 2f64.sqrt());
        assert!(one.geometry(1).is_err());
    }

    #[test]
    fn incidence_pairs_count() {
        let m = generate::lshape6();
        assert_eq!(m.incidence_pairs().count(), 3 * m.num_elements());
    }

    #[test]
    fn restrict_identity_and_errors() {
        let m = generate::lshape6();
        let all: BTreeSet<_> = (0..m.num_elements()).collect();
        assert_eq!(m.restrict(&all).unwrap(), m);
        assert!(m.restrict(&BTreeSet::new()).is_err());
        let part = m.restrict(&[1, 2].into_iter().collect()).unwrap();
        assert_eq!(part.num_elements(), 2);
        assert_eq!(part.num_nodes(), 4);
        assert!(part.validate().is_valid());
    }
}
