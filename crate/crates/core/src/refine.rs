//! Mesh closure and element splitting.
//!
//! Closure grows a set of marked edges until every element touching a marked
//! edge also has its reference edge marked. The splitter then applies one of
//! the son templates below to every element with marked edges. For an element
//! `(a, b, c)` with `m = mid(a,b)`, `ml = mid(b,c)` and `mr = mid(c,a)`:
//!
//! | pattern        | sons                                                                  |
//! |----------------|-----------------------------------------------------------------------|
//! | bisec1         | `(c,a,m)` `(b,c,m)`                                                   |
//! | bisec2 right   | `(m,c,mr)` `(a,m,mr)` `(b,c,m)`                                       |
//! | bisec2 left    | `(c,a,m)` `(m,b,ml)` `(c,m,ml)`                                       |
//! | bisec3         | `(m,c,mr)` `(a,m,mr)` `(m,b,ml)` `(c,m,ml)`                           |
//! | red            | `(a,m,mr)` `(m,b,ml)` `(mr,ml,c)*` `(ml,mr,m)*`                       |
//! | bisec5         | `(a,m,mr)` `(m,b,ml)` `(mr,m,q)` `(c,mr,q)` `(ml,c,q)` `(m,ml,q)`     |
//!
//! `*` marks red sons and `q = mid(m,c)` is the interior node of bisec5.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{invalid, Result};
use crate::mesh::{EdgeKey, ElemId, Element, LocalEdge, Mesh, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Bisec1,
    /// Reference edge and `(v1, v2)` marked.
    Bisec2Left,
    /// Reference edge and `(v2, v0)` marked.
    Bisec2Right,
    Bisec3,
    Red,
    Bisec5,
}

impl Pattern {
    pub fn num_sons(self) -> usize {
        match self {
            Pattern::Bisec1 => 2,
            Pattern::Bisec2Left | Pattern::Bisec2Right => 3,
            Pattern::Bisec3 | Pattern::Red => 4,
            Pattern::Bisec5 => 6,
        }
    }

    pub fn is_full(self) -> bool {
        matches!(self, Pattern::Bisec3 | Pattern::Red | Pattern::Bisec5)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureMode {
    /// Seed with the reference edges of the marked elements.
    Nvb,
    /// Seed with the marked edges given by the caller.
    Mnvb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    /// Plain NVB: reference edges only, bisec3 for fully marked elements.
    RefineNvb,
    /// Caller-chosen marked edges, bisec3 for fully marked elements.
    RefineNvb3,
    /// Caller-chosen marked edges, bisec3 or red.
    RefineNvbRed,
    /// Caller-chosen marked edges, bisec3, red or bisec5.
    Refine,
}

impl Dialect {
    pub const ALL: [Dialect; 4] = [Dialect::RefineNvb, Dialect::RefineNvb3, Dialect::RefineNvbRed, Dialect::Refine];

    pub fn closure_mode(self) -> ClosureMode {
        match self {
            Dialect::RefineNvb => ClosureMode::Nvb,
            _ => ClosureMode::Mnvb,
        }
    }

    pub fn allows(self, p: Pattern) -> bool {
        match self {
            Dialect::RefineNvb | Dialect::RefineNvb3 => p != Pattern::Red && p != Pattern::Bisec5,
            Dialect::RefineNvbRed => p != Pattern::Bisec5,
            Dialect::Refine => true,
        }
    }
}

pub type PatternFn = dyn Fn(&Mesh, ElemId, bool) -> Pattern + Send + Sync;

/// Rule for elements whose three edges are all marked.
#[derive(Clone)]
pub enum PatternPolicy {
    AlwaysBisec3,
    AlwaysRed,
    /// bisec5 for marked elements, bisec3 for the rest.
    InteriorNode,
    /// Called with the mesh, the element and whether it is marked.
    Custom(Arc<PatternFn>),
}

impl fmt::Debug for PatternPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternPolicy::AlwaysBisec3 => f.write_str("AlwaysBisec3"),
            PatternPolicy::AlwaysRed => f.write_str("AlwaysRed"),
            PatternPolicy::InteriorNode => f.write_str("InteriorNode"),
            PatternPolicy::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl PatternPolicy {
    pub fn custom(f: impl Fn(&Mesh, ElemId, bool) -> Pattern + Send + Sync + 'static) -> Self {
        PatternPolicy::Custom(Arc::new(f))
    }

    pub fn choose(&self, mesh: &Mesh, t: ElemId, marked: bool) -> Result<Pattern> {
        let p = match self {
            PatternPolicy::AlwaysBisec3 => Pattern::Bisec3,
            PatternPolicy::AlwaysRed => Pattern::Red,
            PatternPolicy::InteriorNode => {
                if marked {
                    Pattern::Bisec5
                } else {
                    Pattern::Bisec3
                }
            }
            PatternPolicy::Custom(f) => f(mesh, t, marked),
        };
        if !p.is_full() {
            return invalid(format!("pattern policy returned {p:?} for a fully marked element"));
        }
        Ok(p)
    }
}

/// Marked elements together with the edges they ask to have halved.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkingInput {
    pub elements: BTreeSet<ElemId>,
    pub edges: BTreeSet<EdgeKey>,
}

impl MarkingInput {
    pub fn new(elements: BTreeSet<ElemId>, edges: BTreeSet<EdgeKey>) -> Self {
        MarkingInput { elements, edges }
    }

    /// Marks only the reference edge of each marked element.
    pub fn reference_edges(mesh: &Mesh, elements: impl IntoIterator<Item = ElemId>) -> Self {
        let elements: BTreeSet<ElemId> = elements.into_iter().collect();
        let edges = elements.iter().filter_map(|&t| mesh.elements().get(t).map(|el| el.reference_edge())).collect();
        MarkingInput { elements, edges }
    }

    /// Marks all three edges of each marked element.
    pub fn all_edges(mesh: &Mesh, elements: impl IntoIterator<Item = ElemId>) -> Self {
        let elements: BTreeSet<ElemId> = elements.into_iter().collect();
        let edges = elements.iter().filter_map(|&t| mesh.elements().get(t)).flat_map(|el| el.edges()).collect();
        MarkingInput { elements, edges }
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if let Some(&t) = self.elements.iter().find(|&&t| t >= mesh.num_elements()) {
            return invalid(format!("marked element {t} out of range"));
        }
        for &e in &self.edges {
            let owners = mesh.edge_table().get(e);
            if owners.is_empty() {
                return invalid(format!("marked edge {e:?} is not an edge of the mesh"));
            }
            if !owners.iter().any(|t| self.elements.contains(t)) {
                return invalid(format!("marked edge {e:?} lies in no marked element"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RefinementPlan {
    /// The closed set of marked edges.
    pub closed_edges: BTreeSet<EdgeKey>,
    /// Pattern per element with at least one closed edge.
    pub patterns: BTreeMap<ElemId, Pattern>,
    /// Rounds of the fixpoint that added edges.
    pub iterations: usize,
    pub marked: BTreeSet<ElemId>,
    /// The seed set the fixpoint started from.
    pub seed_edges: BTreeSet<EdgeKey>,
    pub num_elements: usize,
}

impl RefinementPlan {
    pub fn pattern(&self, t: ElemId) -> Option<Pattern> {
        self.patterns.get(&t).copied()
    }
}

/// Pattern forced by the set of closed edges of one element. Fully marked
/// elements get the bisec3 placeholder.
fn pattern_for(el: &Element, closed: &BTreeSet<EdgeKey>) -> Option<Pattern> {
    let r = closed.contains(&el.edge(LocalEdge::Reference));
    let l = closed.contains(&el.edge(LocalEdge::Left));
    let rt = closed.contains(&el.edge(LocalEdge::Right));
    match (r, l, rt) {
        (false, false, false) => None,
        (true, false, false) => Some(Pattern::Bisec1),
        (true, true, false) => Some(Pattern::Bisec2Left),
        (true, false, true) => Some(Pattern::Bisec2Right),
        (true, true, true) => Some(Pattern::Bisec3),
        _ => unreachable!("closed edge set misses a reference edge"),
    }
}

/// Smallest superset of the seed edges such that any element with a marked
/// edge also has its reference edge marked.
pub fn close_marks(mesh: &Mesh, input: &MarkingInput, mode: ClosureMode) -> Result<RefinementPlan> {
    let seed: BTreeSet<EdgeKey> = match mode {
        ClosureMode::Nvb => {
            if let Some(&t) = input.elements.iter().find(|&&t| t >= mesh.num_elements()) {
                return invalid(format!("marked element {t} out of range"));
            }
            input.elements.iter().map(|&t| mesh.elements()[t].reference_edge()).collect()
        }
        ClosureMode::Mnvb => {
            input.validate(mesh)?;
            input.edges.clone()
        }
    };
    let mut closed = seed.clone();
    let mut frontier: Vec<EdgeKey> = seed.iter().copied().collect();
    let mut iterations = 0;
    loop {
        let mut next = BTreeSet::new();
        for e in &frontier {
            for &t in mesh.edge_table().get(*e) {
                let r = mesh.elements()[t].reference_edge();
                if !closed.contains(&r) {
                    next.insert(r);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        iterations += 1;
        closed.extend(next.iter().copied());
        frontier = next.into_iter().collect();
    }
    let mut patterns = BTreeMap::new();
    for e in &closed {
        for &t in mesh.edge_table().get(*e) {
            if let std::collections::btree_map::Entry::Vacant(v) = patterns.entry(t) {
                if let Some(p) = pattern_for(&mesh.elements()[t], &closed) {
                    v.insert(p);
                }
            }
        }
    }
    Ok(RefinementPlan {
        closed_edges: closed,
        patterns,
        iterations,
        marked: input.elements.clone(),
        seed_edges: seed,
        num_elements: mesh.num_elements(),
    })
}

/// Result of one refinement step.
#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub mesh: Mesh,
    /// Elements of the old mesh that were split.
    pub refined: BTreeSet<ElemId>,
    /// The plan with the final pattern of every refined element.
    pub plan: RefinementPlan,
    /// Old element each new element comes from (itself if unrefined).
    pub parents: Vec<ElemId>,
    /// New node created at the midpoint of each closed edge.
    pub midpoints: BTreeMap<EdgeKey, NodeId>,
    /// Interior node of each bisec5 element.
    pub interior_nodes: BTreeMap<ElemId, NodeId>,
}

fn son(v: [NodeId; 3], father: &Element, dgen: u32, red_son: bool) -> Element {
    Element { v, gen: father.gen + dgen, ancestor: father.ancestor, red_son }
}

fn sons(el: &Element, p: Pattern, mid: impl Fn(NodeId, NodeId) -> NodeId, q: Option<NodeId>) -> SmallVec<[Element; 6]> {
    let [a, b, c] = el.v;
    let m = mid(a, b);
    let mut out = SmallVec::new();
    match p {
        Pattern::Bisec1 => {
            out.push(son([c, a, m], el, 1, false));
            out.push(son([b, c, m], el, 1, false));
        }
        Pattern::Bisec2Right => {
            let mr = mid(c, a);
            out.push(son([m, c, mr], el, 2, false));
            out.push(son([a, m, mr], el, 2, false));
            out.push(son([b, c, m], el, 1, false));
        }
        Pattern::Bisec2Left => {
            let ml = mid(b, c);
            out.push(son([c, a, m], el, 1, false));
            out.push(son([m, b, ml], el, 2, false));
            out.push(son([c, m, ml], el, 2, false));
        }
        Pattern::Bisec3 => {
            let (ml, mr) = (mid(b, c), mid(c, a));
            out.push(son([m, c, mr], el, 2, false));
            out.push(son([a, m, mr], el, 2, false));
            out.push(son([m, b, ml], el, 2, false));
            out.push(son([c, m, ml], el, 2, false));
        }
        Pattern::Red => {
            let (ml, mr) = (mid(b, c), mid(c, a));
            out.push(son([a, m, mr], el, 2, false));
            out.push(son([m, b, ml], el, 2, false));
            out.push(son([mr, ml, c], el, 2, true));
            out.push(son([ml, mr, m], el, 2, true));
        }
        Pattern::Bisec5 => {
            let (ml, mr) = (mid(b, c), mid(c, a));
            let q = q.expect("bisec5 needs its interior node");
            out.push(son([a, m, mr], el, 2, false));
            out.push(son([m, b, ml], el, 2, false));
            out.push(son([mr, m, q], el, 3, false));
            out.push(son([c, mr, q], el, 3, false));
            out.push(son([ml, c, q], el, 3, false));
            out.push(son([m, ml, q], el, 3, false));
        }
    }
    out
}

/// Applies a plan. Fully marked elements are refined according to `policy`.
pub fn split(mesh: &Mesh, plan: &RefinementPlan, policy: &PatternPolicy) -> Result<RefineOutcome> {
    if plan.num_elements != mesh.num_elements() {
        return invalid(format!("plan was built for {} elements, mesh has {}", plan.num_elements, mesh.num_elements()));
    }
    if let Some(e) = plan.closed_edges.iter().find(|e| !mesh.edge_table().contains(**e)) {
        return invalid(format!("plan edge {e:?} is not an edge of the mesh"));
    }
    let mut patterns = BTreeMap::new();
    for (&t, &p) in &plan.patterns {
        let Some(el) = mesh.elements().get(t) else {
            return invalid(format!("plan element {t} out of range"));
        };
        let forced = pattern_for(el, &plan.closed_edges);
        let consistent = match forced {
            Some(Pattern::Bisec3) => p.is_full(),
            other => other == Some(p),
        };
        if !consistent {
            return invalid(format!("plan pattern {p:?} of element {t} contradicts its closed edges"));
        }
        let p = if p.is_full() { policy.choose(mesh, t, plan.marked.contains(&t))? } else { p };
        patterns.insert(t, p);
    }
    for e in &plan.closed_edges {
        if mesh.edge_table().get(*e).iter().any(|t| !patterns.contains_key(t)) {
            return invalid(format!("closed edge {e:?} touches an element without a pattern"));
        }
    }

    let mut vertices = mesh.vertices().to_vec();
    let mut midpoints = BTreeMap::new();
    for &e in &plan.closed_edges {
        midpoints.insert(e, vertices.len());
        vertices.push(mesh.edge_midpoint(e));
    }
    let mut interior_nodes = BTreeMap::new();
    for (&t, &p) in &patterns {
        if p == Pattern::Bisec5 {
            let [a, b, c] = mesh.elements()[t].v;
            let m = vertices[midpoints[&EdgeKey::new(a, b)]];
            interior_nodes.insert(t, vertices.len());
            vertices.push(m.midpoint(&mesh.vertices()[c]));
        }
    }

    let growth: usize = patterns.values().map(|p| p.num_sons() - 1).sum();
    let mut elements = Vec::with_capacity(mesh.num_elements() + growth);
    let mut parents = Vec::with_capacity(mesh.num_elements() + growth);
    let mid = |a: NodeId, b: NodeId| midpoints[&EdgeKey::new(a, b)];
    for (t, el) in mesh.elements().iter().enumerate() {
        match patterns.get(&t) {
            None => {
                elements.push(*el);
                parents.push(t);
            }
            Some(&p) => {
                for s in sons(el, p, mid, interior_nodes.get(&t).copied()) {
                    elements.push(s);
                    parents.push(t);
                }
            }
        }
    }
    let refined = patterns.keys().copied().collect();
    let plan = RefinementPlan { patterns, ..plan.clone() };
    Ok(RefineOutcome {
        mesh: Mesh::from_parts_trusted(vertices, elements),
        refined,
        plan,
        parents,
        midpoints,
        interior_nodes,
    })
}

/// One call of the given refinement dialect: closure, pattern choice, split.
/// `RefineNvb` and `RefineNvb3` ignore `policy` and always use bisec3.
pub fn refine_step(
    mesh: &Mesh,
    marking: &MarkingInput,
    dialect: Dialect,
    policy: &PatternPolicy,
) -> Result<RefineOutcome> {
    let plan = close_marks(mesh, marking, dialect.closure_mode())?;
    let policy = match dialect {
        Dialect::RefineNvb | Dialect::RefineNvb3 => &PatternPolicy::AlwaysBisec3,
        _ => policy,
    };
    let out = split(mesh, &plan, policy)?;
    if let Some((t, p)) = out.plan.patterns.iter().find(|(_, p)| !dialect.allows(**p)) {
        return invalid(format!("{dialect:?} does not allow pattern {p:?} (element {t})"));
    }
    Ok(out)
}

/// Plain NVB refinement of the marked elements.
pub fn refine_nvb(mesh: &Mesh, marked: impl IntoIterator<Item = ElemId>) -> Result<RefineOutcome> {
    let marking = MarkingInput { elements: marked.into_iter().collect(), edges: BTreeSet::new() };
    refine_step(mesh, &marking, Dialect::RefineNvb, &PatternPolicy::AlwaysBisec3)
}

/// Elements reached from `t` by following reference neighbors.
pub fn chain(mesh: &Mesh, t: ElemId) -> Result<Vec<ElemId>> {
    mesh.element(t)?;
    let mut out = vec![t];
    let mut seen = BTreeSet::from([t]);
    let mut cur = t;
    while let Some(n) = mesh.reference_neighbor(cur)? {
        if !seen.insert(n) {
            break;
        }
        out.push(n);
        cur = n;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformKind {
    /// NVB with every element marked.
    Bisec1,
    /// Every edge halved, every element split into four.
    Bisec3,
}

pub fn uniform(mesh: &Mesh, kind: UniformKind) -> Mesh {
    let all = 0..mesh.num_elements();
    let out = match kind {
        UniformKind::Bisec1 => refine_nvb(mesh, all),
        UniformKind::Bisec3 => {
            let marking = MarkingInput::all_edges(mesh, all);
            refine_step(mesh, &marking, Dialect::RefineNvb3, &PatternPolicy::AlwaysBisec3)
        }
    };
    out.expect("marking every element is always admissible").mesh
}
