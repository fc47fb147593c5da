//! Correspondence between red-refined meshes and pure-bisection meshes.
//!
//! A sequence refined with red and bisection patterns is shadowed by a
//! sequence refined with bisections only. Both meshes carry the same number
//! of elements and a bijection between their `(element, edge)` incidences.
//!
//! The map is encoded by a node map `sigma` from red nodes to shadow nodes.
//! An element that is not a red son is mapped rigidly: its triple under
//! `sigma` is an element of the shadow mesh with the same vertex order. The
//! two red sons `s = (x, y, a)` and `s' = N(s) = (y, x, a')` of a red
//! refinement share the diagonal `(x, y)`. Their shadows are the two elements
//! `g_x = {sigma a, sigma a', sigma x}` and `g_y = {sigma a, sigma a', sigma y}`
//! that share the shadow diagonal `(sigma a, sigma a')`:
//!
//! ```text
//! (s, (x, a))  -> (g_x, (sigma x, sigma a))
//! (s, (y, a))  -> (g_y, (sigma y, sigma a))
//! (s, (x, y))  -> (g_?, (sigma a, sigma a'))
//! ```
//!
//! and likewise for `s'`. Of the two red sons, the one with the smaller
//! element id sends its diagonal to the shadow of the smaller diagonal node.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::analysis::CheckResult;
use crate::error::{invalid, Error, Result};
use crate::mesh::{EdgeKey, ElemId, IncidencePair, LocalEdge, Mesh, NodeId, PairClass};
use crate::refine::{refine_step, Dialect, MarkingInput, Pattern, PatternPolicy};

fn broken<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invariant(msg.into()))
}

fn local_index(e: LocalEdge) -> usize {
    match e {
        LocalEdge::Reference => 0,
        LocalEdge::Left => 1,
        LocalEdge::Right => 2,
    }
}

fn sorted(mut v: [NodeId; 3]) -> [NodeId; 3] {
    v.sort_unstable();
    v
}

/// Bijection between the incidences of two meshes, stored per element in
/// the local edge order reference, left, right.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CorrMap {
    images: Vec<[IncidencePair; 3]>,
}

impl CorrMap {
    pub fn identity(mesh: &Mesh) -> Self {
        let images = mesh
            .elements()
            .iter()
            .enumerate()
            .map(|(t, el)| el.edges().map(|edge| IncidencePair { elem: t, edge }))
            .collect();
        CorrMap { images }
    }

    pub fn from_images(images: Vec<[IncidencePair; 3]>) -> Self {
        CorrMap { images }
    }

    pub fn images(&self) -> &[[IncidencePair; 3]] {
        &self.images
    }

    pub fn len(&self) -> usize {
        3 * self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Image of `(t, e)`, if `e` is an edge of element `t` of `mesh`.
    pub fn image(&self, mesh: &Mesh, t: ElemId, e: EdgeKey) -> Option<IncidencePair> {
        let k = local_index(mesh.elements().get(t)?.local_edge(e)?);
        self.images.get(t).map(|im| im[k])
    }

    /// Shadow elements hit by the incidences of `t`.
    pub fn corr_elements(&self, t: ElemId) -> BTreeSet<ElemId> {
        self.images[t].iter().map(|p| p.elem).collect()
    }

    /// All `(source, image)` pairs.
    pub fn pairs<'a>(&'a self, mesh: &'a Mesh) -> impl Iterator<Item = (IncidencePair, IncidencePair)> + 'a {
        mesh.elements().iter().enumerate().flat_map(move |(t, el)| {
            let im = self.images[t];
            (0..3).map(move |k| (IncidencePair { elem: t, edge: el.edges()[k] }, im[k]))
        })
    }
}

/// Derives the incidence map from a node map, following the rules in the module docs.
pub fn corr_from_node_map(red: &Mesh, shadow: &Mesh, sigma: &[NodeId]) -> Result<CorrMap> {
    if sigma.len() != red.num_nodes() {
        return invalid("node map does not cover the red mesh");
    }
    if red.num_elements() != shadow.num_elements() {
        return broken(format!("meshes have {} and {} elements", red.num_elements(), shadow.num_elements()));
    }
    let index = shadow.element_index();
    let find = |v: [NodeId; 3]| {
        index.get(&sorted(v)).copied().ok_or_else(|| Error::Invariant(format!("no shadow element with nodes {v:?}")))
    };
    let mut images = Vec::with_capacity(red.num_elements());
    for (t, el) in red.elements().iter().enumerate() {
        let sv = el.v.map(|n| sigma[n]);
        if !el.red_son {
            let g = find(sv)?;
            if shadow.elements()[g].v != sv {
                return broken(format!("shadow element {g} has a different reference edge than element {t}"));
            }
            images.push(sv_edges(g, sv));
            continue;
        }
        let Some(p) = red.reference_neighbor(t)? else {
            return broken(format!("red son {t} has no partner"));
        };
        let pe = &red.elements()[p];
        if !pe.red_son || pe.reference_edge() != el.reference_edge() {
            return broken(format!("red son {t} and its neighbor {p} do not share their diagonal"));
        }
        let [x, y, a] = el.v;
        let (sa, sb) = (sigma[a], sigma[pe.v[2]]);
        let diag = EdgeKey::new(sa, sb);
        let gx = find([sa, sb, sigma[x]])?;
        let gy = find([sa, sb, sigma[y]])?;
        for g in [gx, gy] {
            if shadow.elements()[g].reference_edge() != diag {
                return broken(format!("shadow element {g} of red son {t} is not split along {diag:?}"));
            }
        }
        let low_node_shadow = if x < y { gx } else { gy };
        let high_node_shadow = if x < y { gy } else { gx };
        let g_ref = if t < p { low_node_shadow } else { high_node_shadow };
        images.push([
            IncidencePair { elem: g_ref, edge: diag },
            IncidencePair { elem: gy, edge: EdgeKey::new(sigma[y], sa) },
            IncidencePair { elem: gx, edge: EdgeKey::new(sigma[x], sa) },
        ]);
    }
    Ok(CorrMap { images })
}

fn sv_edges(g: ElemId, v: [NodeId; 3]) -> [IncidencePair; 3] {
    [
        IncidencePair { elem: g, edge: EdgeKey::new(v[0], v[1]) },
        IncidencePair { elem: g, edge: EdgeKey::new(v[1], v[2]) },
        IncidencePair { elem: g, edge: EdgeKey::new(v[2], v[0]) },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrReport {
    pub checks: Vec<CheckResult>,
    pub max_corr_per_element: usize,
}

impl CorrReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_violation(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Checks that `corr` is a bijection from the incidences of `a` onto those of
/// `b` with the correspondence properties. Neighbor relations are compared on
/// twins, that is on two incidences of one interior edge.
pub fn verify_corr(corr: &CorrMap, a: &Mesh, b: &Mesh) -> CorrReport {
    let mut bij = CheckResult::new("bijective");
    let mut level = CheckResult::new("level_and_area");
    let mut twins = CheckResult::new("neighbors_to_neighbors");
    let mut refs = CheckResult::new("reference_edges_to_reference_edges");
    let mut refnb = CheckResult::new("reference_neighbors_to_reference_neighbors");
    let mut compat = CheckResult::new("compatible_divisibility");
    let mut family = CheckResult::new("neighboring_successors");
    let mut refcons = CheckResult::new("reference_edge_consistency");
    let mut card = CheckResult::new("at_most_two_shadows");

    if corr.images.len() != a.num_elements() {
        bij.fail(vec![], format!("map covers {} of {} elements", corr.images.len(), a.num_elements()));
        return CorrReport { checks: vec![bij], max_corr_per_element: 0 };
    }
    if a.num_elements() != b.num_elements() {
        bij.fail(vec![], format!("meshes have {} and {} elements", a.num_elements(), b.num_elements()));
    }
    let mut preimage: HashMap<IncidencePair, IncidencePair> = HashMap::with_capacity(corr.len());
    let mut valid = true;
    for (src, img) in corr.pairs(a) {
        bij.checked += 1;
        let ok = b.elements().get(img.elem).is_some_and(|el| el.local_edge(img.edge).is_some());
        if !ok {
            bij.fail(vec![src.elem], format!("{src:?} maps to {img:?}, which is not an incidence"));
            valid = false;
        } else if let Some(prev) = preimage.insert(img, src) {
            bij.fail(vec![prev.elem, src.elem], format!("{prev:?} and {src:?} share the image {img:?}"));
            valid = false;
        }
    }
    if !valid {
        return CorrReport { checks: vec![bij], max_corr_per_element: 0 };
    }

    let ea = a.elements();
    let eb = b.elements();
    let mut max_corr = 0;
    for (t, el) in ea.iter().enumerate() {
        let shadows = corr.corr_elements(t);
        max_corr = max_corr.max(shadows.len());
        card.checked += 1;
        if shadows.len() > 2 {
            card.fail(vec![t], format!("element has {} shadows", shadows.len()));
        }
        let ref_img = corr.images[t][0];
        for (k, img) in corr.images[t].iter().enumerate() {
            let e = el.edges()[k];
            let g = &eb[img.elem];
            level.checked += 1;
            if g.gen != el.gen {
                level.fail(vec![t], format!("level {} maps to level {}", el.gen, g.gen));
            }
            let ratio = a.area(t) / b.area(img.elem);
            if !(0.25..=4.0).contains(&ratio) {
                level.fail(vec![t], format!("area ratio {ratio} outside [1/4, 4]"));
            }
            refs.checked += 1;
            if (e == el.reference_edge()) != (img.edge == g.reference_edge()) {
                refs.fail(vec![t], format!("{e:?} and its image {:?} disagree on being a reference edge", img.edge));
            }
            // the reference incidence of T lands on the reference edge of the
            // shadow of every incidence of T
            refcons.checked += 1;
            let rg = &eb[ref_img.elem];
            if ref_img.edge != rg.reference_edge() || ref_img.edge != g.reference_edge() {
                refcons.fail(vec![t], format!("reference incidence {ref_img:?} is not the reference edge of {img:?}"));
            }
            let owners = a.edge_table().get(e);
            let img_owners = b.edge_table().get(img.edge);
            twins.checked += 1;
            match (owners.len(), img_owners.len()) {
                (1, 1) => {}
                (2, 2) => {
                    let tp = if owners[0] == t { owners[1] } else { owners[0] };
                    let twin_img = corr.image(a, tp, e).expect("twin incidence exists");
                    let gp = if img_owners[0] == img.elem { img_owners[1] } else { img_owners[0] };
                    if twin_img != (IncidencePair { elem: gp, edge: img.edge }) {
                        twins.fail(vec![t, tp], format!("twins over {e:?} do not map to twins over {:?}", img.edge));
                        continue;
                    }
                    refnb.checked += 1;
                    let red_pair = e == el.reference_edge() && e == ea[tp].reference_edge();
                    let shadow_pair = img.edge == g.reference_edge() && img.edge == eb[gp].reference_edge();
                    if red_pair != shadow_pair {
                        refnb.fail(vec![t, tp], "mutual reference neighbors not preserved".into());
                    }
                    compat.checked += 1;
                    let ca = a.classify_pair(t, tp).ok() == Some(PairClass::CompatiblyDivisible);
                    let cb = b.classify_pair(img.elem, gp).ok() == Some(PairClass::CompatiblyDivisible);
                    if ca != cb {
                        compat.fail(vec![t, tp], "compatible divisibility not preserved".into());
                    }
                    family.checked += 1;
                    if (el.ancestor == ea[tp].ancestor) != (g.ancestor == eb[gp].ancestor) {
                        family.fail(vec![t, tp], "common ancestor not preserved".into());
                    }
                }
                (x, y) => twins.fail(vec![t], format!("edge shared by {x} elements maps to one shared by {y}")),
            }
        }
    }
    // converse of the reference consistency: two incidences landing on one
    // shadow element, one of them on its reference edge, come from reference edges
    for (g, gel) in eb.iter().enumerate() {
        let pre: Vec<IncidencePair> =
            gel.edges().iter().filter_map(|&e| preimage.get(&IncidencePair { elem: g, edge: e }).copied()).collect();
        let Some(r) = preimage.get(&IncidencePair { elem: g, edge: gel.reference_edge() }) else { continue };
        for p in pre {
            refcons.checked += 1;
            if r.edge != ea[r.elem].reference_edge() || r.edge != ea[p.elem].reference_edge() {
                refcons
                    .fail(vec![r.elem, p.elem], format!("preimage {r:?} of the reference edge of {g} is not shared"));
            }
        }
    }
    CorrReport {
        checks: vec![bij, level, twins, refs, refnb, compat, family, refcons, card],
        max_corr_per_element: max_corr,
    }
}

/// Red sequence, its shadow sequence and the maps between them.
#[derive(Clone, Debug)]
pub struct CorrSequence {
    pub red: Vec<Mesh>,
    pub shadow: Vec<Mesh>,
    pub maps: Vec<CorrMap>,
    /// Node maps from red nodes to shadow nodes.
    pub node_maps: Vec<Vec<NodeId>>,
    pub shadow_markings: Vec<MarkingInput>,
}

/// One step: refines `red` with red/bisection patterns and the shadow with the
/// transferred marking and bisections only, then extends the maps.
pub fn correspond_step(
    red: &Mesh,
    shadow: &Mesh,
    sigma: &[NodeId],
    corr: &CorrMap,
    marking: &MarkingInput,
    policy: &PatternPolicy,
) -> Result<(Mesh, Mesh, Vec<NodeId>, CorrMap, MarkingInput)> {
    marking.validate(red)?;
    let out = refine_step(red, marking, Dialect::Refine, policy)?;
    if let Some((t, _)) = out.plan.patterns.iter().find(|(_, p)| **p == Pattern::Bisec5) {
        return Err(Error::Unsupported(format!("bisec5 refinement of element {t} has no bisec3 counterpart")));
    }

    let mut s_elems = BTreeSet::new();
    let mut s_edges = BTreeSet::new();
    for &t in &marking.elements {
        for e in red.elements()[t].edges() {
            if marking.edges.contains(&e) {
                let img = corr.image(red, t, e).expect("incidence of a marked element");
                s_elems.insert(img.elem);
                s_edges.insert(img.edge);
            }
        }
    }
    let s_marking = MarkingInput::new(s_elems, s_edges);
    let s_out = refine_step(shadow, &s_marking, Dialect::RefineNvb3, &PatternPolicy::AlwaysBisec3)?;

    let mut edge_image: BTreeMap<EdgeKey, EdgeKey> = BTreeMap::new();
    for &e in &out.plan.closed_edges {
        for &t in red.edge_table().get(e) {
            let img = corr.image(red, t, e).expect("edge of its owner").edge;
            if let Some(prev) = edge_image.insert(e, img) {
                if prev != img {
                    return broken(format!("edge {e:?} has two images {prev:?} and {img:?}"));
                }
            }
        }
    }
    let images: BTreeSet<EdgeKey> = edge_image.values().copied().collect();
    if images != s_out.plan.closed_edges {
        return broken(format!(
            "closure differs: {} red closed edges map to {} edges, shadow closed {}",
            out.plan.closed_edges.len(),
            images.len(),
            s_out.plan.closed_edges.len()
        ));
    }

    let mut next_sigma = sigma.to_vec();
    next_sigma.resize(out.mesh.num_nodes(), usize::MAX);
    for (e, &node) in &out.midpoints {
        next_sigma[node] = s_out.midpoints[&edge_image[e]];
    }
    let next_corr = corr_from_node_map(&out.mesh, &s_out.mesh, &next_sigma)?;
    Ok((out.mesh, s_out.mesh, next_sigma, next_corr, s_marking))
}

/// Builds the shadow sequence for a trace of markings applied with `policy`.
/// The marking at step `l` refers to the `l`-th red mesh.
pub fn build_corresponding_sequence(
    initial: &Mesh,
    markings: &[MarkingInput],
    policy: &PatternPolicy,
) -> Result<CorrSequence> {
    let mut seq = CorrSequence {
        red: vec![initial.clone()],
        shadow: vec![initial.clone()],
        maps: vec![CorrMap::identity(initial)],
        node_maps: vec![(0..initial.num_nodes()).collect()],
        shadow_markings: Vec::with_capacity(markings.len()),
    };
    for marking in markings {
        let l = seq.red.len() - 1;
        let (r, s, sigma, corr, sm) =
            correspond_step(&seq.red[l], &seq.shadow[l], &seq.node_maps[l], &seq.maps[l], marking, policy)?;
        seq.red.push(r);
        seq.shadow.push(s);
        seq.node_maps.push(sigma);
        seq.maps.push(corr);
        seq.shadow_markings.push(sm);
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;

    #[test]
    fn single_red_refinement() {
        let t0 = generate::square2();
        let marking = MarkingInput::all_edges(&t0, [0]);
        let seq = build_corresponding_sequence(&t0, &[marking], &PatternPolicy::AlwaysRed).unwrap();
        let (red, shadow, map) = (&seq.red[1], &seq.shadow[1], &seq.maps[1]);
        assert_eq!(red.num_elements(), shadow.num_elements());
        assert_eq!(red.elements().iter().filter(|e| e.red_son).count(), 2);
        let report = verify_corr(map, red, shadow);
        assert!(report.passed(), "{:?}", report.first_violation());
        for (t, el) in red.elements().iter().enumerate() {
            let expect = if el.red_son { 2 } else { 1 };
            assert_eq!(map.corr_elements(t).len(), expect);
        }
        assert!(seq.shadow_markings[0].elements.len() <= 2);
    }

    #[test]
    fn swapped_pair_is_reported() {
        let t0 = generate::lshape6();
        let m = crate::refine::uniform(&t0, crate::refine::UniformKind::Bisec3);
        let mut images = CorrMap::identity(&m).images().to_vec();
        images[0].swap(0, 1);
        let report = verify_corr(&CorrMap::from_images(images), &m, &m);
        assert!(!report.passed());
        assert!(verify_corr(&CorrMap::identity(&m), &m, &m).passed());
    }

    #[test]
    fn bisec5_is_unsupported() {
        let t0 = generate::square2();
        let marking = MarkingInput::all_edges(&t0, [0]);
        let err = build_corresponding_sequence(&t0, &[marking], &PatternPolicy::InteriorNode).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }
}
