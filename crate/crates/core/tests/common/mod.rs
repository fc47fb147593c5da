#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nvb_core::corr::CorrMap;
use nvb_core::driver::{run, Run, RunConfig};
use nvb_core::generate::{self, RefEdgePolicy};
use nvb_core::marking::{EdgeRule, MarkingStrategy};
use nvb_core::refine::{refine_nvb, Dialect, PatternPolicy};
use nvb_core::stability::PathRule;
use nvb_core::{EdgeKey, ElemId, Element, Mesh, Vertex};

pub fn triangle() -> Mesh {
    Mesh::new(
        vec![Vertex::new(0.0, 0.0), Vertex::new(1.0, 0.0), Vertex::new(0.0, 1.0)],
        vec![Element::initial([0, 1, 2], 0)],
    )
    .unwrap()
}

/// Four triangles around the center of the unit square.
pub fn pinwheel() -> Mesh {
    let v = vec![
        Vertex::new(0.0, 0.0),
        Vertex::new(1.0, 0.0),
        Vertex::new(1.0, 1.0),
        Vertex::new(0.0, 1.0),
        Vertex::new(0.5, 0.5),
    ];
    let e = (0..4).map(|i| Element::initial([i, (i + 1) % 4, 4], i)).collect();
    Mesh::new(v, e).unwrap()
}

pub fn initial_meshes() -> Vec<(String, Mesh)> {
    vec![
        ("square2".into(), generate::square2()),
        ("lshape6".into(), generate::lshape6()),
        ("grid4".into(), generate::grid(4).unwrap()),
        ("lshape6-random".into(), generate::apply_ref_policy(&generate::lshape6(), RefEdgePolicy::Random { seed: 11 })),
        ("pinwheel".into(), pinwheel()),
    ]
}

/// Valid dialect and pattern policy combinations; red dialects reject bisec5.
pub fn combos() -> Vec<(Dialect, PatternPolicy)> {
    let policies = [PatternPolicy::AlwaysBisec3, PatternPolicy::AlwaysRed, PatternPolicy::InteriorNode];
    let mut out = Vec::new();
    for d in Dialect::ALL {
        for p in &policies {
            if d == Dialect::RefineNvbRed && matches!(p, PatternPolicy::InteriorNode) {
                continue;
            }
            out.push((d, p.clone()));
        }
    }
    out
}

pub struct CorpusRun {
    pub label: String,
    pub initial: Mesh,
    pub dialect: Dialect,
    pub run: Run,
}

/// `n` seeded runs cycling through initial meshes, dialects and policies.
pub fn corpus(n: usize, steps: usize) -> Vec<CorpusRun> {
    let inits = initial_meshes();
    let combos = combos();
    (0..n)
        .map(|i| {
            let seed = i as u64;
            let (name, initial) = &inits[i % inits.len()];
            let (dialect, policy) = combos[i % combos.len()].clone();
            let cfg = RunConfig {
                dialect,
                policy: policy.clone(),
                strategy: MarkingStrategy::Random { p: 0.2, seed },
                edge_rule: EdgeRule::Random { seed: seed + 1000 },
                steps,
            };
            let run = run(initial, &cfg).unwrap_or_else(|e| panic!("run {i} failed: {e}"));
            CorpusRun { label: format!("{i}:{name}:{dialect:?}:{policy:?}"), initial: initial.clone(), dialect, run }
        })
        .collect()
}

fn edges_of(el: &Element) -> [EdgeKey; 3] {
    let [a, b, c] = el.v;
    [EdgeKey::new(a, b), EdgeKey::new(b, c), EdgeKey::new(c, a)]
}

/// All minimal closed supersets of `seed`, by enumerating every edge subset.
pub fn brute_closures(mesh: &Mesh, seed: &BTreeSet<EdgeKey>) -> Vec<BTreeSet<EdgeKey>> {
    let all: BTreeSet<EdgeKey> = mesh.elements().iter().flat_map(edges_of).collect();
    let free: Vec<EdgeKey> = all.difference(seed).copied().collect();
    assert!(free.len() <= 16, "too many edges for enumeration");
    let closed = |s: &BTreeSet<EdgeKey>| {
        mesh.elements().iter().all(|el| {
            let es = edges_of(el);
            !es.iter().any(|e| s.contains(e)) || s.contains(&es[0])
        })
    };
    let mut best: Vec<BTreeSet<EdgeKey>> = Vec::new();
    let mut best_len = usize::MAX;
    for mask in 0u32..(1 << free.len()) {
        let ones = mask.count_ones() as usize + seed.len();
        if ones > best_len {
            continue;
        }
        let mut s = seed.clone();
        s.extend(free.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| *e));
        if closed(&s) {
            if ones < best_len {
                best.clear();
                best_len = ones;
            }
            best.push(s);
        }
    }
    best
}

/// Exponents `min_T (2 delta(z_j, T) - gen T)` straight from the definition.
pub fn brute_exponents(mesh: &Mesh) -> Vec<i32> {
    brute_exponents_with(mesh, PathRule::SharedEdge)
}

/// Same, with path elements allowed to meet in a node when the rule says so.
pub fn brute_exponents_with(mesh: &Mesh, rule: PathRule) -> Vec<i32> {
    let min_shared = match rule {
        PathRule::SharedEdge => 2,
        PathRule::SharedNode => 1,
    };
    let els = mesh.elements();
    let n = els.len();
    let mut adj = vec![Vec::new(); n];
    for s in 0..n {
        for t in 0..n {
            let shared = els[s].v.iter().filter(|v| els[t].v.contains(v)).count();
            if s != t && shared >= min_shared {
                adj[s].push(t);
            }
        }
    }
    (0..mesh.num_nodes())
        .map(|j| {
            let mut dist = vec![u32::MAX; n];
            let mut q = VecDeque::new();
            for t in 0..n {
                if els[t].v.contains(&j) {
                    dist[t] = 1;
                    q.push_back(t);
                }
            }
            while let Some(t) = q.pop_front() {
                for &s in &adj[t] {
                    if dist[s] == u32::MAX {
                        dist[s] = dist[t] + 1;
                        q.push_back(s);
                    }
                }
            }
            let mut node_delta = vec![u32::MAX; mesh.num_nodes()];
            for t in 0..n {
                for &k in &els[t].v {
                    node_delta[k] = node_delta[k].min(dist[t]);
                }
            }
            node_delta[j] = 0;
            els.iter()
                .map(|el| {
                    let d = el.v.iter().map(|&k| node_delta[k]).min().unwrap();
                    2 * d as i32 - el.gen as i32
                })
                .min()
                .unwrap()
        })
        .collect()
}

const DUNAVANT7: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([0.059715871789770, 0.470142064105115, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.059715871789770, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.470142064105115, 0.059715871789770], 0.132394152788506),
    ([0.797426985353087, 0.101286507323456, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.797426985353087, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.101286507323456, 0.797426985353087], 0.125939180544827),
];

fn bary(p: [f64; 2], c: &[Vertex; 3]) -> [f64; 3] {
    let det = (c[1].x - c[0].x) * (c[2].y - c[0].y) - (c[2].x - c[0].x) * (c[1].y - c[0].y);
    let l1 = ((p[0] - c[0].x) * (c[2].y - c[0].y) - (c[2].x - c[0].x) * (p[1] - c[0].y)) / det;
    let l2 = ((c[1].x - c[0].x) * (p[1] - c[0].y) - (p[0] - c[0].x) * (c[1].y - c[0].y)) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Value of every coarse hat function at `p`, by scanning all coarse elements.
fn coarse_hats(coarse: &Mesh, p: [f64; 2]) -> Vec<(usize, f64)> {
    for t in 0..coarse.num_elements() {
        let l = bary(p, &coarse.coords(t));
        if l.iter().all(|&x| x >= -1e-12) {
            return (0..3).map(|i| (coarse.elements()[t].v[i], l[i])).collect();
        }
    }
    panic!("point {p:?} outside the coarse mesh");
}

/// `B_ij = int phi_i^coarse phi_j^fine` by 7-point quadrature on fine elements.
pub fn quadrature_cross_mass(coarse: &Mesh, fine: &Mesh) -> Vec<Vec<f64>> {
    let mut b = vec![vec![0.0; fine.num_nodes()]; coarse.num_nodes()];
    for t in 0..fine.num_elements() {
        let c = fine.coords(t);
        let area = fine.area(t);
        for (l, w) in DUNAVANT7 {
            let p = [l[0] * c[0].x + l[1] * c[1].x + l[2] * c[2].x, l[0] * c[0].y + l[1] * c[1].y + l[2] * c[2].y];
            for (ci, hv) in coarse_hats(coarse, p) {
                for k in 0..3 {
                    b[ci][fine.elements()[t].v[k]] += w * area * hv * l[k];
                }
            }
        }
    }
    b
}

/// Element mass matrix by quadrature.
pub fn quadrature_mass(c: &[Vertex; 3]) -> [[f64; 3]; 3] {
    let area = 0.5 * ((c[1].x - c[0].x) * (c[2].y - c[0].y) - (c[2].x - c[0].x) * (c[1].y - c[0].y)).abs();
    let mut m = [[0.0; 3]; 3];
    for (l, w) in DUNAVANT7 {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += w * area * l[i] * l[j];
            }
        }
    }
    m
}

fn ref_neighbor(mesh: &Mesh, t: ElemId) -> Option<ElemId> {
    let e = edges_of(&mesh.elements()[t])[0];
    (0..mesh.num_elements()).find(|&s| s != t && edges_of(&mesh.elements()[s]).contains(&e))
}

fn compatible(mesh: &Mesh, s: ElemId, t: ElemId) -> bool {
    let (es, et) = (edges_of(&mesh.elements()[s]), edges_of(&mesh.elements()[t]));
    match es.iter().find(|e| et.contains(e)) {
        Some(e) => (es[0] == *e) == (et[0] == *e),
        None => false,
    }
}

/// Checks the correspondence properties over every pair of incidences.
/// Neighbor, compatibility and ancestor relations are compared on twins,
/// that is on two incidences `(T, E)`, `(T', E)` with `T != T'`.
pub fn corr_oracle(corr: &CorrMap, a: &Mesh, b: &Mesh) -> Vec<String> {
    let mut bad = Vec::new();
    let inc_a: Vec<(ElemId, EdgeKey)> =
        (0..a.num_elements()).flat_map(|t| edges_of(&a.elements()[t]).map(|e| (t, e))).collect();
    let img: Vec<(ElemId, EdgeKey)> = corr.images().iter().flat_map(|im| im.map(|p| (p.elem, p.edge))).collect();
    if img.len() != inc_a.len() {
        return vec![format!("{} images for {} incidences", img.len(), inc_a.len())];
    }
    let inc_b: BTreeSet<(ElemId, EdgeKey)> =
        (0..b.num_elements()).flat_map(|t| edges_of(&b.elements()[t]).map(|e| (t, e))).collect();
    let hit: BTreeSet<_> = img.iter().copied().collect();
    if hit != inc_b {
        return vec!["map is not onto the incidences of the shadow mesh".into()];
    }
    let (ea, eb) = (a.elements(), b.elements());
    let na: Vec<Option<ElemId>> = (0..a.num_elements()).map(|t| ref_neighbor(a, t)).collect();
    let nb: Vec<Option<ElemId>> = (0..b.num_elements()).map(|t| ref_neighbor(b, t)).collect();
    for (i, &(t, e)) in inc_a.iter().enumerate() {
        let (g, f) = img[i];
        if ea[t].gen != eb[g].gen {
            bad.push(format!("(i) level of {t} vs {g}"));
        }
        let ratio = a.area(t) / b.area(g);
        if !(0.25..=4.0).contains(&ratio) {
            bad.push(format!("(i) area ratio {ratio} for {t}"));
        }
        if (e == edges_of(&ea[t])[0]) != (f == edges_of(&eb[g])[0]) {
            bad.push(format!("(iii) reference edge of {t}"));
        }
        for (j, &(t2, e2)) in inc_a.iter().enumerate() {
            if i == j {
                continue;
            }
            let (g2, f2) = img[j];
            let twin_a = t != t2 && e == e2;
            let twin_b = g != g2 && f == f2;
            if twin_a != twin_b {
                bad.push(format!("(ii) ({t},{e:?}) and ({t2},{e2:?})"));
            }
            let iv_a = e == e2 && e == edges_of(&ea[t])[0] && na[t] == Some(t2);
            let iv_b = f == f2 && f == edges_of(&eb[g])[0] && nb[g] == Some(g2);
            if iv_a != iv_b {
                bad.push(format!("(iv) ({t},{e:?}) and ({t2},{e2:?})"));
            }
            if twin_a && twin_b {
                if compatible(a, t, t2) != compatible(b, g, g2) {
                    bad.push(format!("(v) {t} {t2}"));
                }
                if (ea[t].ancestor == ea[t2].ancestor) != (eb[g].ancestor == eb[g2].ancestor) {
                    bad.push(format!("(vi) {t} {t2}"));
                }
            }
            if t == t2 && e2 == edges_of(&ea[t])[0] && !(f2 == edges_of(&eb[g2])[0] && f2 == edges_of(&eb[g])[0]) {
                bad.push(format!("(vii) first part for {t}"));
            }
            if g == g2 && f2 == edges_of(&eb[g])[0] && !(e2 == edges_of(&ea[t2])[0] && e2 == edges_of(&ea[t])[0]) {
                bad.push(format!("(vii) second part for {g}"));
            }
        }
    }
    let mut per_elem: BTreeMap<ElemId, BTreeSet<ElemId>> = BTreeMap::new();
    for (i, &(t, _)) in inc_a.iter().enumerate() {
        per_elem.entry(t).or_default().insert(img[i].0);
    }
    for (t, s) in per_elem {
        if s.len() > 2 {
            bad.push(format!("element {t} has {} shadows", s.len()));
        }
    }
    bad
}

/// Small meshes with at most 12 edges, including non-BDD labelings and
/// partially refined meshes.
pub fn small_meshes() -> Vec<Mesh> {
    let mut out = vec![triangle(), pinwheel()];
    for seed in 0..12 {
        out.push(generate::apply_ref_policy(&generate::square2(), RefEdgePolicy::Random { seed }));
        out.push(generate::apply_ref_policy(&pinwheel(), RefEdgePolicy::Random { seed }));
    }
    let base = out.clone();
    for m in &base {
        for t in 0..m.num_elements() {
            let r = refine_nvb(m, [t]).unwrap().mesh;
            if r.num_edges() <= 12 {
                out.push(r);
            }
        }
    }
    out.retain(|m| m.num_edges() <= 12);
    out
}
