mod common;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nvb_core::exact::orient;
use nvb_core::generate;
use nvb_core::refine::{
    chain, close_marks, refine_nvb, refine_step, split, uniform, ClosureMode, Dialect, MarkingInput, Pattern,
    PatternPolicy, UniformKind,
};
use nvb_core::{EdgeKey, ElemId, Mesh};

/// A few refined meshes to start from, with varied generations.
fn start_meshes() -> Vec<Mesh> {
    let mut out = Vec::new();
    for (i, (_, m)) in common::initial_meshes().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let mut cur = m.clone();
        out.push(m);
        for _ in 0..3 {
            let n = cur.num_elements();
            let marked: Vec<ElemId> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
            cur = refine_nvb(&cur, marked).unwrap().mesh;
            out.push(cur.clone());
        }
    }
    out
}

fn random_marking(mesh: &Mesh, rng: &mut ChaCha8Rng) -> MarkingInput {
    let n = mesh.num_elements();
    let mut elements: BTreeSet<ElemId> = (0..n).filter(|_| rng.random_bool(0.25)).collect();
    if elements.is_empty() {
        elements.insert(rng.random_range(0..n));
    }
    let mut edges = BTreeSet::new();
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

#[test]
fn nvb3_step_equals_two_nvb_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for mesh in start_meshes() {
        for _ in 0..4 {
            let marking = random_marking(&mesh, &mut rng);
            let direct = refine_step(&mesh, &marking, Dialect::RefineNvb3, &PatternPolicy::AlwaysBisec3).unwrap();

            let half = refine_nvb(&mesh, marking.elements.iter().copied()).unwrap();
            // sons T of a marked father that contain a marked edge as a full edge
            let second: Vec<ElemId> = (0..half.mesh.num_elements())
                .filter(|&s| {
                    let father = half.parents[s];
                    let el = &half.mesh.elements()[s];
                    marking.elements.contains(&father) && el.edges().iter().any(|e| marking.edges.contains(e))
                })
                .collect();
            let two = refine_nvb(&half.mesh, second).unwrap();
            assert_eq!(direct.mesh.canonical(), two.mesh.canonical());
        }
    }
}

#[test]
fn refine_step_equals_two_red_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for mesh in start_meshes() {
        for _ in 0..3 {
            let marking = random_marking(&mesh, &mut rng);
            let direct = refine_step(&mesh, &marking, Dialect::Refine, &PatternPolicy::InteriorNode).unwrap();

            let half = refine_step(&mesh, &marking, Dialect::RefineNvbRed, &PatternPolicy::AlwaysBisec3).unwrap();
            // each bisec5 element halves the edge from the reference midpoint to the apex
            let mut elements = BTreeSet::new();
            let mut edges = BTreeSet::new();
            for (&t, &p) in &direct.plan.patterns {
                if p != Pattern::Bisec5 {
                    continue;
                }
                let el = &mesh.elements()[t];
                let m = half.midpoints[&el.reference_edge()];
                let e = EdgeKey::new(m, el.apex());
                edges.insert(e);
                elements.extend(half.mesh.edge_table().get(e).iter().copied());
            }
            assert!(elements.len() <= 2 * marking.elements.len());
            let second = MarkingInput::new(elements, edges);
            let two = refine_step(&half.mesh, &second, Dialect::RefineNvbRed, &PatternPolicy::AlwaysBisec3).unwrap();
            assert_eq!(direct.mesh.canonical(), two.mesh.canonical());
        }
    }
}

#[test]
fn growth_is_at_least_the_marked_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for mesh in start_meshes() {
        for (dialect, policy) in common::combos() {
            let marking = random_marking(&mesh, &mut rng);
            let out = refine_step(&mesh, &marking, dialect, &policy).unwrap();
            assert!(out.mesh.num_elements() - mesh.num_elements() >= marking.elements.len());
            assert!(out.plan.iterations <= 3 * mesh.num_elements());
        }
    }
}

#[test]
fn single_mark_bisects_its_chain() {
    for mesh in start_meshes() {
        for t in 0..mesh.num_elements() {
            let out = refine_nvb(&mesh, [t]).unwrap();
            let ch: BTreeSet<ElemId> = chain(&mesh, t).unwrap().into_iter().collect();
            assert_eq!(out.refined, ch);
            assert_eq!(out.plan.pattern(t), Some(Pattern::Bisec1));
        }
    }
}

#[test]
fn split_output_is_conforming_with_expected_new_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for mesh in start_meshes() {
        for (dialect, policy) in common::combos() {
            let marking = random_marking(&mesh, &mut rng);
            let out = refine_step(&mesh, &marking, dialect, &policy).unwrap();
            assert!(out.mesh.validate().is_valid(), "{dialect:?}");
            let new: BTreeSet<usize> = (mesh.num_nodes()..out.mesh.num_nodes()).collect();
            let mut expected: BTreeSet<usize> = out.midpoints.values().copied().collect();
            expected.extend(out.interior_nodes.values().copied());
            assert_eq!(new, expected);
            assert_eq!(out.midpoints.keys().copied().collect::<BTreeSet<_>>(), out.plan.closed_edges);
            for (e, &m) in &out.midpoints {
                let (a, b) = e.nodes();
                assert_eq!(*out.mesh.vertex(m), mesh.vertex(a).midpoint(mesh.vertex(b)));
            }
        }
    }
}

#[test]
fn son_generations_per_pattern() {
    let tri = common::triangle();
    let all = tri.elements()[0].edges().to_vec();
    let cases = [
        (vec![all[0]], PatternPolicy::AlwaysBisec3, vec![1, 1]),
        (vec![all[0], all[1]], PatternPolicy::AlwaysBisec3, vec![1, 2, 2]),
        (vec![all[0], all[2]], PatternPolicy::AlwaysBisec3, vec![1, 2, 2]),
        (all.clone(), PatternPolicy::AlwaysBisec3, vec![2, 2, 2, 2]),
        (all.clone(), PatternPolicy::AlwaysRed, vec![2, 2, 2, 2]),
        (all.clone(), PatternPolicy::InteriorNode, vec![2, 2, 3, 3, 3, 3]),
    ];
    for (edges, policy, gens) in cases {
        let marking = MarkingInput::new(BTreeSet::from([0]), edges.into_iter().collect());
        let out = refine_step(&tri, &marking, Dialect::Refine, &policy).unwrap();
        let mut got: Vec<u32> = out.mesh.elements().iter().map(|e| e.gen).collect();
        got.sort_unstable();
        assert_eq!(got, gens, "{policy:?}");
    }
}

#[test]
fn bisec5_of_one_triangle_has_one_interior_node() {
    let tri = common::triangle();
    let out =
        refine_step(&tri, &MarkingInput::all_edges(&tri, [0]), Dialect::Refine, &PatternPolicy::InteriorNode).unwrap();
    assert_eq!(out.mesh.num_elements(), 6);
    let c = tri.coords(0).map(|v| v.xy());
    let strictly_inside = |p: [f64; 2]| (0..3).all(|i| orient(c[i], c[(i + 1) % 3], p) == std::cmp::Ordering::Greater);
    let inside: Vec<usize> = (0..out.mesh.num_nodes()).filter(|&n| strictly_inside(out.mesh.vertex(n).xy())).collect();
    assert_eq!(inside.len(), 1);
    assert_eq!(out.interior_nodes.values().copied().collect::<Vec<_>>(), inside);
    // 2 * 1/4 + 4 * 1/8 of the father
    let total: f64 = (0..6).map(|s| out.mesh.area(s)).sum();
    assert_eq!(total, tri.area(0));
}

#[test]
fn full_marking_is_already_closed() {
    for mesh in start_meshes() {
        let marking = MarkingInput::all_edges(&mesh, 0..mesh.num_elements());
        let plan = close_marks(&mesh, &marking, ClosureMode::Mnvb).unwrap();
        assert_eq!(plan.closed_edges, mesh.edge_table().keys().collect());
        assert!(plan.patterns.values().all(|p| p.is_full()));
        assert_eq!(plan.iterations, 0);
    }
}

#[test]
fn uniform_refinements() {
    for (_, mesh) in common::initial_meshes() {
        let n = mesh.num_elements();
        let twice = uniform(&uniform(&mesh, UniformKind::Bisec3), UniformKind::Bisec3);
        assert_eq!(twice.num_elements(), 16 * n);
        let mut via_marking = mesh.clone();
        for _ in 0..2 {
            let marking = MarkingInput::all_edges(&via_marking, 0..via_marking.num_elements());
            via_marking =
                refine_step(&via_marking, &marking, Dialect::Refine, &PatternPolicy::AlwaysBisec3).unwrap().mesh;
        }
        assert_eq!(via_marking.canonical(), twice.canonical());
        if mesh.structure_flags().is_bdd {
            let b1 = refine_nvb(&mesh, 0..n).unwrap();
            assert_eq!(b1.mesh.num_elements(), 2 * n);
            assert!(b1.plan.patterns.values().all(|&p| p == Pattern::Bisec1));
        }
    }
}

#[test]
fn plan_from_another_mesh_is_rejected() {
    let a = generate::square2();
    let b = generate::lshape6();
    let plan = close_marks(&b, &MarkingInput::reference_edges(&b, [5]), ClosureMode::Nvb).unwrap();
    assert!(split(&a, &plan, &PatternPolicy::AlwaysBisec3).is_err());
}
