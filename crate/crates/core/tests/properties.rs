mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use nvb_core::driver::{run, Run, RunConfig};
use nvb_core::io::{parse_nvbm, to_nvbm};
use nvb_core::marking::{EdgeRule, MarkingStrategy};
use nvb_core::mesh::EdgeTable;
use nvb_core::refine::{close_marks, MarkingInput};
use nvb_core::stability::delta_distance;
use nvb_core::EdgeKey;

fn seeded_run(mesh_idx: usize, combo_idx: usize, seed: u64, steps: usize) -> (nvb_core::Mesh, Run) {
    let (_, t0) = common::initial_meshes().swap_remove(mesh_idx);
    let (dialect, policy) = common::combos().swap_remove(combo_idx);
    let cfg = RunConfig {
        dialect,
        policy,
        strategy: MarkingStrategy::Random { p: 0.3, seed },
        edge_rule: EdgeRule::Random { seed: seed ^ 0x5a5a },
        steps,
    };
    let r = run(&t0, &cfg).unwrap();
    (t0, r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn refined_meshes_keep_their_invariants(m in 0usize..5, c in 0usize..11, seed in any::<u64>(), steps in 1usize..5) {
        let (t0, r) = seeded_run(m, c, seed, steps);
        for mesh in &r.meshes {
            prop_assert!(mesh.validate().is_valid());
            prop_assert_eq!(mesh.incidence_pairs().count(), 3 * mesh.num_elements());
            prop_assert_eq!(mesh.total_area(), t0.total_area());
            for (t, el) in mesh.elements().iter().enumerate() {
                let a = mesh.exact_double_area(t).unwrap().scale(el.gen as i32);
                prop_assert_eq!(Some(a), t0.exact_double_area(el.ancestor));
            }
            let rebuilt = EdgeTable::build(mesh.elements());
            prop_assert_eq!(rebuilt.iter().collect::<Vec<_>>(), mesh.edge_table().iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn pair_classes_are_symmetric(m in 0usize..5, c in 0usize..11, seed in any::<u64>()) {
        let (_, r) = seeded_run(m, c, seed, 3);
        let mesh = r.final_mesh();
        for (_, elems) in mesh.edge_table().iter() {
            if let [a, b] = *elems {
                prop_assert_eq!(mesh.classify_pair(a, b).unwrap(), mesh.classify_pair(b, a).unwrap());
            }
        }
        let f = mesh.structure_flags();
        if f.is_bdd {
            prop_assert!(f.is_weak_bdd);
        }
    }

    #[test]
    fn nvbm_roundtrip(m in 0usize..5, c in 0usize..11, seed in any::<u64>(), steps in 0usize..4) {
        let (_, r) = seeded_run(m, c, seed, steps);
        let mesh = r.final_mesh();
        prop_assert_eq!(&parse_nvbm(&to_nvbm(mesh)).unwrap(), mesh);
    }

    #[test]
    fn runs_are_deterministic(m in 0usize..5, c in 0usize..11, seed in any::<u64>()) {
        let (_, a) = seeded_run(m, c, seed, 3);
        let (_, b) = seeded_run(m, c, seed, 3);
        prop_assert_eq!(a.meshes, b.meshes);
        prop_assert_eq!(a.markings, b.markings);
    }

    #[test]
    fn closure_is_closed_and_contains_the_seed(m in 0usize..5, seed in any::<u64>(), mask in any::<u64>()) {
        let (_, r) = seeded_run(m, 0, seed, 2);
        let mesh = r.final_mesh();
        let edges: Vec<EdgeKey> = mesh.edge_table().keys().collect();
        let chosen: BTreeSet<EdgeKey> =
            edges.iter().enumerate().filter(|(i, _)| mask >> (i % 64) & 1 == 1).map(|(_, e)| *e).collect();
        let elements = (0..mesh.num_elements())
            .filter(|&t| mesh.elements()[t].edges().iter().any(|e| chosen.contains(e)))
            .collect();
        let plan = close_marks(mesh, &MarkingInput::new(elements, chosen.clone()), nvb_core::refine::ClosureMode::Mnvb).unwrap();
        prop_assert!(plan.closed_edges.is_superset(&chosen));
        for el in mesh.elements() {
            if el.edges().iter().any(|e| plan.closed_edges.contains(e)) {
                prop_assert!(plan.closed_edges.contains(&el.reference_edge()));
            }
        }
        // dropping any added edge breaks closedness
        for e in plan.closed_edges.difference(&chosen) {
            let mut fewer = plan.closed_edges.clone();
            fewer.remove(e);
            let closed = mesh.elements().iter().all(|el| {
                !el.edges().iter().any(|x| fewer.contains(x)) || fewer.contains(&el.reference_edge())
            });
            prop_assert!(!closed);
        }
    }

    #[test]
    fn path_distance_is_symmetric(m in 0usize..5, c in 0usize..11, seed in any::<u64>(), j in any::<usize>(), k in any::<usize>()) {
        let (_, r) = seeded_run(m, c, seed, 3);
        let mesh = r.final_mesh();
        let (j, k) = (j % mesh.num_nodes(), k % mesh.num_nodes());
        let o = delta_distance(mesh);
        prop_assert_eq!(o.delta(j, k), o.delta(k, j));
        prop_assert_eq!(o.delta(j, j), Some(0));
    }
}

#[test]
fn marking_inputs_name_their_elements() {
    let (_, r) = seeded_run(1, 5, 3, 4);
    for (mesh, m) in r.meshes.iter().zip(&r.markings) {
        assert!(m.validate(mesh).is_ok());
    }
}
