mod common;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nvb_core::exact::orient;
use nvb_core::forest::{overlay, BisectionForest};
use nvb_core::mesh::CanonicalElement;
use nvb_core::refine::{refine_nvb, refine_step, Dialect, MarkingInput, PatternPolicy};
use nvb_core::{ElemId, Mesh};

fn random_nvb(t0: &Mesh, rng: &mut ChaCha8Rng, steps: usize) -> Mesh {
    let mut m = t0.clone();
    for _ in 0..steps {
        let n = m.num_elements();
        let marked: Vec<ElemId> = (0..n).filter(|_| rng.random_bool(0.15)).collect();
        m = refine_nvb(&m, marked).unwrap().mesh;
    }
    m
}

fn inside_closed(p: [f64; 2], t: [[f64; 2]; 3]) -> bool {
    (0..3).all(|i| orient(t[i], t[(i + 1) % 3], p) != Ordering::Less)
}

/// Oracle: every result element is an element of `a` or `b` and lies inside some
/// element of the other mesh.
fn check_common_refinement(r: &Mesh, a: &Mesh, b: &Mesh) {
    let ca: BTreeSet<CanonicalElement> = a.canonical().into_iter().collect();
    let cb: BTreeSet<CanonicalElement> = b.canonical().into_iter().collect();
    for e in r.canonical() {
        assert!(ca.contains(&e) || cb.contains(&e));
    }
    for t in 0..r.num_elements() {
        let pts: Vec<[f64; 2]> = r.coords(t).iter().map(|v| v.xy()).chain([r.centroid(t).xy()]).collect();
        for other in [a, b] {
            let host = (0..other.num_elements()).any(|s| {
                let c = other.coords(s).map(|v| v.xy());
                pts.iter().all(|&p| inside_closed(p, c))
            });
            assert!(host, "element {t} is not inside any element of an input");
        }
    }
    assert!(r.validate().is_valid());
    assert_eq!(r.total_area(), a.total_area());
}

#[test]
fn random_pairs_obey_the_count_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..50 {
        let (_, t0) = &common::initial_meshes()[i % 5];
        let a = random_nvb(t0, &mut rng, 4);
        let b = random_nvb(t0, &mut rng, 4);
        let r = overlay(t0, &a, &b).unwrap();
        assert!(r.num_elements() + t0.num_elements() <= a.num_elements() + b.num_elements());
        check_common_refinement(&r, &a, &b);
        assert_eq!(overlay(t0, &b, &a).unwrap().canonical(), r.canonical());
    }
}

#[test]
fn identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (_, t0) in common::initial_meshes() {
        let a = random_nvb(&t0, &mut rng, 5);
        assert_eq!(overlay(&t0, &a, &a).unwrap().canonical(), a.canonical());
        assert_eq!(overlay(&t0, &t0, &a).unwrap().canonical(), a.canonical());
        // a refinement of a absorbs a
        let finer = random_nvb(&a, &mut rng, 2);
        assert_eq!(overlay(&t0, &a, &finer).unwrap().canonical(), finer.canonical());
    }
}

#[test]
fn forest_leaves_are_the_mesh() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (_, t0) in common::initial_meshes() {
        let a = random_nvb(&t0, &mut rng, 5);
        let f = BisectionForest::from_mesh(&t0, &a).unwrap();
        assert_eq!(f.num_leaves(), a.num_elements());
        assert_eq!(f.to_mesh().canonical(), a.canonical());
    }
}

#[test]
fn bisec3_refinements_are_nvb_refinements() {
    let t0 = nvb_core::generate::lshape6();
    let a = refine_step(&t0, &MarkingInput::all_edges(&t0, [0, 4]), Dialect::RefineNvb3, &PatternPolicy::AlwaysBisec3)
        .unwrap()
        .mesh;
    let b = refine_nvb(&t0, [2, 3]).unwrap().mesh;
    let r = overlay(&t0, &a, &b).unwrap();
    check_common_refinement(&r, &a, &b);
}

#[test]
fn interior_node_meshes_are_bisection_meshes() {
    let t0 = nvb_core::generate::square2();
    let m = refine_step(&t0, &MarkingInput::all_edges(&t0, [1]), Dialect::Refine, &PatternPolicy::InteriorNode)
        .unwrap()
        .mesh;
    // bisec5 is bisec3 followed by two more bisections, so the forest holds it
    assert_eq!(overlay(&t0, &t0, &m).unwrap().canonical(), m.canonical());
    let red = refine_step(&t0, &MarkingInput::all_edges(&t0, [1]), Dialect::RefineNvbRed, &PatternPolicy::AlwaysRed)
        .unwrap()
        .mesh;
    assert!(matches!(overlay(&t0, &red, &m), Err(nvb_core::Error::Unsupported(_))));
}
