//! Structural checks on refined meshes and refinement traces.
//!
//! Every check returns a report with witnesses instead of failing, so that a
//! caller can print or serialize the outcome and decide on an exit status.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::exact;
use crate::geom;
use crate::mesh::{ElemId, Mesh, PairClass};
use crate::refine::refine_nvb;

const MAX_WITNESSES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub elements: Vec<ElemId>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub checked: usize,
    pub violations: usize,
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckResult {
    pub(crate) fn new(name: &str) -> Self {
        CheckResult {
            name: name.to_string(),
            passed: true,
            checked: 0,
            violations: 0,
            witnesses: Vec::new(),
            note: None,
        }
    }

    pub(crate) fn fail(&mut self, elements: Vec<ElemId>, detail: String) {
        self.passed = false;
        self.violations += 1;
        if self.witnesses.len() < MAX_WITNESSES {
            self.witnesses.push(Witness { elements, detail });
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelReport {
    pub checks: Vec<CheckResult>,
    pub max_level_jump: u32,
    pub max_level_jump_witness: Option<[ElemId; 2]>,
    /// Bound that was enforced on the level jump (2, or 1 under the BDD certificate).
    pub level_jump_bound: u32,
    /// min over T of |T|^(1/2) 2^(gen/2)
    pub c_diam_lower: f64,
    /// max over T of diam(T) 2^(gen/2)
    pub c_diam_upper: f64,
    pub c_diam_lower_witness: Option<ElemId>,
    pub c_diam_upper_witness: Option<ElemId>,
}

impl LevelReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

const SHORT_MANTISSA_BITS: u32 = 40;

/// Area-generation identity, diameter scaling and level jumps across edges.
///
/// With `nvb_only` set the stricter jump bound 1 is enforced, but only when
/// the initial mesh is BDD; otherwise a note records the misuse.
pub fn verify_levels(mesh: &Mesh, initial: &Mesh, nvb_only: bool) -> LevelReport {
    let mut area = CheckResult::new("area_generation_identity");
    // Long mantissas make repeated float midpoints round, so exact equality is not expected.
    let short_dyadic = initial.vertices().iter().all(|v| {
        v.xy().iter().all(|&x| exact::Dyadic::from_f64(x).is_some_and(|d| d.significant_bits() <= SHORT_MANTISSA_BITS))
    });
    if !short_dyadic {
        area.note = Some("initial coordinates are not short dyadics; compared in floating point".into());
    }
    let mut c_lo = (f64::INFINITY, None);
    let mut c_hi = (0.0f64, None);
    for (t, el) in mesh.elements().iter().enumerate() {
        area.checked += 1;
        if el.ancestor >= initial.num_elements() {
            area.fail(vec![t], format!("ancestor {} is not an initial element", el.ancestor));
            continue;
        }
        let exact_pair =
            if short_dyadic { mesh.exact_double_area(t).zip(initial.exact_double_area(el.ancestor)) } else { None };
        match exact_pair {
            Some((a, b)) => {
                if a.scale(el.gen as i32) != b {
                    area.fail(
                        vec![t],
                        format!(
                            "2|T| 2^gen = {} but 2|ancestor| = {}",
                            a.to_f64() * 2f64.powi(el.gen as i32),
                            b.to_f64()
                        ),
                    );
                }
            }
            _ => {
                let lhs = mesh.area(t) * 2f64.powi(el.gen as i32);
                let rhs = initial.area(el.ancestor);
                if (lhs - rhs).abs() > 1e-12 * rhs.abs() {
                    area.fail(vec![t], format!("|T| 2^gen = {lhs} but |ancestor| = {rhs}"));
                }
                if area.note.is_none() {
                    area.note = Some("coordinates out of exact range; compared in floating point".into());
                }
            }
        }
        let scale = 2f64.powf(el.gen as f64 / 2.0);
        let lo = mesh.area(t).sqrt() * scale;
        let hi = mesh.diameter(t) * scale;
        if lo < c_lo.0 {
            c_lo = (lo, Some(t));
        }
        if hi > c_hi.0 {
            c_hi = (hi, Some(t));
        }
    }

    let bdd = initial.structure_flags().is_bdd;
    let bound = if nvb_only && bdd { 1 } else { 2 };
    let mut jump = CheckResult::new("level_jump");
    if nvb_only && !bdd {
        jump.note = Some("initial mesh is not BDD; the bound 1 does not apply and 2 was checked".into());
    }
    let mut max_jump = 0;
    let mut witness = None;
    for (e, elems) in mesh.edge_table().iter() {
        if let [a, b] = *elems {
            jump.checked += 1;
            let d = mesh.elements()[a].gen.abs_diff(mesh.elements()[b].gen);
            if d > max_jump || witness.is_none() {
                max_jump = d;
                witness = Some([a, b]);
            }
            if d > bound {
                jump.fail(vec![a, b], format!("level jump {d} across {e:?} exceeds {bound}"));
            }
        }
    }
    LevelReport {
        checks: vec![area, jump],
        max_level_jump: max_jump,
        max_level_jump_witness: witness,
        level_jump_bound: bound,
        c_diam_lower: c_lo.0,
        c_diam_upper: c_hi.0,
        c_diam_lower_witness: c_lo.1,
        c_diam_upper_witness: c_hi.1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeighborReport {
    pub checks: Vec<CheckResult>,
    /// Longest run `T, N(T), N(N(T)), ...` of distinct elements of equal level.
    pub max_equal_level_chain: usize,
    pub chain_witness: Vec<ElemId>,
}

impl NeighborReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn inside_initial_edge(mesh: &Mesh, initial: &Mesh, t: ElemId) -> bool {
    let el = &mesh.elements()[t];
    let Some(anc) = initial.elements().get(el.ancestor) else {
        return false;
    };
    let (a, b) = el.reference_edge().nodes();
    let (p, q) = (mesh.vertex(a).xy(), mesh.vertex(b).xy());
    anc.edges().iter().any(|e| {
        let (u, v) = e.nodes();
        let (u, v) = (initial.vertex(u).xy(), initial.vertex(v).xy());
        let on = |x: [f64; 2]| {
            exact::orient(u, v, x) == Ordering::Equal
                && u[0].min(v[0]) <= x[0]
                && x[0] <= u[0].max(v[0])
                && u[1].min(v[1]) <= x[1]
                && x[1] <= u[1].max(v[1])
        };
        on(p) && on(q)
    })
}

/// Reference-neighbor rules of NVB meshes.
pub fn verify_neighbor_rules(mesh: &Mesh, initial: &Mesh) -> NeighborReport {
    let mut up = CheckResult::new("finer_reference_neighbor");
    let mut same_anc = CheckResult::new("same_ancestor_equal_level");
    let mut comp_anc = CheckResult::new("compatible_ancestors_equal_level");
    let mut on_initial = CheckResult::new("incompatible_equal_level_on_initial_edge");
    let els = mesh.elements();
    let class = |a, b| mesh.classify_pair(a, b).unwrap_or(PairClass::NotAdjacent);

    for t in 0..mesh.num_elements() {
        let Some(n) = mesh.reference_neighbor(t).ok().flatten() else { continue };
        let (gt, gn) = (els[t].gen, els[n].gen);
        if gn > gt {
            up.checked += 1;
            if class(t, n) != PairClass::CompatiblyDivisible {
                up.fail(vec![t, n], "finer reference neighbor is not compatibly divisible".into());
            } else if gn != gt + 1 {
                up.fail(vec![t, n], format!("finer reference neighbor has level {gn}, expected {}", gt + 1));
            }
        }
        if gn == gt && class(t, n) == PairClass::Incompatible {
            on_initial.checked += 1;
            if !inside_initial_edge(mesh, initial, t) {
                on_initial.fail(vec![t, n], "incompatible equal-level pair off the initial edges".into());
            }
        }
    }
    for (_, elems) in mesh.edge_table().iter() {
        let [a, b] = *elems else { continue };
        if els[a].gen != els[b].gen {
            continue;
        }
        let (aa, ab) = (els[a].ancestor, els[b].ancestor);
        if aa == ab {
            same_anc.checked += 1;
            if class(a, b) != PairClass::CompatiblyDivisible {
                same_anc.fail(vec![a, b], format!("equal-level successors of initial element {aa} incompatible"));
            }
        } else if aa < initial.num_elements()
            && ab < initial.num_elements()
            && initial.classify_pair(aa, ab).ok() == Some(PairClass::CompatiblyDivisible)
        {
            comp_anc.checked += 1;
            if class(a, b) != PairClass::CompatiblyDivisible {
                comp_anc.fail(vec![a, b], format!("successors of compatible pair ({aa},{ab}) incompatible"));
            }
        }
    }

    let best = longest_equal_level_chain(mesh);
    NeighborReport {
        checks: vec![up, same_anc, comp_anc, on_initial],
        max_equal_level_chain: best.len(),
        chain_witness: best,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainReport {
    pub checks: Vec<CheckResult>,
    pub marked_checked: usize,
    pub created: usize,
    /// max over marked T and created T' of gen(T') - gen(T)
    pub max_gen_overshoot: i64,
    /// max over marked T and created T' of dist(T, T') 2^(gen(T')/2)
    pub max_scaled_distance: f64,
    /// Per step, the running maximum of the scaled distance.
    pub scaled_distance_by_step: Vec<f64>,
    pub max_equal_level_chain: usize,
}

impl ChainReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// For every step and every marked `T`, refines `T` alone with NVB and checks
/// the elements this creates against the level and distance of `T`.
pub fn verify_chain_bounds(meshes: &[Mesh], markings: &[BTreeSet<ElemId>]) -> Result<ChainReport> {
    if meshes.len() < markings.len() {
        return invalid("need one mesh per marking step");
    }
    let mut overshoot = CheckResult::new("closure_level_overshoot");
    let mut max_over = i64::MIN;
    let mut max_dist = 0.0f64;
    let mut by_step = Vec::with_capacity(markings.len());
    let mut created = 0;
    let mut marked_checked = 0;
    let mut max_chain = 0;
    for (step, (mesh, marked)) in meshes.iter().zip(markings).enumerate() {
        for &t in marked {
            mesh.element(t)?;
            marked_checked += 1;
            let out = refine_nvb(mesh, [t])?;
            let tri = mesh.coords(t);
            let gt = mesh.elements()[t].gen as i64;
            for (s, el) in out.mesh.elements().iter().enumerate() {
                if !out.refined.contains(&out.parents[s]) {
                    continue;
                }
                created += 1;
                overshoot.checked += 1;
                let d = el.gen as i64 - gt;
                max_over = max_over.max(d);
                if d > 2 {
                    overshoot.fail(
                        vec![t, s],
                        format!("step {step}: created element has level {} from marked level {gt}", el.gen),
                    );
                }
                let dist = geom::triangle_dist(&tri, &out.mesh.coords(s));
                max_dist = max_dist.max(dist * 2f64.powf(el.gen as f64 / 2.0));
            }
        }
        max_chain = max_chain.max(longest_equal_level_chain(mesh).len());
        by_step.push(max_dist);
    }
    Ok(ChainReport {
        checks: vec![overshoot],
        marked_checked,
        created,
        max_gen_overshoot: if max_over == i64::MIN { 0 } else { max_over },
        max_scaled_distance: max_dist,
        scaled_distance_by_step: by_step,
        max_equal_level_chain: max_chain,
    })
}

/// Longest sequence `T, N(T), N(N(T)), ...` of distinct elements of equal level.
pub fn longest_equal_level_chain(mesh: &Mesh) -> Vec<ElemId> {
    let els = mesh.elements();
    let mut best: Vec<ElemId> = Vec::new();
    for t in 0..mesh.num_elements() {
        let mut seq = vec![t];
        let mut seen = BTreeSet::from([t]);
        let mut cur = t;
        while let Some(n) = mesh.reference_neighbor(cur).ok().flatten() {
            if els[n].gen != els[t].gen || !seen.insert(n) {
                break;
            }
            seq.push(n);
            cur = n;
        }
        if seq.len() > best.len() {
            best = seq;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerRow {
    pub step: usize,
    /// `#M_l`, absent for the last mesh of a trace.
    pub marked: Option<usize>,
    pub elements: usize,
    /// sum of `#M_j` over `j < l`
    pub cum_marked: usize,
    /// `(#T_l - #T_0) / cum_marked`, absent while `cum_marked = 0`
    pub rho: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosureLedger {
    pub rows: Vec<LedgerRow>,
    pub max_rho: Option<f64>,
    /// `cum_marked <= #T_l - #T_0` on every row.
    pub counting_holds: bool,
    pub bound: Option<f64>,
    /// Rows whose `rho` exceeds `bound`.
    pub exceeding: Vec<usize>,
}

impl ClosureLedger {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,marked,elements,cum_marked,rho\n");
        for r in &self.rows {
            let m = r.marked.map(|m| m.to_string()).unwrap_or_default();
            let rho = r.rho.map(|x| format!("{x:.6}")).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", r.step, m, r.elements, r.cum_marked, rho);
        }
        out
    }
}

/// Ledger of `#T_l - #T_0` against the cumulative number of marked elements.
/// `element_counts` holds `#T_0 ..= #T_L`, `marked_counts` holds `#M_0 .. #M_{L-1}`.
pub fn closure_accounting(
    element_counts: &[usize],
    marked_counts: &[usize],
    bound: Option<f64>,
) -> Result<ClosureLedger> {
    if element_counts.is_empty() {
        return invalid("trace holds no mesh");
    }
    if marked_counts.len() + 1 != element_counts.len() {
        return invalid(format!(
            "{} meshes need {} marking steps, got {}",
            element_counts.len(),
            element_counts.len() - 1,
            marked_counts.len()
        ));
    }
    let t0 = element_counts[0];
    let mut rows = Vec::with_capacity(element_counts.len());
    let mut cum = 0;
    let mut counting_holds = true;
    let mut max_rho: Option<f64> = None;
    let mut exceeding = Vec::new();
    for (step, &n) in element_counts.iter().enumerate() {
        if n < t0 {
            return invalid(format!("step {step} has fewer elements than the initial mesh"));
        }
        let grown = n - t0;
        if cum > grown {
            counting_holds = false;
        }
        let rho = (cum > 0).then(|| grown as f64 / cum as f64);
        if let Some(r) = rho {
            max_rho = Some(max_rho.map_or(r, |m| m.max(r)));
            if bound.is_some_and(|b| r > b) {
                exceeding.push(step);
            }
        }
        rows.push(LedgerRow { step, marked: marked_counts.get(step).copied(), elements: n, cum_marked: cum, rho });
        if let Some(m) = marked_counts.get(step) {
            cum += m;
        }
    }
    Ok(ClosureLedger { rows, max_rho, counting_holds, bound, exceeding })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioInequality {
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `a + b + c + 1/a + 1/b + 1/c` with `c = ab` against `2(1 + M + 1/M)`,
/// for `1/M <= a, b, ab <= M`.
pub fn ratio_inequality_check(a: f64, b: f64, m: f64) -> Result<RatioInequality> {
    if !(m >= 1.0) || !m.is_finite() {
        return invalid(format!("M = {m} must be a finite number >= 1"));
    }
    let slack = 1e-12 * m;
    let ok = |x: f64| x.is_finite() && x >= 1.0 / m - slack && x <= m + slack;
    let c = a * b;
    if !(a > 0.0 && b > 0.0 && ok(a) && ok(b) && ok(c)) {
        return invalid(format!("need 1/M <= a, b, ab <= M (a = {a}, b = {b}, M = {m})"));
    }
    let lhs = a + b + c + 1.0 / a + 1.0 / b + 1.0 / c;
    let bound = 2.0 * (1.0 + m + 1.0 / m);
    Ok(RatioInequality { lhs, bound, holds: lhs <= bound + 1e-12 })
}
