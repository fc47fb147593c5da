//! Refinement loops: mark, close, split, repeat.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::marking::{EdgeRule, MarkingStrategy};
use crate::mesh::{ElemId, Mesh};
use crate::refine::{refine_step, Dialect, MarkingInput, Pattern, PatternPolicy};

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub dialect: Dialect,
    pub policy: PatternPolicy,
    pub strategy: MarkingStrategy,
    /// Ignored by `RefineNvb`, which always seeds with reference edges.
    pub edge_rule: EdgeRule,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub marked: usize,
    pub marked_edges: usize,
    pub closure_iters: usize,
    pub refined: usize,
    pub elements_before: usize,
    pub elements_after: usize,
    pub bisec5: usize,
    pub red: usize,
}

/// A finished run: meshes `T_0 ..= T_L` and the marking used at each step.
#[derive(Clone, Debug)]
pub struct Run {
    pub meshes: Vec<Mesh>,
    pub markings: Vec<MarkingInput>,
    pub records: Vec<StepRecord>,
    /// Per step, the parent in `T_l` of every element of `T_{l+1}`.
    pub parents: Vec<Vec<ElemId>>,
}

impl Run {
    pub fn final_mesh(&self) -> &Mesh {
        self.meshes.last().expect("a run holds at least the initial mesh")
    }

    pub fn element_counts(&self) -> Vec<usize> {
        self.meshes.iter().map(Mesh::num_elements).collect()
    }

    pub fn marked_counts(&self) -> Vec<usize> {
        self.markings.iter().map(|m| m.elements.len()).collect()
    }

    pub fn marked_sets(&self) -> Vec<BTreeSet<ElemId>> {
        self.markings.iter().map(|m| m.elements.clone()).collect()
    }

    /// Engine trace: step, #M, #M0, k, #R, #T.
    pub fn steps_csv(&self) -> String {
        let mut out = String::from("step,marked,marked_edges,closure_iters,refined,elements\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.step, r.marked, r.marked_edges, r.closure_iters, r.refined, r.elements_before
            );
        }
        out
    }
}

pub fn run(initial: &Mesh, config: &RunConfig) -> Result<Run> {
    let mut meshes = vec![initial.clone()];
    let mut markings = Vec::with_capacity(config.steps);
    let mut records = Vec::with_capacity(config.steps);
    let mut parents = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mesh = meshes.last().expect("nonempty");
        let marked = config.strategy.select(mesh, step)?;
        let marking = match config.dialect {
            Dialect::RefineNvb => MarkingInput::reference_edges(mesh, marked),
            _ => config.edge_rule.apply(mesh, marked, step),
        };
        let out = refine_step(mesh, &marking, config.dialect, &config.policy)?;
        let count = |p: Pattern| out.plan.patterns.values().filter(|&&q| q == p).count();
        records.push(StepRecord {
            step,
            marked: marking.elements.len(),
            marked_edges: out.plan.seed_edges.len(),
            closure_iters: out.plan.iterations,
            refined: out.refined.len(),
            elements_before: mesh.num_elements(),
            elements_after: out.mesh.num_elements(),
            bisec5: count(Pattern::Bisec5),
            red: count(Pattern::Red),
        });
        markings.push(marking);
        parents.push(out.parents);
        meshes.push(out.mesh);
    }
    Ok(Run { meshes, markings, records, parents })
}
