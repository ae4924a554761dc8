//! Decomposition search: pure HTN planning and planning with task insertion.

mod ground;
mod insertion;
mod search;

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Atom, Domain, Instance};
use crate::tree::{DecompositionTree, NodeId};

pub use insertion::insertion_search;

#[derive(Clone, Debug)]
pub struct PlanConfig {
    /// Search nodes expanded before giving up.
    pub max_nodes: u64,
    /// Wall-clock budget; `None` means unlimited.
    pub time_budget: Option<Duration>,
    /// Maximum length of a root-to-node path.
    pub max_depth: usize,
    /// Upper bound on inserted primitive tasks (task-insertion search only).
    pub max_insertions: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            max_nodes: 1_000_000,
            time_budget: Some(Duration::from_secs(30)),
            max_depth: 32,
            max_insertions: 6,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("no solution exists within the search space")]
    Unsolvable,
    #[error("no plan with at most {0} inserted tasks")]
    NoTihtnPlan(usize),
    #[error("search budget exhausted")]
    ResourceLimit,
    #[error("invalid problem: {0}")]
    Invalid(String),
}

/// Where a step of an executed plan comes from.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum StepOrigin {
    Decomposed(NodeId),
    Inserted,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct PlanStep {
    pub action: Atom,
    pub origin: StepOrigin,
}

impl PlanStep {
    pub fn is_inserted(&self) -> bool {
        self.origin == StepOrigin::Inserted
    }
}

/// An executable plan `σ` together with a decomposition tree whose leaves
/// form a subsequence of it; the remaining steps are inserted.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct TihtnResult {
    pub sigma: Vec<PlanStep>,
    pub tree: DecompositionTree,
    /// Positions in `sigma` of the inserted steps, ascending.
    pub inserted: Vec<usize>,
}

impl TihtnResult {
    pub fn actions(&self) -> Vec<Atom> {
        self.sigma.iter().map(|s| s.action.clone()).collect()
    }

    /// `σ` restricted to the decomposed steps.
    pub fn skeleton(&self) -> Vec<Atom> {
        self.sigma
            .iter()
            .filter(|s| !s.is_inserted())
            .map(|s| s.action.clone())
            .collect()
    }
}

fn check_instance(dom: &Domain, inst: &Instance) -> Result<(), PlanError> {
    if !dom.is_compound(&inst.top) {
        return Err(PlanError::Invalid(format!(
            "{} is not a compound task",
            inst.top
        )));
    }
    if !inst.top.is_ground() {
        return Err(PlanError::Invalid(format!("{} is not ground", inst.top)));
    }
    dom.check_action(&inst.top, false)
        .map_err(|e| PlanError::Invalid(e.to_string()))
}

/// Finds a decomposition tree whose canonical plan is executable, by
/// depth-first search over method and binding choices in canonical order.
pub fn plan_htn(
    dom: &Domain,
    inst: &Instance,
    cfg: &PlanConfig,
) -> Result<DecompositionTree, PlanError> {
    check_instance(dom, inst)?;
    let dom = dom.for_instance(inst);
    let engine = search::Engine::new(&dom, inst, cfg, None);
    match engine.run(0)? {
        Some(found) => Ok(found.tree),
        None => Err(PlanError::Unsolvable),
    }
}

/// Finds a plan with task insertion, minimising the number of inserted tasks
/// by iterative deepening on the insertion count.
pub fn plan_tihtn(
    dom: &Domain,
    inst: &Instance,
    cfg: &PlanConfig,
) -> Result<TihtnResult, PlanError> {
    check_instance(dom, inst)?;
    let dom = dom.for_instance(inst);
    let engine = search::Engine::new(&dom, inst, cfg, Some(()));
    for k in 0..=cfg.max_insertions {
        if let Some(found) = engine.run(k)? {
            let inserted = found
                .sigma
                .iter()
                .enumerate()
                .filter(|(_, s)| s.is_inserted())
                .map(|(i, _)| i)
                .collect();
            return Ok(TihtnResult {
                sigma: found.sigma,
                tree: found.tree,
                inserted,
            });
        }
    }
    Err(PlanError::NoTihtnPlan(cfg.max_insertions))
}
