//! From a plan with inserted tasks to refined methods: the extended order,
//! candidate windows, preferred completion profiles, completed trees and
//! lifted refined methods.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    transitive_closure, Atom, Binding, Domain, Method, Provenance, Symbol, TaskId, TaskNetwork,
    Term,
};
use crate::planner::{StepOrigin, TihtnResult};
use crate::preference::Prioritization;
use crate::tree::{close_tree, linearize, DecompositionTree, Node, NodeId};

pub use crate::tree::closure;

/// Largest number of candidate host methods for which the exact
/// preferred-profile correction runs.
const EXACT_PROFILE_CAP: usize = 16;

/// Joint plan checks spent on one candidate set of host methods.
const ASSIGNMENT_BUDGET: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompletionError {
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
    #[error("no valid host for inserted task {0}")]
    NoValidProfile(NodeId),
    #[error("node {0} has no decomposition")]
    NotInner(NodeId),
    #[error("unknown method {0}")]
    UnknownMethod(Symbol),
}

/// Tree precedence extended with the execution order of the plan. Inserted
/// steps get node ids following the tree's nodes, in plan order.
#[derive(Clone, Debug, Serialize)]
pub struct ExtendedOrder {
    pub rel: BTreeSet<(NodeId, NodeId)>,
    /// Tree `≪` alone.
    pub tree: BTreeSet<(NodeId, NodeId)>,
    /// Node of every plan step, in plan order.
    pub steps: Vec<NodeId>,
    pub inserted: Vec<NodeId>,
    pub actions: BTreeMap<NodeId, Atom>,
    /// Plan positions of decomposed leaves below each tree node (min, max).
    pub spans: BTreeMap<NodeId, (usize, usize)>,
}

impl ExtendedOrder {
    pub fn position(&self, n: NodeId) -> Option<usize> {
        self.steps.iter().position(|x| *x == n)
    }

    pub fn precedes(&self, a: NodeId, b: NodeId) -> bool {
        self.rel.contains(&(a, b))
    }

    pub fn is_inserted(&self, n: NodeId) -> bool {
        self.actions.contains_key(&n)
    }

    /// Open interval of plan positions between the last decomposed
    /// predecessor and the first decomposed successor of `t` in the tree.
    pub fn window(&self, dt: &DecompositionTree, t: NodeId) -> (Option<usize>, Option<usize>) {
        let mut lo = None;
        let mut hi = None;
        for n in dt.primitive_leaves() {
            let Some(p) = self.position(n) else { continue };
            if self.tree.contains(&(n, t)) {
                lo = lo.max(Some(p));
            }
            if self.tree.contains(&(t, n)) {
                hi = Some(hi.map_or(p, |h: usize| h.min(p)));
            }
        }
        (lo, hi)
    }
}

pub fn extend_order(result: &TihtnResult) -> Result<ExtendedOrder, CompletionError> {
    let dt = &result.tree;
    let tree = dt.precedence();
    let mut next = dt.nodes.len() as u32;
    let mut steps = Vec::with_capacity(result.sigma.len());
    let mut inserted = Vec::new();
    let mut actions = BTreeMap::new();
    for s in &result.sigma {
        match s.origin {
            StepOrigin::Decomposed(n) => steps.push(n),
            StepOrigin::Inserted => {
                let id = NodeId(next);
                next += 1;
                steps.push(id);
                inserted.push(id);
                actions.insert(id, s.action.clone());
            }
        }
    }
    let pos: BTreeMap<NodeId, usize> = steps.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut spans = BTreeMap::new();
    for n in dt.ids() {
        let ps: Vec<usize> = dt
            .leaves_below(n)
            .iter()
            .filter_map(|l| pos.get(l).copied())
            .collect();
        if let (Some(a), Some(b)) = (ps.iter().min(), ps.iter().max()) {
            spans.insert(n, (*a, *b));
        }
    }
    let mut rel = tree.clone();
    for i in 0..steps.len() {
        for j in i + 1..steps.len() {
            rel.insert((steps[i], steps[j]));
        }
    }
    for &ins in &inserted {
        let p = pos[&ins];
        for (&c, &(lo, hi)) in &spans {
            if p < lo {
                rel.insert((ins, c));
            } else if p > hi {
                rel.insert((c, ins));
            }
        }
    }
    let rel = transitive_closure(&rel);
    if let Some((a, _)) = rel.iter().find(|(a, b)| a == b) {
        return Err(CompletionError::InternalInconsistency(format!(
            "extended order has a cycle through {a}"
        )));
    }
    Ok(ExtendedOrder {
        rel,
        tree,
        steps,
        inserted,
        actions,
        spans,
    })
}

/// `Δ_t`: unlabeled inserted tasks inside the window of `t`.
pub fn candidate_set(
    ext: &ExtendedOrder,
    dt: &DecompositionTree,
    t: NodeId,
    unlabeled: &BTreeSet<NodeId>,
) -> BTreeSet<NodeId> {
    let (lo, hi) = ext.window(dt, t);
    unlabeled
        .iter()
        .copied()
        .filter(|i| {
            let p = ext.position(*i).expect("inserted task has a position");
            lo.is_none_or(|l| p > l) && hi.is_none_or(|h| p < h)
        })
        .collect()
}

/// Whether inserted task `ins` may become a child of inner node `t`: it lies
/// in `t`'s window and not strictly inside the span of one of `t`'s
/// children, so it can be ordered against all of its new siblings.
pub fn valid_host(ext: &ExtendedOrder, dt: &DecompositionTree, t: NodeId, ins: NodeId) -> bool {
    if !dt.node(t).is_inner() {
        return false;
    }
    let p = ext.position(ins).expect("inserted task has a position");
    let (lo, hi) = ext.window(dt, t);
    if lo.is_some_and(|l| p <= l) || hi.is_some_and(|h| p >= h) {
        return false;
    }
    !dt.node(t)
        .children
        .iter()
        .any(|c| ext.spans.get(c).is_some_and(|&(a, b)| a < p && p < b))
}

/// `ρ`: host inner node of every inserted task.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize)]
pub struct CompletionProfile {
    pub assignment: BTreeMap<NodeId, NodeId>,
    /// Window tests performed by the stratum scan.
    pub scan_ops: u64,
    /// True when the exact pass replaced the stratum scan's choice.
    pub corrected: bool,
}

impl CompletionProfile {
    pub fn hosted_by(&self, t: NodeId) -> Vec<NodeId> {
        self.assignment
            .iter()
            .filter(|(_, h)| **h == t)
            .map(|(i, _)| *i)
            .collect()
    }

    pub fn hosts(&self) -> BTreeSet<NodeId> {
        self.assignment.values().copied().collect()
    }

    /// Original methods whose nodes receive inserted tasks.
    pub fn origins(&self, dt: &DecompositionTree, dom: &Domain) -> BTreeSet<Symbol> {
        self.hosts()
            .into_iter()
            .filter_map(|h| origin_of(dt, dom, h))
            .collect()
    }
}

fn origin_of(dt: &DecompositionTree, dom: &Domain, t: NodeId) -> Option<Symbol> {
    let d = dt.node(t).decomposition.as_ref()?;
    Some(
        dom.method(&d.method)
            .map_or(d.method.clone(), |m| m.origin().clone()),
    )
}

/// Every inserted task has a host that passes [`valid_host`], and the
/// completed tree's plan is exactly the plan with insertions. The second
/// condition is not implied by the first when methods are partially
/// ordered: an inserted task may end up unordered against a leaf outside
/// its host and be linearized on the wrong side of it.
pub fn is_valid_profile(
    ext: &ExtendedOrder,
    dt: &DecompositionTree,
    rho: &CompletionProfile,
) -> bool {
    ext.inserted.len() == rho.assignment.len()
        && ext.inserted.iter().all(|i| {
            rho.assignment
                .get(i)
                .is_some_and(|h| valid_host(ext, dt, *h, *i))
        })
        && reproduces_plan(ext, dt, rho)
}

/// Task ids the inserted tasks receive in their hosts' refined methods:
/// after the method's own ids, in plan order.
fn hosted_ids(
    ext: &ExtendedOrder,
    dt: &DecompositionTree,
    rho: &CompletionProfile,
) -> BTreeMap<NodeId, BTreeMap<NodeId, TaskId>> {
    let mut out = BTreeMap::new();
    for t in rho.hosts() {
        let Some(dec) = dt.node(t).decomposition.as_ref() else {
            continue;
        };
        let mut hosted = rho.hosted_by(t);
        hosted.sort_by_key(|i| ext.position(*i));
        let next = dec.subtasks.keys().map(|k| k.0 + 1).max().unwrap_or(0);
        out.insert(
            t,
            hosted
                .into_iter()
                .enumerate()
                .map(|(k, i)| (i, TaskId(next + k as u32)))
                .collect(),
        );
    }
    out
}

fn reproduces_plan(ext: &ExtendedOrder, dt: &DecompositionTree, rho: &CompletionProfile) -> bool {
    let Ok(tree) = attach(ext, dt, &hosted_ids(ext, dt, rho)) else {
        return false;
    };
    linearize(&tree).is_ok_and(|l| {
        l.steps
            .iter()
            .map(|(n, _)| *n)
            .eq(ext.steps.iter().copied())
    })
}

/// Distance in plan positions from `p` to the leaf span of `t`, and whether
/// `p` lies before it.
fn span_distance(ext: &ExtendedOrder, t: NodeId, p: usize) -> (usize, bool) {
    match ext.spans.get(&t) {
        None => (usize::MAX, false),
        Some(&(a, _)) if p < a => (a - p, true),
        Some(&(_, b)) if p > b => (p - b, false),
        Some(_) => (0, false),
    }
}

/// Preferred completion profile. Strata are scanned from the highest
/// refinement priority down; within a stratum each unlabeled inserted task
/// goes to the in-window node whose leaves are nearest to it. Leftovers go
/// to the root. When the resulting set of host methods is not minimal under
/// the prioritization, an exact search over host-method sets replaces it.
pub fn complete_profile(
    result: &TihtnResult,
    dom: &Domain,
    p: &Prioritization,
) -> Result<CompletionProfile, CompletionError> {
    let ext = extend_order(result)?;
    complete_profile_with(&ext, &result.tree, dom, p)
}

pub fn complete_profile_with(
    ext: &ExtendedOrder,
    dt: &DecompositionTree,
    dom: &Domain,
    p: &Prioritization,
) -> Result<CompletionProfile, CompletionError> {
    let mut rho = CompletionProfile::default();
    if ext.inserted.is_empty() {
        return Ok(rho);
    }
    let preorder = dt.preorder();
    let rank: BTreeMap<NodeId, usize> = preorder.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let inner: Vec<NodeId> = preorder
        .iter()
        .copied()
        .filter(|n| dt.node(*n).is_inner())
        .collect();
    let hosts: BTreeMap<NodeId, Vec<NodeId>> = ext
        .inserted
        .iter()
        .map(|&i| {
            (
                i,
                inner
                    .iter()
                    .copied()
                    .filter(|t| valid_host(ext, dt, *t, i))
                    .collect(),
            )
        })
        .collect();
    if let Some((i, _)) = hosts.iter().find(|(_, h)| h.is_empty()) {
        return Err(CompletionError::NoValidProfile(*i));
    }
    let key = |i: NodeId, t: NodeId| {
        let (d, before) = span_distance(ext, t, ext.position(i).expect("inserted"));
        (d, !before, rank[&t])
    };
    let pick = |i: NodeId, among: &mut dyn Iterator<Item = NodeId>| -> Option<NodeId> {
        among.min_by_key(|t| key(i, *t))
    };

    let mut unlabeled: BTreeSet<NodeId> = ext.inserted.iter().copied().collect();
    for stratum in p.strata.iter().rev() {
        let nodes: Vec<NodeId> = inner
            .iter()
            .copied()
            .filter(|t| origin_of(dt, dom, *t).is_some_and(|o| stratum.contains(&o)))
            .collect();
        if nodes.is_empty() {
            continue;
        }
        for i in unlabeled.clone() {
            rho.scan_ops += nodes.len() as u64;
            let found = pick(
                i,
                &mut nodes.iter().copied().filter(|t| hosts[&i].contains(t)),
            );
            if let Some(t) = found {
                rho.assignment.insert(i, t);
                unlabeled.remove(&i);
            }
        }
    }
    for i in unlabeled {
        let host = if hosts[&i].contains(&dt.root) {
            dt.root
        } else {
            // the deepest node whose span encloses the task
            *hosts[&i].iter().max_by_key(|t| rank[*t]).expect("nonempty")
        };
        rho.assignment.insert(i, host);
    }

    // exact correction: candidate sets of host methods in preference order,
    // each searched for an assignment that reproduces the plan
    let scan_ok = reproduces_plan(ext, dt, &rho);
    let origin_hosts: BTreeMap<NodeId, BTreeSet<Symbol>> = hosts
        .iter()
        .map(|(i, hs)| {
            (
                *i,
                hs.iter().filter_map(|t| origin_of(dt, dom, *t)).collect(),
            )
        })
        .collect();
    let universe: BTreeSet<Symbol> = origin_hosts.values().flatten().cloned().collect();
    let assign_within = |allowed: &BTreeSet<Symbol>| -> Option<CompletionProfile> {
        let options: Vec<(NodeId, Vec<NodeId>)> = ext
            .inserted
            .iter()
            .map(|&i| {
                let mut hs: Vec<NodeId> = hosts[&i]
                    .iter()
                    .copied()
                    .filter(|t| origin_of(dt, dom, *t).is_some_and(|o| allowed.contains(&o)))
                    .collect();
                hs.sort_by_key(|t| key(i, *t));
                (i, hs)
            })
            .collect();
        let mut budget = ASSIGNMENT_BUDGET;
        let mut cand = CompletionProfile::default();
        search_assignment(ext, dt, &options, &mut cand, &mut budget).then_some(cand)
    };
    if universe.len() > EXACT_PROFILE_CAP {
        if scan_ok {
            return Ok(rho);
        }
        return assign_within(&universe)
            .map(|c| CompletionProfile {
                scan_ops: rho.scan_ops,
                corrected: true,
                ..c
            })
            .ok_or(CompletionError::NoValidProfile(ext.inserted[0]));
    }
    let universe: Vec<Symbol> = universe.into_iter().collect();
    let current = p.profile(&rho.origins(dt, dom));
    let mut covers: Vec<(Vec<usize>, BTreeSet<Symbol>)> = Vec::new();
    for mask in 0u32..(1u32 << universe.len()) {
        let set: BTreeSet<Symbol> = universe
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, m)| m.clone())
            .collect();
        if origin_hosts
            .values()
            .all(|c| c.iter().any(|m| set.contains(m)))
        {
            covers.push((p.profile(&set), set));
        }
    }
    covers.sort();
    for (v, set) in covers {
        if scan_ok && v >= current {
            return Ok(rho);
        }
        if let Some(c) = assign_within(&set) {
            return Ok(CompletionProfile {
                scan_ops: rho.scan_ops,
                corrected: true,
                ..c
            });
        }
    }
    Err(CompletionError::NoValidProfile(ext.inserted[0]))
}

/// Depth-first search for hosts, one task at a time in the given candidate
/// order, accepting the first complete assignment that reproduces the plan.
fn search_assignment(
    ext: &ExtendedOrder,
    dt: &DecompositionTree,
    options: &[(NodeId, Vec<NodeId>)],
    rho: &mut CompletionProfile,
    budget: &mut usize,
) -> bool {
    let Some(((i, hosts), rest)) = options.split_first() else {
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        return reproduces_plan(ext, dt, rho);
    };
    for &h in hosts {
        rho.assignment.insert(*i, h);
        if search_assignment(ext, dt, rest, rho, budget) {
            return true;
        }
        if *budget == 0 {
            break;
        }
    }
    rho.assignment.remove(i);
    false
}

/// A lifted action and the constants whose variable choice was ambiguous.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct Lifted {
    pub action: Atom,
    pub conflicts: Vec<LiftConflict>,
}

/// A constant bound to several method variables; `chosen` won.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct LiftConflict {
    pub constant: Symbol,
    pub chosen: Symbol,
    pub alternatives: Vec<Symbol>,
}

/// Replaces constants of a ground action by the method variables they are
/// bound to at a node. Head parameters win over method-local variables, and
/// earlier subtasks over later ones; other constants are kept.
pub fn lift_constants(action: &Atom, method: &Method, binding: &Binding) -> Lifted {
    let mut choice: BTreeMap<Symbol, Symbol> = BTreeMap::new();
    let mut others: BTreeMap<Symbol, Vec<Symbol>> = BTreeMap::new();
    for v in method.variables() {
        if let Some(Term::Const(c)) = binding.get(&v) {
            if choice.contains_key(c) {
                others.entry(c.clone()).or_default().push(v);
            } else {
                choice.insert(c.clone(), v);
            }
        }
    }
    let mut conflicts = Vec::new();
    let args = action
        .args
        .iter()
        .map(|t| match t {
            Term::Const(c) => match choice.get(c) {
                Some(v) => {
                    if let Some(alt) = others.get(c) {
                        let conflict = LiftConflict {
                            constant: c.clone(),
                            chosen: v.clone(),
                            alternatives: alt.clone(),
                        };
                        if !conflicts.contains(&conflict) {
                            conflicts.push(conflict);
                        }
                    }
                    Term::Var(v.clone())
                }
                None => t.clone(),
            },
            Term::Var(_) => t.clone(),
        })
        .collect();
    Lifted {
        action: Atom::new(action.pred.clone(), args),
        conflicts,
    }
}

/// The refined method of inner node `t` and the task ids given to its
/// inserted tasks.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct Refinement {
    pub node: NodeId,
    #[serde(skip)]
    pub method: Method,
    pub inserted: BTreeMap<NodeId, TaskId>,
    pub conflicts: Vec<LiftConflict>,
}

/// `m_ρ^t`: the method of `t` extended with the inserted tasks hosted by `t`,
/// ordered by the extended order, with constants lifted. The id is
/// provisional (`<origin>@<node>`).
pub fn refine_method(
    ext: &ExtendedOrder,
    dt: &DecompositionTree,
    dom: &Domain,
    rho: &CompletionProfile,
    t: NodeId,
) -> Result<Refinement, CompletionError> {
    let dec = dt
        .node(t)
        .decomposition
        .as_ref()
        .ok_or(CompletionError::NotInner(t))?;
    let m = dom
        .method(&dec.method)
        .ok_or_else(|| CompletionError::UnknownMethod(dec.method.clone()))?;
    let mut hosted = rho.hosted_by(t);
    hosted.sort_by_key(|i| ext.position(*i));
    let mut ids: BTreeMap<NodeId, TaskId> =
        dec.subtasks.iter().map(|(tid, n)| (*n, *tid)).collect();
    let mut inserted = BTreeMap::new();
    let mut tasks = m.network.tasks().clone();
    let mut conflicts = Vec::new();
    for (next, &i) in (m.network.next_id().0..).zip(&hosted) {
        let tid = TaskId(next);
        ids.insert(i, tid);
        inserted.insert(i, tid);
        let lifted = lift_constants(&ext.actions[&i], m, &dec.binding);
        conflicts.extend(lifted.conflicts);
        tasks.insert(tid, lifted.action);
    }
    let mut order = m.network.order().clone();
    for (&a, &ta) in &ids {
        for (&b, &tb) in &ids {
            if (inserted.contains_key(&a) || inserted.contains_key(&b)) && ext.precedes(a, b) {
                order.insert((ta, tb));
            }
        }
    }
    let network = TaskNetwork::new(tasks, order)
        .map_err(|e| CompletionError::InternalInconsistency(e.to_string()))?;
    let mut all_inserted: Vec<TaskId> = m.inserted().to_vec();
    all_inserted.extend(inserted.values().copied());
    let method = Method {
        id: Symbol::from(format!("{}@{}", m.origin(), t.0)),
        head: m.head.clone(),
        network,
        provenance: Some(Provenance {
            origin: m.origin().clone(),
            inserted: all_inserted,
        }),
    };
    Ok(Refinement {
        node: t,
        method,
        inserted,
        conflicts,
    })
}

/// `T_ρ`: inserted tasks become children of their hosts, ordered against
/// their new siblings by the extended order; constraints are re-closed and
/// hosts point to their refined methods (keyed by node in `refined`).
pub fn complete_dt(
    ext: &ExtendedOrder,
    dt: &DecompositionTree,
    refined: &BTreeMap<NodeId, Refinement>,
) -> Result<DecompositionTree, CompletionError> {
    let hosted: BTreeMap<NodeId, BTreeMap<NodeId, TaskId>> = refined
        .iter()
        .map(|(t, r)| (*t, r.inserted.clone()))
        .collect();
    let mut out = attach(ext, dt, &hosted)?;
    for (&t, r) in refined {
        if let Some(dec) = out.nodes[t.index()].decomposition.as_mut() {
            dec.method = r.method.id.clone();
        }
    }
    Ok(out)
}

/// Inserted tasks as children of their hosts under the given task ids,
/// ordered against their new siblings by the extended order, with
/// constraints re-closed. Method labels are left as they are.
fn attach(
    ext: &ExtendedOrder,
    dt: &DecompositionTree,
    hosted: &BTreeMap<NodeId, BTreeMap<NodeId, TaskId>>,
) -> Result<DecompositionTree, CompletionError> {
    let mut out = dt.clone();
    for &i in &ext.inserted {
        if i.index() != out.nodes.len() {
            return Err(CompletionError::InternalInconsistency(format!(
                "inserted id {i} out of sequence"
            )));
        }
        out.nodes.push(Node {
            action: ext.actions[&i].clone(),
            children: Vec::new(),
            decomposition: None,
        });
    }
    for (&t, ins) in hosted {
        let node = &mut out.nodes[t.index()];
        let Some(dec) = node.decomposition.as_mut() else {
            return Err(CompletionError::NotInner(t));
        };
        for (&i, &tid) in ins {
            dec.subtasks.insert(tid, i);
        }
        let siblings: Vec<NodeId> = dec.subtasks.values().copied().collect();
        node.children = siblings.clone();
        for &a in &siblings {
            for &b in &siblings {
                let touches = ins.contains_key(&a) || ins.contains_key(&b);
                if touches && ext.precedes(a, b) {
                    out.constraints.insert((a, b));
                }
            }
        }
    }
    if let Some(i) = ext
        .inserted
        .iter()
        .find(|i| !hosted.values().any(|h| h.contains_key(i)))
    {
        return Err(CompletionError::InternalInconsistency(format!(
            "{i} has no host"
        )));
    }
    close_tree(&mut out);
    Ok(out)
}

/// Everything derived from one plan with insertions.
#[derive(Clone, Debug)]
pub struct Completion {
    pub ext: ExtendedOrder,
    pub profile: CompletionProfile,
    pub refinements: BTreeMap<NodeId, Refinement>,
    pub tree: DecompositionTree,
}

impl Completion {
    pub fn methods(&self) -> impl Iterator<Item = &Method> {
        self.refinements.values().map(|r| &r.method)
    }
}

/// Runs the whole completion pipeline with the given profile strategy.
pub fn complete(
    result: &TihtnResult,
    dom: &Domain,
    profile: impl FnOnce(
        &ExtendedOrder,
        &DecompositionTree,
    ) -> Result<CompletionProfile, CompletionError>,
) -> Result<Completion, CompletionError> {
    let ext = extend_order(result)?;
    let rho = profile(&ext, &result.tree)?;
    let mut refinements = BTreeMap::new();
    for t in rho.hosts() {
        refinements.insert(t, refine_method(&ext, &result.tree, dom, &rho, t)?);
    }
    let tree = complete_dt(&ext, &result.tree, &refinements)?;
    Ok(Completion {
        ext,
        profile: rho,
        refinements,
        tree,
    })
}
