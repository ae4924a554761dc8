//! Refining an incomplete method set from solved instances: per-instance
//! completion followed by stratum-wise minimization through substitution of
//! homologous refined methods.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::completion::complete;
use crate::model::{Domain, Instance, Method, Symbol, TaskId};
use crate::planner::{plan_tihtn, PlanConfig, PlanError};
use crate::preference::Prioritization;
use crate::strategy::{MinimizeMode, ProfileStrategy, Stratified};
use crate::tree::{close_tree, linearize, Decomposition, DecompositionTree, Node, NodeId};

pub use crate::preference::{leq_p, stratify, PreferenceOrder};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubstituteError {
    #[error("{from} and {to} do not share an original method")]
    NotHomologous { from: Symbol, to: Symbol },
    #[error("inserted task {task} of {method} uses unbound variable(s)")]
    UnboundVariable { method: Symbol, task: TaskId },
    #[error("unknown method {0}")]
    UnknownMethod(Symbol),
}

/// Rewrites every node decomposed by a key of `assignment` to use the mapped
/// method: original subtasks keep their subtrees, the old inserted subtasks
/// are dropped and the new ones are instantiated through the node's binding.
pub fn substitute_all(
    dt: &DecompositionTree,
    assignment: &BTreeMap<Symbol, Symbol>,
    methods: &BTreeMap<Symbol, Method>,
) -> Result<DecompositionTree, SubstituteError> {
    let lookup = |id: &Symbol| {
        methods
            .get(id)
            .ok_or_else(|| SubstituteError::UnknownMethod(id.clone()))
    };
    let mut out = dt.clone();
    let mut removed: BTreeSet<NodeId> = BTreeSet::new();
    let mut touched = false;
    for t in dt.ids() {
        let Some(dec) = &dt.node(t).decomposition else {
            continue;
        };
        let Some(target) = assignment.get(&dec.method) else {
            continue;
        };
        if *target == dec.method {
            continue;
        }
        let (m1, m2) = (lookup(&dec.method)?, lookup(target)?);
        if m1.origin() != m2.origin() {
            return Err(SubstituteError::NotHomologous {
                from: m1.id.clone(),
                to: m2.id.clone(),
            });
        }
        touched = true;
        let old_ins: BTreeSet<TaskId> = m1.inserted().iter().copied().collect();
        let new_ins: BTreeSet<TaskId> = m2.inserted().iter().copied().collect();
        let mut subtasks: BTreeMap<TaskId, NodeId> = BTreeMap::new();
        for (tid, c) in &dec.subtasks {
            if old_ins.contains(tid) {
                removed.extend(dt.preorder_from(*c));
            } else {
                subtasks.insert(*tid, *c);
            }
        }
        for tid in &new_ins {
            let action = m2
                .network
                .action(*tid)
                .expect("inserted id in network")
                .substitute(&dec.binding);
            if !action.is_ground() {
                return Err(SubstituteError::UnboundVariable {
                    method: m2.id.clone(),
                    task: *tid,
                });
            }
            let id = NodeId(out.nodes.len() as u32);
            out.nodes.push(Node {
                action,
                children: Vec::new(),
                decomposition: None,
            });
            subtasks.insert(*tid, id);
        }
        for (a, b) in m2.network.order() {
            if new_ins.contains(a) || new_ins.contains(b) {
                out.constraints.insert((subtasks[a], subtasks[b]));
            }
        }
        let node = &mut out.nodes[t.index()];
        node.children = subtasks.values().copied().collect();
        node.decomposition = Some(Decomposition {
            method: m2.id.clone(),
            binding: dec.binding.clone(),
            subtasks,
        });
    }
    if !touched {
        return Ok(out);
    }
    out.constraints
        .retain(|(a, b)| !removed.contains(a) && !removed.contains(b));
    let (mut out, _) = out.compact();
    close_tree(&mut out);
    Ok(out)
}

/// `sub(T, m1, m2)`: the tree with `m1` replaced by the homologous `m2`,
/// provided its plan is still executable in the instance.
pub fn substitute(
    dt: &DecompositionTree,
    m1: &Method,
    m2: &Method,
    inst: &Instance,
    dom: &Domain,
) -> Result<Option<DecompositionTree>, SubstituteError> {
    if m1.origin() != m2.origin() {
        return Err(SubstituteError::NotHomologous {
            from: m1.id.clone(),
            to: m2.id.clone(),
        });
    }
    let methods: BTreeMap<Symbol, Method> = [m1, m2]
        .into_iter()
        .map(|m| (m.id.clone(), m.clone()))
        .collect();
    let assignment = [(m1.id.clone(), m2.id.clone())].into_iter().collect();
    let out = substitute_all(dt, &assignment, &methods)?;
    Ok(executes(&out, inst, dom).then_some(out))
}

/// The canonical plan of `dt` is executable in the instance.
pub fn executes(dt: &DecompositionTree, inst: &Instance, dom: &Domain) -> bool {
    let Ok(plan) = linearize(dt) else {
        return false;
    };
    dom.for_instance(inst)
        .execute(&inst.init, &plan.actions())
        .is_ok()
}

/// A solved instance together with its decomposition tree.
#[derive(Clone, Debug, Serialize)]
pub struct SolvedTree {
    pub index: usize,
    pub instance: Symbol,
    pub tree: DecompositionTree,
}

fn methods_used(dt: &DecompositionTree) -> BTreeSet<Symbol> {
    dt.nodes
        .iter()
        .filter_map(|n| n.decomposition.as_ref().map(|d| d.method.clone()))
        .collect()
}

/// Searches for a map from each method of `from` to a homologous method of
/// `to` under which every tree still solves its instance. Identity is tried
/// first, then candidates in id order.
pub fn find_replacement(
    trees: &[(DecompositionTree, Instance)],
    from: &[Method],
    to: &[Method],
    dom: &Domain,
) -> Option<BTreeMap<Symbol, Symbol>> {
    let mut from: Vec<&Method> = from.iter().collect();
    from.sort_by(|a, b| a.id.cmp(&b.id));
    let mut methods: BTreeMap<Symbol, Method> = BTreeMap::new();
    for m in from.iter().copied().chain(to) {
        methods.insert(m.id.clone(), m.clone());
    }
    let candidates: Vec<Vec<Symbol>> = from
        .iter()
        .map(|m| {
            let mut c: Vec<Symbol> = to
                .iter()
                .filter(|x| x.origin() == m.origin())
                .map(|x| x.id.clone())
                .collect();
            c.sort();
            if let Some(p) = c.iter().position(|x| *x == m.id) {
                let me = c.remove(p);
                c.insert(0, me);
            }
            c
        })
        .collect();
    if candidates.iter().any(Vec::is_empty) {
        return None;
    }
    let index: BTreeMap<&Symbol, usize> =
        from.iter().enumerate().map(|(i, m)| (&m.id, i)).collect();
    // trees grouped by the last method (in `from` order) they depend on
    let mut due: Vec<Vec<usize>> = vec![Vec::new(); from.len()];
    for (ti, (dt, _)) in trees.iter().enumerate() {
        if let Some(last) = methods_used(dt).iter().filter_map(|m| index.get(m)).max() {
            due[*last].push(ti);
        }
    }
    let mut assignment = BTreeMap::new();
    let ok = assign(
        0,
        &from,
        &candidates,
        &due,
        trees,
        &methods,
        dom,
        &mut assignment,
    );
    ok.then_some(assignment)
}

#[allow(clippy::too_many_arguments)]
fn assign(
    k: usize,
    from: &[&Method],
    candidates: &[Vec<Symbol>],
    due: &[Vec<usize>],
    trees: &[(DecompositionTree, Instance)],
    methods: &BTreeMap<Symbol, Method>,
    dom: &Domain,
    assignment: &mut BTreeMap<Symbol, Symbol>,
) -> bool {
    if k == from.len() {
        return true;
    }
    for c in &candidates[k] {
        assignment.insert(from[k].id.clone(), c.clone());
        let fine = due[k].iter().all(|&ti| {
            let (dt, inst) = &trees[ti];
            match substitute_all(dt, assignment, methods) {
                Ok(t) => executes(&t, inst, dom),
                Err(_) => false,
            }
        });
        if fine
            && assign(
                k + 1,
                from,
                candidates,
                due,
                trees,
                methods,
                dom,
                assignment,
            )
        {
            return true;
        }
    }
    assignment.remove(&from[k].id);
    false
}

/// Whether every method of `from` can be replaced by a homologous method of
/// `to` with all trees still solving their instances.
pub fn replaceable(
    trees: &[(DecompositionTree, Instance)],
    from: &[Method],
    to: &[Method],
    dom: &Domain,
) -> bool {
    find_replacement(trees, from, to, dom).is_some()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinimizePath {
    Empty,
    Exact,
    Greedy,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct Minimized {
    pub selected: Vec<Symbol>,
    /// Replacement for every method of the stratum.
    pub assignment: BTreeMap<Symbol, Symbol>,
    pub path: MinimizePath,
}

/// Smallest subset `S` of `stratum` such that the stratum is replaceable by
/// `S ∪ kept`. Subsets are tried by ascending size, ties in id order; above
/// `exact_cap` methods (or in greedy mode) methods are dropped one at a time
/// in descending order of inserted-task count.
pub fn minimize_stratum(
    stratum: &[Method],
    kept: &[Method],
    trees: &[(DecompositionTree, Instance)],
    dom: &Domain,
    exact_cap: usize,
    mode: MinimizeMode,
) -> Minimized {
    let mut ms: Vec<Method> = stratum.to_vec();
    ms.sort_by(|a, b| a.id.cmp(&b.id));
    if ms.is_empty() {
        return Minimized {
            selected: Vec::new(),
            assignment: BTreeMap::new(),
            path: MinimizePath::Empty,
        };
    }
    let exact = match mode {
        MinimizeMode::Exact => true,
        MinimizeMode::Greedy => false,
        MinimizeMode::Auto => ms.len() <= exact_cap,
    };
    let with_kept = |s: &[Method]| -> Vec<Method> { s.iter().chain(kept).cloned().collect() };
    if exact {
        let origins: BTreeSet<&Symbol> = ms.iter().map(|m| m.origin()).collect();
        for size in origins.len()..=ms.len() {
            let mut found = None;
            for_each_subset(ms.len(), size, &mut |idx| {
                let s: Vec<Method> = idx.iter().map(|&i| ms[i].clone()).collect();
                match find_replacement(trees, &ms, &with_kept(&s), dom) {
                    Some(a) => {
                        found = Some((s, a));
                        true
                    }
                    None => false,
                }
            });
            if let Some((s, assignment)) = found {
                return Minimized {
                    selected: s.into_iter().map(|m| m.id).collect(),
                    assignment,
                    path: MinimizePath::Exact,
                };
            }
        }
    }
    let mut order = ms.clone();
    order.sort_by(|a, b| {
        b.inserted()
            .len()
            .cmp(&a.inserted().len())
            .then(a.id.cmp(&b.id))
    });
    let mut current = ms.clone();
    for m in &order {
        let cand: Vec<Method> = current.iter().filter(|x| x.id != m.id).cloned().collect();
        if find_replacement(trees, &ms, &with_kept(&cand), dom).is_some() {
            current = cand;
        }
    }
    let assignment = find_replacement(trees, &ms, &with_kept(&current), dom)
        .unwrap_or_else(|| ms.iter().map(|m| (m.id.clone(), m.id.clone())).collect());
    Minimized {
        selected: current.into_iter().map(|m| m.id).collect(),
        assignment,
        path: MinimizePath::Greedy,
    }
}

/// Calls `visit` with every `k`-subset of `0..n` in lexicographic order
/// until it returns true.
fn for_each_subset(n: usize, k: usize, visit: &mut dyn FnMut(&[usize]) -> bool) {
    fn go(
        start: usize,
        n: usize,
        k: usize,
        acc: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        if acc.len() == k {
            return visit(acc);
        }
        for i in start..n {
            if n - i < k - acc.len() {
                break;
            }
            acc.push(i);
            if go(i + 1, n, k, acc, visit) {
                return true;
            }
            acc.pop();
        }
        false
    }
    go(0, n, k, &mut Vec::new(), visit);
}

#[derive(Clone)]
pub struct RefineConfig {
    pub plan: PlanConfig,
    pub exact_cap: usize,
    pub mode: MinimizeMode,
    /// When false the phase-2 minimization is skipped.
    pub minimize: bool,
    pub strategy: Arc<dyn ProfileStrategy>,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            plan: PlanConfig::default(),
            exact_cap: 12,
            mode: MinimizeMode::Auto,
            minimize: true,
            strategy: Arc::new(Stratified),
            seed: 0,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceStatus {
    Solved,
    NoPlan,
    ResourceLimit,
    Failed(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct HostLog {
    pub task: String,
    pub host: String,
    pub host_method: Symbol,
}

#[derive(Clone, Debug, Serialize)]
pub struct InstanceLog {
    pub index: usize,
    pub instance: Symbol,
    pub status: InstanceStatus,
    pub inserted: usize,
    /// Plan steps, inserted ones prefixed with `+`.
    pub plan: Vec<String>,
    pub hosts: Vec<HostLog>,
    pub profile_corrected: bool,
    pub methods: Vec<Symbol>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StratumLog {
    pub stratum: usize,
    pub candidates: Vec<Symbol>,
    pub selected: Vec<Symbol>,
    pub replaced: BTreeMap<Symbol, Symbol>,
    pub path: MinimizePath,
}

#[derive(Clone, Debug, Serialize)]
pub struct RefineLog {
    pub strategy: String,
    pub prioritization: Vec<Vec<Symbol>>,
    pub instances: Vec<InstanceLog>,
    pub strata: Vec<StratumLog>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RefineOutput {
    #[serde(skip)]
    pub methods: Vec<Method>,
    pub trees: Vec<SolvedTree>,
    pub log: RefineLog,
}

impl RefineOutput {
    pub fn solved(&self) -> usize {
        self.trees.len()
    }

    /// The input domain extended with the learned methods.
    pub fn domain(&self, dom: &Domain) -> Domain {
        dom.with_methods(&self.methods)
    }
}

struct PhaseOne {
    log: InstanceLog,
    tree: Option<DecompositionTree>,
    methods: Vec<Method>,
}

fn refine_instance(
    dom: &Domain,
    inst: &Instance,
    index: usize,
    p: &Prioritization,
    cfg: &RefineConfig,
) -> PhaseOne {
    let mut log = InstanceLog {
        index,
        instance: inst.name.clone(),
        status: InstanceStatus::Solved,
        inserted: 0,
        plan: Vec::new(),
        hosts: Vec::new(),
        profile_corrected: false,
        methods: Vec::new(),
    };
    let fail = |mut log: InstanceLog, status| {
        log.status = status;
        PhaseOne {
            log,
            tree: None,
            methods: Vec::new(),
        }
    };
    let result = match plan_tihtn(dom, inst, &cfg.plan) {
        Ok(r) => r,
        Err(PlanError::ResourceLimit) => return fail(log, InstanceStatus::ResourceLimit),
        Err(PlanError::NoTihtnPlan(_)) | Err(PlanError::Unsolvable) => {
            return fail(log, InstanceStatus::NoPlan)
        }
        Err(e) => return fail(log, InstanceStatus::Failed(e.to_string())),
    };
    log.inserted = result.inserted.len();
    log.plan = result
        .sigma
        .iter()
        .map(|s| format!("{}{}", if s.is_inserted() { "+" } else { "" }, s.action))
        .collect();
    let seed = cfg.seed.wrapping_add(index as u64);
    let completion = match complete(&result, dom, |e, t| {
        cfg.strategy.profile(e, t, dom, p, seed)
    }) {
        Ok(c) => c,
        Err(e) => return fail(log, InstanceStatus::Failed(e.to_string())),
    };
    log.profile_corrected = completion.profile.corrected;
    for (i, h) in &completion.profile.assignment {
        log.hosts.push(HostLog {
            task: completion.ext.actions[i].to_string(),
            host: result.tree.node(*h).action.to_string(),
            host_method: result
                .tree
                .node(*h)
                .decomposition
                .as_ref()
                .map(|d| d.method.clone())
                .unwrap_or_default(),
        });
    }
    PhaseOne {
        log,
        tree: Some(completion.tree.clone()),
        methods: completion.methods().cloned().collect(),
    }
}

/// Learns refined methods from `instances`: each instance is planned with
/// task insertion and completed; the collected refinements are then reduced
/// stratum by stratum, lowest priority first.
pub fn method_refine(
    dom: &Domain,
    instances: &[Instance],
    p: &Prioritization,
    cfg: &RefineConfig,
) -> RefineOutput {
    let p = cfg.strategy.prioritization(dom, p);
    let phase1: Vec<PhaseOne> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| refine_instance(dom, inst, i, &p, cfg))
        .collect();

    // merge structurally equal refinements, in input order
    let mut learned: Vec<Method> = Vec::new();
    let mut logs = Vec::new();
    let mut trees: Vec<(DecompositionTree, Instance, usize)> = Vec::new();
    for (i, mut one) in phase1.into_iter().enumerate() {
        let mut rename: BTreeMap<Symbol, Symbol> = BTreeMap::new();
        for m in one.methods {
            let id = match learned
                .iter()
                .find(|x| x.origin() == m.origin() && x.equivalent(&m))
            {
                Some(x) => x.id.clone(),
                None => {
                    let n = learned.iter().filter(|x| x.origin() == m.origin()).count() + 1;
                    let id = Symbol::from(format!("{}-r{n}", m.origin()));
                    learned.push(Method {
                        id: id.clone(),
                        ..m.clone()
                    });
                    id
                }
            };
            rename.insert(m.id.clone(), id.clone());
            if !one.log.methods.contains(&id) {
                one.log.methods.push(id);
            }
        }
        if let Some(mut t) = one.tree {
            for node in &mut t.nodes {
                if let Some(d) = &mut node.decomposition {
                    if let Some(new) = rename.get(&d.method) {
                        d.method = new.clone();
                    }
                }
            }
            trees.push((t, instances[i].clone(), i));
        }
        logs.push(one.log);
    }

    let mut strata_logs = Vec::new();
    let mut kept: Vec<Method> = Vec::new();
    if cfg.minimize {
        let mut pairs: Vec<(DecompositionTree, Instance)> = trees
            .iter()
            .map(|(t, i, _)| (t.clone(), i.clone()))
            .collect();
        let all: BTreeMap<Symbol, Method> =
            learned.iter().map(|m| (m.id.clone(), m.clone())).collect();
        for (j, stratum) in p.strata.iter().enumerate() {
            let mj: Vec<Method> = learned
                .iter()
                .filter(|m| stratum.contains(m.origin()))
                .cloned()
                .collect();
            let out = minimize_stratum(&mj, &kept, &pairs, dom, cfg.exact_cap, cfg.mode);
            for (t, _) in pairs.iter_mut() {
                if let Ok(n) = substitute_all(t, &out.assignment, &all) {
                    *t = n;
                }
            }
            kept.extend(mj.iter().filter(|m| out.selected.contains(&m.id)).cloned());
            strata_logs.push(StratumLog {
                stratum: j + 1,
                candidates: mj.iter().map(|m| m.id.clone()).collect(),
                selected: out.selected,
                replaced: out.assignment.into_iter().filter(|(a, b)| a != b).collect(),
                path: out.path,
            });
        }
        // refinements of methods outside every stratum are kept as they are
        for m in &learned {
            if !kept.iter().any(|k| k.id == m.id) && p.stratum_of(m.origin()).is_none() {
                kept.push(m.clone());
            }
        }
        for ((t, _, _), (n, _)) in trees.iter_mut().zip(pairs) {
            *t = n;
        }
    } else {
        kept = learned;
    }
    kept.sort_by(|a, b| a.id.cmp(&b.id));
    RefineOutput {
        methods: kept,
        trees: trees
            .into_iter()
            .map(|(tree, inst, index)| SolvedTree {
                index,
                instance: inst.name,
                tree,
            })
            .collect(),
        log: RefineLog {
            strategy: cfg.strategy.name().to_string(),
            prioritization: p
                .strata
                .iter()
                .map(|s| s.iter().cloned().collect())
                .collect(),
            instances: logs,
            strata: strata_logs,
        },
    }
}
