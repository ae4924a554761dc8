//! Forward decomposition search shared by the HTN and task-insertion
//! planners.
//!
//! Open tasks are kept with their mutual ordering. Ready compound tasks are
//! decomposed before any primitive is executed, and among ready tasks the one
//! with the smallest depth-first path goes first; the executed order therefore
//! coincides with the canonical linearization of the final tree.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;
use std::time::Instant;

use super::ground::{objects_of, Grounder};
use super::insertion::establish;
use super::{PlanConfig, PlanError, PlanStep, StepOrigin};
use crate::model::{apply, Atom, Binding, Domain, GroundOperator, Instance, State, Symbol, Term};
use crate::tree::{close_tree, linearize, Decomposition, DecompositionTree, Node, NodeId};

pub(crate) struct Found {
    pub tree: DecompositionTree,
    pub sigma: Vec<PlanStep>,
}

#[derive(Clone)]
struct PNode {
    action: Atom,
    parent: Option<NodeId>,
    path: Rc<Vec<u32>>,
    children: Vec<NodeId>,
    decomposition: Option<Decomposition>,
}

#[derive(Clone)]
struct Partial {
    nodes: Vec<PNode>,
    sibling_order: Vec<(NodeId, NodeId)>,
    open: BTreeSet<NodeId>,
    /// Transitively closed ordering among open tasks.
    pred: BTreeSet<(NodeId, NodeId)>,
    /// Values of fresh variables introduced for method-local variables.
    vars: Binding,
    state: State,
    sigma: Vec<PlanStep>,
    fresh: u32,
    budget: usize,
}

pub(crate) struct Engine<'a> {
    dom: &'a Domain,
    inst: &'a Instance,
    cfg: &'a PlanConfig,
    insertion: bool,
    g: Grounder<'a>,
    expanded: Cell<u64>,
    start: Instant,
}

impl<'a> Engine<'a> {
    pub fn new(
        dom: &'a Domain,
        inst: &'a Instance,
        cfg: &'a PlanConfig,
        insertion: Option<()>,
    ) -> Self {
        let objects = objects_of(dom, &inst.init, std::iter::once(&inst.top));
        Engine {
            dom,
            inst,
            cfg,
            insertion: insertion.is_some(),
            g: Grounder::new(dom, objects, inst.init.clone()),
            expanded: Cell::new(0),
            start: Instant::now(),
        }
    }

    /// Searches with at most `budget` inserted tasks.
    pub fn run(&self, budget: usize) -> Result<Option<Found>, PlanError> {
        let root = PNode {
            action: self.inst.top.clone(),
            parent: None,
            path: Rc::new(Vec::new()),
            children: Vec::new(),
            decomposition: None,
        };
        let p = Partial {
            nodes: vec![root],
            sibling_order: Vec::new(),
            open: [NodeId(0)].into_iter().collect(),
            pred: BTreeSet::new(),
            vars: Binding::new(),
            state: self.inst.init.clone(),
            sigma: Vec::new(),
            fresh: 0,
            budget,
        };
        self.step(p)
    }

    fn tick(&self) -> Result<(), PlanError> {
        let n = self.expanded.get() + 1;
        self.expanded.set(n);
        if n > self.cfg.max_nodes {
            return Err(PlanError::ResourceLimit);
        }
        if n.is_multiple_of(256) {
            if let Some(b) = self.cfg.time_budget {
                if self.start.elapsed() > b {
                    return Err(PlanError::ResourceLimit);
                }
            }
        }
        Ok(())
    }

    fn step(&self, p: Partial) -> Result<Option<Found>, PlanError> {
        self.tick()?;
        if p.open.is_empty() {
            return Ok(self.finish(p));
        }
        let ready = p
            .open
            .iter()
            .copied()
            .filter(|n| !p.pred.iter().any(|(_, b)| b == n));
        let mut best_compound: Option<NodeId> = None;
        let mut best_primitive: Option<NodeId> = None;
        for n in ready {
            let slot = if self.dom.is_compound(&p.nodes[n.index()].action) {
                &mut best_compound
            } else {
                &mut best_primitive
            };
            if slot.is_none_or(|b| p.nodes[n.index()].path < p.nodes[b.index()].path) {
                *slot = Some(n);
            }
        }
        match (best_compound, best_primitive) {
            (Some(c), _) => self.decompose(p, c),
            (None, Some(t)) => self.execute(p, t),
            (None, None) => Ok(None),
        }
    }

    fn decompose(&self, p: Partial, n: NodeId) -> Result<Option<Found>, PlanError> {
        let node = &p.nodes[n.index()];
        if node.path.len() >= self.cfg.max_depth {
            return Ok(None);
        }
        let action = node.action.substitute(&p.vars);
        let mut anc = node.parent;
        while let Some(a) = anc {
            if p.nodes[a.index()].action.substitute(&p.vars) == action {
                return Ok(None);
            }
            anc = p.nodes[a.index()].parent;
        }
        let preds: Vec<NodeId> = p
            .pred
            .iter()
            .filter(|(_, b)| *b == n)
            .map(|(a, _)| *a)
            .collect();
        let succs: Vec<NodeId> = p
            .pred
            .iter()
            .filter(|(a, _)| *a == n)
            .map(|(_, b)| *b)
            .collect();
        for m in self.dom.methods_for(&action.pred) {
            let Some((mut mb, vars)) = unify_head(&m.head, &action, &p.vars) else {
                continue;
            };
            let mut q = p.clone();
            q.vars = vars;
            for v in m.local_variables() {
                let fresh = Term::Var(Symbol::from(format!("{v}#{}", q.fresh)));
                q.fresh += 1;
                mb.insert(v, fresh);
            }
            let parent_path = q.nodes[n.index()].path.clone();
            let mut subtasks = BTreeMap::new();
            let mut children = Vec::new();
            for (i, (tid, a)) in m.network.tasks().iter().enumerate() {
                let id = NodeId(q.nodes.len() as u32);
                let mut path = (*parent_path).clone();
                path.push(i as u32);
                q.nodes.push(PNode {
                    action: a.substitute(&mb),
                    parent: Some(n),
                    path: Rc::new(path),
                    children: Vec::new(),
                    decomposition: None,
                });
                subtasks.insert(*tid, id);
                children.push(id);
            }
            for (a, b) in m.network.order() {
                q.sibling_order.push((subtasks[a], subtasks[b]));
            }
            q.open.remove(&n);
            q.pred.retain(|(a, b)| *a != n && *b != n);
            for &ch in &children {
                q.open.insert(ch);
                for &x in &preds {
                    q.pred.insert((x, ch));
                }
                for &y in &succs {
                    q.pred.insert((ch, y));
                }
            }
            for (a, b) in m.network.closed_order() {
                q.pred.insert((subtasks[&a], subtasks[&b]));
            }
            let entry = &mut q.nodes[n.index()];
            entry.children = children;
            entry.decomposition = Some(Decomposition {
                method: m.id.clone(),
                binding: mb,
                subtasks,
            });
            if let Some(found) = self.step(q)? {
                return Ok(Some(found));
            }
        }
        Ok(None)
    }

    fn execute(&self, p: Partial, n: NodeId) -> Result<Option<Found>, PlanError> {
        let action = p.nodes[n.index()].action.substitute(&p.vars);
        let Some(schema) = self.dom.operators.get(&action.pred) else {
            return Ok(None);
        };
        let mut free: Vec<Symbol> = Vec::new();
        for v in action.vars() {
            if !free.contains(v) {
                free.push(v.clone());
            }
        }
        let choices = if free.is_empty() {
            vec![Binding::new()]
        } else {
            let b = schema
                .bind_params(&action)
                .map_err(|e| PlanError::Invalid(e.to_string()))?;
            let dynamic: Vec<Atom> = schema
                .pre
                .iter()
                .filter(|l| l.positive)
                .map(|l| l.atom.substitute(&b))
                .collect();
            let mut choices = self.g.assignments(&dynamic, &p.state, &free);
            if self.insertion && p.budget > 0 {
                let statics: Vec<Atom> = dynamic
                    .iter()
                    .filter(|a| self.g.is_static(a))
                    .cloned()
                    .collect();
                for c in self.g.assignments(&statics, &self.g.s0, &free) {
                    if !choices.contains(&c) {
                        choices.push(c);
                    }
                }
            }
            choices
        };
        for asg in choices {
            let ground = action.substitute(&asg);
            match self.dom.resolve(&ground, &p.state) {
                Ok(op) => {
                    let q = self.advance(&p, n, &asg, Vec::new(), &p.state, op)?;
                    if let Some(found) = self.step(q)? {
                        return Ok(Some(found));
                    }
                }
                Err(_) if self.insertion && p.budget > 0 => {
                    for (seq, s) in establish(&self.g, &p.state, &ground, p.budget) {
                        let Ok(op) = self.dom.resolve(&ground, &s) else {
                            continue;
                        };
                        let q = self.advance(&p, n, &asg, seq, &s, op)?;
                        if let Some(found) = self.step(q)? {
                            return Ok(Some(found));
                        }
                    }
                }
                Err(_) => {}
            }
        }
        Ok(None)
    }

    fn advance(
        &self,
        p: &Partial,
        n: NodeId,
        asg: &Binding,
        inserted: Vec<Atom>,
        before: &State,
        op: GroundOperator,
    ) -> Result<Partial, PlanError> {
        let mut q = p.clone();
        for (k, v) in asg {
            q.vars.insert(k.clone(), v.clone());
        }
        normalize(&mut q.vars);
        q.budget -= inserted.len();
        for a in inserted {
            q.sigma.push(PlanStep {
                action: a,
                origin: StepOrigin::Inserted,
            });
        }
        q.state = apply(before, &op).map_err(|e| PlanError::Invalid(e.to_string()))?;
        q.sigma.push(PlanStep {
            action: op.action,
            origin: StepOrigin::Decomposed(n),
        });
        q.open.remove(&n);
        q.pred.retain(|(a, b)| *a != n && *b != n);
        Ok(q)
    }

    /// Grounds the partial tree and checks it. Variables still unbound (only
    /// possible in compound tasks) take the first object.
    fn finish(&self, p: Partial) -> Option<Found> {
        let mut vars = p.vars.clone();
        let mut pending: BTreeSet<Symbol> = BTreeSet::new();
        for node in &p.nodes {
            pending.extend(node.action.substitute(&vars).vars().cloned());
            if let Some(d) = &node.decomposition {
                for t in d.binding.values() {
                    if let Term::Var(v) = t.substitute(&vars) {
                        pending.insert(v);
                    }
                }
            }
        }
        if !pending.is_empty() {
            let first = self.g.objects.first()?.clone();
            for v in pending {
                vars.insert(v, Term::Const(first.clone()));
            }
        }
        let nodes: Vec<Node> = p
            .nodes
            .iter()
            .map(|n| Node {
                action: n.action.substitute(&vars),
                children: n.children.clone(),
                decomposition: n.decomposition.as_ref().map(|d| Decomposition {
                    method: d.method.clone(),
                    binding: d
                        .binding
                        .iter()
                        .map(|(k, t)| (k.clone(), t.substitute(&vars)))
                        .collect(),
                    subtasks: d.subtasks.clone(),
                }),
            })
            .collect();
        for (i, n) in p.nodes.iter().enumerate() {
            if n.decomposition.is_none() {
                continue;
            }
            let mut anc = n.parent;
            while let Some(a) = anc {
                if nodes[a.index()].action == nodes[i].action {
                    return None;
                }
                anc = p.nodes[a.index()].parent;
            }
        }
        let mut tree = DecompositionTree {
            nodes,
            root: NodeId(0),
            constraints: p.sibling_order.iter().copied().collect(),
        };
        close_tree(&mut tree);
        let plan = linearize(&tree).ok()?;
        let executed: Vec<(NodeId, Atom)> = p
            .sigma
            .iter()
            .filter_map(|s| match s.origin {
                StepOrigin::Decomposed(n) => Some((n, s.action.clone())),
                StepOrigin::Inserted => None,
            })
            .collect();
        if executed == plan.steps {
            return Some(Found {
                tree,
                sigma: p.sigma,
            });
        }
        if self.insertion {
            log::debug!("executed order differs from canonical linearization; rejected");
            return None;
        }
        let actions = plan.actions();
        self.dom.execute(&self.inst.init, &actions).ok()?;
        let sigma = plan
            .steps
            .into_iter()
            .map(|(n, action)| PlanStep {
                action,
                origin: StepOrigin::Decomposed(n),
            })
            .collect();
        Some(Found { tree, sigma })
    }
}

/// Unifies a method head with a task action. Returns the binding of the
/// head's variables and the extended assignment of fresh variables.
fn unify_head(head: &Atom, action: &Atom, vars: &Binding) -> Option<(Binding, Binding)> {
    if head.pred != action.pred || head.args.len() != action.args.len() {
        return None;
    }
    let mut mb = Binding::new();
    let mut g = vars.clone();
    for (h, a) in head.args.iter().zip(&action.args) {
        let a = a.substitute(&g);
        let target = match h {
            Term::Const(_) => h.clone(),
            Term::Var(v) => match mb.get(v) {
                None => {
                    mb.insert(v.clone(), a);
                    continue;
                }
                Some(t) => t.substitute(&g),
            },
        };
        match (&target, &a) {
            (Term::Const(x), Term::Const(y)) if x != y => return None,
            (Term::Const(_), Term::Const(_)) => {}
            (Term::Var(x), _) => {
                if target != a {
                    g.insert(x.clone(), a.clone());
                }
            }
            (_, Term::Var(y)) => {
                g.insert(y.clone(), target.clone());
            }
        }
    }
    normalize(&mut g);
    Some((mb, g))
}

/// Resolves chains of variable-to-variable bindings.
fn normalize(vars: &mut Binding) {
    let keys: Vec<Symbol> = vars.keys().cloned().collect();
    for k in keys {
        let mut t = vars[&k].clone();
        let mut hops = 0;
        while let Term::Var(v) = &t {
            match vars.get(v) {
                Some(next) if hops <= vars.len() => {
                    t = next.clone();
                    hops += 1;
                }
                _ => break,
            }
        }
        vars.insert(k, t);
    }
}
