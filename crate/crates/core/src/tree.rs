//! Decomposition trees: the ordering closure, canonical leaf linearization
//! and validation against a domain and instance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    grounding_bijection_with, Atom, Binding, Domain, Instance, Symbol, TaskId, TaskNetwork,
};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// `β(t)`: which method decomposed an inner node, under which binding, and
/// which child realises each subtask of the method.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct Decomposition {
    pub method: Symbol,
    pub binding: Binding,
    pub subtasks: BTreeMap<TaskId, NodeId>,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct Node {
    pub action: Atom,
    pub children: Vec<NodeId>,
    pub decomposition: Option<Decomposition>,
}

impl Node {
    pub fn is_inner(&self) -> bool {
        self.decomposition.is_some()
    }
}

/// `(T, E, ≺, α, β)` with node ids indexing `nodes`.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct DecompositionTree {
    pub nodes: Vec<Node>,
    pub root: NodeId,
    pub constraints: BTreeSet<(NodeId, NodeId)>,
}

/// Ground primitive leaves in canonical execution order.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct LeafPlan {
    pub steps: Vec<(NodeId, Atom)>,
}

impl LeafPlan {
    pub fn actions(&self) -> Vec<Atom> {
        self.steps.iter().map(|(_, a)| a.clone()).collect()
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.steps.iter().position(|(n, _)| *n == node)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("ordering constraints of the tree are cyclic at {0}")]
pub struct CycleDetected(pub NodeId);

impl DecompositionTree {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn inner_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids().filter(|n| self.node(*n).is_inner())
    }

    /// Primitive leaves: nodes without a decomposition.
    pub fn primitive_leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids().filter(|n| !self.node(*n).is_inner())
    }

    pub fn parents(&self) -> BTreeMap<NodeId, NodeId> {
        let mut out = BTreeMap::new();
        for id in self.ids() {
            for c in &self.node(id).children {
                out.insert(*c, id);
            }
        }
        out
    }

    /// Node ids in depth-first preorder from the root.
    pub fn preorder(&self) -> Vec<NodeId> {
        self.preorder_from(self.root)
    }

    /// Nodes of the subtree rooted at `n`, in preorder.
    pub fn preorder_from(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![n];
        while let Some(n) = stack.pop() {
            out.push(n);
            for c in self.node(n).children.iter().rev() {
                stack.push(*c);
            }
        }
        out
    }

    /// Primitive leaves below `n` (including `n` itself when it is one).
    pub fn leaves_below(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![n];
        while let Some(x) = stack.pop() {
            let node = self.node(x);
            if !node.is_inner() {
                out.push(x);
            }
            stack.extend(node.children.iter().copied());
        }
        out
    }

    /// `≪`: transitive closure of the constraints.
    pub fn precedence(&self) -> BTreeSet<(NodeId, NodeId)> {
        crate::model::transitive_closure(&self.constraints)
    }

    /// Drops nodes unreachable from the root and renumbers the rest in
    /// preorder. Returns the old-to-new id map.
    pub fn compact(&self) -> (DecompositionTree, BTreeMap<NodeId, NodeId>) {
        let order = self.preorder();
        let map: BTreeMap<NodeId, NodeId> = order
            .iter()
            .enumerate()
            .map(|(i, n)| (*n, NodeId(i as u32)))
            .collect();
        let nodes = order
            .iter()
            .map(|n| {
                let node = self.node(*n);
                Node {
                    action: node.action.clone(),
                    children: node.children.iter().map(|c| map[c]).collect(),
                    decomposition: node.decomposition.as_ref().map(|d| Decomposition {
                        method: d.method.clone(),
                        binding: d.binding.clone(),
                        subtasks: d.subtasks.iter().map(|(t, c)| (*t, map[c])).collect(),
                    }),
                }
            })
            .collect();
        let constraints = self
            .constraints
            .iter()
            .filter_map(|(a, b)| Some((*map.get(a)?, *map.get(b)?)))
            .collect();
        (
            DecompositionTree {
                nodes,
                root: NodeId(0),
                constraints,
            },
            map,
        )
    }

    pub fn is_ancestor(
        &self,
        anc: NodeId,
        mut n: NodeId,
        parents: &BTreeMap<NodeId, NodeId>,
    ) -> bool {
        while let Some(p) = parents.get(&n) {
            if *p == anc {
                return true;
            }
            n = *p;
        }
        false
    }
}

/// Propagates every constraint on a node to its children until fixpoint:
/// `t' ≺ t` gives `t' ≺ ch` and `t ≺ t''` gives `ch ≺ t''` for each child.
pub fn closure(
    children: &dyn Fn(NodeId) -> Vec<NodeId>,
    constraints: &BTreeSet<(NodeId, NodeId)>,
) -> BTreeSet<(NodeId, NodeId)> {
    let mut out = constraints.clone();
    let mut work: Vec<(NodeId, NodeId)> = out.iter().copied().collect();
    while let Some((a, b)) = work.pop() {
        for ch in children(b) {
            if out.insert((a, ch)) {
                work.push((a, ch));
            }
        }
        for ch in children(a) {
            if out.insert((ch, b)) {
                work.push((ch, b));
            }
        }
    }
    out
}

/// Closure over the tree's own edges.
pub fn close_tree(dt: &mut DecompositionTree) {
    let nodes = &dt.nodes;
    let kids = |n: NodeId| nodes[n.index()].children.clone();
    dt.constraints = closure(&kids, &dt.constraints);
}

/// Topological order of the primitive leaves under `≪`, breaking ties by
/// ascending depth-first discovery index.
pub fn linearize(dt: &DecompositionTree) -> Result<LeafPlan, CycleDetected> {
    let prec = dt.precedence();
    if let Some((a, _)) = prec.iter().find(|(a, b)| a == b) {
        return Err(CycleDetected(*a));
    }
    let order = dt.preorder();
    let leaves: Vec<NodeId> = order
        .iter()
        .copied()
        .filter(|n| !dt.node(*n).is_inner())
        .collect();
    let mut remaining: BTreeSet<usize> = (0..leaves.len()).collect();
    let mut steps = Vec::with_capacity(leaves.len());
    while !remaining.is_empty() {
        let pick = remaining
            .iter()
            .copied()
            .find(|&i| {
                !remaining
                    .iter()
                    .any(|&j| j != i && prec.contains(&(leaves[j], leaves[i])))
            })
            .expect("acyclic order has a minimal element");
        remaining.remove(&pick);
        let n = leaves[pick];
        steps.push((n, dt.node(n).action.clone()));
    }
    Ok(LeafPlan { steps })
}

/// One violated validity condition.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Error)]
pub enum Violation {
    /// Tree shape problems (multiple parents, unreachable nodes, ...).
    #[error("malformed tree: {0}")]
    Structure(String),
    #[error("root is {found}, instance expects {expected}")]
    RootMismatch { expected: Atom, found: Atom },
    #[error("{node}: unknown method {method}")]
    UnknownMethod { node: NodeId, method: Symbol },
    /// Condition 1: `α(t)` is not the method head.
    #[error("{node}: task does not match the method head")]
    HeadMismatch { node: NodeId },
    /// Condition 2: children do not form a grounding of the method network.
    #[error("{node}: children are not a grounding of the method's network")]
    NotAGrounding { node: NodeId },
    /// Condition 3: `(t, t')` not propagated to a child of `t`.
    #[error("{node} precedes {other} but its child {child} does not")]
    SuccessorNotPropagated {
        node: NodeId,
        other: NodeId,
        child: NodeId,
    },
    /// Condition 4: `(t', t)` not propagated to a child of `t`.
    #[error("{other} precedes {node} but not its child {child}")]
    PredecessorNotPropagated {
        node: NodeId,
        other: NodeId,
        child: NodeId,
    },
    /// Condition 5: `≪` has a cycle through this node.
    #[error("{node}: ordering cycle")]
    OrderCycle { node: NodeId },
    /// Primitive leaf whose action is not a ground operator instance.
    #[error("{node}: leaf is not a ground primitive action")]
    BadLeaf { node: NodeId },
    /// The canonical plan fails at this step.
    #[error("plan step {index} ({action}) is not applicable")]
    NotExecutable { index: usize, action: Atom },
}

#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks all validity conditions including executability of the canonical
/// plan in the instance's initial state.
pub fn validate_dt(dt: &DecompositionTree, dom: &Domain, inst: &Instance) -> Verdict {
    let mut v = validate_structure(dt, dom, inst);
    if v.violations
        .iter()
        .any(|x| matches!(x, Violation::OrderCycle { .. } | Violation::Structure(_)))
    {
        return v;
    }
    if let Ok(plan) = linearize(dt) {
        let dom = dom.for_instance(inst);
        let actions = plan.actions();
        if let Err(f) = dom.execute(&inst.init, &actions) {
            v.violations.push(Violation::NotExecutable {
                index: f.index,
                action: actions[f.index].clone(),
            });
        }
    }
    v
}

/// Conditions 1-5 and the root check, without executability.
pub fn validate_structure(dt: &DecompositionTree, dom: &Domain, inst: &Instance) -> Verdict {
    let mut out = Vec::new();
    if dt.root.index() >= dt.nodes.len() {
        return Verdict {
            violations: vec![Violation::Structure("root out of range".into())],
        };
    }
    // shape
    let mut seen_parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    for id in dt.ids() {
        for c in &dt.node(id).children {
            if c.index() >= dt.nodes.len() {
                out.push(Violation::Structure(format!("{id} has dangling child {c}")));
            } else if let Some(p) = seen_parent.insert(*c, id) {
                out.push(Violation::Structure(format!(
                    "{c} has parents {p} and {id}"
                )));
            }
        }
    }
    if seen_parent.contains_key(&dt.root) {
        out.push(Violation::Structure("root has a parent".into()));
    }
    if !out.is_empty() {
        return Verdict { violations: out };
    }
    let reachable = dt.preorder();
    if reachable.len() != dt.nodes.len() {
        out.push(Violation::Structure(
            "nodes unreachable from the root".into(),
        ));
        return Verdict { violations: out };
    }
    for &(a, b) in &dt.constraints {
        if a.index() >= dt.nodes.len() || b.index() >= dt.nodes.len() {
            out.push(Violation::Structure(format!(
                "constraint ({a},{b}) out of range"
            )));
        }
    }
    if !out.is_empty() {
        return Verdict { violations: out };
    }
    let root_action = &dt.node(dt.root).action;
    if root_action != &inst.top {
        out.push(Violation::RootMismatch {
            expected: inst.top.clone(),
            found: root_action.clone(),
        });
    }
    for id in dt.ids() {
        let node = dt.node(id);
        match &node.decomposition {
            None => {
                if !node.children.is_empty()
                    || !dom.is_primitive(&node.action)
                    || !node.action.is_ground()
                    || dom.check_action(&node.action, true).is_err()
                {
                    out.push(Violation::BadLeaf { node: id });
                }
            }
            Some(dec) => check_inner(dt, dom, id, node, dec, &mut out),
        }
    }
    // conditions 3 and 4
    for &(a, b) in &dt.constraints {
        for &ch in &dt.node(a).children {
            if !dt.constraints.contains(&(ch, b)) {
                out.push(Violation::SuccessorNotPropagated {
                    node: a,
                    other: b,
                    child: ch,
                });
            }
        }
        for &ch in &dt.node(b).children {
            if !dt.constraints.contains(&(a, ch)) {
                out.push(Violation::PredecessorNotPropagated {
                    node: b,
                    other: a,
                    child: ch,
                });
            }
        }
    }
    // condition 5
    let prec = dt.precedence();
    let cyc: BTreeSet<NodeId> = prec
        .iter()
        .filter(|(a, b)| a == b)
        .map(|(a, _)| *a)
        .collect();
    for n in cyc {
        out.push(Violation::OrderCycle { node: n });
    }
    Verdict { violations: out }
}

fn check_inner(
    dt: &DecompositionTree,
    dom: &Domain,
    id: NodeId,
    node: &Node,
    dec: &Decomposition,
    out: &mut Vec<Violation>,
) {
    let Some(method) = dom.method(&dec.method) else {
        out.push(Violation::UnknownMethod {
            node: id,
            method: dec.method.clone(),
        });
        return;
    };
    let mut head_binding = Binding::new();
    if !method.head.unify_into(&node.action, &mut head_binding) {
        out.push(Violation::HeadMismatch { node: id });
        return;
    }
    let index: BTreeMap<NodeId, TaskId> = node
        .children
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, TaskId(i as u32)))
        .collect();
    let tasks = node
        .children
        .iter()
        .map(|c| (index[c], dt.node(*c).action.clone()))
        .collect();
    let order = dt
        .constraints
        .iter()
        .filter_map(|(a, b)| Some((*index.get(a)?, *index.get(b)?)))
        .collect();
    let grounded = TaskNetwork::new(tasks, order)
        .ok()
        .and_then(|tn| grounding_bijection_with(&tn, &method.network, head_binding));
    if grounded.is_none() {
        out.push(Violation::NotAGrounding { node: id });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(name: &str) -> Node {
        Node {
            action: Atom::ground(name, &[]),
            children: vec![],
            decomposition: None,
        }
    }

    fn two_level(children: Vec<NodeId>) -> DecompositionTree {
        let mut nodes = vec![Node {
            action: Atom::ground("c", &[]),
            children: children.clone(),
            decomposition: Some(Decomposition {
                method: "m".into(),
                binding: Binding::new(),
                subtasks: children
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (TaskId(i as u32), *c))
                    .collect(),
            }),
        }];
        for i in 0..children.len() {
            nodes.push(leaf(&format!("a{i}")));
        }
        DecompositionTree {
            nodes,
            root: NodeId(0),
            constraints: BTreeSet::new(),
        }
    }

    #[test]
    fn unordered_leaves_follow_discovery_order() {
        let dt = two_level(vec![NodeId(1), NodeId(2)]);
        let first = linearize(&dt).unwrap();
        for _ in 0..100 {
            assert_eq!(linearize(&dt).unwrap(), first);
        }
        assert_eq!(first.steps[0].0, NodeId(1));
        let mut ordered = dt.clone();
        ordered.constraints.insert((NodeId(2), NodeId(1)));
        assert_eq!(linearize(&ordered).unwrap().steps[0].0, NodeId(2));
    }

    #[test]
    fn single_leaf_tree() {
        let dt = DecompositionTree {
            nodes: vec![leaf("a")],
            root: NodeId(0),
            constraints: BTreeSet::new(),
        };
        assert_eq!(linearize(&dt).unwrap().steps.len(), 1);
    }

    #[test]
    fn cycle_detected() {
        let mut dt = two_level(vec![NodeId(1), NodeId(2)]);
        dt.constraints.insert((NodeId(1), NodeId(2)));
        dt.constraints.insert((NodeId(2), NodeId(1)));
        assert!(linearize(&dt).is_err());
    }

    #[test]
    fn closure_one_step_and_identity() {
        // x=1 before parent 2 whose child is 3
        let kids = |n: NodeId| {
            if n == NodeId(2) {
                vec![NodeId(3)]
            } else {
                vec![]
            }
        };
        let c: BTreeSet<_> = [(NodeId(1), NodeId(2))].into_iter().collect();
        let out = closure(&kids, &c);
        assert!(out.contains(&(NodeId(1), NodeId(3))));
        assert_eq!(closure(&kids, &BTreeSet::new()), BTreeSet::new());
    }
}
