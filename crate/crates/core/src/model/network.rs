use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::term::{Atom, Binding, Symbol, Term};
use super::ModelError;

/// Task identifier, scoped to one network.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

impl fmt::Debug for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// `(T, ≺, α)`: tasks labelled with actions plus a strict partial order.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct TaskNetwork {
    tasks: BTreeMap<TaskId, Atom>,
    order: BTreeSet<(TaskId, TaskId)>,
}

impl TaskNetwork {
    /// Builds a network, rejecting dangling ids and cyclic orderings.
    pub fn new(
        tasks: BTreeMap<TaskId, Atom>,
        order: BTreeSet<(TaskId, TaskId)>,
    ) -> Result<Self, ModelError> {
        for (a, b) in &order {
            for t in [a, b] {
                if !tasks.contains_key(t) {
                    return Err(ModelError::UnknownSymbol(t.to_string()));
                }
            }
        }
        let tn = TaskNetwork { tasks, order };
        if let Some(t) = tn.cycle_witness() {
            return Err(ModelError::CyclicOrder(t.to_string()));
        }
        Ok(tn)
    }

    /// Totally ordered network over `actions` with ids `t0..`.
    pub fn sequence(actions: Vec<Atom>) -> Self {
        let n = actions.len() as u32;
        TaskNetwork {
            tasks: (0..n).map(TaskId).zip(actions).collect(),
            order: (1..n).map(|i| (TaskId(i - 1), TaskId(i))).collect(),
        }
    }

    pub fn tasks(&self) -> &BTreeMap<TaskId, Atom> {
        &self.tasks
    }

    pub fn order(&self) -> &BTreeSet<(TaskId, TaskId)> {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn action(&self, t: TaskId) -> Option<&Atom> {
        self.tasks.get(&t)
    }

    pub fn next_id(&self) -> TaskId {
        TaskId(self.tasks.keys().next_back().map_or(0, |t| t.0 + 1))
    }

    /// Transitive closure of the ordering.
    pub fn closed_order(&self) -> BTreeSet<(TaskId, TaskId)> {
        transitive_closure(&self.order)
    }

    fn cycle_witness(&self) -> Option<TaskId> {
        self.closed_order()
            .iter()
            .find(|(a, b)| a == b)
            .map(|(a, _)| *a)
    }

    pub fn substitute(&self, binding: &Binding) -> TaskNetwork {
        TaskNetwork {
            tasks: self
                .tasks
                .iter()
                .map(|(t, a)| (*t, a.substitute(binding)))
                .collect(),
            order: self.order.clone(),
        }
    }

    /// Copy without the given tasks; orderings through a removed task are
    /// reconnected (its predecessors are ordered before its successors).
    pub fn without(&self, removed: &BTreeSet<TaskId>) -> TaskNetwork {
        let closed = self.closed_order();
        TaskNetwork {
            tasks: self
                .tasks
                .iter()
                .filter(|(t, _)| !removed.contains(t))
                .map(|(t, a)| (*t, a.clone()))
                .collect(),
            order: reduce_order(
                closed
                    .into_iter()
                    .filter(|(a, b)| !removed.contains(a) && !removed.contains(b))
                    .collect(),
            ),
        }
    }

    pub fn ground(&self) -> bool {
        self.tasks.values().all(Atom::is_ground)
    }
}

/// Transitive closure of a relation over any ordered node type.
pub fn transitive_closure<T: Ord + Copy>(rel: &BTreeSet<(T, T)>) -> BTreeSet<(T, T)> {
    let mut succ: BTreeMap<T, BTreeSet<T>> = BTreeMap::new();
    for &(a, b) in rel {
        succ.entry(a).or_default().insert(b);
    }
    let mut out = BTreeSet::new();
    for &start in succ.keys() {
        let mut stack: Vec<T> = succ[&start].iter().copied().collect();
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                out.insert((start, n));
                if let Some(next) = succ.get(&n) {
                    stack.extend(next.iter().copied());
                }
            }
        }
    }
    out
}

/// Transitive reduction of an acyclic, transitively closed relation.
pub fn reduce_order<T: Ord + Copy>(closed: BTreeSet<(T, T)>) -> BTreeSet<(T, T)> {
    closed
        .iter()
        .filter(|&&(a, c)| {
            !closed
                .iter()
                .any(|&(x, b)| x == a && b != c && closed.contains(&(b, c)))
        })
        .copied()
        .collect()
}

/// Audit trail of a refined method: the original it extends and the ids of
/// the subtasks that were added.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct Provenance {
    pub origin: Symbol,
    pub inserted: Vec<TaskId>,
}

/// An HTN method `(head, subnetwork)`. Refined methods carry a provenance.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Method {
    pub id: Symbol,
    pub head: Atom,
    pub network: TaskNetwork,
    pub provenance: Option<Provenance>,
}

impl Method {
    /// Id of the original method this one was derived from (itself when not
    /// refined).
    pub fn origin(&self) -> &Symbol {
        self.provenance.as_ref().map_or(&self.id, |p| &p.origin)
    }

    pub fn is_refined(&self) -> bool {
        self.provenance.is_some()
    }

    pub fn inserted(&self) -> &[TaskId] {
        self.provenance.as_ref().map_or(&[], |p| &p.inserted)
    }

    /// Variables of the head followed by method-local variables in order of
    /// first occurrence over subtasks.
    pub fn variables(&self) -> Vec<Symbol> {
        let mut out: Vec<Symbol> = Vec::new();
        for v in self
            .head
            .vars()
            .chain(self.network.tasks().values().flat_map(Atom::vars))
        {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        out
    }

    pub fn local_variables(&self) -> Vec<Symbol> {
        let head: BTreeSet<&Symbol> = self.head.vars().collect();
        self.variables()
            .into_iter()
            .filter(|v| !head.contains(v))
            .collect()
    }

    /// Removes inserted subtasks, recovering the original method body.
    pub fn strip(&self) -> Method {
        let removed: BTreeSet<TaskId> = self.inserted().iter().copied().collect();
        let tasks = self
            .network
            .tasks()
            .iter()
            .filter(|(t, _)| !removed.contains(t))
            .map(|(t, a)| (*t, a.clone()))
            .collect();
        let order = self
            .network
            .order()
            .iter()
            .filter(|(a, b)| !removed.contains(a) && !removed.contains(b))
            .copied()
            .collect();
        Method {
            id: self.origin().clone(),
            head: self.head.clone(),
            network: TaskNetwork { tasks, order },
            provenance: None,
        }
    }

    /// Structural equivalence up to task-id and variable renaming (head and
    /// body, not the id).
    pub fn equivalent(&self, other: &Method) -> bool {
        if self.head.pred != other.head.pred || self.network.len() != other.network.len() {
            return false;
        }
        let mut ren = VarRenaming::default();
        if !ren.unify(&self.head, &other.head) {
            return false;
        }
        let ord_a = self.network.closed_order();
        let ord_b = other.network.closed_order();
        if ord_a.len() != ord_b.len() {
            return false;
        }
        let ta: Vec<(TaskId, &Atom)> = self.network.tasks().iter().map(|(t, a)| (*t, a)).collect();
        let tb: Vec<(TaskId, &Atom)> = other.network.tasks().iter().map(|(t, a)| (*t, a)).collect();
        let mut used = vec![false; tb.len()];
        let mut map = BTreeMap::new();
        iso_search(&ta, &tb, 0, &mut used, &mut map, &ren, &ord_a, &ord_b)
    }
}

#[derive(Clone, Default)]
struct VarRenaming {
    fwd: BTreeMap<Symbol, Symbol>,
    bwd: BTreeMap<Symbol, Symbol>,
}

impl VarRenaming {
    fn unify(&mut self, a: &Atom, b: &Atom) -> bool {
        if a.pred != b.pred || a.args.len() != b.args.len() {
            return false;
        }
        for (x, y) in a.args.iter().zip(&b.args) {
            match (x, y) {
                (Term::Const(c1), Term::Const(c2)) if c1 == c2 => {}
                (Term::Var(v1), Term::Var(v2)) => match (self.fwd.get(v1), self.bwd.get(v2)) {
                    (None, None) => {
                        self.fwd.insert(v1.clone(), v2.clone());
                        self.bwd.insert(v2.clone(), v1.clone());
                    }
                    (Some(f), Some(b)) if f == v2 && b == v1 => {}
                    _ => return false,
                },
                _ => return false,
            }
        }
        true
    }
}

#[allow(clippy::too_many_arguments)]
fn iso_search(
    ta: &[(TaskId, &Atom)],
    tb: &[(TaskId, &Atom)],
    i: usize,
    used: &mut [bool],
    map: &mut BTreeMap<TaskId, TaskId>,
    ren: &VarRenaming,
    ord_a: &BTreeSet<(TaskId, TaskId)>,
    ord_b: &BTreeSet<(TaskId, TaskId)>,
) -> bool {
    if i == ta.len() {
        return ord_a.iter().all(|(x, y)| ord_b.contains(&(map[x], map[y])));
    }
    let (id_a, atom_a) = ta[i];
    for j in 0..tb.len() {
        if used[j] {
            continue;
        }
        let mut r = ren.clone();
        if !r.unify(atom_a, tb[j].1) {
            continue;
        }
        used[j] = true;
        map.insert(id_a, tb[j].0);
        if iso_search(ta, tb, i + 1, used, map, &r, ord_a, ord_b) {
            return true;
        }
        map.remove(&id_a);
        used[j] = false;
    }
    false
}

/// True iff some bijection `f` from `tn`'s tasks to `template`'s tasks maps
/// every action to a grounding of its image under one consistent
/// substitution, and `t1 ≺ t2` implies `f(t1) ≺' f(t2)` (with `≺'` read as a
/// strict partial order, i.e. transitively closed).
pub fn is_grounding(tn: &TaskNetwork, template: &TaskNetwork) -> bool {
    grounding_bijection(tn, template).is_some()
}

/// Like [`is_grounding`] but returns the witnessing bijection and binding.
pub fn grounding_bijection(
    tn: &TaskNetwork,
    template: &TaskNetwork,
) -> Option<(BTreeMap<TaskId, TaskId>, Binding)> {
    grounding_bijection_with(tn, template, Binding::new())
}

pub fn grounding_bijection_with(
    tn: &TaskNetwork,
    template: &TaskNetwork,
    binding: Binding,
) -> Option<(BTreeMap<TaskId, TaskId>, Binding)> {
    if tn.len() != template.len() {
        return None;
    }
    let closed = template.closed_order();
    let ground: Vec<(TaskId, &Atom)> = tn.tasks().iter().map(|(t, a)| (*t, a)).collect();
    let tmpl: Vec<(TaskId, &Atom)> = template.tasks().iter().map(|(t, a)| (*t, a)).collect();
    let mut used = vec![false; tmpl.len()];
    let mut map = BTreeMap::new();
    let mut out = None;
    grounding_search(
        &ground,
        &tmpl,
        0,
        &mut used,
        &mut map,
        binding,
        tn.order(),
        &closed,
        &mut out,
    );
    out
}

#[allow(clippy::too_many_arguments)]
fn grounding_search(
    ground: &[(TaskId, &Atom)],
    tmpl: &[(TaskId, &Atom)],
    i: usize,
    used: &mut [bool],
    map: &mut BTreeMap<TaskId, TaskId>,
    binding: Binding,
    order: &BTreeSet<(TaskId, TaskId)>,
    closed: &BTreeSet<(TaskId, TaskId)>,
    out: &mut Option<(BTreeMap<TaskId, TaskId>, Binding)>,
) -> bool {
    if i == ground.len() {
        if order
            .iter()
            .all(|(a, b)| closed.contains(&(map[a], map[b])))
        {
            *out = Some((map.clone(), binding));
            return true;
        }
        return false;
    }
    let (gid, gatom) = ground[i];
    for j in 0..tmpl.len() {
        if used[j] {
            continue;
        }
        let mut b = binding.clone();
        if !tmpl[j].1.unify_into(gatom, &mut b) {
            continue;
        }
        // early order pruning against already mapped tasks
        let ok = order.iter().all(|(x, y)| match (map.get(x), map.get(y)) {
            (Some(fx), _) if *y == gid => closed.contains(&(*fx, tmpl[j].0)),
            (_, Some(fy)) if *x == gid => closed.contains(&(tmpl[j].0, *fy)),
            _ => true,
        });
        if !ok {
            continue;
        }
        used[j] = true;
        map.insert(gid, tmpl[j].0);
        if grounding_search(ground, tmpl, i + 1, used, map, b, order, closed, out) {
            return true;
        }
        map.remove(&gid);
        used[j] = false;
    }
    false
}
