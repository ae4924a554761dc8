use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::term::{Atom, Binding, Literal, Symbol, Term};
use super::ModelError;

/// Immutable set of ground atoms. Cloning shares the underlying set.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct State(Arc<BTreeSet<Atom>>);

impl State {
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Result<Self, ModelError> {
        let set: BTreeSet<Atom> = atoms.into_iter().collect();
        if let Some(a) = set.iter().find(|a| !a.is_ground()) {
            return Err(ModelError::NotGround(a.to_string()));
        }
        Ok(State(Arc::new(set)))
    }

    pub fn empty() -> Self {
        State::default()
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.0.contains(atom)
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Atoms with the given predicate, in sorted order.
    pub fn with_pred<'a>(&'a self, pred: &'a Symbol) -> impl Iterator<Item = &'a Atom> + 'a {
        let lo = Atom::new(pred.clone(), Vec::new());
        self.0.range(lo..).take_while(move |a| &a.pred == pred)
    }

    pub fn satisfies(&self, lit: &Literal) -> bool {
        self.contains(&lit.atom) == lit.positive
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl Serialize for State {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter())
    }
}

/// Lifted primitive action: `name(params)` with a conjunctive precondition
/// and add/delete lists.
///
/// Variables that occur in `pre` but not in `params` are auxiliary: they are
/// bound by matching the positive preconditions against the state when the
/// operator is applied (e.g. the origin airport of `fly(?plane ?to)`).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OperatorSchema {
    pub name: Symbol,
    pub params: Vec<Symbol>,
    pub pre: Vec<Literal>,
    pub add: Vec<Atom>,
    pub del: Vec<Atom>,
}

impl OperatorSchema {
    pub fn head(&self) -> Atom {
        Atom::new(
            self.name.clone(),
            self.params.iter().map(|p| Term::Var(p.clone())).collect(),
        )
    }

    pub fn aux_vars(&self) -> BTreeSet<Symbol> {
        let params: BTreeSet<&Symbol> = self.params.iter().collect();
        self.pre
            .iter()
            .flat_map(|l| l.atom.vars())
            .chain(self.add.iter().flat_map(Atom::vars))
            .chain(self.del.iter().flat_map(Atom::vars))
            .filter(|v| !params.contains(v))
            .cloned()
            .collect()
    }

    /// Binding of the schema parameters to the arguments of `action`.
    pub fn bind_params(&self, action: &Atom) -> Result<Binding, ModelError> {
        if action.pred != self.name {
            return Err(ModelError::UnknownSymbol(action.pred.to_string()));
        }
        if action.args.len() != self.params.len() {
            return Err(ModelError::ArityMismatch {
                symbol: self.name.to_string(),
                expected: self.params.len(),
                found: action.args.len(),
            });
        }
        Ok(self
            .params
            .iter()
            .cloned()
            .zip(action.args.iter().cloned())
            .collect())
    }

    /// Fully instantiates the schema under `binding` (which must cover every
    /// variable, including auxiliary ones).
    pub fn instantiate(&self, binding: &Binding) -> Result<GroundOperator, ModelError> {
        let action = self.head().substitute(binding);
        let op = GroundOperator {
            action,
            pre: self.pre.iter().map(|l| l.substitute(binding)).collect(),
            add: self.add.iter().map(|a| a.substitute(binding)).collect(),
            del: self.del.iter().map(|a| a.substitute(binding)).collect(),
        };
        let unbound = std::iter::once(&op.action)
            .chain(op.pre.iter().map(|l| &l.atom))
            .chain(&op.add)
            .chain(&op.del)
            .find(|a| !a.is_ground());
        match unbound {
            Some(a) => Err(ModelError::NotGround(a.to_string())),
            None => Ok(op),
        }
    }

    /// Grounds the ground `action` against `state`, resolving auxiliary
    /// variables by matching positive preconditions in literal order. Returns
    /// the first (in sorted state order) fully applicable grounding.
    pub fn resolve(&self, action: &Atom, state: &State) -> Result<GroundOperator, ModelError> {
        let binding = self.bind_params(action)?;
        if !action.is_ground() {
            return Err(ModelError::NotGround(action.to_string()));
        }
        let positives: Vec<&Atom> = self
            .pre
            .iter()
            .filter(|l| l.positive)
            .map(|l| &l.atom)
            .collect();
        let mut found = None;
        match_positives(&positives, state, binding, &mut |b| {
            let op = match self.instantiate(b) {
                Ok(op) => op,
                Err(_) => return false,
            };
            if op.applicable(state) {
                found = Some(op);
                true
            } else {
                false
            }
        });
        found.ok_or_else(|| ModelError::NotApplicable(action.to_string()))
    }
}

/// Enumerates bindings extending `binding` under which every pattern in
/// `patterns` is in `state`. The callback returns `true` to stop.
pub(crate) fn match_positives(
    patterns: &[&Atom],
    state: &State,
    binding: Binding,
    visit: &mut dyn FnMut(&Binding) -> bool,
) -> bool {
    let Some((first, rest)) = patterns.split_first() else {
        return visit(&binding);
    };
    let pat = first.substitute(&binding);
    if pat.is_ground() {
        if state.contains(&pat) {
            return match_positives(rest, state, binding, visit);
        }
        return false;
    }
    for cand in state.with_pred(&pat.pred) {
        let mut b = binding.clone();
        if pat.unify_into(cand, &mut b) && match_positives(rest, state, b, visit) {
            return true;
        }
    }
    false
}

/// A fully ground operator instance.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct GroundOperator {
    pub action: Atom,
    pub pre: Vec<Literal>,
    pub add: Vec<Atom>,
    pub del: Vec<Atom>,
}

impl GroundOperator {
    pub fn applicable(&self, s: &State) -> bool {
        self.pre.iter().all(|l| s.satisfies(l))
    }
}

/// State transition `(s \ del) ∪ add`, defined only when the precondition holds
/// (negative literals under the closed-world assumption).
pub fn apply(s: &State, op: &GroundOperator) -> Result<State, ModelError> {
    if !op.applicable(s) {
        return Err(ModelError::NotApplicable(op.action.to_string()));
    }
    if op.add.is_empty() && op.del.is_empty() {
        return Ok(s.clone());
    }
    let mut next: BTreeSet<Atom> = (*s.0).clone();
    for d in &op.del {
        next.remove(d);
    }
    for a in &op.add {
        next.insert(a.clone());
    }
    Ok(State(Arc::new(next)))
}

/// Failure of [`executable`]: the zero-based index of the first step that
/// could not be applied.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ExecFailure {
    pub index: usize,
}

/// Chains [`apply`] over `plan`, returning the final state.
pub fn executable(s0: &State, plan: &[GroundOperator]) -> Result<State, ExecFailure> {
    let mut s = s0.clone();
    for (index, op) in plan.iter().enumerate() {
        s = apply(&s, op).map_err(|_| ExecFailure { index })?;
    }
    Ok(s)
}
