//! Lifted planning vocabulary: terms, states, operators, task networks,
//! methods, domains and instances.

mod network;
mod state;
mod term;

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use network::{
    grounding_bijection, grounding_bijection_with, is_grounding, reduce_order, transitive_closure,
    Method, Provenance, TaskId, TaskNetwork,
};
pub(crate) use state::match_positives;
pub use state::{apply, executable, ExecFailure, GroundOperator, OperatorSchema, State};
pub use term::{Atom, Binding, Literal, Symbol, Term};

/// Name of the goal-checking operator added by the evaluation harness.
pub const VERIFY_GOAL: &str = "verify-goal";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("action {0} is not applicable")]
    NotApplicable(String),
    #[error("{symbol}: expected {expected} arguments, found {found}")]
    ArityMismatch {
        symbol: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown symbol {0}")]
    UnknownSymbol(String),
    #[error("{0} is not ground")]
    NotGround(String),
    #[error("ordering constraints are cyclic at {0}")]
    CyclicOrder(String),
    #[error("{0}")]
    Invalid(String),
}

/// Declared compound action `name(params)`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CompoundSchema {
    pub name: Symbol,
    pub params: Vec<Symbol>,
}

/// `(L, O, C, M)`.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Domain {
    pub name: Symbol,
    pub predicates: BTreeMap<Symbol, usize>,
    pub constants: BTreeSet<Symbol>,
    pub operators: BTreeMap<Symbol, OperatorSchema>,
    pub compounds: BTreeMap<Symbol, CompoundSchema>,
    pub methods: BTreeMap<Symbol, Method>,
}

impl Default for Symbol {
    fn default() -> Self {
        Symbol::new("")
    }
}

impl Domain {
    pub fn is_primitive(&self, action: &Atom) -> bool {
        self.operators.contains_key(&action.pred)
    }

    pub fn is_compound(&self, action: &Atom) -> bool {
        self.compounds.contains_key(&action.pred)
    }

    pub fn methods_for<'a>(
        &'a self,
        compound: &'a Symbol,
    ) -> impl Iterator<Item = &'a Method> + 'a {
        self.methods
            .values()
            .filter(move |m| &m.head.pred == compound)
    }

    pub fn method(&self, id: &Symbol) -> Option<&Method> {
        self.methods.get(id)
    }

    /// Grounds a primitive action against a state.
    pub fn resolve(&self, action: &Atom, state: &State) -> Result<GroundOperator, ModelError> {
        let schema = self
            .operators
            .get(&action.pred)
            .ok_or_else(|| ModelError::UnknownSymbol(action.pred.to_string()))?;
        schema.resolve(action, state)
    }

    /// Executes a sequence of ground primitive actions, grounding each step
    /// against the state it is applied in.
    pub fn execute(&self, s0: &State, plan: &[Atom]) -> Result<State, ExecFailure> {
        let mut s = s0.clone();
        for (index, a) in plan.iter().enumerate() {
            let op = self.resolve(a, &s).map_err(|_| ExecFailure { index })?;
            s = apply(&s, &op).map_err(|_| ExecFailure { index })?;
        }
        Ok(s)
    }

    /// `D + M'`: this domain with additional methods. Ids already present are
    /// kept from `self`.
    pub fn with_methods<'a>(&self, extra: impl IntoIterator<Item = &'a Method>) -> Domain {
        let mut d = self.clone();
        for m in extra {
            d.methods.entry(m.id.clone()).or_insert_with(|| m.clone());
        }
        d
    }

    /// The domain specialised to an instance: when the instance carries a goal
    /// and the domain has a goal-verifying operator, its precondition becomes
    /// that goal.
    pub fn for_instance(&self, inst: &Instance) -> Cow<'_, Domain> {
        match (&inst.goal, self.operators.get(VERIFY_GOAL)) {
            (Some(goal), Some(op)) => {
                let mut d = self.clone();
                let mut op = op.clone();
                op.pre = goal.iter().cloned().map(Literal::pos).collect();
                d.operators.insert(op.name.clone(), op);
                Cow::Owned(d)
            }
            _ => Cow::Borrowed(self),
        }
    }

    /// Predicates never added or deleted by any operator.
    pub fn static_predicates(&self) -> BTreeSet<Symbol> {
        let fluent: BTreeSet<&Symbol> = self
            .operators
            .values()
            .flat_map(|o| o.add.iter().chain(&o.del).map(|a| &a.pred))
            .collect();
        self.predicates
            .keys()
            .filter(|p| !fluent.contains(p))
            .cloned()
            .collect()
    }

    /// Constants mentioned by the domain itself.
    pub fn mentioned_constants(&self) -> BTreeSet<Symbol> {
        let mut out = self.constants.clone();
        for o in self.operators.values() {
            for a in o.pre.iter().map(|l| &l.atom).chain(&o.add).chain(&o.del) {
                out.extend(a.constants().cloned());
            }
        }
        for m in self.methods.values() {
            out.extend(m.head.constants().cloned());
            for a in m.network.tasks().values() {
                out.extend(a.constants().cloned());
            }
        }
        out
    }

    /// Checks the structural invariants of a domain: disjoint operator and
    /// compound names, declared predicates with consistent arities, method
    /// heads naming compounds, subtasks naming declared actions, and
    /// conflict-free effects.
    pub fn validate(&self) -> Result<(), ModelError> {
        for name in self.operators.keys() {
            if self.compounds.contains_key(name) {
                return Err(ModelError::Invalid(format!(
                    "{name} is both an operator and a compound action"
                )));
            }
        }
        for op in self.operators.values() {
            for a in op.pre.iter().map(|l| &l.atom).chain(&op.add).chain(&op.del) {
                self.check_predicate(a)?;
            }
            let adds: BTreeSet<&Atom> = op.add.iter().collect();
            if let Some(a) = op.del.iter().find(|a| adds.contains(a)) {
                return Err(ModelError::Invalid(format!(
                    "operator {} adds and deletes {a}",
                    op.name
                )));
            }
            let pos_vars: BTreeSet<&Symbol> = op
                .params
                .iter()
                .chain(
                    op.pre
                        .iter()
                        .filter(|l| l.positive)
                        .flat_map(|l| l.atom.vars()),
                )
                .collect();
            for a in op.pre.iter().map(|l| &l.atom).chain(&op.add).chain(&op.del) {
                if let Some(v) = a.vars().find(|v| !pos_vars.contains(v)) {
                    return Err(ModelError::Invalid(format!(
                        "operator {}: variable ?{v} is neither a parameter nor bound by a positive precondition",
                        op.name
                    )));
                }
            }
        }
        for m in self.methods.values() {
            self.check_action(&m.head, false)?;
            for a in m.network.tasks().values() {
                self.check_action(a, true)?;
            }
            if let Some(p) = &m.provenance {
                for t in &p.inserted {
                    if m.network.action(*t).is_none() {
                        return Err(ModelError::UnknownSymbol(format!(
                            "{} in method {}",
                            t, m.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_predicate(&self, a: &Atom) -> Result<(), ModelError> {
        match self.predicates.get(&a.pred) {
            None => Err(ModelError::UnknownSymbol(a.pred.to_string())),
            Some(&n) if n != a.arity() => Err(ModelError::ArityMismatch {
                symbol: a.pred.to_string(),
                expected: n,
                found: a.arity(),
            }),
            Some(_) => Ok(()),
        }
    }

    /// Checks that `a` names a compound (or, when `allow_primitive`, an
    /// operator) with the declared arity.
    pub fn check_action(&self, a: &Atom, allow_primitive: bool) -> Result<(), ModelError> {
        let expected = if let Some(c) = self.compounds.get(&a.pred) {
            c.params.len()
        } else if let Some(o) = self.operators.get(&a.pred).filter(|_| allow_primitive) {
            o.params.len()
        } else {
            return Err(ModelError::UnknownSymbol(a.pred.to_string()));
        };
        if expected != a.arity() {
            return Err(ModelError::ArityMismatch {
                symbol: a.pred.to_string(),
                expected,
                found: a.arity(),
            });
        }
        Ok(())
    }
}

/// `(s0, t0)` plus an optional goal checked by the verifying operator.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Instance {
    pub name: Symbol,
    pub init: State,
    pub top: Atom,
    pub goal: Option<Vec<Atom>>,
}

impl Instance {
    pub fn new(name: &str, init: State, top: Atom) -> Self {
        Instance {
            name: name.into(),
            init,
            top,
            goal: None,
        }
    }

    /// Every constant an instance-level search may bind a variable to.
    pub fn objects(&self, dom: &Domain) -> BTreeSet<Symbol> {
        let mut out = dom.mentioned_constants();
        for a in self.init.atoms().chain(std::iter::once(&self.top)) {
            out.extend(a.constants().cloned());
        }
        if let Some(g) = &self.goal {
            for a in g {
                out.extend(a.constants().cloned());
            }
        }
        out
    }
}

/// Structure-preserving substitution of variables.
pub trait Instantiate: Sized {
    fn variables(&self) -> BTreeSet<Symbol>;
    fn substitute(&self, binding: &Binding) -> Self;

    /// Substitutes `binding`, rejecting keys that are not variables of `self`.
    /// Unbound variables are left in place.
    fn instantiate(&self, binding: &Binding) -> Result<Self, ModelError> {
        let vars = self.variables();
        if let Some(k) = binding.keys().find(|k| !vars.contains(*k)) {
            return Err(ModelError::UnknownSymbol(format!("?{k}")));
        }
        Ok(self.substitute(binding))
    }
}

impl Instantiate for Atom {
    fn variables(&self) -> BTreeSet<Symbol> {
        self.vars().cloned().collect()
    }
    fn substitute(&self, binding: &Binding) -> Self {
        Atom::substitute(self, binding)
    }
}

impl Instantiate for TaskNetwork {
    fn variables(&self) -> BTreeSet<Symbol> {
        term::collect_vars(self.tasks().values())
    }
    fn substitute(&self, binding: &Binding) -> Self {
        TaskNetwork::substitute(self, binding)
    }
}

impl Instantiate for Method {
    fn variables(&self) -> BTreeSet<Symbol> {
        self.variables().into_iter().collect()
    }
    fn substitute(&self, binding: &Binding) -> Self {
        Method {
            id: self.id.clone(),
            head: self.head.substitute(binding),
            network: self.network.substitute(binding),
            provenance: self.provenance.clone(),
        }
    }
}

impl Instantiate for OperatorSchema {
    fn variables(&self) -> BTreeSet<Symbol> {
        let mut v: BTreeSet<Symbol> = self.params.iter().cloned().collect();
        v.extend(self.aux_vars());
        v
    }
    fn substitute(&self, binding: &Binding) -> Self {
        // Parameters bound to constants stay in the parameter list as
        // themselves; only the body atoms change.
        OperatorSchema {
            name: self.name.clone(),
            params: self.params.clone(),
            pre: self.pre.iter().map(|l| l.substitute(binding)).collect(),
            add: self.add.iter().map(|a| a.substitute(binding)).collect(),
            del: self.del.iter().map(|a| a.substitute(binding)).collect(),
        }
    }
}

/// Binds the variables of a method head positionally to `action`'s args.
pub fn bind_head(head: &Atom, action: &Atom) -> Result<Binding, ModelError> {
    if head.pred != action.pred {
        return Err(ModelError::UnknownSymbol(action.pred.to_string()));
    }
    if head.arity() != action.arity() {
        return Err(ModelError::ArityMismatch {
            symbol: head.pred.to_string(),
            expected: head.arity(),
            found: action.arity(),
        });
    }
    let mut b = Binding::new();
    if head.unify_into(action, &mut b) {
        Ok(b)
    } else {
        Err(ModelError::Invalid(format!(
            "{action} does not match {head}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn air_ship() -> Method {
        Method {
            id: "m-air".into(),
            head: Atom::parse("airShip", &["?pkg", "?loc1", "?loc2"]),
            network: TaskNetwork::sequence(vec![
                Atom::parse("load", &["?pkg", "?plane", "?loc1"]),
                Atom::parse("fly", &["?plane", "?loc2"]),
                Atom::parse("unload", &["?pkg", "?plane", "?loc2"]),
            ]),
            provenance: None,
        }
    }

    #[test]
    fn instantiate_head() {
        let b: Binding = [
            ("pkg".into(), Term::constant("pkg1")),
            ("loc1".into(), Term::constant("airpA")),
            ("loc2".into(), Term::constant("airpB")),
        ]
        .into_iter()
        .collect();
        let m = air_ship().instantiate(&b).unwrap();
        assert_eq!(m.head.to_string(), "airShip(pkg1,airpA,airpB)");
        // ?plane is method-local and stays unbound
        assert_eq!(
            m.network.action(TaskId(1)).unwrap().to_string(),
            "fly(?plane,airpB)"
        );
    }

    #[test]
    fn instantiate_identity_and_partial() {
        let g = Atom::ground("fly", &["plane1", "airpA"]);
        assert_eq!(g.instantiate(&Binding::new()).unwrap(), g);
        let f = Atom::parse("fly", &["?plane", "?loc1"]);
        let b: Binding = [("loc1".into(), Term::constant("airpA"))]
            .into_iter()
            .collect();
        assert_eq!(f.instantiate(&b).unwrap().to_string(), "fly(?plane,airpA)");
        let stray: Binding = [("zz".into(), Term::constant("a"))].into_iter().collect();
        assert!(matches!(
            f.instantiate(&stray),
            Err(ModelError::UnknownSymbol(_))
        ));
    }

    #[test]
    fn bind_head_arity() {
        let h = Atom::parse("ship", &["?p", "?a", "?b"]);
        assert!(matches!(
            bind_head(&h, &Atom::ground("ship", &["x"])),
            Err(ModelError::ArityMismatch { .. })
        ));
    }
}
