use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Cheaply clonable, shared name used for predicates, constants, variables,
/// operators, compound actions and method ids.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(s: &str) -> Self {
        Symbol(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol::new(s)
    }
}

impl From<String> for Symbol {
    fn from(s: String) -> Self {
        Symbol(Arc::from(s))
    }
}

impl Borrow<str> for Symbol {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl Serialize for Symbol {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Symbol {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d).map(Symbol::from)
    }
}

/// A variable or a constant. Variable names are stored without the `?` prefix.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Symbol),
    Const(Symbol),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Var(Symbol::new(name.trim_start_matches('?')))
    }

    pub fn constant(name: &str) -> Self {
        Term::Const(Symbol::new(name))
    }

    /// Parses `?x` as a variable and anything else as a constant.
    pub fn parse(text: &str) -> Self {
        if let Some(v) = text.strip_prefix('?') {
            Term::var(v)
        } else {
            Term::constant(text)
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn as_const(&self) -> Option<&Symbol> {
        match self {
            Term::Const(c) => Some(c),
            Term::Var(_) => None,
        }
    }

    pub fn as_var(&self) -> Option<&Symbol> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }

    pub fn substitute(&self, binding: &Binding) -> Term {
        match self {
            Term::Var(v) => binding.get(v).cloned().unwrap_or_else(|| self.clone()),
            Term::Const(_) => self.clone(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Map from variable name to the term that replaces it.
pub type Binding = BTreeMap<Symbol, Term>;

/// A predicate (or action name) applied to a list of terms.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub pred: Symbol,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: impl Into<Symbol>, args: Vec<Term>) -> Self {
        Atom {
            pred: pred.into(),
            args,
        }
    }

    /// Builds an atom from `?`-prefixed variable / constant strings.
    pub fn parse(pred: &str, args: &[&str]) -> Self {
        Atom::new(pred, args.iter().map(|a| Term::parse(a)).collect())
    }

    pub fn ground(pred: &str, args: &[&str]) -> Self {
        Atom::new(pred, args.iter().map(|a| Term::constant(a)).collect())
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| !t.is_var())
    }

    pub fn vars(&self) -> impl Iterator<Item = &Symbol> {
        self.args.iter().filter_map(Term::as_var)
    }

    pub fn constants(&self) -> impl Iterator<Item = &Symbol> {
        self.args.iter().filter_map(Term::as_const)
    }

    pub fn substitute(&self, binding: &Binding) -> Atom {
        Atom {
            pred: self.pred.clone(),
            args: self.args.iter().map(|t| t.substitute(binding)).collect(),
        }
    }

    /// Extends `binding` so that `self` (a pattern) becomes `ground`.
    /// Constants in the pattern must match exactly.
    pub fn unify_into(&self, ground: &Atom, binding: &mut Binding) -> bool {
        if self.pred != ground.pred || self.args.len() != ground.args.len() {
            return false;
        }
        for (p, g) in self.args.iter().zip(&ground.args) {
            match p {
                Term::Const(_) => {
                    if p != g {
                        return false;
                    }
                }
                Term::Var(v) => match binding.get(v) {
                    Some(bound) => {
                        if bound != g {
                            return false;
                        }
                    }
                    None => {
                        binding.insert(v.clone(), g.clone());
                    }
                },
            }
        }
        true
    }

    /// True when some substitution of the variables in `self` yields `ground`.
    pub fn matches(&self, ground: &Atom) -> bool {
        let mut b = Binding::new();
        self.unify_into(ground, &mut b)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Atom {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Positive or negated atom in a precondition.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Literal {
    pub positive: bool,
    pub atom: Atom,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Literal {
            positive: true,
            atom,
        }
    }

    pub fn neg(atom: Atom) -> Self {
        Literal {
            positive: false,
            atom,
        }
    }

    pub fn substitute(&self, binding: &Binding) -> Literal {
        Literal {
            positive: self.positive,
            atom: self.atom.substitute(binding),
        }
    }
}

pub(crate) fn collect_vars<'a>(atoms: impl IntoIterator<Item = &'a Atom>) -> BTreeSet<Symbol> {
    atoms.into_iter().flat_map(|a| a.vars().cloned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_distinguishes_variables() {
        assert_eq!(Term::parse("?x"), Term::Var(Symbol::new("x")));
        assert_eq!(Term::parse("x"), Term::Const(Symbol::new("x")));
        assert_eq!(
            Atom::parse("fly", &["?p", "airpA"]).to_string(),
            "fly(?p,airpA)"
        );
    }

    #[test]
    fn unify_respects_existing_binding() {
        let pat = Atom::parse("at", &["?x", "?x"]);
        assert!(pat.matches(&Atom::ground("at", &["a", "a"])));
        assert!(!pat.matches(&Atom::ground("at", &["a", "b"])));
        assert!(!Atom::parse("at", &["c", "?y"]).matches(&Atom::ground("at", &["a", "b"])));
    }
}
