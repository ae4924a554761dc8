//! Ground operator candidates, variable assignment enumeration and
//! regression relevance.

use std::cell::{OnceCell, RefCell};
use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use crate::model::{match_positives, Atom, Binding, Domain, Literal, State, Symbol, Term};

/// A ground operator label together with its (possibly partially lifted)
/// precondition and effect patterns. Auxiliary variables stay variables.
pub(crate) struct Candidate {
    pub action: Atom,
    pub add: Vec<Atom>,
    pub del: Vec<Atom>,
    pub pos: Vec<Atom>,
    pub neg: Vec<Atom>,
}

/// Positive and negative goal atoms.
type Goals = (Vec<Atom>, Vec<Atom>);

pub(crate) struct Grounder<'a> {
    pub dom: &'a Domain,
    pub objects: Vec<Symbol>,
    pub statics: BTreeSet<Symbol>,
    /// Initial state; static facts are read from it.
    pub s0: State,
    candidates: OnceCell<Vec<Candidate>>,
    relevance: RefCell<HashMap<Goals, Rc<Vec<usize>>>>,
}

/// Two patterns may denote the same ground atom.
fn unifiable(a: &Atom, b: &Atom) -> bool {
    a.pred == b.pred
        && a.args.len() == b.args.len()
        && a.args.iter().zip(&b.args).all(|(x, y)| match (x, y) {
            (Term::Const(c), Term::Const(d)) => c == d,
            _ => true,
        })
}

impl<'a> Grounder<'a> {
    pub fn new(dom: &'a Domain, objects: Vec<Symbol>, s0: State) -> Self {
        Grounder {
            dom,
            objects,
            statics: dom.static_predicates(),
            s0,
            candidates: OnceCell::new(),
            relevance: RefCell::new(HashMap::new()),
        }
    }

    pub fn is_static(&self, a: &Atom) -> bool {
        self.statics.contains(&a.pred)
    }

    /// Assignments to `free` under which every pattern matches `state`.
    /// Variables the patterns do not constrain range over all objects.
    pub fn assignments(&self, patterns: &[Atom], state: &State, free: &[Symbol]) -> Vec<Binding> {
        let refs: Vec<&Atom> = patterns.iter().collect();
        let mut seen = BTreeSet::new();
        let mut partial: Vec<Vec<Option<Term>>> = Vec::new();
        match_positives(&refs, state, Binding::new(), &mut |b| {
            let proj: Vec<Option<Term>> = free.iter().map(|v| b.get(v).cloned()).collect();
            if seen.insert(proj.clone()) {
                partial.push(proj);
            }
            false
        });
        let mut out = Vec::new();
        let mut dedup = BTreeSet::new();
        for proj in partial {
            self.expand(free, &proj, 0, &mut Binding::new(), &mut |b| {
                if dedup.insert(b.clone()) {
                    out.push(b.clone());
                }
            });
        }
        out
    }

    fn expand(
        &self,
        free: &[Symbol],
        proj: &[Option<Term>],
        i: usize,
        acc: &mut Binding,
        visit: &mut dyn FnMut(&Binding),
    ) {
        if i == free.len() {
            visit(acc);
            return;
        }
        match &proj[i] {
            Some(t) => {
                acc.insert(free[i].clone(), t.clone());
                self.expand(free, proj, i + 1, acc, visit);
            }
            None => {
                for o in &self.objects {
                    acc.insert(free[i].clone(), Term::Const(o.clone()));
                    self.expand(free, proj, i + 1, acc, visit);
                }
            }
        }
        acc.remove(&free[i]);
    }

    /// Static positive preconditions of `action`'s schema, instantiated with
    /// the action's arguments.
    pub fn static_patterns(&self, action: &Atom) -> Vec<Atom> {
        let Some(schema) = self.dom.operators.get(&action.pred) else {
            return Vec::new();
        };
        let Ok(b) = schema.bind_params(action) else {
            return Vec::new();
        };
        schema
            .pre
            .iter()
            .filter(|l| l.positive && self.is_static(&l.atom))
            .map(|l| l.atom.substitute(&b))
            .collect()
    }

    /// True when the static part of the precondition of the ground `action`
    /// can hold.
    pub fn statically_possible(&self, action: &Atom) -> bool {
        let pats = self.static_patterns(action);
        let refs: Vec<&Atom> = pats.iter().collect();
        let mut ok = false;
        match_positives(&refs, &self.s0, Binding::new(), &mut |_| {
            ok = true;
            true
        });
        ok
    }

    /// Every ground operator label consistent with the static facts, in
    /// schema then enumeration order. Operators without effects are skipped.
    pub fn candidates(&self) -> &[Candidate] {
        self.candidates.get_or_init(|| {
            let mut out = Vec::new();
            for schema in self.dom.operators.values() {
                if schema.add.is_empty() && schema.del.is_empty() {
                    continue;
                }
                let head = schema.head();
                let pats = self.static_patterns(&head);
                for b in self.assignments(&pats, &self.s0, &schema.params) {
                    let action = head.substitute(&b);
                    let neg_static_ok = schema.pre.iter().all(|l: &Literal| {
                        if l.positive || !self.is_static(&l.atom) {
                            return true;
                        }
                        let a = l.atom.substitute(&b);
                        !a.is_ground() || !self.s0.contains(&a)
                    });
                    if !neg_static_ok {
                        continue;
                    }
                    let fluent = |positive: bool| {
                        schema
                            .pre
                            .iter()
                            .filter(|l| l.positive == positive && !self.is_static(&l.atom))
                            .map(|l| l.atom.substitute(&b))
                            .collect()
                    };
                    out.push(Candidate {
                        action,
                        add: schema.add.iter().map(|a| a.substitute(&b)).collect(),
                        del: schema.del.iter().map(|a| a.substitute(&b)).collect(),
                        pos: fluent(true),
                        neg: fluent(false),
                    });
                }
            }
            out
        })
    }

    /// Candidates that may contribute, directly or through other relevant
    /// candidates, to making the positive patterns true and the negative
    /// patterns false.
    pub fn relevant(&self, pos: Vec<Atom>, neg: Vec<Atom>) -> Rc<Vec<usize>> {
        let key = (pos, neg);
        if let Some(r) = self.relevance.borrow().get(&key) {
            return r.clone();
        }
        let cands = self.candidates();
        let (mut pos, mut neg) = key.clone();
        let mut chosen = vec![false; cands.len()];
        let mut changed = true;
        while changed {
            changed = false;
            for (i, c) in cands.iter().enumerate() {
                if chosen[i] {
                    continue;
                }
                let helps = c.add.iter().any(|a| pos.iter().any(|p| unifiable(a, p)))
                    || c.del.iter().any(|d| neg.iter().any(|p| unifiable(d, p)));
                if helps {
                    chosen[i] = true;
                    changed = true;
                    for p in &c.pos {
                        if !pos.contains(p) {
                            pos.push(p.clone());
                        }
                    }
                    for n in &c.neg {
                        if !neg.contains(n) {
                            neg.push(n.clone());
                        }
                    }
                }
            }
        }
        let r: Rc<Vec<usize>> = Rc::new((0..cands.len()).filter(|i| chosen[*i]).collect());
        self.relevance.borrow_mut().insert(key, r.clone());
        r
    }

    /// Fluent precondition patterns of a ground action, positive and
    /// negative.
    pub fn preconditions(&self, action: &Atom) -> (Vec<Atom>, Vec<Atom>) {
        let Some(schema) = self.dom.operators.get(&action.pred) else {
            return (Vec::new(), Vec::new());
        };
        let Ok(b) = schema.bind_params(action) else {
            return (Vec::new(), Vec::new());
        };
        let (pos, neg): (Vec<&Literal>, Vec<&Literal>) = schema
            .pre
            .iter()
            .filter(|l| !self.is_static(&l.atom))
            .partition(|l| l.positive);
        (
            pos.iter().map(|l| l.atom.substitute(&b)).collect(),
            neg.iter().map(|l| l.atom.substitute(&b)).collect(),
        )
    }

    /// Fluent positive precondition patterns of a ground action that the
    /// state does not satisfy on their own.
    pub fn unmet(&self, action: &Atom, state: &State) -> Vec<Atom> {
        let (pos, _) = self.preconditions(action);
        pos.into_iter()
            .filter(|a| !state.with_pred(&a.pred).any(|s| a.matches(s)))
            .collect()
    }

    /// Ground patterns among `pos` that no candidate can add.
    pub fn unachievable(&self, pos: &[Atom]) -> bool {
        let cands = self.candidates();
        pos.iter()
            .filter(|p| p.is_ground())
            .any(|p| !cands.iter().any(|c| c.add.iter().any(|a| unifiable(a, p))))
    }
}

/// Objects a search over `dom` and `s0` may bind variables to.
pub(crate) fn objects_of<'x>(
    dom: &Domain,
    s0: &'x State,
    extra: impl IntoIterator<Item = &'x Atom>,
) -> Vec<Symbol> {
    let mut out = dom.mentioned_constants();
    for a in s0.atoms().chain(extra) {
        out.extend(a.constants().cloned());
    }
    out.into_iter().collect()
}
