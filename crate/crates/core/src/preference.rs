//! Prioritizations over methods and the cardinality-based preference they
//! induce on method sets.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::model::{Domain, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PreferenceError {
    #[error("prioritization is not a partition of the domain methods: {0}")]
    NotAPartition(String),
    #[error("compound actions depend on each other cyclically through {0}")]
    NotStratifiable(String),
}

/// Ordered partition `⟨P_1, …, P_n⟩` of the original method ids. Methods in
/// later strata are refined with higher priority.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize)]
pub struct Prioritization {
    pub strata: Vec<BTreeSet<Symbol>>,
}

/// Result of comparing two method sets under `≤_P`. The relation is a total
/// preorder, so there is no incomparable case.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum PreferenceOrder {
    Less,
    Equal,
    Greater,
}

impl PreferenceOrder {
    /// `M1 ≤_P M2`.
    pub fn is_leq(self) -> bool {
        self != PreferenceOrder::Greater
    }

    /// `M1 <_P M2`.
    pub fn is_strict(self) -> bool {
        self == PreferenceOrder::Less
    }
}

impl Prioritization {
    pub fn new(strata: Vec<BTreeSet<Symbol>>) -> Self {
        Prioritization { strata }
    }

    /// One stratum holding every original method: no preference at all.
    pub fn flat(dom: &Domain) -> Self {
        let all: BTreeSet<Symbol> = original_methods(dom).collect();
        if all.is_empty() {
            Prioritization::default()
        } else {
            Prioritization { strata: vec![all] }
        }
    }

    pub fn reversed(&self) -> Self {
        Prioritization {
            strata: self.strata.iter().rev().cloned().collect(),
        }
    }

    /// Zero-based stratum index of an original method id.
    pub fn stratum_of(&self, method: &Symbol) -> Option<usize> {
        self.strata.iter().position(|s| s.contains(method))
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    /// `|M ∩ P_i|` for every stratum.
    pub fn profile<'a>(&self, methods: impl IntoIterator<Item = &'a Symbol>) -> Vec<usize> {
        let set: BTreeSet<&Symbol> = methods.into_iter().collect();
        self.strata
            .iter()
            .map(|s| s.iter().filter(|m| set.contains(m)).count())
            .collect()
    }

    /// Checks that the strata partition the domain's original methods.
    pub fn validate(&self, dom: &Domain) -> Result<(), PreferenceError> {
        let mut seen = BTreeSet::new();
        for s in &self.strata {
            for m in s {
                if !seen.insert(m.clone()) {
                    return Err(PreferenceError::NotAPartition(format!("{m} listed twice")));
                }
                if dom.method(m).is_none_or(|x| x.is_refined()) {
                    return Err(PreferenceError::NotAPartition(format!(
                        "unknown method {m}"
                    )));
                }
            }
        }
        if let Some(m) = original_methods(dom).find(|m| !seen.contains(m)) {
            return Err(PreferenceError::NotAPartition(format!("{m} missing")));
        }
        Ok(())
    }
}

fn original_methods(dom: &Domain) -> impl Iterator<Item = Symbol> + '_ {
    dom.methods
        .values()
        .filter(|m| !m.is_refined())
        .map(|m| m.id.clone())
}

/// Lexicographic comparison of `(|M1 ∩ P_1|, …, |M1 ∩ P_n|)` against the
/// same vector for `M2`.
pub fn leq_p<'a>(
    m1: impl IntoIterator<Item = &'a Symbol>,
    m2: impl IntoIterator<Item = &'a Symbol>,
    p: &Prioritization,
) -> PreferenceOrder {
    match p.profile(m1).cmp(&p.profile(m2)) {
        Ordering::Less => PreferenceOrder::Less,
        Ordering::Equal => PreferenceOrder::Equal,
        Ordering::Greater => PreferenceOrder::Greater,
    }
}

/// Stratum-based prioritization: a compound's depth is the length of the
/// longest chain of compounds decomposing into it; methods of the most
/// abstract heads form `P_1`, the deepest the last stratum.
pub fn stratify(dom: &Domain) -> Result<Prioritization, PreferenceError> {
    let mut children: BTreeMap<&Symbol, BTreeSet<&Symbol>> = BTreeMap::new();
    for m in dom.methods.values().filter(|m| !m.is_refined()) {
        let e = children.entry(&m.head.pred).or_default();
        for a in m.network.tasks().values() {
            if dom.compounds.contains_key(&a.pred) {
                e.insert(&a.pred);
            }
        }
    }
    // longest-path depth via DFS with cycle detection
    let mut depth: BTreeMap<&Symbol, usize> = dom.compounds.keys().map(|c| (c, 0)).collect();
    let mut indeg: BTreeMap<&Symbol, usize> = dom.compounds.keys().map(|c| (c, 0)).collect();
    for kids in children.values() {
        for k in kids {
            *indeg.get_mut(k).expect("declared compound") += 1;
        }
    }
    let mut queue: Vec<&Symbol> = indeg
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(c, _)| *c)
        .collect();
    let mut visited = 0;
    while let Some(c) = queue.pop() {
        visited += 1;
        if let Some(kids) = children.get(c) {
            for k in kids {
                let d = depth[c] + 1;
                let e = depth.get_mut(k).expect("declared compound");
                *e = (*e).max(d);
                let i = indeg.get_mut(k).expect("declared compound");
                *i -= 1;
                if *i == 0 {
                    queue.push(k);
                }
            }
        }
    }
    if visited < dom.compounds.len() {
        let c = indeg
            .iter()
            .find(|(_, &d)| d > 0)
            .map(|(c, _)| c.to_string());
        return Err(PreferenceError::NotStratifiable(c.unwrap_or_default()));
    }
    let mut by_depth: BTreeMap<usize, BTreeSet<Symbol>> = BTreeMap::new();
    for m in dom.methods.values().filter(|m| !m.is_refined()) {
        by_depth
            .entry(depth[&m.head.pred])
            .or_default()
            .insert(m.id.clone());
    }
    Ok(Prioritization {
        strata: by_depth.into_values().collect(),
    })
}
