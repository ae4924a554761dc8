//! Breadth-first search for inserted primitive tasks.

use std::collections::{HashMap, HashSet};

use super::ground::{objects_of, Grounder};
use super::{PlanStep, StepOrigin};
use crate::model::{apply, Atom, Domain, State};
use crate::tree::LeafPlan;

/// Upper bound on distinct establishing states returned for one step.
const MAX_ESTABLISHERS: usize = 256;

/// Sequences of at most `budget` ground operators after which `action`
/// becomes applicable, shortest first, one per reached state.
pub(crate) fn establish(
    g: &Grounder,
    state: &State,
    action: &Atom,
    budget: usize,
) -> Vec<(Vec<Atom>, State)> {
    if budget == 0 || !g.statically_possible(action) {
        return Vec::new();
    }
    if g.unachievable(&g.unmet(action, state)) {
        return Vec::new();
    }
    // satisfied preconditions count too: an insertion may destroy them
    let (pos, neg) = g.preconditions(action);
    let relevant = g.relevant(pos, neg);
    if relevant.is_empty() {
        return Vec::new();
    }
    let cands = g.candidates();
    let mut visited: HashSet<State> = HashSet::new();
    visited.insert(state.clone());
    let mut frontier = vec![(Vec::new(), state.clone())];
    let mut out = Vec::new();
    for _ in 0..budget {
        let mut next = Vec::new();
        for (seq, s) in &frontier {
            for &i in relevant.iter() {
                let Ok(op) = g.dom.resolve(&cands[i].action, s) else {
                    continue;
                };
                let Ok(s2) = apply(s, &op) else { continue };
                if !visited.insert(s2.clone()) {
                    continue;
                }
                let mut seq2: Vec<Atom> = seq.clone();
                seq2.push(op.action.clone());
                if g.dom.resolve(action, &s2).is_ok() {
                    out.push((seq2.clone(), s2.clone()));
                    if out.len() >= MAX_ESTABLISHERS {
                        return out;
                    }
                }
                next.push((seq2, s2));
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    out
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct Key(usize, State);

enum Edge {
    Skeleton,
    Inserted(Atom),
}

/// Finds an executable supersequence of `skeleton` with at most `k` inserted
/// ground operators, preserving the skeleton order. Layers are explored by
/// insertion count; within a layer later skeleton positions are expanded
/// first, so insertions are placed as late as possible.
pub fn insertion_search(
    dom: &Domain,
    s0: &State,
    skeleton: &LeafPlan,
    k: usize,
) -> Option<Vec<PlanStep>> {
    let steps = &skeleton.steps;
    let n = steps.len();
    let objects = objects_of(dom, s0, steps.iter().map(|(_, a)| a));
    let g = Grounder::new(dom, objects, s0.clone());
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (_, a) in steps {
        let (p, q) = g.preconditions(a);
        pos.extend(p);
        neg.extend(q);
    }
    // every fluent precondition of a later step is a potential target
    let relevant = g.relevant(pos, neg);
    let cands = g.candidates();

    let mut parent: HashMap<Key, (Key, Edge)> = HashMap::new();
    let mut visited: HashSet<Key> = HashSet::new();
    let start = Key(0, s0.clone());
    visited.insert(start.clone());

    let close = |layer: Vec<Key>,
                 visited: &mut HashSet<Key>,
                 parent: &mut HashMap<Key, (Key, Edge)>|
     -> Vec<Key> {
        let mut out = Vec::new();
        for key in layer {
            out.push(key.clone());
            let mut cur = key;
            while cur.0 < n {
                let Ok(op) = dom.resolve(&steps[cur.0].1, &cur.1) else {
                    break;
                };
                let Ok(s2) = apply(&cur.1, &op) else { break };
                let nxt = Key(cur.0 + 1, s2);
                if !visited.insert(nxt.clone()) {
                    break;
                }
                parent.insert(nxt.clone(), (cur.clone(), Edge::Skeleton));
                out.push(nxt.clone());
                cur = nxt;
            }
        }
        out
    };

    let mut layer = close(vec![start], &mut visited, &mut parent);
    for c in 0..=k {
        if let Some(goal) = layer.iter().find(|key| key.0 == n) {
            return Some(rebuild(goal.clone(), &parent, steps));
        }
        if c == k {
            break;
        }
        let mut ordered = layer.clone();
        ordered.sort_by_key(|key| std::cmp::Reverse(key.0));
        let mut next = Vec::new();
        for key in &ordered {
            for &i in relevant.iter() {
                let Ok(op) = dom.resolve(&cands[i].action, &key.1) else {
                    continue;
                };
                let Ok(s2) = apply(&key.1, &op) else { continue };
                let nxt = Key(key.0, s2);
                if visited.insert(nxt.clone()) {
                    parent.insert(
                        nxt.clone(),
                        (key.clone(), Edge::Inserted(op.action.clone())),
                    );
                    next.push(nxt);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        layer = close(next, &mut visited, &mut parent);
    }
    None
}

fn rebuild(
    goal: Key,
    parent: &HashMap<Key, (Key, Edge)>,
    steps: &[(crate::tree::NodeId, Atom)],
) -> Vec<PlanStep> {
    let mut out = Vec::new();
    let mut cur = goal;
    while let Some((prev, edge)) = parent.get(&cur) {
        out.push(match edge {
            Edge::Skeleton => PlanStep {
                action: steps[prev.0].1.clone(),
                origin: StepOrigin::Decomposed(steps[prev.0].0),
            },
            Edge::Inserted(a) => PlanStep {
                action: a.clone(),
                origin: StepOrigin::Inserted,
            },
        });
        cur = prev.clone();
    }
    out.reverse();
    out
}
