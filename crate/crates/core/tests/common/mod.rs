//! Shared helpers for the integration suites: a random generator of small
//! HTN problems and brute-force reference implementations that share no
//! code with the library's planner.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use htn_refine::model::{Atom, Domain, Instance, OperatorSchema, Symbol, Term};
use htn_refine::parser::{parse_domain, parse_instance};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PREDICATES: usize = 4;

#[derive(Clone, Debug)]
pub struct GenCfg {
    pub objects: usize,
    pub operators: usize,
    /// Operator preconditions may be negated.
    pub negation: bool,
    /// Primitive subtasks may mention method-local variables.
    pub locals: bool,
    /// Method subtasks may be partially ordered.
    pub partial: bool,
}

impl Default for GenCfg {
    fn default() -> Self {
        GenCfg {
            objects: 2,
            operators: 3,
            negation: true,
            locals: true,
            partial: true,
        }
    }
}

pub struct Problem {
    pub domain_text: String,
    pub instance_text: String,
    pub domain: Domain,
    pub instance: Instance,
}

fn obj(i: usize) -> String {
    format!("o{i}")
}

/// Three-level problem: `c0()` decomposes into `c2`, `c1` and operators,
/// `c2(?x)` into `c1` and operators, `c1(?x)` into operators only.
pub fn random_problem(seed: u64, cfg: &GenCfg) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = String::from("(domain rnd\n  (predicates (obj ?x)");
    for p in 0..PREDICATES {
        write!(d, " (p{p} ?x)").unwrap();
    }
    d.push_str(" (link ?x ?y))\n");

    let mut op_arity = Vec::new();
    for k in 0..cfg.operators {
        let arity = if rng.gen_bool(0.3) { 2 } else { 1 };
        op_arity.push(arity);
        let params: Vec<&str> = ["?x", "?y"][..arity].to_vec();
        let atom = |rng: &mut ChaCha8Rng| {
            let v = params.choose(rng).unwrap();
            format!("(p{} {v})", rng.gen_range(0..PREDICATES))
        };
        let mut pre = Vec::new();
        for _ in 0..rng.gen_range(0..=2) {
            let a = atom(&mut rng);
            if cfg.negation && rng.gen_bool(0.3) {
                pre.push(format!("(not {a})"));
            } else {
                pre.push(a);
            }
        }
        if arity == 2 && rng.gen_bool(0.5) {
            pre.push("(link ?x ?y)".into());
        }
        let mut add = BTreeSet::new();
        for _ in 0..rng.gen_range(1..=2) {
            add.insert(atom(&mut rng));
        }
        let mut del = BTreeSet::new();
        if rng.gen_bool(0.6) {
            let a = atom(&mut rng);
            if !add.contains(&a) {
                del.insert(a);
            }
        }
        write!(d, "  (operator (head (a{k} {}))", params.join(" ")).unwrap();
        for (kw, list) in [
            ("pre", pre),
            ("add", add.into_iter().collect()),
            ("del", del.into_iter().collect::<Vec<_>>()),
        ] {
            if !list.is_empty() {
                write!(d, " ({kw} {})", list.join(" ")).unwrap();
            }
        }
        d.push_str(")\n");
    }
    d.push_str("  (compound (c0)) (compound (c1 ?x)) (compound (c2 ?x))\n");

    let mut mid = 0;
    for (head, arity, lower) in [
        ("c0", 0, &["c2", "c1"][..]),
        ("c2", 1, &["c1"][..]),
        ("c1", 1, &[][..]),
    ] {
        let count = if head == "c2" {
            rng.gen_range(0..=2)
        } else {
            rng.gen_range(1..=2)
        };
        for _ in 0..count {
            let n = rng.gen_range(1..=3);
            let mut tasks = Vec::new();
            let mut locals = 0;
            for t in 0..n {
                let arg = |rng: &mut ChaCha8Rng, locals: &mut usize, primitive: bool| -> String {
                    let r = rng.gen_range(0..10);
                    if arity > 0 && r < 5 {
                        "?x".into()
                    } else if primitive && cfg.locals && r < 7 {
                        if *locals == 0 || rng.gen_bool(0.3) {
                            *locals += 1;
                        }
                        format!("?l{}", rng.gen_range(0..*locals))
                    } else {
                        obj(rng.gen_range(0..cfg.objects))
                    }
                };
                let primitive = lower.is_empty() || rng.gen_bool(0.5);
                let action = if primitive {
                    let k = rng.gen_range(0..cfg.operators);
                    let args: Vec<String> = (0..op_arity[k])
                        .map(|_| arg(&mut rng, &mut locals, true))
                        .collect();
                    format!("(a{k} {})", args.join(" "))
                } else {
                    let c = lower.choose(&mut rng).unwrap();
                    format!("({c} {})", arg(&mut rng, &mut locals, false))
                };
                tasks.push(format!("(t{} {action})", t + 1));
            }
            let mut order = Vec::new();
            for i in 1..=n {
                for j in i + 1..=n {
                    if !cfg.partial || rng.gen_bool(0.5) {
                        order.push(format!("(t{i} t{j})"));
                    }
                }
            }
            let head_text = if arity == 0 {
                format!("({head})")
            } else {
                format!("({head} ?x)")
            };
            write!(
                d,
                "  (method (id m{mid}) (head {head_text}) (tasks {})",
                tasks.join(" ")
            )
            .unwrap();
            if !order.is_empty() {
                write!(d, " (order {})", order.join(" ")).unwrap();
            }
            d.push_str(")\n");
            mid += 1;
        }
    }
    d.push(')');

    let inst = instance_text(&mut rng, cfg, "rnd");

    let domain = parse_domain(&d).unwrap_or_else(|e| panic!("{e}\n{d}"));
    let instance = parse_instance(&inst, &domain).unwrap_or_else(|e| panic!("{e}\n{inst}"));
    Problem {
        domain_text: d,
        instance_text: inst,
        domain,
        instance,
    }
}

fn instance_text(rng: &mut ChaCha8Rng, cfg: &GenCfg, name: &str) -> String {
    let mut inst = format!("(instance {name} (init");
    for i in 0..cfg.objects {
        write!(inst, " (obj {})", obj(i)).unwrap();
        for p in 0..PREDICATES {
            if rng.gen_bool(0.4) {
                write!(inst, " (p{p} {})", obj(i)).unwrap();
            }
        }
        for j in 0..cfg.objects {
            if i != j && rng.gen_bool(0.5) {
                write!(inst, " (link {} {})", obj(i), obj(j)).unwrap();
            }
        }
    }
    inst.push_str(") (top (c0)))");
    inst
}

/// Another random initial state for a generated domain.
pub fn random_instance(dom: &Domain, cfg: &GenCfg, seed: u64, name: &str) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    parse_instance(&instance_text(&mut rng, cfg, name), dom).expect("generated instance parses")
}

/// Number of ground method instances over the instance objects.
pub fn ground_method_count(dom: &Domain, inst: &Instance) -> usize {
    let objects = inst.objects(dom).len();
    dom.methods
        .values()
        .map(|m| objects.pow(m.variables().len() as u32))
        .sum()
}

pub type Grounding = BTreeMap<Symbol, Symbol>;

pub fn ground_atom(a: &Atom, g: &Grounding) -> Atom {
    Atom::new(
        a.pred.clone(),
        a.args
            .iter()
            .map(|t| match t {
                Term::Var(v) => Term::Const(g[v].clone()),
                Term::Const(c) => Term::Const(c.clone()),
            })
            .collect(),
    )
}

fn vars_of(a: &Atom) -> impl Iterator<Item = &Symbol> {
    a.args.iter().filter_map(|t| match t {
        Term::Var(v) => Some(v),
        Term::Const(_) => None,
    })
}

/// Set-algebra application of an operator with all variables in its head:
/// `None` when a precondition fails, else `(s \ del) ∪ add`.
pub fn apply_by_sets(
    s: &BTreeSet<Atom>,
    op: &OperatorSchema,
    action: &Atom,
) -> Option<BTreeSet<Atom>> {
    let g: Grounding = op
        .params
        .iter()
        .cloned()
        .zip(action.args.iter().map(|t| match t {
            Term::Const(c) => c.clone(),
            Term::Var(v) => panic!("non-ground action argument {v}"),
        }))
        .collect();
    for l in &op.pre {
        if s.contains(&ground_atom(&l.atom, &g)) != l.positive {
            return None;
        }
    }
    let del: BTreeSet<Atom> = op.del.iter().map(|a| ground_atom(a, &g)).collect();
    let add: BTreeSet<Atom> = op.add.iter().map(|a| ground_atom(a, &g)).collect();
    Some(
        s.difference(&del)
            .cloned()
            .collect::<BTreeSet<_>>()
            .union(&add)
            .cloned()
            .collect(),
    )
}

pub fn run_by_sets(dom: &Domain, s0: &BTreeSet<Atom>, plan: &[Atom]) -> Option<BTreeSet<Atom>> {
    plan.iter().try_fold(s0.clone(), |s, a| {
        apply_by_sets(&s, &dom.operators[&a.pred], a)
    })
}

/// Fully ground decomposition tree: a primitive leaf or a method
/// application with its children and the order among them.
#[derive(Clone, Debug)]
pub enum RefTree {
    Leaf(Atom),
    Inner {
        method: Symbol,
        task: Atom,
        children: Vec<RefTree>,
        order: Vec<(usize, usize)>,
    },
}

impl RefTree {
    /// Leaves in depth-first order with the leaf precedence the tree
    /// induces.
    fn leaves(&self, out: &mut Vec<Atom>, before: &mut BTreeSet<(usize, usize)>) {
        match self {
            RefTree::Leaf(a) => out.push(a.clone()),
            RefTree::Inner {
                children, order, ..
            } => {
                let mut ranges = Vec::new();
                for c in children {
                    let start = out.len();
                    c.leaves(out, before);
                    ranges.push(start..out.len());
                }
                for (i, j) in order {
                    for a in ranges[*i].clone() {
                        for b in ranges[*j].clone() {
                            before.insert((a, b));
                        }
                    }
                }
            }
        }
    }

    /// Leaf sequence: repeatedly the leftmost leaf with no unplaced
    /// predecessor.
    pub fn plan(&self) -> Vec<Atom> {
        let mut leaves = Vec::new();
        let mut before = BTreeSet::new();
        self.leaves(&mut leaves, &mut before);
        let mut placed = vec![false; leaves.len()];
        let mut out = Vec::new();
        while out.len() < leaves.len() {
            let next = (0..leaves.len())
                .find(|&b| {
                    !placed[b] && (0..leaves.len()).all(|a| placed[a] || !before.contains(&(a, b)))
                })
                .expect("tree order is acyclic");
            placed[next] = true;
            out.push(leaves[next].clone());
        }
        out
    }
}

pub struct TooMany;

/// Every acyclic decomposition tree of `task`, failing beyond `cap` trees.
pub fn all_trees(
    dom: &Domain,
    objects: &[Symbol],
    task: &Atom,
    ancestors: &mut Vec<Atom>,
    cap: usize,
) -> Result<Vec<RefTree>, TooMany> {
    if dom.operators.contains_key(&task.pred) {
        return Ok(vec![RefTree::Leaf(task.clone())]);
    }
    if ancestors.contains(task) {
        return Ok(Vec::new());
    }
    ancestors.push(task.clone());
    let mut out = Vec::new();
    for m in dom.methods.values().filter(|m| m.head.pred == task.pred) {
        let mut g = Grounding::new();
        let mut ok = true;
        for (h, t) in m.head.args.iter().zip(&task.args) {
            let Term::Const(c) = t else {
                panic!("non-ground task {task}")
            };
            match h {
                Term::Var(v) => match g.get(v) {
                    Some(prev) if prev != c => ok = false,
                    _ => {
                        g.insert(v.clone(), c.clone());
                    }
                },
                Term::Const(k) => ok &= k == c,
            }
        }
        if !ok {
            continue;
        }
        let locals: Vec<Symbol> = m
            .network
            .tasks()
            .values()
            .flat_map(vars_of)
            .filter(|v| !g.contains_key(*v))
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let ids: Vec<_> = m.network.tasks().keys().copied().collect();
        let order: Vec<(usize, usize)> = m
            .network
            .order()
            .iter()
            .map(|(a, b)| {
                (
                    ids.iter().position(|x| x == a).unwrap(),
                    ids.iter().position(|x| x == b).unwrap(),
                )
            })
            .collect();
        for choice in 0..objects.len().pow(locals.len() as u32) {
            let mut g = g.clone();
            let mut c = choice;
            for v in &locals {
                g.insert(v.clone(), objects[c % objects.len()].clone());
                c /= objects.len();
            }
            let mut combos: Vec<Vec<RefTree>> = vec![Vec::new()];
            for a in m.network.tasks().values() {
                let subs = all_trees(dom, objects, &ground_atom(a, &g), ancestors, cap)?;
                let mut next = Vec::new();
                for prefix in &combos {
                    for s in &subs {
                        let mut p = prefix.clone();
                        p.push(s.clone());
                        next.push(p);
                    }
                }
                if next.len() > cap {
                    ancestors.pop();
                    return Err(TooMany);
                }
                combos = next;
            }
            for children in combos {
                out.push(RefTree::Inner {
                    method: m.id.clone(),
                    task: task.clone(),
                    children,
                    order: order.clone(),
                });
            }
            if out.len() > cap {
                ancestors.pop();
                return Err(TooMany);
            }
        }
    }
    ancestors.pop();
    Ok(out)
}

/// Solvability by exhaustive enumeration of decomposition trees; `None` when
/// there are too many trees to enumerate.
pub fn solvable_by_enumeration(dom: &Domain, inst: &Instance) -> Option<bool> {
    let objects: Vec<Symbol> = inst.objects(dom).into_iter().collect();
    let trees = all_trees(dom, &objects, &inst.top, &mut Vec::new(), 20_000).ok()?;
    let s0: BTreeSet<Atom> = inst.init.atoms().cloned().collect();
    Some(
        trees
            .iter()
            .any(|t| run_by_sets(dom, &s0, &t.plan()).is_some()),
    )
}

/// Removes each method subtask with probability `p`, never emptying a
/// method. Returns the removed `(method, task)` pairs.
pub fn degrade_randomly(
    dom: &Domain,
    rng: &mut ChaCha8Rng,
    p: f64,
) -> (Domain, Vec<(Symbol, u32)>) {
    let mut removed = Vec::new();
    for m in dom.methods.values() {
        let ids: Vec<_> = m.network.tasks().keys().copied().collect();
        for t in ids.iter().skip(1) {
            if rng.gen_bool(p) {
                removed.push((m.id.clone(), t.0));
            }
        }
    }
    let spec = htn_refine::eval::DegradeSpec::custom(
        removed.iter().map(|(m, t)| (m.as_str(), *t)).collect(),
    );
    (
        htn_refine::eval::degrade(dom, &spec).expect("removals exist"),
        removed,
    )
}

/// Where inserted operators may go.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Placement {
    Anywhere,
    /// A run of insertions may only start right before a skeleton step that
    /// is not applicable.
    BeforeBlocked,
}

fn ground_operators(dom: &Domain, objects: &[Symbol]) -> Vec<Atom> {
    let mut out = Vec::new();
    for op in dom.operators.values() {
        if op.add.is_empty() && op.del.is_empty() {
            continue;
        }
        for choice in 0..objects.len().pow(op.params.len() as u32) {
            let mut c = choice;
            let args = op
                .params
                .iter()
                .map(|_| {
                    let o = objects[c % objects.len()].clone();
                    c /= objects.len();
                    Term::Const(o)
                })
                .collect();
            out.push(Atom::new(op.name.clone(), args));
        }
    }
    out
}

/// Fewest ground operators that must be inserted into `skeleton` to make it
/// executable from `s0`, trying every ground operator over `objects`;
/// `None` beyond `max`.
pub fn min_insertions(
    dom: &Domain,
    objects: &[Symbol],
    s0: &BTreeSet<Atom>,
    skeleton: &[Atom],
    max: usize,
    placement: Placement,
) -> Option<usize> {
    let ground_ops = ground_operators(dom, objects);
    let step = |i: usize, s: &BTreeSet<Atom>| {
        (i < skeleton.len())
            .then(|| apply_by_sets(s, &dom.operators[&skeleton[i].pred], &skeleton[i]))
            .flatten()
    };
    // (skeleton position, state, inside a run of insertions)
    type Node = (usize, BTreeSet<Atom>, bool);
    let mut seen: BTreeSet<Node> = BTreeSet::new();
    let mut layer: Vec<Node> = vec![(0, s0.clone(), false)];
    for k in 0..=max {
        let mut closed = Vec::new();
        while let Some(n) = layer.pop() {
            if !seen.insert(n.clone()) {
                continue;
            }
            if let Some(next) = step(n.0, &n.1) {
                layer.push((n.0 + 1, next, false));
            }
            closed.push(n);
        }
        if closed.iter().any(|(i, _, _)| *i == skeleton.len()) {
            return Some(k);
        }
        for (i, s, in_run) in &closed {
            let may_start = match placement {
                Placement::Anywhere => true,
                Placement::BeforeBlocked => {
                    *in_run || (*i < skeleton.len() && step(*i, s).is_none())
                }
            };
            if !may_start {
                continue;
            }
            for a in &ground_ops {
                if let Some(t) = apply_by_sets(s, &dom.operators[&a.pred], a) {
                    let n = (*i, t, placement == Placement::BeforeBlocked);
                    if !seen.contains(&n) {
                        layer.push(n);
                    }
                }
            }
        }
    }
    None
}

/// Fewest insertions over every acyclic decomposition tree; `Ok(None)` when
/// no tree admits `max` insertions.
pub fn min_tihtn_insertions(
    dom: &Domain,
    inst: &Instance,
    max: usize,
    placement: Placement,
) -> Result<Option<usize>, TooMany> {
    let objects: Vec<Symbol> = inst.objects(dom).into_iter().collect();
    let trees = all_trees(dom, &objects, &inst.top, &mut Vec::new(), 2_000)?;
    let s0: BTreeSet<Atom> = inst.init.atoms().cloned().collect();
    let mut best: Option<usize> = None;
    for t in &trees {
        let cap = best.map_or(max, |b| b.saturating_sub(1));
        if best == Some(0) {
            break;
        }
        if let Some(k) = min_insertions(dom, &objects, &s0, &t.plan(), cap, placement) {
            best = Some(best.map_or(k, |b| b.min(k)));
        }
    }
    Ok(best)
}

pub struct Pair {
    pub seed: u64,
    pub domain: Domain,
    pub instance: Instance,
    pub result: htn_refine::planner::TihtnResult,
}

/// Degraded random problems whose plans need at least one inserted task.
pub fn insertion_pairs(count: usize, seed: u64) -> Vec<Pair> {
    let cfg = htn_refine::planner::PlanConfig {
        max_insertions: 4,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for s in 0.. {
        if out.len() == count {
            break;
        }
        let gen = GenCfg {
            objects: 2 + (s % 2) as usize,
            ..GenCfg::default()
        };
        let p = random_problem(seed.wrapping_mul(100_003).wrapping_add(s), &gen);
        let (domain, _) = degrade_randomly(&p.domain, &mut rng, 0.4);
        if let Ok(result) = htn_refine::planner::plan_tihtn(&domain, &p.instance, &cfg) {
            if !result.inserted.is_empty() {
                out.push(Pair {
                    seed: s,
                    domain,
                    instance: p.instance,
                    result,
                });
            }
        }
    }
    out
}

/// Every map from inserted tasks to inner nodes.
pub fn all_assignments(
    inserted: &[htn_refine::tree::NodeId],
    inner: &[htn_refine::tree::NodeId],
) -> Vec<BTreeMap<htn_refine::tree::NodeId, htn_refine::tree::NodeId>> {
    let mut out = vec![BTreeMap::new()];
    for i in inserted {
        out = out
            .into_iter()
            .flat_map(|a| {
                inner.iter().map(move |h| {
                    let mut a = a.clone();
                    a.insert(*i, *h);
                    a
                })
            })
            .collect();
    }
    out
}

pub struct Run {
    pub seed: u64,
    pub domain: Domain,
    pub instances: Vec<Instance>,
}

/// Degraded random domains, each with two to five instances that need
/// insertions (at most 3).
pub fn refine_runs(count: usize) -> Vec<Run> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let plan = htn_refine::planner::PlanConfig {
        max_insertions: 3,
        ..Default::default()
    };
    let mut out = Vec::new();
    for seed in 0.. {
        if out.len() == count {
            break;
        }
        let gen = GenCfg {
            objects: 2 + seed as usize % 2,
            ..GenCfg::default()
        };
        let p = random_problem(1000 + seed, &gen);
        let (domain, _) = degrade_randomly(&p.domain, &mut rng, 0.4);
        let instances: Vec<Instance> = (0..12)
            .map(|k| random_instance(&domain, &gen, seed * 31 + k, &format!("i{k}")))
            .filter(|i| {
                htn_refine::planner::plan_tihtn(&domain, i, &plan)
                    .is_ok_and(|r| !r.inserted.is_empty())
            })
            .take(5)
            .collect();
        if instances.len() >= 2 {
            out.push(Run {
                seed,
                domain,
                instances,
            });
        }
    }
    out
}
