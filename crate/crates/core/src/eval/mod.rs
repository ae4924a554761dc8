//! Experimental protocol: degrade complete domains, add a goal-verifying
//! step, generate instances and measure how many held-out instances the
//! learned methods solve as the training set grows.

mod logistics;
mod satellite;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    Atom, Domain, Instance, Literal, OperatorSchema, Symbol, TaskId, TaskNetwork, VERIFY_GOAL,
};
use crate::planner::{plan_htn, PlanConfig};
use crate::preference::Prioritization;
use crate::refine::{method_refine, RefineConfig};

pub use logistics::Logistics;
pub use satellite::Satellite;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("method {method} has no subtask {task}")]
    UnknownRemoval { method: Symbol, task: TaskId },
    #[error("removal would leave method {0} without subtasks")]
    EmptiedMethod(Symbol),
    #[error("unknown degradation preset {0}")]
    UnknownPreset(String),
    #[error("instance {0} is not solvable under the complete domain")]
    Unsolvable(Symbol),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum Preset {
    High,
    Middle,
    Low,
    Custom,
}

impl Preset {
    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "MR-H" | "H" => Some(Preset::High),
            "MR-M" | "M" => Some(Preset::Middle),
            "MR-L" | "L" => Some(Preset::Low),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::High => "MR-H",
            Preset::Middle => "MR-M",
            Preset::Low => "MR-L",
            Preset::Custom => "custom",
        }
    }
}

/// Subtasks to delete from methods.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct DegradeSpec {
    pub removals: Vec<(Symbol, TaskId)>,
    pub preset: Preset,
}

impl DegradeSpec {
    pub fn custom(removals: Vec<(&str, u32)>) -> Self {
        DegradeSpec {
            removals: removals
                .into_iter()
                .map(|(m, t)| (Symbol::from(m), TaskId(t)))
                .collect(),
            preset: Preset::Custom,
        }
    }

    pub fn none() -> Self {
        DegradeSpec {
            removals: Vec::new(),
            preset: Preset::Custom,
        }
    }
}

/// Removes the listed subtasks, keeping the order among the remaining ones.
pub fn degrade(dom: &Domain, spec: &DegradeSpec) -> Result<Domain, EvalError> {
    let mut out = dom.clone();
    let mut by_method: std::collections::BTreeMap<&Symbol, BTreeSet<TaskId>> = Default::default();
    for (m, t) in &spec.removals {
        let method = dom
            .methods
            .get(m)
            .ok_or_else(|| EvalError::UnknownRemoval {
                method: m.clone(),
                task: *t,
            })?;
        if method.network.action(*t).is_none() {
            return Err(EvalError::UnknownRemoval {
                method: m.clone(),
                task: *t,
            });
        }
        by_method.entry(m).or_default().insert(*t);
    }
    for (m, removed) in by_method {
        let method = out.methods.get_mut(m).expect("checked above");
        if removed.len() == method.network.len() {
            return Err(EvalError::EmptiedMethod(m.clone()));
        }
        method.network = method.network.without(&removed);
    }
    Ok(out)
}

/// Compound actions that never occur as a subtask.
pub fn top_compounds(dom: &Domain) -> BTreeSet<Symbol> {
    let used: BTreeSet<&Symbol> = dom
        .methods
        .values()
        .flat_map(|m| m.network.tasks().values().map(|a| &a.pred))
        .collect();
    dom.compounds
        .keys()
        .filter(|c| !used.contains(c))
        .cloned()
        .collect()
}

/// Adds a `verify-goal` operator whose precondition is `goal` and appends it
/// as the last subtask of every method of a top-level compound action.
pub fn inject_verifier(dom: &Domain, goal: &[Atom]) -> Domain {
    let mut out = dom.clone();
    out.operators.insert(
        Symbol::from(VERIFY_GOAL),
        OperatorSchema {
            name: Symbol::from(VERIFY_GOAL),
            params: Vec::new(),
            pre: goal.iter().cloned().map(Literal::pos).collect(),
            add: Vec::new(),
            del: Vec::new(),
        },
    );
    let tops = top_compounds(dom);
    for m in out.methods.values_mut() {
        if !tops.contains(&m.head.pred) {
            continue;
        }
        let mut tasks = m.network.tasks().clone();
        let mut order = m.network.order().clone();
        let v = m.network.next_id();
        for t in tasks.keys() {
            order.insert((*t, v));
        }
        tasks.insert(v, Atom::new(VERIFY_GOAL, Vec::new()));
        m.network =
            TaskNetwork::new(tasks, order).expect("appending a sink keeps the order acyclic");
    }
    out
}

/// Size knobs for instance generators; each benchmark documents how it
/// reads them.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GenParams {
    pub size: usize,
    pub agents: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { size: 3, agents: 2 }
    }
}

/// A benchmark domain with its degradation presets and instance generator.
pub trait Benchmark: Send + Sync {
    fn name(&self) -> &'static str;

    /// The complete domain, verifier included.
    fn domain(&self) -> Domain;

    fn preset(&self, preset: Preset) -> DegradeSpec;

    /// One random instance; may be unsolvable.
    fn sample(&self, rng: &mut ChaCha8Rng, params: &GenParams, name: &str) -> Instance;
}

pub fn benchmark_names() -> Vec<&'static str> {
    benchmarks().iter().map(|b| b.name()).collect()
}

pub fn benchmark(name: &str) -> Option<Arc<dyn Benchmark>> {
    benchmarks().into_iter().find(|b| b.name() == name)
}

fn benchmarks() -> Vec<Arc<dyn Benchmark>> {
    vec![Arc::new(Logistics), Arc::new(Satellite)]
}

/// `count` instances solvable under the benchmark's complete domain,
/// deterministic in `seed`.
pub fn gen_instances(
    bench: &dyn Benchmark,
    seed: u64,
    count: usize,
    params: &GenParams,
) -> Vec<Instance> {
    let dom = bench.domain();
    let cfg = PlanConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        assert!(
            attempts <= 100 * (count + 1),
            "generator for {} keeps producing unsolvable instances",
            bench.name()
        );
        let name = format!("{}-{}-{}", bench.name(), seed, out.len());
        let inst = bench.sample(&mut rng, params, &name);
        if plan_htn(&dom, &inst, &cfg).is_ok() {
            out.push(inst);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvePoint {
    pub train_size: usize,
    pub solved: usize,
    pub total: usize,
    pub rate: f64,
    pub methods_learned: usize,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Serialize, Default)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        w.write_record([
            "train_size",
            "solved",
            "total",
            "rate",
            "methods_learned",
            "wall_ms",
        ])
        .expect("in-memory write");
        for p in &self.points {
            w.serialize(p).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
    }

    pub fn final_rate(&self) -> Option<f64> {
        self.points.last().map(|p| p.rate)
    }
}

#[derive(Default)]
pub struct EvalConfig {
    pub refine: RefineConfig,
    /// Budget for each held-out instance.
    pub test_plan: PlanConfig,
    /// Training sizes to report; every prefix length when empty.
    pub sizes: Vec<usize>,
}

/// Solving-rate curve: for each training prefix, methods are learned on the
/// prefix and every test instance is planned without task insertion under
/// the degraded domain plus the learned methods.
pub fn evaluate(
    complete: &Domain,
    degraded: &Domain,
    train: &[Instance],
    test: &[Instance],
    p: &Prioritization,
    cfg: &EvalConfig,
) -> Result<LearningCurve, EvalError> {
    let gate = PlanConfig::default();
    if let Some(bad) = train
        .par_iter()
        .chain(test.par_iter())
        .find_first(|i| plan_htn(complete, i, &gate).is_err())
    {
        return Err(EvalError::Unsolvable(bad.name.clone()));
    }
    let sizes: Vec<usize> = if cfg.sizes.is_empty() {
        (0..=train.len()).collect()
    } else {
        let mut s: Vec<usize> = cfg
            .sizes
            .iter()
            .copied()
            .filter(|n| *n <= train.len())
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let mut curve = LearningCurve::default();
    if test.is_empty() {
        return Ok(curve);
    }
    for n in sizes {
        let start = Instant::now();
        let learned = if n == 0 {
            Vec::new()
        } else {
            method_refine(degraded, &train[..n], p, &cfg.refine).methods
        };
        let dom = degraded.with_methods(&learned);
        let solved = test
            .par_iter()
            .map(|i| plan_htn(&dom, i, &cfg.test_plan).is_ok())
            .collect::<Vec<bool>>()
            .into_iter()
            .filter(|s| *s)
            .count();
        curve.points.push(CurvePoint {
            train_size: n,
            solved,
            total: test.len(),
            rate: solved as f64 / test.len() as f64,
            methods_learned: learned.len(),
            wall_ms: start.elapsed().as_millis() as u64,
        });
    }
    Ok(curve)
}
