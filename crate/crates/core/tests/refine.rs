use std::collections::BTreeMap;

use htn_refine::model::{Atom, Domain, Instance, Method, Symbol, TaskNetwork};
use htn_refine::parser::{parse_domain, parse_instance, parse_prioritization};
use htn_refine::planner::{plan_htn, plan_tihtn, PlanConfig};
use htn_refine::preference::Prioritization;
use htn_refine::refine::{
    executes, find_replacement, method_refine, replaceable, substitute, substitute_all,
    RefineConfig, SubstituteError,
};
use htn_refine::strategy::MinimizeMode;
use htn_refine::tree::{validate_dt, DecompositionTree};

const SMALL: &str = include_str!("../fixtures/logistics-small.htn");
const READY: &str = include_str!("../fixtures/plane-ready.inst");
const AWAY: &str = include_str!("../fixtures/plane-away.inst");
const PRIO: &str = include_str!("../fixtures/logistics-small.prio");

fn setup() -> (Domain, Prioritization) {
    let d = parse_domain(SMALL).unwrap();
    let p = parse_prioritization(PRIO, &d).unwrap();
    (d, p)
}

fn variant(d: &Domain, from: &str, to: &str, name: &str) -> Instance {
    let text = READY.replace(from, to).replace("plane-ready", name);
    parse_instance(&text, d).unwrap()
}

fn ids(ms: &[Method]) -> Vec<String> {
    ms.iter().map(|m| m.id.to_string()).collect()
}

#[test]
fn plane_away_learns_one_air_refinement() {
    let (d, p) = setup();
    let i = parse_instance(AWAY, &d).unwrap();
    let out = method_refine(&d, std::slice::from_ref(&i), &p, &RefineConfig::default());
    assert_eq!(ids(&out.methods), ["m-air-ship-r1"]);
    let m = &out.methods[0];
    assert_eq!(m.origin().as_str(), "m-air-ship");
    let ins: Vec<String> = m
        .inserted()
        .iter()
        .map(|t| m.network.action(*t).unwrap().to_string())
        .collect();
    assert_eq!(ins, ["fly(?plane,?loc1)"]);
    assert_eq!(
        m.strip().network,
        d.methods[&Symbol::from("m-air-ship")].network
    );

    let extended = out.domain(&d);
    assert!(plan_htn(&extended, &i, &PlanConfig::default()).is_ok());
    assert!(plan_htn(&d, &i, &PlanConfig::default()).is_err());
    assert_eq!(out.trees.len(), 1);
    assert!(validate_dt(&out.trees[0].tree, &extended, &i).is_valid());
    assert_eq!(out.log.instances[0].inserted, 1);
    assert_eq!(out.log.instances[0].plan[3], "+fly(plane1,airpA)");
}

#[test]
fn complete_domain_learns_nothing() {
    let (d, p) = setup();
    let i = parse_instance(READY, &d).unwrap();
    let out = method_refine(&d, &[i], &p, &RefineConfig::default());
    assert!(out.methods.is_empty());
    assert_eq!(out.trees.len(), 1);
}

#[test]
fn equivalent_refinements_are_merged() {
    let (d, p) = setup();
    let a = variant(&d, "(at truck1 whA)", "(at truck1 airpA)", "a");
    let b = variant(&d, "(at truck2 airpB)", "(at truck2 shopB)", "b");
    let c = parse_instance(AWAY, &d).unwrap();
    let cfg = RefineConfig {
        minimize: false,
        ..RefineConfig::default()
    };
    let out = method_refine(&d, &[a.clone(), b.clone(), c.clone()], &p, &cfg);
    assert_eq!(ids(&out.methods), ["m-air-ship-r1", "m-city-ship-r1"]);
    let ext = out.domain(&d);
    for (t, i) in out.trees.iter().zip([&a, &b, &c]) {
        assert!(validate_dt(&t.tree, &ext, i).is_valid());
    }
    let min = method_refine(&d, &[a, b, c], &p, &RefineConfig::default());
    assert_eq!(ids(&min.methods), ids(&out.methods));
}

#[test]
fn unsolved_instances_are_logged() {
    let (d, p) = setup();
    let i = variant(&d, "(package pkg1)", "", "no-package");
    let cfg = RefineConfig {
        plan: PlanConfig {
            max_insertions: 2,
            ..PlanConfig::default()
        },
        ..RefineConfig::default()
    };
    let out = method_refine(&d, &[i], &p, &cfg);
    assert!(out.methods.is_empty());
    assert!(out.trees.is_empty());
    assert_eq!(
        serde_json::to_value(&out.log.instances[0].status).unwrap(),
        serde_json::json!("no-plan")
    );
}

fn plane_away_tree() -> (Domain, Instance, Method, DecompositionTree) {
    let (d, p) = setup();
    let i = parse_instance(AWAY, &d).unwrap();
    let out = method_refine(&d, std::slice::from_ref(&i), &p, &RefineConfig::default());
    let m = out.methods[0].clone();
    (out.domain(&d), i, m, out.trees[0].tree.clone())
}

#[test]
fn identity_substitution() {
    let (d, i, m, t) = plane_away_tree();
    assert_eq!(substitute(&t, &m, &m, &i, &d).unwrap(), Some(t));
}

#[test]
fn substitution_back_to_original_fails_to_execute() {
    let (d, i, m, t) = plane_away_tree();
    let orig = d.methods[&Symbol::from("m-air-ship")].clone();
    assert_eq!(substitute(&t, &m, &orig, &i, &d).unwrap(), None);
    // the city methods are not homologous to the air refinement
    let city = d.methods[&Symbol::from("m-city-ship")].clone();
    assert!(matches!(
        substitute(&t, &m, &city, &i, &d),
        Err(SubstituteError::NotHomologous { .. })
    ));
}

#[test]
fn substitution_adds_inserted_tasks() {
    let (d, _, m, _) = plane_away_tree();
    let e1 = parse_instance(READY, &d).unwrap();
    let t = plan_htn(&d, &e1, &PlanConfig::default()).unwrap();
    let orig = d.methods[&Symbol::from("m-air-ship")].clone();
    let s = substitute(&t, &orig, &m, &e1, &d)
        .unwrap()
        .expect("flying in place is executable");
    assert_eq!(s.nodes.len(), t.nodes.len() + 1);
    assert!(validate_dt(&s, &d, &e1).is_valid());
    assert!(executes(&s, &e1, &d));
}

#[test]
fn unbound_variable_in_inserted_task() {
    let (d, _, m, _) = plane_away_tree();
    let e1 = parse_instance(READY, &d).unwrap();
    let t = plan_htn(&d, &e1, &PlanConfig::default()).unwrap();
    let orig = d.methods[&Symbol::from("m-air-ship")].clone();
    let mut tasks = m.network.tasks().clone();
    let t4 = m.inserted()[0];
    tasks.insert(t4, Atom::parse("fly", &["?plane", "?nowhere"]));
    let bad = Method {
        id: Symbol::from("m-air-ship-bad"),
        network: TaskNetwork::new(tasks, m.network.order().clone()).unwrap(),
        ..m.clone()
    };
    let methods: BTreeMap<Symbol, Method> = [orig.clone(), bad.clone()]
        .into_iter()
        .map(|m| (m.id.clone(), m))
        .collect();
    let assignment = [(orig.id.clone(), bad.id.clone())].into_iter().collect();
    assert!(matches!(
        substitute_all(&t, &assignment, &methods),
        Err(SubstituteError::UnboundVariable { .. })
    ));
}

#[test]
fn replaceability() {
    let (d, i, m, t) = plane_away_tree();
    let orig = d.methods[&Symbol::from("m-air-ship")].clone();
    let trees = vec![(t, i)];
    assert!(replaceable(
        &trees,
        std::slice::from_ref(&m),
        std::slice::from_ref(&m),
        &d
    ));
    assert!(!replaceable(
        &trees,
        std::slice::from_ref(&m),
        std::slice::from_ref(&orig),
        &d
    ));
    assert!(!replaceable(&trees, std::slice::from_ref(&m), &[], &d));
    let a = find_replacement(&trees, std::slice::from_ref(&m), &[orig, m.clone()], &d).unwrap();
    assert_eq!(a[&m.id], m.id);
    let e1 = parse_instance(READY, &d).unwrap();
    let t1 = plan_tihtn(&d, &e1, &PlanConfig::default()).unwrap().tree;
    assert!(executes(&t1, &e1, &d));
}

#[test]
fn minimization_drops_subsumed_refinement() {
    let (d, p) = setup();
    let a = parse_instance(AWAY, &d).unwrap();
    let b = parse_instance(
        &AWAY
            .replace("(at truck2 airpB)", "(at truck2 shopB)")
            .replace("plane-away", "b"),
        &d,
    )
    .unwrap();
    let all = method_refine(
        &d,
        &[a.clone(), b.clone()],
        &p,
        &RefineConfig {
            minimize: false,
            ..RefineConfig::default()
        },
    );
    assert_eq!(ids(&all.methods), ["m-air-ship-r1", "m-air-ship-r2"]);
    let out = method_refine(&d, &[a.clone(), b.clone()], &p, &RefineConfig::default());
    assert_eq!(ids(&out.methods), ["m-air-ship-r2"]);
    let st = &out.log.strata[1];
    assert_eq!(st.selected, vec![Symbol::from("m-air-ship-r2")]);
    assert_eq!(
        st.replaced[&Symbol::from("m-air-ship-r1")],
        Symbol::from("m-air-ship-r2")
    );
    let ext = out.domain(&d);
    for (t, i) in out.trees.iter().zip([&a, &b]) {
        assert!(validate_dt(&t.tree, &ext, i).is_valid());
        assert!(plan_htn(&ext, i, &PlanConfig::default()).is_ok());
    }
    for mode in [MinimizeMode::Exact, MinimizeMode::Greedy] {
        let cfg = RefineConfig {
            mode,
            ..RefineConfig::default()
        };
        assert_eq!(
            ids(&method_refine(&d, &[a.clone(), b.clone()], &p, &cfg).methods),
            ["m-air-ship-r2"]
        );
    }
}
