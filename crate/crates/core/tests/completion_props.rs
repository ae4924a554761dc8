mod common;

use std::collections::BTreeSet;

use common::{all_assignments, insertion_pairs, Pair};
use htn_refine::completion::{
    complete, complete_profile_with, is_valid_profile, Completion, CompletionProfile,
};
use htn_refine::model::Domain;
use htn_refine::planner::{plan_htn, PlanConfig};
use htn_refine::preference::{stratify, Prioritization};
use htn_refine::strategy::profile_strategy;
use htn_refine::tree::{linearize, validate_dt, NodeId};

fn with_profile(pair: &Pair, rho: CompletionProfile) -> Option<Completion> {
    complete(&pair.result, &pair.domain, |_, _| Ok(rho)).ok()
}

/// The completed tree solves the instance under the refined domain and its
/// plan is the plan with insertions.
fn satisfies(pair: &Pair, c: &Completion) -> bool {
    let dom = pair.domain.with_methods(c.methods());
    validate_dt(&c.tree, &dom, &pair.instance).is_valid()
        && linearize(&c.tree).is_ok_and(|l| l.actions() == pair.result.actions())
}

fn small(pair: &Pair) -> bool {
    pair.result.inserted.len() <= 4 && pair.result.tree.inner_nodes().count() <= 8
}

fn origins_preserved(dom: &Domain, c: &Completion) -> bool {
    c.methods().all(|m| {
        let original = dom.method(m.origin()).expect("origin exists");
        m.strip() == *original
    })
}

#[test]
fn every_valid_profile_completes_to_a_solution() {
    let pairs = insertion_pairs(200, 1);
    let mut profiles = 0;
    for pair in &pairs {
        let p = stratify(&pair.domain).unwrap();
        for name in ["strata", "strata-inverted", "random"] {
            let s = profile_strategy(name).unwrap();
            let prio = s.prioritization(&pair.domain, &p);
            let c = complete(&pair.result, &pair.domain, |e, t| {
                s.profile(e, t, &pair.domain, &prio, pair.seed)
            })
            .unwrap_or_else(|e| panic!("seed {}: {e}", pair.seed));
            assert!(
                is_valid_profile(&c.ext, &pair.result.tree, &c.profile),
                "seed {}",
                pair.seed
            );
            assert!(satisfies(pair, &c), "seed {} strategy {name}", pair.seed);
            assert!(origins_preserved(&pair.domain, &c), "seed {}", pair.seed);
            profiles += 1;
        }
        if !small(pair) {
            continue;
        }
        let c0 = complete(&pair.result, &pair.domain, |_, _| {
            Ok(CompletionProfile::default())
        })
        .ok();
        let ext = match c0 {
            Some(c) => c.ext,
            None => htn_refine::completion::extend_order(&pair.result).unwrap(),
        };
        let inner: Vec<NodeId> = pair.result.tree.inner_nodes().collect();
        for a in all_assignments(&ext.inserted, &inner) {
            let rho = CompletionProfile {
                assignment: a,
                ..Default::default()
            };
            if !is_valid_profile(&ext, &pair.result.tree, &rho) {
                continue;
            }
            let c = with_profile(pair, rho).unwrap_or_else(|| panic!("seed {}", pair.seed));
            assert!(
                satisfies(pair, &c),
                "seed {} profile {:?}",
                pair.seed,
                c.profile.assignment
            );
            profiles += 1;
        }
    }
    assert!(profiles >= 800, "{profiles}");
}

#[test]
fn preferred_profile_is_minimal_among_all_solving_profiles() {
    let mut checked = 0;
    for pair in insertion_pairs(150, 2).iter().filter(|p| small(p)) {
        let base = stratify(&pair.domain).unwrap();
        for p in [
            base.clone(),
            base.reversed(),
            Prioritization::flat(&pair.domain),
        ] {
            let ext = htn_refine::completion::extend_order(&pair.result).unwrap();
            let tree = &pair.result.tree;
            let preferred = complete_profile_with(&ext, tree, &pair.domain, &p).unwrap();
            let got = p.profile(preferred.origins(tree, &pair.domain).iter());
            let inner: Vec<NodeId> = tree.inner_nodes().collect();
            let mut best: Option<Vec<usize>> = None;
            for a in all_assignments(&ext.inserted, &inner) {
                let rho = CompletionProfile {
                    assignment: a,
                    ..Default::default()
                };
                let origins: BTreeSet<_> = rho.origins(tree, &pair.domain);
                let Some(c) = with_profile(pair, rho) else {
                    continue;
                };
                if !satisfies(pair, &c) {
                    continue;
                }
                let v = p.profile(origins.iter());
                if best.as_ref().is_none_or(|b| v < *b) {
                    best = Some(v);
                }
            }
            assert_eq!(Some(got), best, "seed {}", pair.seed);
            checked += 1;
        }
    }
    assert!(checked >= 150, "{checked}");
}

#[test]
fn refined_methods_make_insertion_only_instances_solvable() {
    let mut checked = 0;
    for pair in insertion_pairs(200, 3) {
        if plan_htn(&pair.domain, &pair.instance, &PlanConfig::default()).is_ok() {
            continue;
        }
        let p = stratify(&pair.domain).unwrap();
        let c = complete(&pair.result, &pair.domain, |e, t| {
            complete_profile_with(e, t, &pair.domain, &p)
        })
        .unwrap();
        let dom = pair.domain.with_methods(c.methods());
        assert!(
            plan_htn(&dom, &pair.instance, &PlanConfig::default()).is_ok(),
            "seed {}",
            pair.seed
        );
        checked += 1;
    }
    assert!(checked >= 50, "{checked}");
}

#[test]
fn profile_scan_cost_is_bounded_by_tree_and_plan_size() {
    for pair in insertion_pairs(200, 4) {
        let p = stratify(&pair.domain).unwrap();
        let ext = htn_refine::completion::extend_order(&pair.result).unwrap();
        let rho = complete_profile_with(&ext, &pair.result.tree, &pair.domain, &p).unwrap();
        let bound =
            (p.len().max(1) * pair.result.tree.nodes.len() * pair.result.sigma.len()) as u64;
        assert!(
            rho.scan_ops <= bound,
            "seed {}: {} > {bound}",
            pair.seed,
            rho.scan_ops
        );
    }
}
