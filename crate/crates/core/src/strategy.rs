//! Named, runtime-selectable strategies for choosing completion profiles and
//! for minimizing strata of refined methods.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::completion::{
    complete_profile_with, is_valid_profile, valid_host, CompletionError, CompletionProfile,
    ExtendedOrder,
};
use crate::model::Domain;
use crate::preference::Prioritization;
use crate::tree::{DecompositionTree, NodeId};

/// How inserted tasks are attached to decomposition-tree nodes, and which
/// prioritization drives minimization.
pub trait ProfileStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// The prioritization this strategy works with, given the caller's.
    fn prioritization(&self, dom: &Domain, given: &Prioritization) -> Prioritization;

    fn profile(
        &self,
        ext: &ExtendedOrder,
        dt: &DecompositionTree,
        dom: &Domain,
        p: &Prioritization,
        seed: u64,
    ) -> Result<CompletionProfile, CompletionError>;
}

/// Deeper compound tasks are refined first.
pub struct Stratified;

/// The opposite: tasks go to the most abstract hosts possible.
pub struct StrataInverted;

/// No preference: every inserted task goes to a uniformly chosen valid host.
pub struct RandomProfile;

/// Random draws before falling back to a deterministic valid profile.
const RANDOM_TRIES: usize = 64;

impl ProfileStrategy for Stratified {
    fn name(&self) -> &'static str {
        "strata"
    }

    fn prioritization(&self, _dom: &Domain, given: &Prioritization) -> Prioritization {
        given.clone()
    }

    fn profile(
        &self,
        ext: &ExtendedOrder,
        dt: &DecompositionTree,
        dom: &Domain,
        p: &Prioritization,
        _seed: u64,
    ) -> Result<CompletionProfile, CompletionError> {
        complete_profile_with(ext, dt, dom, p)
    }
}

impl ProfileStrategy for StrataInverted {
    fn name(&self) -> &'static str {
        "strata-inverted"
    }

    fn prioritization(&self, _dom: &Domain, given: &Prioritization) -> Prioritization {
        given.reversed()
    }

    fn profile(
        &self,
        ext: &ExtendedOrder,
        dt: &DecompositionTree,
        dom: &Domain,
        p: &Prioritization,
        _seed: u64,
    ) -> Result<CompletionProfile, CompletionError> {
        complete_profile_with(ext, dt, dom, p)
    }
}

impl ProfileStrategy for RandomProfile {
    fn name(&self) -> &'static str {
        "random"
    }

    fn prioritization(&self, dom: &Domain, _given: &Prioritization) -> Prioritization {
        Prioritization::flat(dom)
    }

    fn profile(
        &self,
        ext: &ExtendedOrder,
        dt: &DecompositionTree,
        dom: &Domain,
        _p: &Prioritization,
        seed: u64,
    ) -> Result<CompletionProfile, CompletionError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner: Vec<NodeId> = dt
            .preorder()
            .into_iter()
            .filter(|n| dt.node(*n).is_inner())
            .collect();
        let mut hosts = Vec::new();
        for &i in &ext.inserted {
            let hs: Vec<NodeId> = inner
                .iter()
                .copied()
                .filter(|t| valid_host(ext, dt, *t, i))
                .collect();
            if hs.is_empty() {
                return Err(CompletionError::NoValidProfile(i));
            }
            hosts.push((i, hs));
        }
        for _ in 0..RANDOM_TRIES {
            let mut rho = CompletionProfile::default();
            for (i, hs) in &hosts {
                rho.assignment
                    .insert(*i, *hs.choose(&mut rng).expect("nonempty"));
            }
            if is_valid_profile(ext, dt, &rho) {
                return Ok(rho);
            }
        }
        complete_profile_with(ext, dt, dom, &Prioritization::flat(dom))
    }
}

/// How a stratum of refined methods is reduced.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize)]
pub enum MinimizeMode {
    /// Exact below the size cap, greedy above it.
    Auto,
    Exact,
    Greedy,
}

impl MinimizeMode {
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "auto" => Some(MinimizeMode::Auto),
            "exact" => Some(MinimizeMode::Exact),
            "greedy" => Some(MinimizeMode::Greedy),
            _ => None,
        }
    }
}

pub fn profile_strategy_names() -> Vec<&'static str> {
    registry().iter().map(|s| s.name()).collect()
}

/// Looks up a profile strategy by name.
pub fn profile_strategy(name: &str) -> Option<Arc<dyn ProfileStrategy>> {
    registry().into_iter().find(|s| s.name() == name)
}

fn registry() -> Vec<Arc<dyn ProfileStrategy>> {
    vec![
        Arc::new(Stratified),
        Arc::new(StrataInverted),
        Arc::new(RandomProfile),
    ]
}
