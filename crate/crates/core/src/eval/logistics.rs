use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{inject_verifier, Benchmark, DegradeSpec, GenParams, Preset};
use crate::model::{Atom, Domain, Instance, State};
use crate::parser::parse_domain;

const DOMAIN: &str = include_str!("../../domains/logistics.htn");

/// Packages moved by truck to an airport, flown to another city and trucked
/// to their destination. `size` is the number of cities (at least 2) and
/// `agents` the number of planes.
pub struct Logistics;

impl Benchmark for Logistics {
    fn name(&self) -> &'static str {
        "logistics"
    }

    fn domain(&self) -> Domain {
        inject_verifier(&parse_domain(DOMAIN).expect("bundled domain parses"), &[])
    }

    fn preset(&self, preset: Preset) -> DegradeSpec {
        let removals = match preset {
            Preset::High => vec![("m-city-ship", 1), ("m-air-ship", 1)],
            Preset::Middle => vec![
                ("m-city-ship", 1),
                ("m-city-ship", 3),
                ("m-air-ship", 1),
                ("m-air-ship", 3),
            ],
            Preset::Low => vec![
                ("m-city-ship", 1),
                ("m-city-ship", 3),
                ("m-air-ship", 1),
                ("m-air-ship", 3),
                ("m-ship", 3),
            ],
            Preset::Custom => vec![],
        };
        DegradeSpec {
            preset,
            ..DegradeSpec::custom(removals)
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, params: &GenParams, name: &str) -> Instance {
        let cities = params.size.max(2);
        let planes = params.agents.max(1);
        let mut init = Vec::new();
        let mut locations: Vec<Vec<String>> = Vec::new();
        for c in 0..cities {
            let city = format!("city{c}");
            let airport = format!("airp{c}");
            let other = format!("loc{c}");
            init.push(Atom::ground("airport", &[&airport]));
            for l in [&airport, &other] {
                init.push(Atom::ground("in-city", &[l, &city]));
            }
            let truck = format!("truck{c}");
            init.push(Atom::ground("vehicle", &[&truck]));
            init.push(Atom::ground("truck", &[&truck]));
            let parked = if rng.gen_bool(0.5) { &airport } else { &other };
            init.push(Atom::ground("at", &[&truck, parked]));
            locations.push(vec![airport, other]);
        }
        for k in 0..planes {
            let plane = format!("plane{k}");
            init.push(Atom::ground("vehicle", &[&plane]));
            init.push(Atom::ground("airplane", &[&plane]));
            let c = rng.gen_range(0..cities);
            init.push(Atom::ground("at", &[&plane, &locations[c][0]]));
        }
        let mut city_ids: Vec<usize> = (0..cities).collect();
        city_ids.shuffle(rng);
        let src = locations[city_ids[0]]
            .choose(rng)
            .expect("two locations")
            .clone();
        let dst = locations[city_ids[1]]
            .choose(rng)
            .expect("two locations")
            .clone();
        init.push(Atom::ground("package", &["pkg1"]));
        init.push(Atom::ground("at", &["pkg1", &src]));
        Instance {
            name: name.into(),
            init: State::new(init).expect("ground"),
            top: Atom::ground("ship", &["pkg1", &src, &dst]),
            goal: Some(vec![Atom::ground("at", &["pkg1", &dst])]),
        }
    }
}
