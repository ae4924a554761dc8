use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{inject_verifier, Benchmark, DegradeSpec, GenParams, Preset};
use crate::model::{Atom, Domain, Instance, State};
use crate::parser::parse_domain;

const DOMAIN: &str = include_str!("../../domains/satellite.htn");

/// One image per instance. `size` is the number of directions (at least 2)
/// and `agents` the number of satellites, each carrying one instrument.
pub struct Satellite;

impl Benchmark for Satellite {
    fn name(&self) -> &'static str {
        "satellite"
    }

    fn domain(&self) -> Domain {
        inject_verifier(&parse_domain(DOMAIN).expect("bundled domain parses"), &[])
    }

    fn preset(&self, preset: Preset) -> DegradeSpec {
        let removals = match preset {
            Preset::High => vec![("m-get-image", 3), ("m-prepare", 2)],
            Preset::Middle => vec![("m-get-image", 3), ("m-prepare", 1), ("m-prepare", 2)],
            Preset::Low => vec![
                ("m-get-image", 2),
                ("m-get-image", 3),
                ("m-prepare", 1),
                ("m-prepare", 2),
            ],
            Preset::Custom => vec![],
        };
        DegradeSpec {
            preset,
            ..DegradeSpec::custom(removals)
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, params: &GenParams, name: &str) -> Instance {
        let dirs: Vec<String> = (0..params.size.max(2)).map(|d| format!("dir{d}")).collect();
        let modes = ["thermal", "spectral"];
        let mut init = Vec::new();
        for d in &dirs {
            init.push(Atom::ground("direction", &[d]));
        }
        for m in modes {
            init.push(Atom::ground("mode", &[m]));
        }
        for k in 0..params.agents.max(1) {
            let sat = format!("sat{k}");
            let ins = format!("ins{k}");
            init.push(Atom::ground("satellite", &[&sat]));
            init.push(Atom::ground("instrument", &[&ins]));
            init.push(Atom::ground("on-board", &[&ins, &sat]));
            init.push(Atom::ground("power-avail", &[&sat]));
            init.push(Atom::ground(
                "pointing",
                &[&sat, dirs.choose(rng).expect("directions")],
            ));
            init.push(Atom::ground(
                "calibration-target",
                &[&ins, dirs.choose(rng).expect("directions")],
            ));
            let m = if k == 0 {
                modes[0]
            } else {
                modes[rng.gen_range(0..modes.len())]
            };
            init.push(Atom::ground("supports", &[&ins, m]));
        }
        let target = dirs.choose(rng).expect("directions").clone();
        let mode = modes[rng.gen_range(0..modes.len())];
        Instance {
            name: name.into(),
            init: State::new(init).expect("ground"),
            top: Atom::ground("get-image", &[&target, mode]),
            goal: Some(vec![Atom::ground("have-image", &[&target, mode])]),
        }
    }
}
