//! Built-in scenarios, one per worked example.
//!
//! Driver parameters are fixed here and mirrored in the shipped corpus files.
//! Detector capture uses an exponential source unless a scenario needs a
//! controlled branch weight.

use std::f64::consts::PI;

use super::{LabelScript, Observable, Scenario, ScriptTarget, StopCondition};
use crate::current::{AmplitudeDriver, CurrentDriver, RateDriver};
use crate::graph::{EdgeKind, Status};

pub const CATALOG_NAMES: [&str; 12] = [
    "detector",
    "detector_observer",
    "terminal_observation",
    "intermediate_observer",
    "second_observer",
    "counter",
    "parallel",
    "hammer",
    "spin_continuous",
    "neutron_decay",
    "atomic_emission",
    "decoherence_rabi",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
}

pub fn catalog() -> Vec<CatalogEntry> {
    let summaries = [
        "particle meets detector; capture state grows from zero",
        "detector with an observer on board; staged D_w -> D_d -> B1",
        "capture window of fixed weight p, then an observer looks",
        "observer looks while the detector is still in superposition",
        "two observers with staggered physiology windows",
        "counter advancing C0 -> C4 one stochastic hit at a time",
        "two parallel decay routes to a common final state",
        "hammer released stochastically, then falls through fixed angles",
        "spin split by a continuous field; no reduction",
        "free neutron decay with exponential capture current",
        "atomic emission with a cyclic absorption channel",
        "coherent two-level exchange damped by its environment",
    ];
    CATALOG_NAMES
        .iter()
        .zip(summaries)
        .map(|(&name, summary)| CatalogEntry { name, summary })
        .collect()
}

#[derive(Debug, thiserror::Error)]
#[error("unknown builtin `{0}`; available: {list}", list = CATALOG_NAMES.join(", "))]
pub struct UnknownBuiltin(pub String);

pub fn build_builtin(name: &str) -> Result<Scenario, UnknownBuiltin> {
    Ok(match name {
        "detector" => detector(),
        "detector_observer" => detector_observer(),
        "terminal_observation" => terminal_observation(0.3),
        "intermediate_observer" => intermediate_observer(),
        "second_observer" => second_observer(),
        "counter" => counter(),
        "parallel" => parallel(),
        "hammer" => hammer(),
        "spin_continuous" => spin_continuous(),
        "neutron_decay" => neutron_decay(1.0),
        "atomic_emission" => atomic_emission(AtomicEmissionParams::default()),
        "decoherence_rabi" => decoherence_rabi(1.0),
        other => return Err(UnknownBuiltin(other.to_owned())),
    })
}

fn exponential(lambda: f64) -> Option<CurrentDriver> {
    Some(CurrentDriver::Rate(RateDriver::ExponentialSource { lambda }))
}

fn quiescent_stop(s: &mut Scenario, max_time: f64) {
    s.stop = vec![StopCondition::Quiescent(1e-12), StopCondition::MaxTime(max_time)];
}

fn script(target: ScriptTarget, dim: usize, from: &str, to: &str, start: f64, duration: f64) -> LabelScript {
    LabelScript {
        target,
        dimension: dim,
        from_label: from.into(),
        to_label: to.into(),
        t_start: start,
        duration,
        when: None,
    }
}

const STAGE: f64 = 0.05;

pub fn detector() -> Scenario {
    let mut s = Scenario::new("detector", &["particle", "detector"]);
    s.add_component("root", &["psi", "d0"], 1.0, Status::Realized);
    s.add_component("dw", &["captured", "d_w"], 0.0, Status::Ready);
    s.add_component("dm", &["captured", "d_m"], 0.0, Status::Realized);
    s.add_component("dd", &["captured", "d_d"], 0.0, Status::Realized);
    s.add_edge("root", "dw", EdgeKind::NoncyclicJump, exponential(1.0));
    s.add_arrow("dw", "dm", STAGE);
    s.add_arrow("dm", "dd", STAGE);
    quiescent_stop(&mut s, 20.0);
    s.observables = vec![
        Observable::Events,
        Observable::Trace {
            component: "dw".into(),
            every: 0.1,
        },
    ];
    s
}

pub fn detector_observer() -> Scenario {
    let mut s = Scenario::new("detector_observer", &["particle", "detector", "observer"]);
    s.add_component("root", &["psi", "D0", "B0"], 1.0, Status::Realized);
    s.add_component("Dw", &["captured", "D_w", "B0"], 0.0, Status::Ready);
    s.add_component("Dm", &["captured", "D_m", "B0"], 0.0, Status::Realized);
    s.add_component("Dd", &["captured", "D_d", "B0"], 0.0, Status::Realized);
    s.add_component("DdB1", &["captured", "D_d", "B1"], 0.0, Status::Realized);
    s.add_edge("root", "Dw", EdgeKind::NoncyclicJump, exponential(1.0));
    s.add_arrow("Dw", "Dm", STAGE);
    s.add_arrow("Dm", "Dd", STAGE);
    s.add_arrow("Dd", "DdB1", 0.1);
    quiescent_stop(&mut s, 20.0);
    s.observables = vec![
        Observable::Events,
        Observable::Coexist {
            dimension: 2,
            labels: ["B0".into(), "B1".into()],
        },
        Observable::Sequence {
            stages: vec!["root".into(), "Dw".into(), "Dm".into(), "Dd".into(), "DdB1".into()],
        },
    ];
    s
}

/// Capture window `[0, 1)` with total weight `p`; the observer looks at `t = 1`.
pub fn terminal_observation(p: f64) -> Scenario {
    let mut s = Scenario::new("terminal_observation", &["particle", "detector", "observer"]);
    s.add_component("root", &["psi", "d0", "X"], 1.0, Status::Realized);
    s.add_component("dw", &["captured", "d_w", "X"], 0.0, Status::Ready);
    s.add_component("dm", &["captured", "d_m", "X"], 0.0, Status::Realized);
    s.add_component("dd", &["captured", "d_d", "X"], 0.0, Status::Realized);
    s.add_edge(
        "root",
        "dw",
        EdgeKind::NoncyclicJump,
        Some(CurrentDriver::Rate(RateDriver::Pulse {
            rate: p,
            start: 0.0,
            end: 1.0,
        })),
    );
    s.add_arrow("dw", "dm", 0.02);
    s.add_arrow("dm", "dd", 0.02);
    s.scripts = vec![script(ScriptTarget::All, 2, "X", "B0", 1.0, STAGE)];
    quiescent_stop(&mut s, 2.0);
    s.observables = vec![Observable::Events];
    s
}

/// The observer starts looking at `t_look = 0.5` and is on board after `pi = 0.1`.
pub fn intermediate_observer() -> Scenario {
    let mut s = Scenario::new("intermediate_observer", &["particle", "detector", "observer"]);
    s.add_component("root", &["psi", "D0", "X"], 1.0, Status::Realized);
    s.add_component("Dw", &["captured", "D_w", "X"], 0.0, Status::Ready);
    s.add_component("Dm", &["captured", "D_m", "X"], 0.0, Status::Realized);
    s.add_component("Dd", &["captured", "D_d", "X"], 0.0, Status::Realized);
    s.add_edge("root", "Dw", EdgeKind::NoncyclicJump, exponential(1.0));
    s.add_arrow("Dw", "Dm", STAGE);
    s.add_arrow("Dm", "Dd", STAGE);
    let mut sees = script(ScriptTarget::All, 2, "B0", "B1", 0.5, 0.1);
    sees.when = Some((1, "D_d".into()));
    s.scripts = vec![script(ScriptTarget::All, 2, "X", "B0", 0.5, 0.1), sees];
    quiescent_stop(&mut s, 20.0);
    s.observables = vec![
        Observable::Events,
        Observable::Coexist {
            dimension: 2,
            labels: ["B0".into(), "B1".into()],
        },
    ];
    s
}

/// The first observer is on board from the start; the second looks at
/// `t = 0.5` and needs a longer window before registering the reading.
pub fn second_observer() -> Scenario {
    let mut s = Scenario::new(
        "second_observer",
        &["particle", "detector", "observer1", "observer2"],
    );
    s.add_component("root", &["psi", "D0", "B0", "X"], 1.0, Status::Realized);
    s.add_component("Dw", &["captured", "D_w", "B0", "X"], 0.0, Status::Ready);
    s.add_component("Dm", &["captured", "D_m", "B0", "X"], 0.0, Status::Realized);
    s.add_component("Dd", &["captured", "D_d", "B0", "X"], 0.0, Status::Realized);
    s.add_edge("root", "Dw", EdgeKind::NoncyclicJump, exponential(1.0));
    s.add_arrow("Dw", "Dm", STAGE);
    s.add_arrow("Dm", "Dd", STAGE);
    let mut first_sees = script(ScriptTarget::All, 2, "B0", "B1", 0.0, 0.1);
    first_sees.when = Some((1, "D_d".into()));
    let mut second_sees = script(ScriptTarget::All, 3, "B0", "B1", 0.5, 0.15);
    second_sees.when = Some((1, "D_d".into()));
    s.scripts = vec![
        first_sees,
        script(ScriptTarget::All, 3, "X", "B0", 0.5, 0.1),
        second_sees,
    ];
    quiescent_stop(&mut s, 20.0);
    s.observables = vec![
        Observable::Events,
        Observable::Coexist {
            dimension: 2,
            labels: ["B0".into(), "B1".into()],
        },
        Observable::Coexist {
            dimension: 3,
            labels: ["B0".into(), "B1".into()],
        },
    ];
    s
}

pub fn counter() -> Scenario {
    let mut s = Scenario::new("counter", &["source", "counter"]);
    let stages: Vec<String> = (0..5).map(|k| format!("C{k}")).collect();
    for (k, name) in stages.iter().enumerate() {
        let (m, status) = if k == 0 {
            (1.0, Status::Realized)
        } else {
            (0.0, Status::Ready)
        };
        s.add_component(name, &[&format!("emitted{k}"), &format!("n{k}")], m, status);
    }
    for w in stages.windows(2) {
        s.add_edge(&w[0], &w[1], EdgeKind::NoncyclicJump, exponential(1.0));
    }
    s.stop = vec![StopCondition::EpochCount(4), StopCondition::MaxTime(100.0)];
    s.observables = vec![Observable::Events, Observable::Sequence { stages }];
    s
}

pub fn parallel() -> Scenario {
    let mut s = Scenario::new("parallel", &["system"]);
    s.add_component("A0", &["A0"], 1.0, Status::Realized);
    s.add_component("Al", &["Al"], 0.0, Status::Ready);
    s.add_component("Ar", &["Ar"], 0.0, Status::Ready);
    s.add_component("Af", &["Af"], 0.0, Status::Ready);
    s.add_edge("A0", "Al", EdgeKind::NoncyclicJump, exponential(0.5));
    s.add_edge("A0", "Ar", EdgeKind::NoncyclicJump, exponential(0.5));
    s.add_edge("Al", "Af", EdgeKind::NoncyclicJump, exponential(1.0));
    s.add_edge("Ar", "Af", EdgeKind::NoncyclicJump, exponential(1.0));
    s.stop = vec![StopCondition::EpochCount(2), StopCondition::MaxTime(100.0)];
    s.observables = vec![
        Observable::Events,
        Observable::Exclusive {
            intermediates: vec!["Al".into(), "Ar".into()],
            terminal: "Af".into(),
        },
    ];
    s
}

pub fn hammer() -> Scenario {
    let mut s = Scenario::new("hammer", &["hammer"]);
    s.add_component("held", &["theta0"], 1.0, Status::Realized);
    s.add_component("released", &["theta0_free"], 0.0, Status::Ready);
    let mut stages = vec!["held".to_string(), "released".to_string()];
    for k in 1..=4 {
        let name = format!("fall{k}");
        s.add_component(&name, &[&format!("theta{k}")], 0.0, Status::Realized);
        stages.push(name);
    }
    s.add_edge("held", "released", EdgeKind::NoncyclicJump, exponential(1.0));
    for w in stages[1..].windows(2) {
        s.add_arrow(&w[0], &w[1], 0.1);
    }
    quiescent_stop(&mut s, 100.0);
    s.observables = vec![Observable::Events, Observable::Sequence { stages }];
    s
}

/// A `+z` spin written as equal `+x` and `-x` parts, each carried continuously
/// along its own path by the field.
pub fn spin_continuous() -> Scenario {
    let mut s = Scenario::new("spin_continuous", &["spin", "path"]);
    s.add_component("plus_x", &["+x", "entry"], 0.5, Status::Realized);
    s.add_component("minus_x", &["-x", "entry"], 0.5, Status::Realized);
    s.add_component("plus_x_up", &["+x", "deflected_up"], 0.0, Status::Realized);
    s.add_component("minus_x_down", &["-x", "deflected_down"], 0.0, Status::Realized);
    s.add_arrow("plus_x", "plus_x_up", 1.0);
    s.add_arrow("minus_x", "minus_x_down", 1.0);
    quiescent_stop(&mut s, 2.0);
    s.observables = vec![
        Observable::Events,
        Observable::Trace {
            component: "plus_x_up".into(),
            every: 0.5,
        },
    ];
    s
}

pub fn neutron_decay(lambda: f64) -> Scenario {
    let mut s = Scenario::new("neutron_decay", &["baryon", "leptons"]);
    s.add_component("n", &["n", "none"], 1.0, Status::Realized);
    s.add_component("pev", &["p", "e_nubar"], 0.0, Status::Ready);
    s.add_edge("n", "pev", EdgeKind::NoncyclicJump, exponential(lambda));
    s.stop = vec![StopCondition::EpochCount(1), StopCondition::MaxTime(10.0 / lambda)];
    s.observables = vec![Observable::Events];
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicEmissionParams {
    /// Excited state shares time with the ground state through a cyclic
    /// absorption/stimulated-emission channel.
    pub shared: bool,
    /// Rabi frequency of the cyclic channel, rad/s.
    pub rabi_rate: f64,
    /// Spontaneous emission rate out of the excited state, 1/s.
    pub lambda: f64,
}

impl Default for AtomicEmissionParams {
    fn default() -> Self {
        Self {
            shared: true,
            rabi_rate: 2.0 * PI * 5.0,
            lambda: 1.0,
        }
    }
}

pub fn atomic_emission(params: AtomicEmissionParams) -> Scenario {
    let name = if params.shared {
        "atomic_emission"
    } else {
        "atomic_emission_unshared"
    };
    let mut s = Scenario::new(name, &["field", "atom", "emitted"]);
    // The emitted photon carries its pulse width as label metadata only.
    let photon = "gamma[dTf=0.2]";
    if params.shared {
        s.add_component("ground", &["gammaN", "A0", "none"], 1.0, Status::Realized);
        s.add_component("excited", &["gammaN-1", "A1", "none"], 0.0, Status::Realized);
        s.add_component("emitted", &["gammaN-1", "A0", photon], 0.0, Status::Ready);
        s.add_edge(
            "ground",
            "excited",
            EdgeKind::CyclicCoupling,
            Some(CurrentDriver::Amplitude(AmplitudeDriver::new(params.rabi_rate, 0.0, 0.0))),
        );
    } else {
        s.add_component("excited", &["vac", "A1", "none"], 1.0, Status::Realized);
        s.add_component("emitted", &["vac", "A0", photon], 0.0, Status::Ready);
    }
    s.add_edge("excited", "emitted", EdgeKind::NoncyclicJump, exponential(params.lambda));
    s.stop = vec![StopCondition::EpochCount(1), StopCondition::MaxTime(40.0 / params.lambda)];
    s.observables = vec![Observable::Events];
    s
}

/// Rabi exchange at `4` full cycles per unit time, so the sample times 1, 2, 3
/// fall on population maxima of the source.
pub fn decoherence_rabi(kappa: f64) -> Scenario {
    let mut s = Scenario::new("decoherence_rabi", &["molecule", "environment"]);
    s.add_component("A", &["A", "E_A"], 1.0, Status::Realized);
    s.add_component("B", &["B", "E_B"], 0.0, Status::Realized);
    s.add_edge(
        "A",
        "B",
        EdgeKind::CyclicCoupling,
        Some(CurrentDriver::Amplitude(AmplitudeDriver::new(2.0 * PI * 4.0, 0.0, kappa))),
    );
    s.stop = vec![StopCondition::MaxTime(3.5)];
    s.observables = vec![
        Observable::Events,
        Observable::Envelope {
            from: "A".into(),
            to: "B".into(),
            times: vec![1.0, 2.0, 3.0],
        },
    ];
    s
}
