use std::f64::consts::PI;

use proptest::prelude::*;

use nrule_core::current::{AmplitudeDriver, CurrentDriver, RateDriver};
use nrule_core::ensemble::{run_ensemble, EnsembleAccumulator, EnsembleConfig};
use nrule_core::graph::{EdgeKind, Status};
use nrule_core::reduction::{RngStream, TriggerState};
use nrule_core::scenario::{build_builtin, parse, Scenario, StopCondition};
use nrule_core::trajectory::{run_trajectory, TrajectoryOptions};

fn chain(moduli: &[f64], lambdas: &[f64], delay: f64) -> Scenario {
    let mut s = Scenario::new("chain", &["stage"]);
    for (i, &m) in moduli.iter().enumerate() {
        let status = if i == 0 { Status::Realized } else { Status::Ready };
        s.add_component(&format!("c{i}"), &[&format!("S{i}")], m, status);
    }
    for (i, &l) in lambdas.iter().enumerate().take(moduli.len() - 1) {
        s.add_edge(
            &format!("c{i}"),
            &format!("c{}", i + 1),
            EdgeKind::NoncyclicJump,
            Some(CurrentDriver::Rate(RateDriver::ExponentialSource { lambda: l })),
        );
    }
    let last = moduli.len() - 1;
    s.add_component("tail", &["T"], 0.0, Status::Realized);
    s.add_arrow(&format!("c{last}"), "tail", delay);
    s.stop = vec![StopCondition::MaxTime(3.0)];
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn text_round_trip(
        moduli in prop::collection::vec(0.0f64..2.0, 2..6),
        lambdas in prop::collection::vec(0.01f64..10.0, 5),
        delay in 0.0f64..1.0,
    ) {
        let s = chain(&moduli, &lambdas, delay);
        let text = s.to_text();
        let back = parse(&text).expect("serialized scenario parses");
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn parser_never_panics(text in "\\PC{0,400}") {
        let _ = parse(&text);
    }

    #[test]
    fn moduli_stay_nonnegative_and_conserved(
        seed in any::<u64>(),
        dt in 5e-4f64..4e-3,
        which in 0usize..4,
    ) {
        let name = ["counter", "parallel", "detector", "atomic_emission"][which];
        let s = build_builtin(name).unwrap();
        let r = run_trajectory(&s, TrajectoryOptions { seed, dt: Some(dt), ..Default::default() }).unwrap();
        prop_assert!(r.final_state.components.iter().all(|c| c.modulus >= 0.0));
        prop_assert!(r.instrumentation.max_relative_drift <= 1e-9);
        prop_assert_eq!(r.instrumentation.max_ready_emission, 0.0);
        prop_assert_eq!(r.instrumentation.phantom_changes, 0);
        let times: Vec<f64> = r.events.iter().map(|e| e.time).collect();
        prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn merge_is_order_independent(seed in any::<u64>(), cut in 1usize..15, rotate in 0usize..3) {
        let s = build_builtin("parallel").unwrap();
        let records: Vec<_> = (0..16)
            .map(|k| run_trajectory(&s, TrajectoryOptions { seed, stream_id: k, ..Default::default() }).unwrap())
            .collect();
        let mut whole = EnsembleAccumulator::new();
        for r in &records {
            whole.add(r, &s);
        }
        let mut parts: Vec<EnsembleAccumulator> = records
            .chunks(cut)
            .map(|chunk| {
                let mut a = EnsembleAccumulator::new();
                for r in chunk {
                    a.add(r, &s);
                }
                a
            })
            .collect();
        let k = rotate % parts.len();
        parts.rotate_left(k);
        parts.reverse();
        let merged = parts.into_iter().fold(EnsembleAccumulator::new(), |a, b| a.merge(b));
        prop_assert_eq!(merged.finish(&s, seed, 1e-3), whole.finish(&s, seed, 1e-3));
    }

    #[test]
    fn amplitude_pair_weight_is_conserved(
        rabi in 0.1f64..20.0,
        detuning in -10.0f64..10.0,
        steps in 1usize..2000,
    ) {
        let mut d = AmplitudeDriver::new(rabi, detuning, 0.0);
        for _ in 0..steps {
            d.evolve(1e-3);
        }
        prop_assert!((d.pair_weight() - 1.0).abs() < 1e-9);
        let p = d.target_population();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
    }

    #[test]
    fn trigger_hits_within_step_fraction(
        seed in any::<u64>(),
        deltas in prop::collection::vec((0.0f64..0.05, 0.0f64..0.05), 1..200),
    ) {
        let mut rng = RngStream::new(seed, 0);
        let mut t = TriggerState::draw(&mut rng);
        for (ready, other) in deltas {
            let before = t.accumulated_hazard;
            match t.advance_epoch(ready, other) {
                Some(f) => {
                    prop_assert!((0.0..=1.0).contains(&f));
                    t.reset(&mut rng);
                }
                None => prop_assert!(t.accumulated_hazard >= before),
            }
        }
    }
}

#[test]
fn resonant_transfer_matches_closed_form() {
    let omega = 2.0 * PI;
    let mut d = AmplitudeDriver::new(omega, 0.0, 0.0);
    for k in 1..=500 {
        d.evolve(1e-3);
        let t = k as f64 * 1e-3;
        assert!((d.target_population() - (0.5 * omega * t).sin().powi(2)).abs() < 1e-9);
    }
}

#[test]
fn ensemble_counts_are_consistent() {
    let s = build_builtin("counter").unwrap();
    let run = run_ensemble(
        &s,
        &EnsembleConfig {
            n: 40,
            seed: 5,
            keep_records: true,
            ..Default::default()
        },
    )
    .unwrap();
    let records = run.records.unwrap();
    let collapses: usize = records.iter().map(|r| r.collapse_count()).sum();
    let noops: usize = records.iter().map(|r| r.noop_count()).sum();
    assert_eq!(run.summary.reduction_events, collapses as u64);
    assert_eq!(run.summary.noop_hits, noops as u64);
    let total: u64 = run.summary.branches.iter().map(|b| b.count).sum();
    assert_eq!(total, 40);
}
