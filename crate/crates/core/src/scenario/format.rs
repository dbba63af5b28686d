use std::fmt::Write;

use super::{Observable, Scenario, ScriptTarget, StopCondition};
use crate::current::{CurrentDriver, RateDriver};
use crate::graph::{EdgeKind, Status};

fn kind_name(kind: EdgeKind) -> &'static str {
    match kind {
        EdgeKind::NoncyclicJump => "jump",
        EdgeKind::ContinuousArrow => "arrow",
        EdgeKind::CyclicCoupling => "cyclic",
    }
}

fn status_name(status: Status) -> &'static str {
    match status {
        Status::Realized => "realized",
        Status::Ready => "ready",
        Status::Phantom => "phantom",
    }
}

fn driver_text(driver: &CurrentDriver) -> String {
    match driver {
        CurrentDriver::Rate(RateDriver::Constant { rate }) => format!("driver=constant rate={rate}"),
        CurrentDriver::Rate(RateDriver::Pulse { rate, start, end }) => {
            format!("driver=pulse rate={rate} start={start} end={end}")
        }
        CurrentDriver::Rate(RateDriver::ExponentialSource { lambda }) => {
            format!("driver=exponential lambda={lambda}")
        }
        CurrentDriver::Rate(RateDriver::Piecewise { knots }) => {
            let k: Vec<String> = knots.iter().map(|(t, j)| format!("{t}:{j}")).collect();
            format!("driver=piecewise knots={}", k.join(","))
        }
        CurrentDriver::Amplitude(a) => format!(
            "driver=amplitude rabi={} detuning={} kappa={} overlap={} c_source={},{} c_target={},{}",
            a.rabi_rate,
            a.detuning,
            a.decoherence_rate,
            a.overlap,
            a.c_source.re,
            a.c_source.im,
            a.c_target.re,
            a.c_target.im
        ),
    }
}

/// Canonical text form of a scenario.
pub(crate) fn serialize(s: &Scenario) -> String {
    let mut out = String::new();
    let dim = |i: usize| s.roster.get(i).map_or("?", String::as_str);

    let _ = writeln!(out, "[scenario]\nname={} time_scale={}\n", s.name, s.time_scale);

    out.push_str("[roster]\n");
    for d in &s.roster {
        let _ = writeln!(out, "dim={d}");
    }

    out.push_str("\n[components]\n");
    for c in &s.components {
        let _ = writeln!(
            out,
            "id={} labels={} modulus={} status={}",
            c.name,
            c.labels.join(","),
            c.modulus,
            status_name(c.status)
        );
    }

    out.push_str("\n[edges]\n");
    for e in &s.edges {
        let _ = write!(out, "from={} to={} kind={}", e.from, e.to, kind_name(e.kind));
        if let Some(d) = &e.driver {
            let _ = write!(out, " {}", driver_text(d));
        }
        if e.delay != 0.0 {
            let _ = write!(out, " delay={}", e.delay);
        }
        out.push('\n');
    }

    if !s.scripts.is_empty() {
        out.push_str("\n[scripts]\n");
        for sc in &s.scripts {
            let target = match &sc.target {
                ScriptTarget::All => "*",
                ScriptTarget::Component(c) => c.as_str(),
            };
            let _ = write!(
                out,
                "target={target} dim={} from={} to={} start={} duration={}",
                dim(sc.dimension),
                sc.from_label,
                sc.to_label,
                sc.t_start,
                sc.duration
            );
            if let Some((d, label)) = &sc.when {
                let _ = write!(out, " when={}:{label}", dim(*d));
            }
            out.push('\n');
        }
    }

    out.push_str("\n[stop]\n");
    for stop in &s.stop {
        let _ = match stop {
            StopCondition::MaxTime(t) => writeln!(out, "max_time={t}"),
            StopCondition::EpochCount(n) => writeln!(out, "epochs={n}"),
            StopCondition::Quiescent(eps) => writeln!(out, "quiescent={eps}"),
        };
    }

    if !s.observables.is_empty() {
        out.push_str("\n[observables]\n");
        for o in &s.observables {
            let _ = match o {
                Observable::Trace { component, every } => {
                    writeln!(out, "probe=trace component={component} every={every}")
                }
                Observable::Events => writeln!(out, "probe=events"),
                Observable::Sequence { stages } => {
                    writeln!(out, "probe=sequence stages={}", stages.join(","))
                }
                Observable::Envelope { from, to, times } => {
                    let t: Vec<String> = times.iter().map(f64::to_string).collect();
                    writeln!(out, "probe=envelope from={from} to={to} times={}", t.join(","))
                }
                Observable::Coexist { dimension, labels } => writeln!(
                    out,
                    "probe=coexist dim={} labels={},{}",
                    dim(*dimension),
                    labels[0],
                    labels[1]
                ),
                Observable::Exclusive {
                    intermediates,
                    terminal,
                } => writeln!(
                    out,
                    "probe=exclusive intermediates={} final={terminal}",
                    intermediates.join(",")
                ),
            };
        }
    }

    let _ = write!(
        out,
        "\n[flags]\nphantom_prune={} noop_resets_trigger={}\n",
        s.flags.phantom_prune, s.flags.noop_resets_trigger
    );
    out
}
