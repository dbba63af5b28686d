use std::collections::HashSet;

use super::diagnostics::{Diagnostic, DiagnosticCode as Code};
use super::parse::Positions;
use super::{Observable, Scenario, ScriptTarget, StopCondition};
use crate::current::CurrentDriver;
use crate::graph::{EdgeKind, Status};

/// Errors that make a scenario unusable.
pub(crate) fn structural(s: &Scenario, pos: &Positions) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let comp_line = |i: usize| Positions::at(&pos.components, i);
    let edge_line = |i: usize| Positions::at(&pos.edges, i);

    let mut seen = HashSet::new();
    for (i, c) in s.components.iter().enumerate() {
        if !seen.insert(c.name.as_str()) {
            out.push(Diagnostic::error(
                Code::DuplicateComponent,
                comp_line(i),
                1,
                format!("component `{}` is defined twice", c.name),
            ));
        }
        if !(c.modulus >= 0.0) || !c.modulus.is_finite() {
            out.push(Diagnostic::error(
                Code::NegativeModulus,
                comp_line(i),
                1,
                format!("component `{}` has modulus {}; moduli must be >= 0", c.name, c.modulus),
            ));
        }
        if c.labels.len() != s.roster.len() {
            out.push(Diagnostic::error(
                Code::IncompleteComponent,
                comp_line(i),
                1,
                format!(
                    "component `{}` has {} labels but the roster has {} dimensions ({})",
                    c.name,
                    c.labels.len(),
                    s.roster.len(),
                    s.roster.join(", ")
                ),
            ));
        }
    }

    let known = |name: &str| s.components.iter().any(|c| c.name == name);
    let dangling = |out: &mut Vec<Diagnostic>, line: usize, name: &str| {
        out.push(Diagnostic::error(
            Code::DanglingReference,
            line,
            1,
            format!("reference to unknown component `{name}`"),
        ));
    };

    for (i, e) in s.edges.iter().enumerate() {
        let line = edge_line(i);
        for end in [&e.from, &e.to] {
            if !known(end) {
                dangling(&mut out, line, end);
            }
        }
        if e.kind == EdgeKind::NoncyclicJump && e.from == e.to {
            out.push(Diagnostic::error(
                Code::JumpSelfLoop,
                line,
                1,
                format!("jump edge from `{}` to itself", e.from),
            ));
        }
        let mismatch = match (e.kind, &e.driver) {
            (EdgeKind::NoncyclicJump, Some(CurrentDriver::Rate(_))) => None,
            (EdgeKind::NoncyclicJump, _) => Some("jump edges need a rate driver"),
            (EdgeKind::CyclicCoupling, Some(CurrentDriver::Amplitude(_))) => None,
            (EdgeKind::CyclicCoupling, _) => Some("cyclic edges need an amplitude driver"),
            (EdgeKind::ContinuousArrow, None) => None,
            (EdgeKind::ContinuousArrow, Some(_)) => {
                Some("arrow edges are timed stage moves and take no driver")
            }
        };
        if let Some(msg) = mismatch {
            out.push(Diagnostic::error(Code::DriverMismatch, line, 1, msg));
        }
        let driver_ok = match &e.driver {
            Some(CurrentDriver::Rate(r)) => r.validate(),
            Some(CurrentDriver::Amplitude(a)) => a.validate(),
            None => Ok(()),
        };
        if let Err(err) = driver_ok {
            out.push(Diagnostic::error(Code::InvalidValue, line, 1, err.to_string()));
        }
        if !(e.delay >= 0.0) || !e.delay.is_finite() {
            out.push(Diagnostic::error(
                Code::InvalidValue,
                line,
                1,
                format!("delay {} must be >= 0", e.delay),
            ));
        }
    }

    for (i, sc) in s.scripts.iter().enumerate() {
        let line = Positions::at(&pos.scripts, i);
        if let ScriptTarget::Component(name) = &sc.target {
            if !known(name) {
                dangling(&mut out, line, name);
            }
        }
        let dims_ok = sc.dimension < s.roster.len()
            && sc.when.as_ref().is_none_or(|(d, _)| *d < s.roster.len());
        if !dims_ok {
            out.push(Diagnostic::error(
                Code::UnknownDimension,
                line,
                1,
                "script refers to a dimension outside the roster",
            ));
        }
    }

    for (i, o) in s.observables.iter().enumerate() {
        let line = Positions::at(&pos.observables, i);
        let names: Vec<&String> = match o {
            Observable::Trace { component, .. } => vec![component],
            Observable::Envelope { from, to, .. } => vec![from, to],
            Observable::Sequence { stages } => stages.iter().collect(),
            Observable::Exclusive {
                intermediates,
                terminal,
            } => intermediates.iter().chain(std::iter::once(terminal)).collect(),
            Observable::Events | Observable::Coexist { .. } => Vec::new(),
        };
        for n in names {
            if !known(n) {
                dangling(&mut out, line, n);
            }
        }
        if let Observable::Coexist { dimension, .. } = o {
            if *dimension >= s.roster.len() {
                out.push(Diagnostic::error(
                    Code::UnknownDimension,
                    line,
                    1,
                    "probe refers to a dimension outside the roster",
                ));
            }
        }
    }

    if s.stop.is_empty() {
        out.push(Diagnostic::error(
            Code::MissingStop,
            pos.stop,
            0,
            "scenario has no stop condition",
        ));
    }
    out
}

/// Lints that do not prevent a run.
pub fn validate_semantics(s: &Scenario) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let has_incoming = |name: &str, kind: Option<EdgeKind>| {
        s.edges
            .iter()
            .any(|e| e.to == name && kind.is_none_or(|k| e.kind == k))
    };

    for e in &s.edges {
        let Some(src) = s.component(&e.from) else { continue };
        if src.status == Status::Ready && !has_incoming(&src.name, Some(EdgeKind::NoncyclicJump)) {
            out.push(Diagnostic::warning(
                Code::DeadEdgeNrule4,
                0,
                format!(
                    "edge {} -> {} starts at a ready component that no jump can realize; it never carries current",
                    e.from, e.to
                ),
            ));
        }
    }

    for c in &s.components {
        if c.status == Status::Realized && c.modulus == 0.0 && !has_incoming(&c.name, None) {
            out.push(Diagnostic::warning(
                Code::Unreachable,
                0,
                format!("component `{}` has zero modulus and no inflow", c.name),
            ));
        }
    }

    let epochs_only = !s.stop.is_empty()
        && s.stop.iter().all(|c| matches!(c, StopCondition::EpochCount(n) if *n > 0));
    if epochs_only && !s.edges.iter().any(|e| e.kind == EdgeKind::NoncyclicJump) {
        out.push(Diagnostic::warning(
            Code::StopNeverMet,
            0,
            "stop waits for collapses but the scenario has no jump edges",
        ));
    }
    out
}
