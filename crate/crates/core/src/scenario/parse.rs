//! Line-oriented scenario parser.
//!
//! ```text
//! file     = { line } ;
//! line     = [ header | record ] [ comment ] newline ;
//! header   = "[" section "]" ;
//! section  = "scenario" | "roster" | "components" | "edges" | "scripts"
//!          | "stop" | "observables" | "flags" ;
//! record   = pair { ws pair } ;
//! pair     = key "=" value ;
//! comment  = "#" { any } ;
//! ```
//!
//! Values never contain whitespace or `#`. Lists are comma separated, complex
//! numbers are `re,im` and piecewise knots are `t:J,t:J,...`.

use std::collections::HashMap;

use num_complex::Complex64;

use super::diagnostics::{Diagnostic, DiagnosticCode as Code};
use super::validate;
use super::{
    ComponentSpec, EdgeSpec, LabelScript, Observable, Scenario, ScenarioFlags, ScriptTarget,
    StopCondition,
};
use crate::current::{AmplitudeDriver, CurrentDriver, RateDriver};
use crate::graph::{EdgeKind, Status};

/// Source lines of parsed items, used to position later diagnostics.
#[derive(Debug, Default, Clone)]
pub(crate) struct Positions {
    pub components: Vec<usize>,
    pub edges: Vec<usize>,
    pub scripts: Vec<usize>,
    pub observables: Vec<usize>,
    pub stop: usize,
}

impl Positions {
    pub fn at(list: &[usize], i: usize) -> usize {
        list.get(i).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    Scenario,
    Roster,
    Components,
    Edges,
    Scripts,
    Stop,
    Observables,
    Flags,
}

impl Section {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "scenario" => Section::Scenario,
            "roster" => Section::Roster,
            "components" => Section::Components,
            "edges" => Section::Edges,
            "scripts" => Section::Scripts,
            "stop" => Section::Stop,
            "observables" => Section::Observables,
            "flags" => Section::Flags,
            _ => return None,
        })
    }
}

struct Record<'a> {
    line: usize,
    pairs: Vec<(&'a str, &'a str, usize)>,
    used: Vec<bool>,
}

impl<'a> Record<'a> {
    fn get(&mut self, key: &str) -> Option<(&'a str, usize)> {
        let i = self.pairs.iter().position(|(k, _, _)| *k == key)?;
        self.used[i] = true;
        Some((self.pairs[i].1, self.pairs[i].2))
    }

    fn first_col(&self) -> usize {
        self.pairs.first().map_or(1, |p| p.2)
    }

    fn required(&mut self, key: &str, diags: &mut Vec<Diagnostic>) -> Option<(&'a str, usize)> {
        let got = self.get(key);
        if got.is_none() {
            diags.push(Diagnostic::error(
                Code::MissingKey,
                self.line,
                self.first_col(),
                format!("missing required key `{key}`"),
            ));
        }
        got
    }

    fn number(&mut self, key: &str, diags: &mut Vec<Diagnostic>) -> Option<f64> {
        let (v, col) = self.get(key)?;
        parse_f64(v, self.line, col, key, diags)
    }

    fn required_number(&mut self, key: &str, diags: &mut Vec<Diagnostic>) -> Option<f64> {
        let (v, col) = self.required(key, diags)?;
        parse_f64(v, self.line, col, key, diags)
    }

    fn finish(&self, diags: &mut Vec<Diagnostic>) {
        for ((k, _, col), used) in self.pairs.iter().zip(&self.used) {
            if !used {
                diags.push(Diagnostic::error(
                    Code::UnknownKey,
                    self.line,
                    *col,
                    format!("unknown key `{k}`"),
                ));
            }
        }
    }
}

fn parse_f64(v: &str, line: usize, col: usize, key: &str, diags: &mut Vec<Diagnostic>) -> Option<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Some(x),
        _ => {
            diags.push(Diagnostic::error(
                Code::InvalidValue,
                line,
                col,
                format!("`{key}` expects a finite number, got `{v}`"),
            ));
            None
        }
    }
}

fn parse_bool(v: &str, line: usize, col: usize, key: &str, diags: &mut Vec<Diagnostic>) -> Option<bool> {
    match v {
        "true" => Some(true),
        "false" => Some(false),
        _ => {
            diags.push(Diagnostic::error(
                Code::InvalidValue,
                line,
                col,
                format!("`{key}` expects true or false, got `{v}`"),
            ));
            None
        }
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').filter(|s| !s.is_empty()).map(str::to_owned).collect()
}

/// Parses scenario text. Returns the scenario, or every error found.
pub fn parse(text: &str) -> Result<Scenario, Vec<Diagnostic>> {
    parse_with_positions(text).map(|(s, _)| s)
}

pub(crate) fn parse_with_positions(text: &str) -> Result<(Scenario, Positions), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut sections: HashMap<Section, Vec<Record<'_>>> = HashMap::new();
    let mut current: Option<Section> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lead = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            match rest.strip_suffix(']').map(str::trim) {
                Some(name) => match Section::from_name(name) {
                    Some(s) => current = Some(s),
                    None => {
                        current = None;
                        diags.push(Diagnostic::error(
                            Code::UnknownSection,
                            line_no,
                            lead + 1,
                            format!("unknown section `[{name}]`"),
                        ));
                    }
                },
                None => diags.push(Diagnostic::error(
                    Code::Syntax,
                    line_no,
                    lead + 1,
                    "unterminated section header",
                )),
            }
            continue;
        }
        let Some(section) = current else {
            if !diags.iter().any(|d| d.code == Code::UnknownSection) {
                diags.push(Diagnostic::error(
                    Code::Syntax,
                    line_no,
                    lead + 1,
                    "record outside of any section",
                ));
            }
            continue;
        };
        let mut pairs = Vec::new();
        let mut offset = 0;
        for token in content.split_whitespace() {
            let pos = content[offset..].find(token).map_or(offset, |p| p + offset);
            offset = pos + token.len();
            match token.split_once('=') {
                Some((k, v)) if !k.is_empty() => pairs.push((k, v, pos + 1)),
                _ => diags.push(Diagnostic::error(
                    Code::Syntax,
                    line_no,
                    pos + 1,
                    format!("expected key=value, got `{token}`"),
                )),
            }
        }
        let used = vec![false; pairs.len()];
        sections.entry(section).or_default().push(Record {
            line: line_no,
            pairs,
            used,
        });
    }

    let mut take = |s: Section| sections.remove(&s).unwrap_or_default();
    let mut scenario = Scenario::new("", &[]);
    let mut pos = Positions::default();

    for mut r in take(Section::Scenario) {
        if let Some((v, _)) = r.get("name") {
            scenario.name = v.to_owned();
        }
        if let Some(x) = r.number("time_scale", &mut diags) {
            if x > 0.0 {
                scenario.time_scale = x;
            } else {
                diags.push(Diagnostic::error(
                    Code::InvalidValue,
                    r.line,
                    r.first_col(),
                    "time_scale must be positive",
                ));
            }
        }
        r.finish(&mut diags);
    }
    if scenario.name.is_empty() {
        diags.push(Diagnostic::error(Code::MissingKey, 0, 0, "missing scenario name"));
    }

    for mut r in take(Section::Roster) {
        while let Some((v, _)) = r.get("dim") {
            scenario.roster.push(v.to_owned());
            // `get` marks the first unused occurrence; consume repeated `dim=` keys too.
            if let Some(i) = r.pairs.iter().position(|(k, _, _)| *k == "dim") {
                r.pairs.remove(i);
                r.used.remove(i);
            }
        }
        r.finish(&mut diags);
    }

    for mut r in take(Section::Components) {
        let line = r.line;
        let name = r.required("id", &mut diags).map(|(v, _)| v.to_owned());
        let labels = r.required("labels", &mut diags).map(|(v, _)| list(v));
        let modulus = r.required_number("modulus", &mut diags);
        let status = match r.get("status") {
            None => Some(Status::Realized),
            Some(("realized", _)) => Some(Status::Realized),
            Some(("ready", _)) => Some(Status::Ready),
            Some(("phantom", _)) => Some(Status::Phantom),
            Some((v, col)) => {
                diags.push(Diagnostic::error(
                    Code::InvalidValue,
                    line,
                    col,
                    format!("unknown status `{v}`"),
                ));
                None
            }
        };
        r.finish(&mut diags);
        if let (Some(name), Some(labels), Some(modulus), Some(status)) = (name, labels, modulus, status) {
            scenario.components.push(ComponentSpec {
                name,
                labels,
                modulus,
                status,
            });
            pos.components.push(line);
        }
    }

    for mut r in take(Section::Edges) {
        let line = r.line;
        let from = r.required("from", &mut diags).map(|(v, _)| v.to_owned());
        let to = r.required("to", &mut diags).map(|(v, _)| v.to_owned());
        let kind = match r.required("kind", &mut diags) {
            Some(("jump", _)) => Some(EdgeKind::NoncyclicJump),
            Some(("arrow", _)) => Some(EdgeKind::ContinuousArrow),
            Some(("cyclic", _)) => Some(EdgeKind::CyclicCoupling),
            Some((v, col)) => {
                diags.push(Diagnostic::error(
                    Code::UnknownEdgeKind,
                    line,
                    col,
                    format!("unknown edge kind `{v}` (expected jump, arrow or cyclic)"),
                ));
                None
            }
            None => None,
        };
        let driver = parse_driver(&mut r, &mut diags);
        let delay = r.number("delay", &mut diags).unwrap_or(0.0);
        r.finish(&mut diags);
        if let (Some(from), Some(to), Some(kind), Some(driver)) = (from, to, kind, driver) {
            scenario.edges.push(EdgeSpec {
                from,
                to,
                kind,
                driver,
                delay,
            });
            pos.edges.push(line);
        }
    }

    for mut r in take(Section::Scripts) {
        let line = r.line;
        let target = r.required("target", &mut diags).map(|(v, _)| {
            if v == "*" {
                ScriptTarget::All
            } else {
                ScriptTarget::Component(v.to_owned())
            }
        });
        let dim = r
            .required("dim", &mut diags)
            .and_then(|(v, col)| dimension(&scenario.roster, v, line, col, &mut diags));
        let from = r.required("from", &mut diags).map(|(v, _)| v.to_owned());
        let to = r.required("to", &mut diags).map(|(v, _)| v.to_owned());
        let start = r.required_number("start", &mut diags);
        let duration = r.required_number("duration", &mut diags);
        let when = match r.get("when") {
            None => Some(None),
            Some((v, col)) => match v.split_once(':') {
                Some((d, label)) => dimension(&scenario.roster, d, line, col, &mut diags)
                    .map(|d| Some((d, label.to_owned()))),
                None => {
                    diags.push(Diagnostic::error(
                        Code::InvalidValue,
                        line,
                        col,
                        format!("`when` expects dim:label, got `{v}`"),
                    ));
                    None
                }
            },
        };
        r.finish(&mut diags);
        if let (Some(target), Some(dimension), Some(from_label), Some(to_label), Some(t_start), Some(duration), Some(when)) =
            (target, dim, from, to, start, duration, when)
        {
            if duration < 0.0 {
                diags.push(Diagnostic::error(Code::InvalidValue, line, 1, "script duration must be >= 0"));
                continue;
            }
            scenario.scripts.push(LabelScript {
                target,
                dimension,
                from_label,
                to_label,
                t_start,
                duration,
                when,
            });
            pos.scripts.push(line);
        }
    }

    for mut r in take(Section::Stop) {
        if pos.stop == 0 {
            pos.stop = r.line;
        }
        if let Some(t) = r.number("max_time", &mut diags) {
            scenario.stop.push(StopCondition::MaxTime(t));
        }
        if let Some((v, col)) = r.get("epochs") {
            match v.parse::<u64>() {
                Ok(n) => scenario.stop.push(StopCondition::EpochCount(n)),
                Err(_) => diags.push(Diagnostic::error(
                    Code::InvalidValue,
                    r.line,
                    col,
                    format!("`epochs` expects a non-negative integer, got `{v}`"),
                )),
            }
        }
        if let Some(eps) = r.number("quiescent", &mut diags) {
            scenario.stop.push(StopCondition::Quiescent(eps));
        }
        r.finish(&mut diags);
    }

    for mut r in take(Section::Observables) {
        let line = r.line;
        let obs = match r.required("probe", &mut diags) {
            Some(("trace", _)) => {
                let component = r.required("component", &mut diags).map(|(v, _)| v.to_owned());
                let every = r.required_number("every", &mut diags);
                match (component, every) {
                    (Some(component), Some(every)) => Some(Observable::Trace { component, every }),
                    _ => None,
                }
            }
            Some(("events", _)) => Some(Observable::Events),
            Some(("sequence", _)) => r
                .required("stages", &mut diags)
                .map(|(v, _)| Observable::Sequence { stages: list(v) }),
            Some(("envelope", _)) => {
                let from = r.required("from", &mut diags).map(|(v, _)| v.to_owned());
                let to = r.required("to", &mut diags).map(|(v, _)| v.to_owned());
                let times = r.required("times", &mut diags).and_then(|(v, col)| {
                    v.split(',')
                        .map(|x| parse_f64(x, line, col, "times", &mut diags))
                        .collect::<Option<Vec<f64>>>()
                });
                match (from, to, times) {
                    (Some(from), Some(to), Some(times)) => Some(Observable::Envelope { from, to, times }),
                    _ => None,
                }
            }
            Some(("coexist", _)) => {
                let dim = r
                    .required("dim", &mut diags)
                    .and_then(|(v, col)| dimension(&scenario.roster, v, line, col, &mut diags));
                let labels = r.required("labels", &mut diags).and_then(|(v, col)| {
                    let l = list(v);
                    if l.len() == 2 {
                        Some([l[0].clone(), l[1].clone()])
                    } else {
                        diags.push(Diagnostic::error(
                            Code::InvalidValue,
                            line,
                            col,
                            "coexist expects exactly two labels",
                        ));
                        None
                    }
                });
                match (dim, labels) {
                    (Some(dimension), Some(labels)) => Some(Observable::Coexist { dimension, labels }),
                    _ => None,
                }
            }
            Some(("exclusive", _)) => {
                let intermediates = r.required("intermediates", &mut diags).map(|(v, _)| list(v));
                let terminal = r.required("final", &mut diags).map(|(v, _)| v.to_owned());
                match (intermediates, terminal) {
                    (Some(intermediates), Some(terminal)) => Some(Observable::Exclusive {
                        intermediates,
                        terminal,
                    }),
                    _ => None,
                }
            }
            Some((v, col)) => {
                diags.push(Diagnostic::error(
                    Code::InvalidValue,
                    line,
                    col,
                    format!("unknown probe `{v}`"),
                ));
                None
            }
            None => None,
        };
        r.finish(&mut diags);
        if let Some(obs) = obs {
            scenario.observables.push(obs);
            pos.observables.push(line);
        }
    }

    let mut flags = ScenarioFlags::default();
    for mut r in take(Section::Flags) {
        if let Some((v, col)) = r.get("phantom_prune") {
            if let Some(b) = parse_bool(v, r.line, col, "phantom_prune", &mut diags) {
                flags.phantom_prune = b;
            }
        }
        if let Some((v, col)) = r.get("noop_resets_trigger") {
            if let Some(b) = parse_bool(v, r.line, col, "noop_resets_trigger", &mut diags) {
                flags.noop_resets_trigger = b;
            }
        }
        r.finish(&mut diags);
    }
    scenario.flags = flags;

    diags.extend(validate::structural(&scenario, &pos));
    let errors: Vec<Diagnostic> = diags
        .into_iter()
        .filter(|d| d.severity == super::Severity::Error)
        .collect();
    if errors.is_empty() {
        Ok((scenario, pos))
    } else {
        Err(errors)
    }
}

fn dimension(roster: &[String], name: &str, line: usize, col: usize, diags: &mut Vec<Diagnostic>) -> Option<usize> {
    let found = roster.iter().position(|d| d == name);
    if found.is_none() {
        diags.push(Diagnostic::error(
            Code::UnknownDimension,
            line,
            col,
            format!("`{name}` is not a roster dimension"),
        ));
    }
    found
}

/// `Some(None)` when no driver is given, `None` on error.
fn parse_driver(r: &mut Record<'_>, diags: &mut Vec<Diagnostic>) -> Option<Option<CurrentDriver>> {
    let line = r.line;
    let Some((kind, col)) = r.get("driver") else {
        return Some(None);
    };
    let driver = match kind {
        "constant" => CurrentDriver::Rate(RateDriver::Constant {
            rate: r.required_number("rate", diags)?,
        }),
        "pulse" => {
            let rate = r.required_number("rate", diags);
            let start = r.required_number("start", diags);
            let end = r.required_number("end", diags);
            CurrentDriver::Rate(RateDriver::Pulse {
                rate: rate?,
                start: start?,
                end: end?,
            })
        }
        "exponential" => CurrentDriver::Rate(RateDriver::ExponentialSource {
            lambda: r.required_number("lambda", diags)?,
        }),
        "piecewise" => {
            let (v, kcol) = r.required("knots", diags)?;
            let mut knots = Vec::new();
            for pair in v.split(',') {
                let Some((t, j)) = pair.split_once(':') else {
                    diags.push(Diagnostic::error(
                        Code::InvalidValue,
                        line,
                        kcol,
                        format!("knot `{pair}` is not t:J"),
                    ));
                    return None;
                };
                knots.push((
                    parse_f64(t, line, kcol, "knots", diags)?,
                    parse_f64(j, line, kcol, "knots", diags)?,
                ));
            }
            CurrentDriver::Rate(RateDriver::Piecewise { knots })
        }
        "amplitude" => {
            let rabi = r.required_number("rabi", diags);
            let detuning = r.number("detuning", diags).unwrap_or(0.0);
            let kappa = r.number("kappa", diags).unwrap_or(0.0);
            let overlap = r.number("overlap", diags).unwrap_or(1.0);
            let c_source = complex(r, "c_source", diags).unwrap_or(Some(Complex64::new(1.0, 0.0)));
            let c_target = complex(r, "c_target", diags).unwrap_or(Some(Complex64::new(0.0, 0.0)));
            CurrentDriver::Amplitude(AmplitudeDriver {
                c_source: c_source?,
                c_target: c_target?,
                rabi_rate: rabi?,
                detuning,
                decoherence_rate: kappa,
                overlap,
            })
        }
        other => {
            diags.push(Diagnostic::error(
                Code::UnknownDriver,
                line,
                col,
                format!("unknown driver `{other}`"),
            ));
            return None;
        }
    };
    let valid = match &driver {
        CurrentDriver::Rate(d) => d.validate(),
        CurrentDriver::Amplitude(d) => d.validate(),
    };
    if let Err(e) = valid {
        diags.push(Diagnostic::error(Code::InvalidValue, line, col, e.to_string()));
        return None;
    }
    Some(Some(driver))
}

/// `None` when absent, `Some(None)` on error.
fn complex(r: &mut Record<'_>, key: &str, diags: &mut Vec<Diagnostic>) -> Option<Option<Complex64>> {
    let (v, col) = r.get(key)?;
    let parsed = v
        .split_once(',')
        .and_then(|(re, im)| Some(Complex64::new(re.parse().ok()?, im.parse().ok()?)));
    if parsed.is_none() {
        diags.push(Diagnostic::error(
            Code::InvalidValue,
            r.line,
            col,
            format!("`{key}` expects re,im, got `{v}`"),
        ));
    }
    Some(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::DiagnosticCode;

    const MINIMAL: &str = "\
[scenario]
name=mini time_scale=1

[roster]
dim=detector
dim=observer

[components]
id=root labels=d0,B0 modulus=1 status=realized
id=dw labels=d_w,B0 modulus=0 status=ready   # capture

[edges]
from=root to=dw kind=jump driver=exponential lambda=0.5

[stop]
max_time=10
";

    fn codes(text: &str) -> Vec<DiagnosticCode> {
        parse(text).unwrap_err().iter().map(|d| d.code).collect()
    }

    #[test]
    fn parses_minimal_file() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.name, "mini");
        assert_eq!(s.roster, vec!["detector", "observer"]);
        assert_eq!(s.components.len(), 2);
        assert_eq!(s.components[1].status, Status::Ready);
        assert_eq!(
            s.edges[0].driver,
            Some(CurrentDriver::Rate(RateDriver::ExponentialSource { lambda: 0.5 }))
        );
        assert_eq!(s.stop, vec![StopCondition::MaxTime(10.0)]);
    }

    #[test]
    fn missing_observer_dimension_is_incomplete() {
        let text = MINIMAL.replace("labels=d_w,B0", "labels=d_w");
        let diags = parse(&text).unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagnosticCode::IncompleteComponent);
        assert_eq!(diags[0].line, 10);
    }

    #[test]
    fn distinct_codes_for_each_structural_error() {
        assert_eq!(
            codes(&MINIMAL.replace("kind=jump", "kind=teleport")),
            vec![DiagnosticCode::UnknownEdgeKind]
        );
        assert_eq!(
            codes(&MINIMAL.replace("to=dw", "to=nowhere")),
            vec![DiagnosticCode::DanglingReference]
        );
        assert_eq!(
            codes(&MINIMAL.replace("modulus=1", "modulus=-0.1")),
            vec![DiagnosticCode::NegativeModulus]
        );
        assert_eq!(
            codes(&MINIMAL.replace("to=dw kind=jump", "to=root kind=jump")),
            vec![DiagnosticCode::JumpSelfLoop]
        );
    }

    #[test]
    fn syntax_errors_are_positioned() {
        let text = MINIMAL.replace("max_time=10", "max_time 10");
        let diags = parse(&text).unwrap_err();
        assert!(diags.iter().any(|d| d.code == DiagnosticCode::Syntax && d.line == 16 && d.column == 1));
        let diags = parse(&MINIMAL.replace("[stop]", "[stopp]")).unwrap_err();
        assert_eq!(diags[0].code, DiagnosticCode::UnknownSection);
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        let diags = parse(&MINIMAL.replace("lambda=0.5", "lambda=0.5 colour=red")).unwrap_err();
        assert_eq!(diags[0].code, DiagnosticCode::UnknownKey);
        assert_eq!(diags[0].column, 57);
        let diags = parse(&MINIMAL.replace("lambda=0.5", "lambda=fast")).unwrap_err();
        assert_eq!(diags[0].code, DiagnosticCode::InvalidValue);
    }

    #[test]
    fn missing_stop_is_an_error() {
        let text = MINIMAL.replace("[stop]\nmax_time=10\n", "");
        assert_eq!(codes(&text), vec![DiagnosticCode::MissingStop]);
    }

    #[test]
    fn scripts_and_probes_resolve_dimensions() {
        let text = format!(
            "{MINIMAL}
[scripts]
target=* dim=observer from=B0 to=B1 start=1 duration=0.5 when=detector:d_d

[observables]
probe=coexist dim=observer labels=B0,B1
probe=trace component=dw every=0.5
"
        );
        let s = parse(&text).unwrap();
        assert_eq!(s.scripts[0].dimension, 1);
        assert_eq!(s.scripts[0].when, Some((0, "d_d".into())));
        assert_eq!(
            s.observables[0],
            Observable::Coexist {
                dimension: 1,
                labels: ["B0".into(), "B1".into()]
            }
        );
        let bad = text.replace("dim=observer from", "dim=retina from");
        assert_eq!(codes(&bad), vec![DiagnosticCode::UnknownDimension]);
    }
}
