//! Declarative scenarios: the data model, text format, validation and the
//! built-in catalog.

mod catalog;
mod diagnostics;
mod format;
mod parse;
mod validate;

use serde::Serialize;

use crate::current::CurrentDriver;
use crate::graph::{Edge, EdgeKind, GraphError, StateGraph, Status};

pub use catalog::{
    atomic_emission, build_builtin, catalog, counter, decoherence_rabi, detector,
    detector_observer, hammer, intermediate_observer, neutron_decay, parallel, second_observer,
    spin_continuous, terminal_observation, AtomicEmissionParams, CatalogEntry, UnknownBuiltin,
    CATALOG_NAMES,
};
pub use diagnostics::{Diagnostic, DiagnosticCode, Severity};
pub use parse::parse;
pub use validate::validate_semantics;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSpec {
    pub name: String,
    pub labels: Vec<String>,
    pub modulus: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
    pub driver: Option<CurrentDriver>,
    /// Stage duration for continuous arrows.
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ScriptTarget {
    Component(String),
    /// Every live component whose label matches.
    All,
}

/// A continuous re-labelling of one roster dimension. It never changes moduli.
///
/// The new label takes effect at `t_start + duration` and from then on applies
/// to every matching component, including ones that appear later.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelScript {
    pub target: ScriptTarget,
    pub dimension: usize,
    pub from_label: String,
    pub to_label: String,
    pub t_start: f64,
    pub duration: f64,
    /// Optional guard: only components whose label in that dimension equals the value.
    pub when: Option<(usize, String)>,
}

impl LabelScript {
    pub fn completes_at(&self) -> f64 {
        self.t_start + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StopCondition {
    MaxTime(f64),
    EpochCount(u64),
    /// All currents below the threshold and nothing pending.
    Quiescent(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Observable {
    Trace { component: String, every: f64 },
    Events,
    Sequence { stages: Vec<String> },
    Envelope { from: String, to: String, times: Vec<f64> },
    Coexist { dimension: usize, labels: [String; 2] },
    Exclusive { intermediates: Vec<String>, terminal: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScenarioFlags {
    pub phantom_prune: bool,
    pub noop_resets_trigger: bool,
}

impl Default for ScenarioFlags {
    fn default() -> Self {
        Self {
            phantom_prune: false,
            noop_resets_trigger: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Characteristic time of the scenario; the default step is 1e-3 of it.
    pub time_scale: f64,
    pub roster: Vec<String>,
    pub components: Vec<ComponentSpec>,
    pub edges: Vec<EdgeSpec>,
    pub scripts: Vec<LabelScript>,
    pub stop: Vec<StopCondition>,
    pub observables: Vec<Observable>,
    pub flags: ScenarioFlags,
}

impl Scenario {
    pub fn new(name: impl Into<String>, roster: &[&str]) -> Self {
        Self {
            name: name.into(),
            time_scale: 1.0,
            roster: roster.iter().map(|s| s.to_string()).collect(),
            components: Vec::new(),
            edges: Vec::new(),
            scripts: Vec::new(),
            stop: Vec::new(),
            observables: Vec::new(),
            flags: ScenarioFlags::default(),
        }
    }

    pub fn default_dt(&self) -> f64 {
        1e-3 * self.time_scale
    }

    pub fn dimension(&self, name: &str) -> Option<usize> {
        self.roster.iter().position(|d| d == name)
    }

    pub fn component(&self, name: &str) -> Option<&ComponentSpec> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn add_component(&mut self, name: &str, labels: &[&str], modulus: f64, status: Status) {
        self.components.push(ComponentSpec {
            name: name.into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            modulus,
            status,
        });
    }

    pub fn add_edge(&mut self, from: &str, to: &str, kind: EdgeKind, driver: Option<CurrentDriver>) {
        self.edges.push(EdgeSpec {
            from: from.into(),
            to: to.into(),
            kind,
            driver,
            delay: 0.0,
        });
    }

    pub fn add_arrow(&mut self, from: &str, to: &str, delay: f64) {
        self.edges.push(EdgeSpec {
            from: from.into(),
            to: to.into(),
            kind: EdgeKind::ContinuousArrow,
            driver: None,
            delay,
        });
    }

    /// Structural checks shared by the parser and the programmatic builders.
    pub fn structural_diagnostics(&self) -> Vec<Diagnostic> {
        validate::structural(self, &parse::Positions::default())
    }

    /// Canonical text form. Parsing it yields an identical scenario.
    pub fn to_text(&self) -> String {
        format::serialize(self)
    }

    /// Builds the initial state graph.
    pub fn instantiate(&self) -> Result<StateGraph, ScenarioError> {
        let errors: Vec<Diagnostic> = self
            .structural_diagnostics()
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .collect();
        if !errors.is_empty() {
            return Err(ScenarioError::Invalid(errors));
        }
        let mut graph = StateGraph::new(self.roster.clone());
        for c in &self.components {
            graph.add_component(c.name.clone(), c.labels.clone(), c.modulus, c.status)?;
        }
        for e in &self.edges {
            let source = graph.find(&e.from).expect("validated reference");
            let target = graph.find(&e.to).expect("validated reference");
            graph.add_edge(Edge::new(source, target, e.kind, e.driver.clone(), e.delay))?;
        }
        graph.mark_ready_targets();
        Ok(graph)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario is invalid:\n{}", render(.0))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn render(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}
