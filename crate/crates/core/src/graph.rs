//! Superpositions as graphs of complete components.
//!
//! A [`StateGraph`] holds every component of one trajectory's superposition
//! together with the typed interaction edges between them. Component status
//! (realized / ready / phantom) is stored on the node and only changes through
//! the reduction engine; whether an edge may carry current is derived from the
//! status of its endpoints, so a ready component can never act as a source.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::current::CurrentDriver;

/// Relative tolerance for the incrementally maintained total modulus.
pub const TOTAL_RELATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentId(pub u32);

impl ComponentId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for ComponentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Realized,
    /// Created by a noncyclic jump and not yet chosen. Receives current, never transmits it.
    Ready,
    /// A ready component whose inflow has ended. Its modulus is frozen.
    Phantom,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Realized => "realized",
            Status::Ready => "ready",
            Status::Phantom => "phantom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: ComponentId,
    pub name: String,
    /// One label per roster dimension, in roster order.
    pub labels: Vec<String>,
    pub square_modulus: f64,
    pub status: Status,
    pub epoch_born: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Continuous, classical stage progression of a single component.
    ContinuousArrow,
    /// A discontinuous one-way quantum jump. Its target is a ready state.
    NoncyclicJump,
    /// Reversible coherent exchange between two realized components.
    CyclicCoupling,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::ContinuousArrow => "arrow",
            EdgeKind::NoncyclicJump => "jump",
            EdgeKind::CyclicCoupling => "cyclic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: ComponentId,
    pub target: ComponentId,
    pub kind: EdgeKind,
    /// Current driver; `None` for continuous arrows, which move a whole component.
    pub driver: Option<CurrentDriver>,
    /// Stage duration of a continuous arrow, in simulated seconds.
    pub transit_delay: f64,
    /// Time the source has spent realized since the arrow became enabled.
    pub(crate) stage_clock: f64,
}

impl Edge {
    pub fn new(
        source: ComponentId,
        target: ComponentId,
        kind: EdgeKind,
        driver: Option<CurrentDriver>,
        transit_delay: f64,
    ) -> Self {
        Self {
            source,
            target,
            kind,
            driver,
            transit_delay,
            stage_clock: 0.0,
        }
    }

    pub fn stage_clock(&self) -> f64 {
        self.stage_clock
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("square modulus must be non-negative and finite, got {0}")]
    NegativeModulus(f64),
    #[error("component `{name}` has {got} labels but the roster has {expected} dimensions")]
    IncompleteComponent {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("duplicate component name `{0}`")]
    DuplicateComponent(String),
    #[error("unknown component {0}")]
    UnknownComponent(ComponentId),
    #[error("noncyclic jump from {0} to itself")]
    JumpSelfLoop(ComponentId),
}

/// The full superposition of one trajectory at simulated time `time`.
#[derive(Debug, Clone)]
pub struct StateGraph {
    roster: Vec<String>,
    components: Vec<Option<Component>>,
    edges: Vec<Edge>,
    time: f64,
    epoch: u64,
    total: f64,
    initial: Option<ComponentId>,
    enforce_nrule4: bool,
}

impl StateGraph {
    pub fn new(roster: Vec<String>) -> Self {
        Self {
            roster,
            components: Vec::new(),
            edges: Vec::new(),
            time: 0.0,
            epoch: 0,
            total: 0.0,
            initial: None,
            enforce_nrule4: true,
        }
    }

    pub fn roster(&self) -> &[String] {
        &self.roster
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Total square modulus `s`, maintained incrementally.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Recomputes `s` from scratch.
    pub fn recompute_total(&self) -> f64 {
        self.components().map(|c| c.square_modulus).sum()
    }

    /// The first complete component of the current solution epoch.
    pub fn initial(&self) -> Option<ComponentId> {
        self.initial
    }

    pub fn set_initial(&mut self, id: ComponentId) -> Result<(), GraphError> {
        self.get(id)?;
        self.initial = Some(id);
        Ok(())
    }

    /// Number of component slots ever allocated (removed components keep their slot).
    pub fn capacity(&self) -> usize {
        self.components.len()
    }

    pub fn add_component(
        &mut self,
        name: impl Into<String>,
        labels: Vec<String>,
        modulus: f64,
        status: Status,
    ) -> Result<ComponentId, GraphError> {
        let name = name.into();
        if !(modulus >= 0.0) || !modulus.is_finite() {
            return Err(GraphError::NegativeModulus(modulus));
        }
        if labels.len() != self.roster.len() {
            return Err(GraphError::IncompleteComponent {
                name,
                expected: self.roster.len(),
                got: labels.len(),
            });
        }
        if self.components().any(|c| c.name == name) {
            return Err(GraphError::DuplicateComponent(name));
        }
        let id = ComponentId(self.components.len() as u32);
        self.components.push(Some(Component {
            id,
            name,
            labels,
            square_modulus: modulus,
            status,
            epoch_born: self.epoch,
        }));
        self.total += modulus;
        if self.initial.is_none() && status == Status::Realized && modulus > 0.0 {
            self.initial = Some(id);
        }
        Ok(id)
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<usize, GraphError> {
        self.get(edge.source)?;
        self.get(edge.target)?;
        if edge.kind == EdgeKind::NoncyclicJump && edge.source == edge.target {
            return Err(GraphError::JumpSelfLoop(edge.source));
        }
        self.edges.push(edge);
        Ok(self.edges.len() - 1)
    }

    pub fn get(&self, id: ComponentId) -> Result<&Component, GraphError> {
        self.component(id).ok_or(GraphError::UnknownComponent(id))
    }

    pub fn component(&self, id: ComponentId) -> Option<&Component> {
        self.components.get(id.index()).and_then(Option::as_ref)
    }

    pub(crate) fn component_mut(&mut self, id: ComponentId) -> Option<&mut Component> {
        self.components.get_mut(id.index()).and_then(Option::as_mut)
    }

    pub fn contains(&self, id: ComponentId) -> bool {
        self.component(id).is_some()
    }

    pub fn find(&self, name: &str) -> Option<ComponentId> {
        self.components().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn components(&self) -> impl Iterator<Item = &Component> {
        self.components.iter().filter_map(Option::as_ref)
    }

    pub fn modulus(&self, id: ComponentId) -> f64 {
        self.component(id).map_or(0.0, |c| c.square_modulus)
    }

    pub fn status(&self, id: ComponentId) -> Option<Status> {
        self.component(id).map(|c| c.status)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub(crate) fn edges_mut(&mut self) -> &mut [Edge] {
        &mut self.edges
    }

    /// Sets a modulus and keeps `s` in step.
    pub(crate) fn set_modulus(&mut self, id: ComponentId, value: f64) {
        if let Some(c) = self.components.get_mut(id.index()).and_then(Option::as_mut) {
            let value = value.max(0.0);
            self.total += value - c.square_modulus;
            c.square_modulus = value;
        }
    }

    /// Moves `amount` of modulus from `from` to `to`. `s` is untouched.
    pub(crate) fn transfer(&mut self, from: ComponentId, to: ComponentId, amount: f64) {
        if let Some(c) = self.component_mut(from) {
            c.square_modulus = (c.square_modulus - amount).max(0.0);
        }
        if let Some(c) = self.component_mut(to) {
            c.square_modulus += amount;
        }
    }

    pub(crate) fn set_status(&mut self, id: ComponentId, status: Status) {
        if let Some(c) = self.component_mut(id) {
            c.status = status;
        }
    }

    pub(crate) fn set_label(&mut self, id: ComponentId, dim: usize, label: &str) {
        if let Some(c) = self.component_mut(id) {
            if let Some(slot) = c.labels.get_mut(dim) {
                if slot != label {
                    *slot = label.to_owned();
                }
            }
        }
    }

    pub(crate) fn remove(&mut self, id: ComponentId) {
        if let Some(slot) = self.components.get_mut(id.index()) {
            if let Some(c) = slot.take() {
                self.total -= c.square_modulus;
            }
        }
        if self.initial == Some(id) {
            self.initial = None;
        }
    }

    pub(crate) fn bump_epoch(&mut self) {
        self.epoch += 1;
    }

    /// Resets the incremental total to the recomputed sum.
    pub(crate) fn resync_total(&mut self) {
        self.total = self.recompute_total();
    }

    /// Checks the incremental total against a full recompute.
    pub fn total_is_consistent(&self) -> bool {
        let exact = self.recompute_total();
        (self.total - exact).abs() <= TOTAL_RELATIVE_TOLERANCE * exact.max(f64::MIN_POSITIVE)
            || (self.total - exact).abs() < 1e-300
    }

    /// Negative control only: lets ready components act as edge sources.
    #[doc(hidden)]
    pub fn disable_nrule4_for_negative_control(&mut self) {
        self.enforce_nrule4 = false;
    }

    pub fn nrule4_enforced(&self) -> bool {
        self.enforce_nrule4
    }

    /// Whether `edge` may carry current (or progress a stage) right now.
    pub fn is_enabled(&self, edge: &Edge) -> bool {
        let (Some(src), Some(dst)) = (self.component(edge.source), self.component(edge.target))
        else {
            return false;
        };
        if dst.status == Status::Phantom {
            return false;
        }
        let transmits = |s: Status| match s {
            Status::Realized => true,
            Status::Ready => !self.enforce_nrule4,
            Status::Phantom => false,
        };
        match edge.kind {
            EdgeKind::CyclicCoupling => transmits(src.status) && transmits(dst.status),
            _ => transmits(src.status),
        }
    }

    /// Indices of edges whose source is realized and whose target is not a phantom.
    pub fn enabled_edges(&self) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| self.is_enabled(e))
            .map(|(i, _)| i)
            .collect()
    }

    /// Marks components first reached in this epoch through a noncyclic jump from a
    /// realized component as ready. Returns the newly marked ids.
    pub fn mark_ready_targets(&mut self) -> Vec<ComponentId> {
        let mut marked = Vec::new();
        for i in 0..self.edges.len() {
            let edge = &self.edges[i];
            if edge.kind != EdgeKind::NoncyclicJump {
                continue;
            }
            let (source, target) = (edge.source, edge.target);
            let source_realized = self.status(source) == Some(Status::Realized);
            let Some(t) = self.component(target) else {
                continue;
            };
            if source_realized
                && t.status == Status::Realized
                && t.square_modulus == 0.0
                && Some(target) != self.initial
            {
                let epoch = self.epoch;
                if let Some(c) = self.component_mut(target) {
                    c.status = Status::Ready;
                    c.epoch_born = epoch;
                }
                marked.push(target);
            }
        }
        marked
    }

    /// Components reachable from `start` along edge directions (both ways for
    /// cyclic couplings), not including `start` itself.
    pub fn reachable_from(&self, start: ComponentId) -> Vec<bool> {
        let mut seen = vec![false; self.components.len()];
        let mut stack = vec![start];
        if let Some(s) = seen.get_mut(start.index()) {
            *s = true;
        }
        while let Some(node) = stack.pop() {
            for e in &self.edges {
                let next = if e.source == node {
                    Some(e.target)
                } else if e.kind == EdgeKind::CyclicCoupling && e.target == node {
                    Some(e.source)
                } else {
                    None
                };
                if let Some(n) = next {
                    if self.contains(n) && !seen[n.index()] {
                        seen[n.index()] = true;
                        stack.push(n);
                    }
                }
            }
        }
        if let Some(s) = seen.get_mut(start.index()) {
            *s = false;
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::current::RateDriver;

    fn labels(ls: &[&str]) -> Vec<String> {
        ls.iter().map(|s| s.to_string()).collect()
    }

    fn jump(graph: &mut StateGraph, a: ComponentId, b: ComponentId) {
        graph
            .add_edge(Edge::new(
                a,
                b,
                EdgeKind::NoncyclicJump,
                Some(CurrentDriver::Rate(RateDriver::Constant { rate: 0.1 })),
                0.0,
            ))
            .unwrap();
    }

    #[test]
    fn add_component_tracks_total() {
        let mut g = StateGraph::new(labels(&["particle", "detector"]));
        g.add_component("root", labels(&["psi", "d0"]), 1.0, Status::Realized)
            .unwrap();
        assert_eq!(g.total(), 1.0);
        g.add_component("dw", labels(&["-", "d_w"]), 0.0, Status::Ready)
            .unwrap();
        assert_eq!(g.total(), 1.0);
        let err = g
            .add_component("bad", labels(&["psi", "d0"]), -0.1, Status::Realized)
            .unwrap_err();
        assert_eq!(err, GraphError::NegativeModulus(-0.1));
        assert_eq!(g.total(), 1.0);
    }

    #[test]
    fn partial_label_set_is_rejected() {
        let mut g = StateGraph::new(labels(&["detector", "observer"]));
        let err = g
            .add_component("root", labels(&["d0"]), 1.0, Status::Realized)
            .unwrap_err();
        assert!(matches!(err, GraphError::IncompleteComponent { expected: 2, got: 1, .. }));
    }

    #[test]
    fn jump_self_loop_rejected() {
        let mut g = StateGraph::new(labels(&["x"]));
        let a = g.add_component("a", labels(&["a"]), 1.0, Status::Realized).unwrap();
        let err = g
            .add_edge(Edge::new(a, a, EdgeKind::NoncyclicJump, None, 0.0))
            .unwrap_err();
        assert_eq!(err, GraphError::JumpSelfLoop(a));
    }

    #[test]
    fn detector_jump_target_becomes_ready() {
        let mut g = StateGraph::new(labels(&["detector"]));
        let root = g.add_component("root", labels(&["d0"]), 1.0, Status::Realized).unwrap();
        let dw = g.add_component("dw", labels(&["d_w"]), 0.0, Status::Realized).unwrap();
        jump(&mut g, root, dw);
        assert_eq!(g.mark_ready_targets(), vec![dw]);
        assert_eq!(g.status(dw), Some(Status::Ready));
        assert!(g.mark_ready_targets().is_empty());
    }

    #[test]
    fn cyclic_and_arrow_targets_stay_realized() {
        let mut g = StateGraph::new(labels(&["state"]));
        let a = g.add_component("a", labels(&["A"]), 1.0, Status::Realized).unwrap();
        let b = g.add_component("b", labels(&["B"]), 0.0, Status::Realized).unwrap();
        let c = g.add_component("c", labels(&["C"]), 0.0, Status::Realized).unwrap();
        g.add_edge(Edge::new(a, b, EdgeKind::CyclicCoupling, None, 0.0)).unwrap();
        g.add_edge(Edge::new(b, c, EdgeKind::ContinuousArrow, None, 1.0)).unwrap();
        assert!(g.mark_ready_targets().is_empty());
        assert!(g.components().all(|c| c.status == Status::Realized));
    }

    #[test]
    fn ready_source_disables_edge() {
        let mut g = StateGraph::new(labels(&["counter"]));
        let c0 = g.add_component("C0", labels(&["0"]), 1.0, Status::Realized).unwrap();
        let c1 = g.add_component("C1", labels(&["1"]), 0.0, Status::Ready).unwrap();
        let c2 = g.add_component("C2", labels(&["2"]), 0.0, Status::Ready).unwrap();
        jump(&mut g, c0, c1);
        jump(&mut g, c1, c2);
        assert_eq!(g.enabled_edges(), vec![0]);
        g.set_status(c1, Status::Realized);
        assert_eq!(g.enabled_edges(), vec![0, 1]);
    }

    #[test]
    fn empty_graph_has_no_enabled_edges() {
        let g = StateGraph::new(Vec::new());
        assert!(g.enabled_edges().is_empty());
    }

    #[test]
    fn phantom_target_disables_edge() {
        let mut g = StateGraph::new(labels(&["d"]));
        let a = g.add_component("a", labels(&["a"]), 1.0, Status::Realized).unwrap();
        let b = g.add_component("b", labels(&["b"]), 0.2, Status::Phantom).unwrap();
        jump(&mut g, a, b);
        assert!(g.enabled_edges().is_empty());
    }

    #[test]
    fn removal_and_set_modulus_keep_total_consistent() {
        let mut g = StateGraph::new(labels(&["d"]));
        let a = g.add_component("a", labels(&["a"]), 0.7, Status::Realized).unwrap();
        let b = g.add_component("b", labels(&["b"]), 0.3, Status::Ready).unwrap();
        g.transfer(a, b, 0.1);
        g.set_modulus(b, 0.25);
        assert!(g.total_is_consistent());
        g.remove(a);
        assert!(g.total_is_consistent());
        assert!((g.total() - 0.25).abs() < 1e-15);
        assert!(!g.contains(a));
    }
}
