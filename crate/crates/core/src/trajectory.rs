//! One stochastic trajectory of a scenario.
//!
//! Each step moves modulus along enabled edges, feeds the step's positive
//! inflows to the trigger, and on a hit either collapses the graph at the
//! interpolated hit time (discarding the rest of the step) or logs a no-op and
//! keeps going. Continuous-arrow stage moves, label scripts, phantom marking
//! and probes follow.

use serde::Serialize;
use thiserror::Error;

use crate::current::{ready_emission, CurrentDriver, CurrentEngine, CurrentError};
use crate::graph::{ComponentId, EdgeKind, StateGraph, Status};
use crate::reduction::{
    choose_component, collapse, default_source_exhausted, phantom_sweep, Outcome, ReductionError,
    ReductionEvent, RngStream, TriggerState,
};
use crate::scenario::{Observable, Scenario, ScenarioError, ScenarioFlags, ScriptTarget, StopCondition};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Current(#[from] CurrentError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOptions {
    pub seed: u64,
    pub stream_id: u64,
    /// Defaults to the scenario's `1e-3 * time_scale`.
    pub dt: Option<f64>,
    /// Overrides the scenario flags when set.
    pub flags: Option<ScenarioFlags>,
    /// Negative control: when false, ready components may act as sources.
    pub enforce_nrule4: bool,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            stream_id: 0,
            dt: None,
            flags: None,
            enforce_nrule4: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RealizedVia {
    Initial,
    Collapse,
    Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Realization {
    pub time: f64,
    pub component: String,
    pub via: RealizedVia,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSeries {
    pub component: String,
    /// `(time, modulus)` pairs.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeSample {
    pub time: f64,
    pub from_modulus: f64,
    pub to_modulus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxTime,
    EpochCount,
    Quiescent,
}

/// Per-trajectory audit counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Instrumentation {
    pub steps: u64,
    /// Largest `|s - s_epoch_start| / s_epoch_start` seen between collapses.
    pub max_relative_drift: f64,
    /// Largest `|dP/dt - net_inflow| / max(1e-8, 1e-3 |net_inflow|)`; at most 1 passes.
    pub max_consistency_ratio: f64,
    /// Largest current leaving any ready component.
    pub max_ready_emission: f64,
    /// Steps where a phantom's modulus moved after it was marked.
    pub phantom_changes: u64,
    pub phantoms_marked: u64,
    pub clamps: u64,
    pub total_mismatches: u64,
    /// Steps where two live components carried both probed labels.
    pub coexistence_violations: u64,
    /// Steps where the probed terminal had modulus while no intermediate was realized,
    /// plus terminal realizations without exactly one realized intermediate.
    pub exclusivity_violations: u64,
    /// Largest modulus seen on a component two jumps from the epoch's initial component.
    pub max_second_hop_modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSummary {
    pub name: String,
    pub labels: Vec<String>,
    pub modulus: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalState {
    pub time: f64,
    pub epoch: u64,
    pub total: f64,
    pub components: Vec<ComponentSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub stream_id: u64,
    /// Every hit, collapses and no-ops, in time order.
    pub events: Vec<ReductionEvent>,
    pub realizations: Vec<Realization>,
    pub traces: Vec<TraceSeries>,
    pub envelope: Vec<EnvelopeSample>,
    pub stop_reason: StopReason,
    pub instrumentation: Instrumentation,
    pub final_state: FinalState,
}

impl TrajectoryRecord {
    pub fn collapses(&self) -> impl Iterator<Item = &ReductionEvent> {
        self.events.iter().filter(|e| e.outcome == Outcome::Collapse)
    }

    pub fn collapse_count(&self) -> usize {
        self.collapses().count()
    }

    pub fn noop_count(&self) -> usize {
        self.events.len() - self.collapse_count()
    }

    pub fn first_collapse(&self) -> Option<&ReductionEvent> {
        self.collapses().next()
    }

    pub fn realized(&self, name: &str) -> bool {
        self.realizations.iter().any(|r| r.component == name)
    }
}

struct TraceProbe {
    component: String,
    every: f64,
    next: f64,
    samples: Vec<(f64, f64)>,
}

/// A running trajectory. Use [`run_trajectory`] unless per-step access is needed.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    graph: StateGraph,
    engine: CurrentEngine,
    rng: RngStream,
    trigger: TriggerState,
    flags: ScenarioFlags,
    dt: f64,
    steps: u64,
    events: Vec<ReductionEvent>,
    realizations: Vec<Realization>,
    traces: Vec<TraceProbe>,
    envelope_times: Vec<f64>,
    envelope: Vec<EnvelopeSample>,
    envelope_pair: Option<(String, String)>,
    frozen: Vec<(ComponentId, f64)>,
    epoch_total: f64,
    inst: Instrumentation,
    scratch_end: Vec<f64>,
    stop_reason: Option<StopReason>,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, options: TrajectoryOptions) -> Result<Self, TrajectoryError> {
        let dt = options.dt.unwrap_or_else(|| scenario.default_dt());
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(TrajectoryError::InvalidStep(dt));
        }
        let mut graph = scenario.instantiate()?;
        if !options.enforce_nrule4 {
            graph.disable_nrule4_for_negative_control();
        }
        let mut rng = RngStream::new(options.seed, options.stream_id);
        let trigger = TriggerState::draw(&mut rng);
        let mut traces = Vec::new();
        let mut envelope_times = Vec::new();
        let mut envelope_pair = None;
        for o in &scenario.observables {
            match o {
                Observable::Trace { component, every } => traces.push(TraceProbe {
                    component: component.clone(),
                    every: *every,
                    next: 0.0,
                    samples: Vec::new(),
                }),
                Observable::Envelope { from, to, times } => {
                    envelope_pair = Some((from.clone(), to.clone()));
                    envelope_times = times.clone();
                    envelope_times.sort_by(f64::total_cmp);
                    envelope_times.reverse();
                }
                _ => {}
            }
        }
        let realizations = graph
            .initial()
            .and_then(|id| graph.component(id))
            .map(|c| Realization {
                time: 0.0,
                component: c.name.clone(),
                via: RealizedVia::Initial,
            })
            .into_iter()
            .collect();
        let epoch_total = graph.total();
        let mut sim = Self {
            scenario,
            graph,
            engine: CurrentEngine::default(),
            rng,
            trigger,
            flags: options.flags.unwrap_or(scenario.flags),
            dt,
            steps: 0,
            events: Vec::new(),
            realizations,
            traces,
            envelope_times,
            envelope: Vec::new(),
            envelope_pair,
            frozen: Vec::new(),
            epoch_total,
            inst: Instrumentation::default(),
            scratch_end: Vec::new(),
            stop_reason: None,
        };
        sim.apply_scripts();
        sim.sample_probes();
        Ok(sim)
    }

    pub fn graph(&self) -> &StateGraph {
        &self.graph
    }

    pub fn events(&self) -> &[ReductionEvent] {
        &self.events
    }

    pub fn trigger(&self) -> &TriggerState {
        &self.trigger
    }

    pub fn instrumentation(&self) -> &Instrumentation {
        &self.inst
    }

    pub fn is_finished(&self) -> bool {
        self.stop_reason.is_some()
    }

    fn collapse_count(&self) -> u64 {
        self.events.iter().filter(|e| e.outcome == Outcome::Collapse).count() as u64
    }

    fn check_stop(&self, quiet: bool) -> Option<StopReason> {
        let t = self.graph.time();
        for cond in &self.scenario.stop {
            match *cond {
                StopCondition::EpochCount(n) if self.collapse_count() >= n => {
                    return Some(StopReason::EpochCount)
                }
                StopCondition::MaxTime(tmax) if t >= tmax - 1e-9 * self.dt => {
                    return Some(StopReason::MaxTime)
                }
                StopCondition::Quiescent(eps) if quiet && self.is_quiescent(eps) => {
                    return Some(StopReason::Quiescent)
                }
                _ => {}
            }
        }
        None
    }

    fn is_quiescent(&self, eps: f64) -> bool {
        let t = self.graph.time();
        if self.engine.report().edge_currents.iter().any(|j| j.abs() >= eps) {
            return false;
        }
        if self.scenario.scripts.iter().any(|s| t < s.completes_at()) {
            return false;
        }
        self.graph.edges().iter().all(|e| {
            if !self.graph.is_enabled(e) {
                return true;
            }
            let src = self.graph.modulus(e.source);
            match (&e.driver, e.kind) {
                (_, EdgeKind::ContinuousArrow) => src <= 0.0,
                (Some(CurrentDriver::Rate(r)), _) => r.is_terminated(t, src),
                (Some(CurrentDriver::Amplitude(a)), _) => {
                    a.is_decohered() || src + self.graph.modulus(e.target) <= 0.0
                }
                (None, _) => true,
            }
        })
    }

    /// Advances one step. Returns false once a stop condition holds.
    pub fn step(&mut self) -> Result<bool, TrajectoryError> {
        if self.stop_reason.is_some() {
            return Ok(false);
        }
        if let Some(r) = self.check_stop(false) {
            self.stop_reason = Some(r);
            return Ok(false);
        }
        let dt = self.dt;
        let t0 = self.graph.time();
        self.engine.step(&mut self.graph, dt)?;
        self.steps += 1;
        self.inst.steps = self.steps;

        self.audit_currents();
        let collapsed = self.run_trigger(t0)?;
        if !collapsed {
            self.advance_stages();
        }
        self.apply_scripts();
        self.sweep_phantoms();
        self.audit_state();
        self.sample_probes();

        if let Some(r) = self.check_stop(true) {
            self.stop_reason = Some(r);
            return Ok(false);
        }
        Ok(true)
    }

    fn audit_currents(&mut self) {
        let report = self.engine.report();
        let start = self.engine.start_moduli();
        self.inst.clamps += report.clamped as u64;
        self.inst.max_ready_emission = self
            .inst
            .max_ready_emission
            .max(ready_emission(&self.graph, report));
        for c in self.graph.components() {
            let i = c.id.index();
            let j = report.net_inflow[i];
            let fd = (c.square_modulus - start[i]) / report.dt;
            let ratio = (fd - j).abs() / (1e-3 * j.abs()).max(1e-8);
            if ratio > self.inst.max_consistency_ratio {
                self.inst.max_consistency_ratio = ratio;
            }
        }
        let drift = (self.graph.total() - self.epoch_total).abs() / self.epoch_total.max(f64::MIN_POSITIVE);
        self.inst.max_relative_drift = self.inst.max_relative_drift.max(drift);
        if !self.graph.total_is_consistent() {
            self.inst.total_mismatches += 1;
        }
    }

    /// Feeds the step to the trigger. Returns true when a collapse happened.
    fn run_trigger(&mut self, t0: f64) -> Result<bool, TrajectoryError> {
        let report = self.engine.report();
        let s = self.graph.total();
        let (mut ready_in, mut other_in) = (0.0, 0.0);
        for c in self.graph.components() {
            let j = report.net_inflow[c.id.index()];
            if j > 0.0 {
                if c.status == Status::Ready {
                    ready_in += j;
                } else {
                    other_in += j;
                }
            }
        }
        if ready_in + other_in <= 0.0 {
            return Ok(false);
        }
        if !(s > 0.0) {
            return Err(ReductionError::GraphExhausted(s).into());
        }
        let dt = self.dt;
        let (ready_delta, other_delta) = (ready_in * dt / s, other_in * dt / s);
        let mut remaining = 1.0;
        loop {
            let Some(f) = self
                .trigger
                .advance_epoch(ready_delta * remaining, other_delta * remaining)
            else {
                return Ok(false);
            };
            let at = 1.0 - remaining * (1.0 - f);
            let time = t0 + at * dt;
            let report = self.engine.report();
            let Some(chosen) = choose_component(report, &mut self.rng) else {
                return Ok(false);
            };
            if self.graph.status(chosen) == Some(Status::Ready) {
                self.rollback(at);
                let event = collapse(&mut self.graph, chosen, time)?;
                self.trigger.reset(&mut self.rng);
                self.epoch_total = self.graph.total();
                self.frozen.retain(|(id, _)| self.graph.contains(*id));
                self.realizations.push(Realization {
                    time,
                    component: event.chosen_name.clone(),
                    via: RealizedVia::Collapse,
                });
                self.events.push(event);
                return Ok(true);
            }
            let event = collapse(&mut self.graph, chosen, time)?;
            self.events.push(event);
            self.trigger
                .after_noop(self.flags.noop_resets_trigger, &mut self.rng);
            remaining *= 1.0 - f;
            if remaining <= 0.0 {
                return Ok(false);
            }
        }
    }

    /// Moves every component back to `P0 + frac * (P1 - P0)` for the current step.
    fn rollback(&mut self, frac: f64) {
        self.scratch_end.clear();
        self.scratch_end.resize(self.graph.capacity(), 0.0);
        for c in self.graph.components() {
            self.scratch_end[c.id.index()] = c.square_modulus;
        }
        let ids: Vec<ComponentId> = self.graph.components().map(|c| c.id).collect();
        for id in ids {
            let p0 = self.engine.start_moduli()[id.index()];
            let p1 = self.scratch_end[id.index()];
            self.graph.set_modulus(id, p0 + frac * (p1 - p0));
        }
    }

    fn advance_stages(&mut self) {
        let mut moved = false;
        for i in 0..self.graph.edges().len() {
            let e = &self.graph.edges()[i];
            if e.kind != EdgeKind::ContinuousArrow || !self.graph.is_enabled(e) {
                continue;
            }
            let (src, dst) = (e.source, e.target);
            if e.stage_clock < e.transit_delay || self.graph.modulus(src) <= 0.0 {
                continue;
            }
            let m = self.graph.modulus(src);
            self.graph.transfer(src, dst, m);
            self.graph.set_status(dst, Status::Realized);
            let was_initial = self.graph.initial() == Some(src);
            self.graph.remove(src);
            self.graph.resync_total();
            if was_initial {
                let _ = self.graph.set_initial(dst);
            }
            self.graph.edges_mut()[i].stage_clock = 0.0;
            if let Some(c) = self.graph.component(dst) {
                self.realizations.push(Realization {
                    time: self.graph.time(),
                    component: c.name.clone(),
                    via: RealizedVia::Stage,
                });
            }
            moved = true;
        }
        if moved {
            self.graph.mark_ready_targets();
        }
    }

    fn apply_scripts(&mut self) {
        let t = self.graph.time();
        for script in &self.scenario.scripts {
            if t + 1e-9 * self.dt < script.completes_at() {
                continue;
            }
            let targets: Vec<ComponentId> = self
                .graph
                .components()
                .filter(|c| match &script.target {
                    ScriptTarget::All => true,
                    ScriptTarget::Component(name) => &c.name == name,
                })
                .filter(|c| c.labels.get(script.dimension) == Some(&script.from_label))
                .filter(|c| {
                    script
                        .when
                        .as_ref()
                        .is_none_or(|(d, label)| c.labels.get(*d) == Some(label))
                })
                .map(|c| c.id)
                .collect();
            for id in targets {
                self.graph.set_label(id, script.dimension, &script.to_label);
            }
        }
    }

    fn sweep_phantoms(&mut self) {
        let before = self.graph.total();
        let marked = phantom_sweep(
            &mut self.graph,
            self.engine.report(),
            default_source_exhausted,
            self.flags.phantom_prune,
        );
        if marked.is_empty() {
            return;
        }
        self.inst.phantoms_marked += marked.len() as u64;
        if self.flags.phantom_prune {
            // Pruning only redefines the system; rebase the drift check.
            self.epoch_total += self.graph.total() - before;
        } else {
            for id in marked {
                self.frozen.push((id, self.graph.modulus(id)));
            }
        }
    }

    fn audit_state(&mut self) {
        for &(id, m) in &self.frozen {
            if self.graph.contains(id) && self.graph.modulus(id) != m {
                self.inst.phantom_changes += 1;
            }
        }
        // Two jumps away from the initial component: must stay empty this epoch.
        if let Some(init) = self.graph.initial() {
            let first: Vec<ComponentId> = self
                .graph
                .edges()
                .iter()
                .filter(|e| e.kind == EdgeKind::NoncyclicJump && e.source == init)
                .map(|e| e.target)
                .collect();
            for e in self.graph.edges() {
                if e.kind == EdgeKind::NoncyclicJump
                    && first.contains(&e.source)
                    && e.target != init
                    && !first.contains(&e.target)
                {
                    let m = self.graph.modulus(e.target);
                    if m > self.inst.max_second_hop_modulus {
                        self.inst.max_second_hop_modulus = m;
                    }
                }
            }
        }
        for o in &self.scenario.observables {
            match o {
                Observable::Coexist { dimension, labels } => {
                    let live = |label: &String| {
                        self.graph
                            .components()
                            .any(|c| c.square_modulus > 0.0 && c.labels.get(*dimension) == Some(label))
                    };
                    if live(&labels[0]) && live(&labels[1]) {
                        self.inst.coexistence_violations += 1;
                    }
                }
                Observable::Exclusive {
                    intermediates,
                    terminal,
                } => {
                    let any_realized = intermediates.iter().any(|n| self.realized(n));
                    let terminal_mod = self.graph.find(terminal).map_or(0.0, |id| self.graph.modulus(id));
                    if !any_realized && terminal_mod > 0.0 {
                        self.inst.exclusivity_violations += 1;
                    }
                }
                _ => {}
            }
        }
    }

    fn realized(&self, name: &str) -> bool {
        self.realizations.iter().any(|r| r.component == name)
    }

    fn sample_probes(&mut self) {
        let t = self.graph.time();
        let tol = 1e-9 * self.dt;
        for probe in &mut self.traces {
            while probe.next <= t + tol {
                let m = self.graph.find(&probe.component).map_or(0.0, |id| self.graph.modulus(id));
                probe.samples.push((t, m));
                probe.next += probe.every;
            }
        }
        if let Some((from, to)) = &self.envelope_pair {
            while let Some(&next) = self.envelope_times.last() {
                if next > t + 0.5 * self.dt {
                    break;
                }
                self.envelope_times.pop();
                let m = |name: &str| self.graph.find(name).map_or(0.0, |id| self.graph.modulus(id));
                self.envelope.push(EnvelopeSample {
                    time: t,
                    from_modulus: m(from),
                    to_modulus: m(to),
                });
            }
        }
    }

    /// Runs to completion and returns the record.
    pub fn run(mut self) -> Result<TrajectoryRecord, TrajectoryError> {
        while self.step()? {}
        Ok(self.finish())
    }

    pub fn finish(mut self) -> TrajectoryRecord {
        let stop_reason = self
            .stop_reason
            .or_else(|| self.check_stop(true))
            .unwrap_or(StopReason::MaxTime);
        for o in &self.scenario.observables {
            if let Observable::Exclusive {
                intermediates,
                terminal,
            } = o
            {
                if self.realized(terminal) {
                    let first_terminal = self.realizations.iter().position(|r| &r.component == terminal);
                    let before = first_terminal.map_or(0, |p| {
                        self.realizations[..p]
                            .iter()
                            .filter(|r| intermediates.contains(&r.component))
                            .count()
                    });
                    if before != 1 {
                        self.inst.exclusivity_violations += 1;
                    }
                }
            }
        }
        let final_state = FinalState {
            time: self.graph.time(),
            epoch: self.graph.epoch(),
            total: self.graph.total(),
            components: self
                .graph
                .components()
                .map(|c| ComponentSummary {
                    name: c.name.clone(),
                    labels: c.labels.clone(),
                    modulus: c.square_modulus,
                    status: c.status,
                })
                .collect(),
        };
        TrajectoryRecord {
            stream_id: self.rng.stream_id(),
            events: self.events,
            realizations: self.realizations,
            traces: self
                .traces
                .into_iter()
                .map(|p| TraceSeries {
                    component: p.component,
                    samples: p.samples,
                })
                .collect(),
            envelope: self.envelope,
            stop_reason,
            instrumentation: self.inst,
            final_state,
        }
    }
}

/// Runs one trajectory with the given seed and stream.
pub fn run_trajectory(
    scenario: &Scenario,
    options: TrajectoryOptions,
) -> Result<TrajectoryRecord, TrajectoryError> {
    Simulation::new(scenario, options)?.run()
}
