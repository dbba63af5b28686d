//! Probability currents along enabled edges.
//!
//! Rate drivers describe one-way currents directly; amplitude drivers carry a
//! coherent two-level pair whose exchange is integrated with classical RK4 and
//! damped by an environment-overlap factor. [`CurrentEngine::step`] moves
//! modulus along every enabled edge for one time step and reports the currents
//! it applied.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ComponentId, EdgeKind, StateGraph, Status};

/// Overlap below which a decohered pair is treated as a frozen local mixture.
pub const DECOHERENCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurrentError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("component {0} is not present in the current report")]
    UnknownComponent(ComponentId),
    #[error("invalid driver: {0}")]
    InvalidDriver(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CurrentDriver {
    Rate(RateDriver),
    Amplitude(AmplitudeDriver),
}

/// One-way current shapes. Every shape yields `J(t) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RateDriver {
    Constant { rate: f64 },
    Pulse { rate: f64, start: f64, end: f64 },
    /// `J(t) = lambda * source_modulus(t)`.
    ExponentialSource { lambda: f64 },
    /// Linear interpolation between `(t, J)` knots; zero outside the knot range.
    Piecewise { knots: Vec<(f64, f64)> },
}

impl RateDriver {
    pub fn validate(&self) -> Result<(), CurrentError> {
        let bad = |msg: String| Err(CurrentError::InvalidDriver(msg));
        match self {
            RateDriver::Constant { rate } if !(*rate >= 0.0 && rate.is_finite()) => {
                bad(format!("constant rate {rate} must be >= 0"))
            }
            RateDriver::Pulse { rate, start, end } => {
                if !(*rate >= 0.0 && rate.is_finite()) {
                    bad(format!("pulse rate {rate} must be >= 0"))
                } else if !(start <= end) {
                    bad(format!("pulse window [{start}, {end}] is empty"))
                } else {
                    Ok(())
                }
            }
            RateDriver::ExponentialSource { lambda } if !(*lambda >= 0.0 && lambda.is_finite()) => {
                bad(format!("exponential lambda {lambda} must be >= 0"))
            }
            RateDriver::Piecewise { knots } => {
                if knots.is_empty() {
                    return bad("piecewise driver needs at least one knot".into());
                }
                if knots.iter().any(|&(_, j)| !(j >= 0.0 && j.is_finite())) {
                    return bad("piecewise currents must be >= 0".into());
                }
                if knots.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                    return bad("piecewise knot times must be strictly increasing".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// True when the current depends on the source modulus rather than on time alone.
    pub fn is_state_dependent(&self) -> bool {
        matches!(self, RateDriver::ExponentialSource { .. })
    }

    /// Transfer out of a source holding `modulus` over `dt`, exact for the
    /// exponential source. Time-driven drivers use their integral instead.
    pub fn draw(&self, modulus: f64, dt: f64) -> f64 {
        match self {
            RateDriver::ExponentialSource { lambda } => modulus * -(-lambda * dt).exp_m1(),
            _ => 0.0,
        }
    }

    /// Instantaneous current at time `t`.
    pub fn current(&self, t: f64, source_modulus: f64) -> f64 {
        match self {
            RateDriver::Constant { rate } => *rate,
            RateDriver::Pulse { rate, start, end } => {
                if t >= *start && t < *end {
                    *rate
                } else {
                    0.0
                }
            }
            RateDriver::ExponentialSource { lambda } => lambda * source_modulus,
            RateDriver::Piecewise { knots } => piecewise_value(knots, t),
        }
    }

    /// Exact integral of a time-only current over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> Option<f64> {
        match self {
            RateDriver::Constant { rate } => Some(rate * (b - a)),
            RateDriver::Pulse { rate, start, end } => {
                let lo = a.max(*start);
                let hi = b.min(*end);
                Some(if hi > lo { rate * (hi - lo) } else { 0.0 })
            }
            RateDriver::ExponentialSource { .. } => None,
            RateDriver::Piecewise { knots } => Some(piecewise_integral(knots, a, b)),
        }
    }

    /// True once the driver can no longer deliver current.
    pub fn is_terminated(&self, t: f64, source_modulus: f64) -> bool {
        match self {
            RateDriver::Constant { rate } => *rate == 0.0 || source_modulus <= 0.0,
            RateDriver::Pulse { end, .. } => t >= *end || source_modulus <= 0.0,
            RateDriver::ExponentialSource { lambda } => *lambda == 0.0 || source_modulus <= 0.0,
            RateDriver::Piecewise { knots } => {
                let last = knots.last().map_or(0.0, |k| k.0);
                (t >= last && piecewise_value(knots, t) == 0.0) || source_modulus <= 0.0
            }
        }
    }
}

fn piecewise_value(knots: &[(f64, f64)], t: f64) -> f64 {
    match knots {
        [] => 0.0,
        [(t0, j0)] => {
            if t == *t0 {
                *j0
            } else {
                0.0
            }
        }
        _ => {
            let first = knots[0].0;
            let last = knots[knots.len() - 1].0;
            if t < first || t > last {
                return 0.0;
            }
            let i = knots.partition_point(|k| k.0 <= t).clamp(1, knots.len() - 1);
            let (ta, ja) = knots[i - 1];
            let (tb, jb) = knots[i];
            ja + (jb - ja) * (t - ta) / (tb - ta)
        }
    }
}

fn piecewise_integral(knots: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (ta, ja) = w[0];
        let (tb, jb) = w[1];
        let lo = a.max(ta);
        let hi = b.min(tb);
        if hi <= lo {
            continue;
        }
        let slope = (jb - ja) / (tb - ta);
        let jl = ja + slope * (lo - ta);
        let jh = ja + slope * (hi - ta);
        total += 0.5 * (jl + jh) * (hi - lo);
    }
    total
}

/// A coherent two-level pair coupled through a cyclic edge.
///
/// `c_source` and `c_target` hold the coherent amplitudes scaled so that
/// `|c_source|^2 + |c_target|^2` equals the pair's total modulus. The observable
/// moduli mix the coherent populations with an even split according to the
/// environment overlap: `P = overlap * |c|^2 + (1 - overlap) * W / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeDriver {
    pub c_source: Complex64,
    pub c_target: Complex64,
    /// Rabi frequency, rad/s.
    pub rabi_rate: f64,
    /// Detuning, rad/s.
    pub detuning: f64,
    /// Environment decoherence rate, 1/s.
    pub decoherence_rate: f64,
    /// `|<E_A|E_B>|`, in `[0, 1]`.
    pub overlap: f64,
}

impl AmplitudeDriver {
    pub fn new(rabi_rate: f64, detuning: f64, decoherence_rate: f64) -> Self {
        Self {
            c_source: Complex64::new(1.0, 0.0),
            c_target: Complex64::new(0.0, 0.0),
            rabi_rate,
            detuning,
            decoherence_rate,
            overlap: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), CurrentError> {
        if !(self.decoherence_rate >= 0.0) {
            return Err(CurrentError::InvalidDriver(format!(
                "decoherence rate {} must be >= 0",
                self.decoherence_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(CurrentError::InvalidDriver(format!(
                "overlap {} must lie in [0, 1]",
                self.overlap
            )));
        }
        if !self.rabi_rate.is_finite() || !self.detuning.is_finite() {
            return Err(CurrentError::InvalidDriver("non-finite Rabi parameters".into()));
        }
        Ok(())
    }

    pub fn pair_weight(&self) -> f64 {
        self.c_source.norm_sqr() + self.c_target.norm_sqr()
    }

    pub fn is_decohered(&self) -> bool {
        self.overlap <= DECOHERENCE_FLOOR
    }

    pub fn source_population(&self) -> f64 {
        let w = self.pair_weight();
        self.overlap * self.c_source.norm_sqr() + (1.0 - self.overlap) * 0.5 * w
    }

    pub fn target_population(&self) -> f64 {
        let w = self.pair_weight();
        self.overlap * self.c_target.norm_sqr() + (1.0 - self.overlap) * 0.5 * w
    }

    fn derivative(&self, cs: Complex64, ct: Complex64) -> (Complex64, Complex64) {
        // i dc/dt = H c,  H = 1/2 [[-delta, Omega], [Omega, delta]]
        let half_o = 0.5 * self.rabi_rate;
        let half_d = 0.5 * self.detuning;
        let minus_i = Complex64::new(0.0, -1.0);
        (
            minus_i * (-half_d * cs + half_o * ct),
            minus_i * (half_o * cs + half_d * ct),
        )
    }

    /// Coherent evolution over `dt` with classical fourth-order Runge-Kutta.
    pub fn evolve(&mut self, dt: f64) {
        let (s0, t0) = (self.c_source, self.c_target);
        let (k1s, k1t) = self.derivative(s0, t0);
        let (k2s, k2t) = self.derivative(s0 + 0.5 * dt * k1s, t0 + 0.5 * dt * k1t);
        let (k3s, k3t) = self.derivative(s0 + 0.5 * dt * k2s, t0 + 0.5 * dt * k2t);
        let (k4s, k4t) = self.derivative(s0 + dt * k3s, t0 + dt * k3t);
        self.c_source = s0 + dt / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
        self.c_target = t0 + dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
    }

    /// Rescales the coherent amplitudes, keeping their phases, so the observable
    /// populations equal the given graph moduli.
    pub fn sync_to(&mut self, source_modulus: f64, target_modulus: f64) {
        let w = source_modulus + target_modulus;
        if w <= 0.0 {
            self.c_source = Complex64::new(0.0, 0.0);
            self.c_target = Complex64::new(0.0, 0.0);
            return;
        }
        if self.is_decohered() {
            return;
        }
        let o = self.overlap;
        let coherent_t = ((target_modulus - (1.0 - o) * 0.5 * w) / o).clamp(0.0, w);
        let coherent_s = w - coherent_t;
        self.c_source = rescale(self.c_source, coherent_s);
        self.c_target = rescale(self.c_target, coherent_t);
    }
}

fn rescale(c: Complex64, norm_sqr: f64) -> Complex64 {
    let current = c.norm_sqr();
    if current > 0.0 {
        let f = (norm_sqr / current).sqrt();
        if (f - 1.0).abs() < 1e-15 {
            c
        } else {
            c * f
        }
    } else {
        Complex64::new(norm_sqr.sqrt(), 0.0)
    }
}

/// Decays the environment overlap over `dt`.
pub fn decohere(driver: &AmplitudeDriver, dt: f64) -> AmplitudeDriver {
    let mut next = driver.clone();
    if driver.decoherence_rate > 0.0 {
        next.overlap *= (-driver.decoherence_rate * dt).exp();
        if next.overlap <= DECOHERENCE_FLOOR {
            next.overlap = 0.0;
        }
    }
    next
}

/// Currents applied during one step.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CurrentReport {
    /// Start of the step.
    pub time: f64,
    pub dt: f64,
    /// Step-averaged current along each edge (source to target), indexed like the graph's edges.
    pub edge_currents: Vec<f64>,
    /// Signed net inflow per component slot.
    pub net_inflow: Vec<f64>,
    pub(crate) present: Vec<bool>,
    /// Sources whose outflow had to be scaled down this step.
    pub clamped: usize,
}

impl CurrentReport {
    /// Current leaving `comp` along enabled edges (step-averaged, nonnegative).
    pub fn outflow(&self, graph: &StateGraph, comp: ComponentId) -> f64 {
        graph
            .edges()
            .iter()
            .zip(&self.edge_currents)
            .map(|(e, &j)| {
                if e.source == comp && j > 0.0 {
                    j
                } else if e.target == comp && j < 0.0 {
                    -j
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// Net inflow into `comp`. Callers clip at zero when using it as a trigger weight.
pub fn current_into(report: &CurrentReport, comp: ComponentId) -> Result<f64, CurrentError> {
    match report.present.get(comp.index()) {
        Some(true) => Ok(report.net_inflow[comp.index()]),
        _ => Err(CurrentError::UnknownComponent(comp)),
    }
}

/// Advances the graph by one step and returns the applied currents.
pub fn step(graph: &mut StateGraph, dt: f64) -> Result<CurrentReport, CurrentError> {
    let mut engine = CurrentEngine::default();
    engine.step(graph, dt)?;
    Ok(engine.report)
}

/// Reusable scratch space for stepping one trajectory.
#[derive(Debug, Default, Clone)]
pub struct CurrentEngine {
    report: CurrentReport,
    start: Vec<f64>,
    avail: Vec<f64>,
    transfers: Vec<f64>,
    given: Vec<f64>,
}

impl CurrentEngine {
    pub fn report(&self) -> &CurrentReport {
        &self.report
    }

    /// Moduli at the start of the last step, indexed by component slot.
    pub fn start_moduli(&self) -> &[f64] {
        &self.start
    }

    pub fn step(
        &mut self,
        graph: &mut StateGraph,
        dt: f64,
    ) -> Result<&CurrentReport, CurrentError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CurrentError::InvalidStep(dt));
        }
        let n = graph.capacity();
        let m = graph.edges().len();
        let t0 = graph.time();

        self.start.clear();
        self.start.resize(n, 0.0);
        self.report.present.clear();
        self.report.present.resize(n, false);
        for c in graph.components() {
            self.start[c.id.index()] = c.square_modulus;
            self.report.present[c.id.index()] = true;
        }
        self.transfers.clear();
        self.transfers.resize(m, 0.0);

        for i in 0..m {
            let enabled = graph.is_enabled(&graph.edges()[i]);
            let (src, dst) = {
                let e = &graph.edges()[i];
                (e.source, e.target)
            };
            let edge = &mut graph.edges_mut()[i];
            match (&mut edge.driver, edge.kind) {
                (_, EdgeKind::ContinuousArrow) => {
                    if enabled && self.start[src.index()] > 0.0 {
                        edge.stage_clock += dt;
                    }
                }
                (Some(CurrentDriver::Rate(r)), _) => {
                    if !enabled {
                        continue;
                    }
                    // Modulus-dependent draws wait for the time-driven transfers.
                    self.transfers[i] = match r.integral(t0, t0 + dt) {
                        Some(x) => x.max(0.0),
                        None => f64::NAN,
                    };
                }
                (Some(CurrentDriver::Amplitude(a)), _) => {
                    if enabled && !a.is_decohered() {
                        let (ps, pt) = (self.start[src.index()], self.start[dst.index()]);
                        a.sync_to(ps, pt);
                        let before = a.target_population();
                        a.evolve(dt);
                        *a = decohere(a, dt);
                        if a.is_decohered() {
                            self.transfers[i] = 0.0;
                        } else {
                            self.transfers[i] = a.target_population() - before;
                        }
                    } else {
                        *a = decohere(a, dt);
                    }
                }
                (None, _) => {}
            }
        }

        // Modulus-dependent sources act on what the other transfers leave behind.
        self.avail.clear();
        self.avail.extend_from_slice(&self.start);
        for (e, &x) in graph.edges().iter().zip(&self.transfers) {
            if !x.is_nan() {
                self.avail[e.source.index()] -= x;
                self.avail[e.target.index()] += x;
            }
        }
        for i in 0..m {
            if self.transfers[i].is_nan() {
                let e = &graph.edges()[i];
                let have = self.avail[e.source.index()].max(0.0);
                self.transfers[i] = match &e.driver {
                    Some(CurrentDriver::Rate(r)) => r.draw(have, dt),
                    _ => 0.0,
                };
            }
        }

        // Clamp so no giver sends more than it holds plus what it receives.
        self.given.clear();
        self.given.resize(n, 0.0);
        self.avail.clear();
        self.avail.extend_from_slice(&self.start);
        for (e, &x) in graph.edges().iter().zip(&self.transfers) {
            let (giver, taker) = if x > 0.0 { (e.source, e.target) } else { (e.target, e.source) };
            self.given[giver.index()] += x.abs();
            self.avail[taker.index()] += x.abs();
        }
        let mut clamped = 0;
        for c in 0..n {
            let (g, have) = (self.given[c], self.avail[c]);
            if g > have && g > 0.0 {
                self.given[c] = have.max(0.0) / g;
                clamped += 1;
                log::warn!(
                    "step at t={t0} overdraws component slot {c} ({g} > {have}); clamping, dt too coarse"
                );
            } else {
                self.given[c] = 1.0;
            }
        }
        if clamped > 0 {
            for (e, x) in graph.edges().iter().zip(self.transfers.iter_mut()) {
                let giver = if *x > 0.0 { e.source } else { e.target };
                *x *= self.given[giver.index()];
            }
        }

        self.report.time = t0;
        self.report.dt = dt;
        self.report.clamped = clamped;
        self.report.edge_currents.clear();
        self.report.edge_currents.resize(m, 0.0);
        self.report.net_inflow.clear();
        self.report.net_inflow.resize(n, 0.0);
        for i in 0..m {
            let x = self.transfers[i];
            if x == 0.0 {
                continue;
            }
            let (src, dst) = (graph.edges()[i].source, graph.edges()[i].target);
            if x > 0.0 {
                graph.transfer(src, dst, x);
            } else {
                graph.transfer(dst, src, -x);
            }
            let j = x / dt;
            self.report.edge_currents[i] = j;
            self.report.net_inflow[dst.index()] += j;
            self.report.net_inflow[src.index()] -= j;
        }
        graph.set_time(t0 + dt);
        Ok(&self.report)
    }
}

/// Ready components never give up modulus: returns the largest current leaving one.
pub fn ready_emission(graph: &StateGraph, report: &CurrentReport) -> f64 {
    graph
        .components()
        .filter(|c| c.status == Status::Ready)
        .map(|c| report.outflow(graph, c.id))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EdgeKind};

    fn two_node(driver: CurrentDriver, kind: EdgeKind) -> (StateGraph, ComponentId, ComponentId) {
        let mut g = StateGraph::new(vec!["x".into()]);
        let a = g.add_component("a", vec!["a".into()], 1.0, Status::Realized).unwrap();
        let target_status = if kind == EdgeKind::NoncyclicJump {
            Status::Ready
        } else {
            Status::Realized
        };
        let b = g.add_component("b", vec!["b".into()], 0.0, target_status).unwrap();
        g.add_edge(Edge::new(a, b, kind, Some(driver), 0.0)).unwrap();
        (g, a, b)
    }

    #[test]
    fn constant_current_linear_transfer() {
        let (mut g, a, b) = two_node(
            CurrentDriver::Rate(RateDriver::Constant { rate: 0.1 }),
            EdgeKind::NoncyclicJump,
        );
        let report = step(&mut g, 0.1).unwrap();
        assert!((g.modulus(a) - 0.99).abs() < 1e-15);
        assert!((g.modulus(b) - 0.01).abs() < 1e-15);
        assert!((g.total() - 1.0).abs() < 1e-15);
        assert!((current_into(&report, b).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn invalid_step_rejected() {
        let (mut g, _, _) = two_node(
            CurrentDriver::Rate(RateDriver::Constant { rate: 0.1 }),
            EdgeKind::NoncyclicJump,
        );
        assert_eq!(step(&mut g, 0.0).unwrap_err(), CurrentError::InvalidStep(0.0));
        assert!(step(&mut g, -1.0).is_err());
    }

    #[test]
    fn signed_net_inflow() {
        let mut g = StateGraph::new(vec!["x".into()]);
        let a = g.add_component("a", vec!["a".into()], 1.0, Status::Realized).unwrap();
        let b = g.add_component("b", vec!["b".into()], 0.5, Status::Realized).unwrap();
        let c = g.add_component("c", vec!["c".into()], 0.0, Status::Ready).unwrap();
        let rate = |r| Some(CurrentDriver::Rate(RateDriver::Constant { rate: r }));
        g.add_edge(Edge::new(a, b, EdgeKind::NoncyclicJump, rate(0.2), 0.0)).unwrap();
        g.add_edge(Edge::new(b, c, EdgeKind::NoncyclicJump, rate(0.05), 0.0)).unwrap();
        let report = step(&mut g, 0.01).unwrap();
        assert!((current_into(&report, b).unwrap() - 0.15).abs() < 1e-12);
        assert!((current_into(&report, c).unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn ready_component_emits_nothing() {
        let mut g = StateGraph::new(vec!["x".into()]);
        let a = g.add_component("a", vec!["a".into()], 1.0, Status::Realized).unwrap();
        let r = g.add_component("r", vec!["r".into()], 0.3, Status::Ready).unwrap();
        let f = g.add_component("f", vec!["f".into()], 0.0, Status::Ready).unwrap();
        let rate = |x| Some(CurrentDriver::Rate(RateDriver::Constant { rate: x }));
        g.add_edge(Edge::new(a, r, EdgeKind::NoncyclicJump, rate(0.2), 0.0)).unwrap();
        g.add_edge(Edge::new(r, f, EdgeKind::NoncyclicJump, rate(5.0), 0.0)).unwrap();
        let report = step(&mut g, 0.01).unwrap();
        assert_eq!(report.outflow(&g, r), 0.0);
        assert_eq!(ready_emission(&g, &report), 0.0);
        assert_eq!(g.modulus(f), 0.0);
        assert!((current_into(&report, r).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn unknown_component_in_report() {
        let (mut g, _, _) = two_node(
            CurrentDriver::Rate(RateDriver::Constant { rate: 0.1 }),
            EdgeKind::NoncyclicJump,
        );
        let report = step(&mut g, 0.1).unwrap();
        assert_eq!(
            current_into(&report, ComponentId(9)).unwrap_err(),
            CurrentError::UnknownComponent(ComponentId(9))
        );
    }

    #[test]
    fn overdraw_is_clamped() {
        let (mut g, a, b) = two_node(
            CurrentDriver::Rate(RateDriver::Constant { rate: 20.0 }),
            EdgeKind::NoncyclicJump,
        );
        let report = step(&mut g, 0.1).unwrap();
        assert_eq!(report.clamped, 1);
        assert_eq!(g.modulus(a), 0.0);
        assert!((g.modulus(b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pulse_integral_is_exact_across_window_edges() {
        let d = RateDriver::Pulse { rate: 0.3, start: 0.25, end: 0.75 };
        assert!((d.integral(0.0, 1.0).unwrap() - 0.15).abs() < 1e-15);
        assert!((d.integral(0.5, 0.6).unwrap() - 0.03).abs() < 1e-15);
        assert_eq!(d.integral(0.8, 0.9).unwrap(), 0.0);
        assert!(d.is_terminated(0.75, 1.0));
        assert!(!d.is_terminated(0.7, 1.0));
    }

    #[test]
    fn piecewise_trapezoid_is_exact() {
        let d = RateDriver::Piecewise { knots: vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)] };
        assert!((d.integral(0.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((d.integral(0.5, 1.5).unwrap() - 0.75).abs() < 1e-15);
        assert!((d.current(0.25, 0.0) - 0.25).abs() < 1e-15);
        assert_eq!(d.current(3.0, 0.0), 0.0);
        assert!(d.is_terminated(2.0, 1.0));
    }

    #[test]
    fn driver_validation() {
        assert!(RateDriver::Constant { rate: -1.0 }.validate().is_err());
        assert!(RateDriver::Piecewise { knots: vec![(1.0, 0.0), (0.5, 1.0)] }.validate().is_err());
        assert!(RateDriver::Piecewise { knots: vec![(0.0, -1.0)] }.validate().is_err());
        assert!(RateDriver::Pulse { rate: 1.0, start: 2.0, end: 1.0 }.validate().is_err());
        let mut a = AmplitudeDriver::new(1.0, 0.0, -0.1);
        assert!(a.validate().is_err());
        a.decoherence_rate = 0.0;
        a.overlap = 1.5;
        assert!(a.validate().is_err());
    }

    #[test]
    fn decohere_without_environment_is_identity() {
        let d = AmplitudeDriver::new(1.0, 0.0, 0.0);
        assert_eq!(decohere(&d, 10.0).overlap, 1.0);
    }

    #[test]
    fn decohere_reaches_floor() {
        let d = AmplitudeDriver::new(1.0, 0.0, 5.0);
        let d = decohere(&d, 10.0);
        assert_eq!(d.overlap, 0.0);
        assert!(d.is_decohered());
    }

    #[test]
    fn decohered_pair_carries_no_current() {
        let mut driver = AmplitudeDriver::new(std::f64::consts::PI, 0.0, 0.0);
        driver.overlap = 0.0;
        let (mut g, _, b) = two_node(CurrentDriver::Amplitude(driver), EdgeKind::CyclicCoupling);
        let report = step(&mut g, 0.01).unwrap();
        assert_eq!(report.edge_currents[0], 0.0);
        assert_eq!(g.modulus(b), 0.0);
    }
}
