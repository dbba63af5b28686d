//! The acceptance suite: one deterministic pass/fail line per criterion.
//!
//! Reports contain no timings, so two runs with the same options render to
//! identical bytes. Wall-clock durations are returned separately.

use std::f64::consts::{LN_2, PI};
use std::fmt::Write;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::current::AmplitudeDriver;
use crate::ensemble::{half_life, ks_test, run_ensemble, EnsembleConfig, EnsembleRun, EnsembleSummary};
use crate::reduction::Outcome;
use crate::scenario::{
    atomic_emission, build_builtin, counter, decoherence_rabi, neutron_decay, parallel,
    spin_continuous, terminal_observation, AtomicEmissionParams, Scenario, CATALOG_NAMES,
};

/// Branch weights checked for Born-rule recovery.
pub const BORN_WEIGHTS: [f64; 4] = [0.1, 0.3, 0.5, 0.9];
pub const BORN_TRIALS: u64 = 10_000;
pub const COUNTER_TRIALS: u64 = 1_000;
pub const COUNTER_COUNTS: u64 = 4;
pub const PARALLEL_TRIALS: u64 = 10_000;
pub const NO_REDUCTION_TRIALS: u64 = 1_000;
pub const ENVELOPE_TOLERANCE: f64 = 0.02;
pub const DECAY_TRIALS: u64 = 10_000;
pub const KS_ALPHA: f64 = 0.01;
pub const MEDIAN_TOLERANCE: f64 = 0.05;
pub const HALF_LIFE_TRIALS: u64 = 10_000;
pub const HALF_LIFE_SEPARATION: f64 = 5.0;
pub const DRIFT_TOLERANCE: f64 = 1e-9;
pub const RABI_TOLERANCE: f64 = 1e-6;
pub const AUDIT_TRIALS: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcceptanceOptions {
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AcceptanceReport {
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
}

impl AcceptanceReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    /// Fixed-format table, one line per criterion.
    pub fn render(&self) -> String {
        let mut out = format!("acceptance seed={}\n", self.seed);
        for c in &self.criteria {
            let _ = writeln!(
                out,
                "{:>2} {} {:<28} {}",
                c.id,
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        let passed = self.criteria.iter().filter(|c| c.passed).count();
        let _ = writeln!(out, "{passed}/{} criteria passed", self.criteria.len());
        out
    }
}

fn ensemble(scenario: &Scenario, n: u64, opts: &AcceptanceOptions, keep: bool) -> EnsembleRun {
    run_ensemble(
        scenario,
        &EnsembleConfig {
            n,
            seed: opts.seed,
            workers: opts.workers,
            keep_records: keep,
            ..Default::default()
        },
    )
    .expect("catalog scenarios are valid")
}

fn result(id: u8, name: &'static str, passed: bool, detail: String) -> CriterionResult {
    CriterionResult {
        id,
        name,
        passed,
        detail,
    }
}

pub fn born_rule(opts: &AcceptanceOptions) -> CriterionResult {
    let n = BORN_TRIALS as f64;
    let mut passed = true;
    let mut parts = Vec::new();
    for p in BORN_WEIGHTS {
        let s = ensemble(&terminal_observation(p), BORN_TRIALS, opts, false).summary;
        let f = s.frequency("dw");
        let bound = 3.0 * (p * (1.0 - p) / n).sqrt();
        let ok = (f - p).abs() <= bound;
        passed &= ok;
        parts.push(format!("p={p} f={f:.4} |d|={:.4}<={bound:.4}", (f - p).abs()));
    }
    result(1, "born-rule recovery", passed, parts.join("; "))
}

pub fn counter_sequencing(opts: &AcceptanceOptions) -> CriterionResult {
    let run = ensemble(&counter(), COUNTER_TRIALS, opts, true);
    let s = &run.summary;
    let seq = s.sequence.as_ref().expect("counter has a sequence probe");
    let records = run.records.as_deref().unwrap_or_default();
    let full_counts = records
        .iter()
        .filter(|r| r.collapse_count() as u64 == COUNTER_COUNTS)
        .count();
    // A stage is hit before its source runs dry when the collapse leaves modulus behind.
    let early_hits = records
        .iter()
        .flat_map(|r| r.collapses())
        .filter(|e| e.s_after < e.s_before)
        .count();
    let expected_hits = (COUNTER_TRIALS * COUNTER_COUNTS) as usize;
    let passed = seq.passed == COUNTER_TRIALS
        && full_counts as u64 == COUNTER_TRIALS
        && early_hits == expected_hits
        && s.instrumentation.phantoms_marked == 0;
    result(
        2,
        "counter sequencing",
        passed,
        format!(
            "audit {}/{} pass; {full_counts} trajectories with {COUNTER_COUNTS} counts; \
             {early_hits}/{expected_hits} hits before exhaustion; phantoms={}",
            seq.passed, COUNTER_TRIALS, s.instrumentation.phantoms_marked
        ),
    )
}

pub fn parallel_exclusivity(opts: &AcceptanceOptions) -> CriterionResult {
    let s = ensemble(&parallel(), PARALLEL_TRIALS, opts, false).summary;
    let n = PARALLEL_TRIALS as f64;
    let left = s.frequency("Al");
    let right = s.frequency("Ar");
    // Both routes are driven by equal exponential sources.
    let expected = 0.5;
    let bound = 3.0 * (expected * (1.0 - expected) / n).sqrt();
    let one_intermediate = s.branch("Al").map_or(0, |b| b.count) + s.branch("Ar").map_or(0, |b| b.count);
    let passed = s.instrumentation.exclusivity_violations == 0
        && s.instrumentation.max_second_hop_modulus == 0.0
        && s.multiple_intermediates == 0
        && one_intermediate == PARALLEL_TRIALS
        && (left - expected).abs() <= bound;
    result(
        3,
        "parallel exclusivity",
        passed,
        format!(
            "direct 0->f violations={} max second-hop modulus={}; one intermediate in {one_intermediate}/{}; \
             left={left:.4} right={right:.4} |d|={:.4}<={bound:.4}",
            s.instrumentation.exclusivity_violations,
            s.instrumentation.max_second_hop_modulus,
            PARALLEL_TRIALS,
            (left - expected).abs()
        ),
    )
}

/// Envelope of the Rabi contrast, corrected for the oscillation phase at each sample.
pub fn rabi_envelope(summary: &EnsembleSummary, rabi_rate: f64) -> Vec<(f64, f64)> {
    summary
        .envelope
        .iter()
        .map(|p| (p.time, p.mean_contrast / (rabi_rate * p.time).cos()))
        .collect()
}

pub fn no_reduction(opts: &AcceptanceOptions) -> CriterionResult {
    let spin = ensemble(&spin_continuous(), NO_REDUCTION_TRIALS, opts, false).summary;
    let kappa = 1.0;
    let rabi = ensemble(&decoherence_rabi(kappa), NO_REDUCTION_TRIALS, opts, false).summary;
    let omega = 2.0 * PI * 4.0;
    let mut env_ok = rabi.envelope.len() == 3;
    let mut parts = Vec::new();
    for (t, e) in rabi_envelope(&rabi, omega) {
        let expected = (-kappa * t).exp();
        let rel = (e - expected).abs() / expected;
        env_ok &= rel < ENVELOPE_TOLERANCE;
        parts.push(format!("kt={:.3} env={e:.5} rel={rel:.2e}", kappa * t));
    }
    let passed = spin.reduction_events == 0 && rabi.reduction_events == 0 && env_ok;
    result(
        4,
        "no-reduction cases",
        passed,
        format!(
            "spin reductions={} (hits={}); rabi reductions={} (no-op hits={}); {}",
            spin.reduction_events,
            spin.noop_hits,
            rabi.reduction_events,
            rabi.noop_hits,
            parts.join(", ")
        ),
    )
}

pub fn exponential_decay(opts: &AcceptanceOptions) -> CriterionResult {
    let scenario = neutron_decay(1.0);
    let t_max = scenario
        .stop
        .iter()
        .find_map(|c| match c {
            crate::scenario::StopCondition::MaxTime(t) => Some(*t),
            _ => None,
        })
        .unwrap_or(f64::INFINITY);
    let s = ensemble(&scenario, DECAY_TRIALS, opts, false).summary;
    // Hits are only observed before the stop time; compare against the truncated law.
    let norm = 1.0 - (-t_max).exp();
    let ks = ks_test(&s.first_hit_times, |x| (1.0 - (-x).exp()) / norm);
    let hl = half_life(&s);
    let (median, rel) = match &hl {
        Ok(h) => (h.median, (h.median - LN_2).abs() / LN_2),
        Err(_) => (f64::NAN, f64::INFINITY),
    };
    let passed = ks.p_value > KS_ALPHA && rel <= MEDIAN_TOLERANCE;
    result(
        5,
        "exponential decay",
        passed,
        format!(
            "n={} censored={} KS D={:.5} p={:.4}>{KS_ALPHA}; median={median:.4} rel={rel:.4}<={MEDIAN_TOLERANCE}",
            ks.n, s.censored, ks.statistic, ks.p_value
        ),
    )
}

pub fn half_life_ordering(opts: &AcceptanceOptions) -> CriterionResult {
    let shared = atomic_emission(AtomicEmissionParams::default());
    let unshared = atomic_emission(AtomicEmissionParams {
        shared: false,
        ..Default::default()
    });
    let a = half_life(&ensemble(&shared, HALF_LIFE_TRIALS, opts, false).summary);
    let b = half_life(&ensemble(&unshared, HALF_LIFE_TRIALS, opts, false).summary);
    match (a, b) {
        (Ok(a), Ok(b)) => {
            let se = (a.median_std_error.powi(2) + b.median_std_error.powi(2)).sqrt();
            let sep = (a.median - b.median) / se;
            result(
                6,
                "half-life ordering",
                a.median > b.median && sep > HALF_LIFE_SEPARATION,
                format!(
                    "shared T={:.4}+-{:.4} (n={}) unshared T={:.4}+-{:.4} (n={}) separation={sep:.1}se>{HALF_LIFE_SEPARATION}",
                    a.median, a.median_std_error, a.events, b.median, b.median_std_error, b.events
                ),
            )
        }
        (a, b) => result(
            6,
            "half-life ordering",
            false,
            format!("insufficient events: {a:?} {b:?}"),
        ),
    }
}

/// Integrates a resonant pair to `Omega t = pi` and returns the worst deviation
/// from `sin^2(Omega t / 2)` and the pair-weight drift.
pub fn rabi_check(dt: f64) -> (f64, f64) {
    let omega = PI;
    let mut d = AmplitudeDriver::new(omega, 0.0, 0.0);
    let steps = (1.0 / dt).round() as usize;
    let mut worst: f64 = 0.0;
    for k in 1..=steps {
        d.evolve(dt);
        let t = k as f64 * dt;
        worst = worst.max((d.target_population() - (0.5 * omega * t).sin().powi(2)).abs());
    }
    (worst, (d.pair_weight() - 1.0).abs())
}

pub fn conservation(opts: &AcceptanceOptions) -> CriterionResult {
    let mut drift: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    let mut mismatches = 0;
    let mut clamps = 0;
    for name in CATALOG_NAMES {
        let s = build_builtin(name).expect("catalog name");
        let sum = ensemble(&s, AUDIT_TRIALS / 5, opts, false).summary;
        drift = drift.max(sum.instrumentation.max_relative_drift);
        ratio = ratio.max(sum.instrumentation.max_consistency_ratio);
        mismatches += sum.instrumentation.total_mismatches;
        clamps += sum.instrumentation.clamps;
    }
    let (rabi_err, pair_drift) = rabi_check(1e-3);
    let passed = drift <= DRIFT_TOLERANCE
        && ratio <= 1.0
        && mismatches == 0
        && clamps == 0
        && rabi_err <= RABI_TOLERANCE
        && pair_drift <= DRIFT_TOLERANCE;
    result(
        7,
        "conservation and consistency",
        passed,
        format!(
            "max drift={drift:.2e}<={DRIFT_TOLERANCE:e}; current/modulus ratio={ratio:.2e}<=1; total mismatches={mismatches}; \
             clamps={clamps}; rabi |err|={rabi_err:.2e}<={RABI_TOLERANCE:e}; pair drift={pair_drift:.2e}"
        ),
    )
}

pub fn nrule4_audit(opts: &AcceptanceOptions) -> CriterionResult {
    let mut emission: f64 = 0.0;
    let mut phantom_changes = 0;
    let mut phantoms = 0;
    for name in CATALOG_NAMES {
        let s = build_builtin(name).expect("catalog name");
        let sum = ensemble(&s, AUDIT_TRIALS, opts, false).summary;
        emission = emission.max(sum.instrumentation.max_ready_emission);
        phantom_changes += sum.instrumentation.phantom_changes;
        phantoms += sum.instrumentation.phantoms_marked;
    }

    // Negative control: letting ready components transmit must break the audits.
    let control = |s: Scenario| {
        run_ensemble(
            &s,
            &EnsembleConfig {
                n: AUDIT_TRIALS,
                seed: opts.seed,
                workers: opts.workers,
                enforce_nrule4: false,
                ..Default::default()
            },
        )
        .expect("catalog scenarios are valid")
        .summary
    };
    let c = control(counter());
    let counter_failures = c.sequence.as_ref().map_or(0, |q| q.failed);
    let p = control(parallel());
    let parallel_detected = p.instrumentation.exclusivity_violations > 0
        || p.instrumentation.max_second_hop_modulus > 0.0;
    let passed = emission == 0.0
        && phantom_changes == 0
        && phantoms > 0
        && counter_failures > 0
        && parallel_detected;
    result(
        8,
        "nRule-4 structural audit",
        passed,
        format!(
            "ready emission={emission}; phantoms marked={phantoms} moved after marking={phantom_changes}; \
             control: counter audit failures={counter_failures}/{AUDIT_TRIALS}, parallel second-hop modulus={:.3e}",
            p.instrumentation.max_second_hop_modulus
        ),
    )
}

/// Reruns a subset and checks that serial and pooled ensembles agree exactly.
pub fn determinism(opts: &AcceptanceOptions, first: &[CriterionResult]) -> CriterionResult {
    let again = [counter_sequencing(opts), exponential_decay(opts)];
    let rerun_same = again
        .iter()
        .all(|r| first.iter().any(|f| f == r));
    let serial = AcceptanceOptions {
        workers: Some(1),
        ..*opts
    };
    let pooled = AcceptanceOptions {
        workers: Some(4),
        ..*opts
    };
    let a = ensemble(&parallel(), 1_000, &serial, true);
    let b = ensemble(&parallel(), 1_000, &pooled, true);
    let same_pool = a.summary == b.summary && a.records == b.records;
    let events = |r: &EnsembleRun| {
        r.records
            .as_ref()
            .map_or(0, |v| v.iter().map(|t| t.events.len()).sum::<usize>())
    };
    result(
        9,
        "determinism",
        rerun_same && same_pool,
        format!(
            "rerun identical={rerun_same}; serial vs 4 workers identical={same_pool} ({} events, {} collapses)",
            events(&a),
            a.records.as_ref().map_or(0, |v| v
                .iter()
                .flat_map(|t| &t.events)
                .filter(|e| e.outcome == Outcome::Collapse)
                .count())
        ),
    )
}

/// Runs every criterion. Returns the report and each criterion's wall time.
pub fn run_acceptance(opts: &AcceptanceOptions) -> (AcceptanceReport, Vec<Duration>) {
    let mut criteria = Vec::new();
    let mut times = Vec::new();
    let timed = |f: &dyn Fn() -> CriterionResult, criteria: &mut Vec<CriterionResult>, times: &mut Vec<Duration>| {
        let start = Instant::now();
        criteria.push(f());
        times.push(start.elapsed());
    };
    timed(&|| born_rule(opts), &mut criteria, &mut times);
    timed(&|| counter_sequencing(opts), &mut criteria, &mut times);
    timed(&|| parallel_exclusivity(opts), &mut criteria, &mut times);
    timed(&|| no_reduction(opts), &mut criteria, &mut times);
    timed(&|| exponential_decay(opts), &mut criteria, &mut times);
    timed(&|| half_life_ordering(opts), &mut criteria, &mut times);
    timed(&|| conservation(opts), &mut criteria, &mut times);
    timed(&|| nrule4_audit(opts), &mut criteria, &mut times);
    let start = Instant::now();
    let det = determinism(opts, &criteria);
    criteria.push(det);
    times.push(start.elapsed());
    (
        AcceptanceReport {
            seed: opts.seed,
            criteria,
        },
        times,
    )
}
