//! Ensembles of independent trajectories and their statistics.
//!
//! Trajectory `k` of a run always uses stream `(seed, k)`, so results do not
//! depend on how trajectories are spread over workers. Each trajectory is
//! reduced to a small digest; an [`EnsembleAccumulator`] holds digests and
//! merges by concatenation, and [`EnsembleAccumulator::finish`] sorts them by
//! stream before computing anything, which makes merging exact and
//! order-independent.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::scenario::{Observable, Scenario, ScenarioError, ScenarioFlags};
use crate::trajectory::{
    run_trajectory, EnvelopeSample, Instrumentation, StopReason, TrajectoryError, TrajectoryOptions,
    TrajectoryRecord,
};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("ensemble size must be at least 1")]
    Empty,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("trajectory {stream}: {source}")]
    Trajectory {
        stream: u64,
        #[source]
        source: TrajectoryError,
    },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("half-life needs at least {needed} events, got {got}")]
    InsufficientEvents { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub n: u64,
    pub seed: u64,
    pub dt: Option<f64>,
    pub flags: Option<ScenarioFlags>,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
    /// Keep full trajectory records in the result.
    pub keep_records: bool,
    /// Negative control switch; see [`TrajectoryOptions::enforce_nrule4`].
    pub enforce_nrule4: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n: 1,
            seed: 0,
            dt: None,
            flags: None,
            workers: None,
            keep_records: false,
            enforce_nrule4: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SequenceViolation {
    /// Position in the realized stage list.
    pub position: usize,
    pub expected: String,
    pub found: String,
    /// Stage index of the component found at `position`.
    pub found_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SequenceAudit {
    pub passed: bool,
    pub violation: Option<SequenceViolation>,
}

/// Passes iff the realized stages, in order, are `stages[0], stages[1], ...`
/// with no omission. Components outside `stages` are ignored.
pub fn audit_sequence(record: &TrajectoryRecord, stages: &[String]) -> SequenceAudit {
    let indices = record
        .realizations
        .iter()
        .filter_map(|r| stages.iter().position(|s| *s == r.component));
    for (position, idx) in indices.enumerate() {
        if idx != position {
            return SequenceAudit {
                passed: false,
                violation: Some(SequenceViolation {
                    position,
                    expected: stages.get(position).cloned().unwrap_or_default(),
                    found: stages[idx].clone(),
                    found_index: idx,
                }),
            };
        }
    }
    SequenceAudit {
        passed: true,
        violation: None,
    }
}

/// Per-trajectory reduction of a record.
#[derive(Debug, Clone, PartialEq)]
struct Digest {
    stream_id: u64,
    collapses: u64,
    noops: u64,
    first_collapse: Option<(String, f64)>,
    realized: Vec<String>,
    sequence: Option<SequenceAudit>,
    envelope: Vec<EnvelopeSample>,
    instrumentation: Instrumentation,
    stop_reason: StopReason,
}

impl Digest {
    fn new(record: &TrajectoryRecord, stages: Option<&[String]>) -> Self {
        Self {
            stream_id: record.stream_id,
            collapses: record.collapse_count() as u64,
            noops: record.noop_count() as u64,
            first_collapse: record
                .first_collapse()
                .map(|e| (e.chosen_name.clone(), e.time)),
            realized: record.realizations.iter().map(|r| r.component.clone()).collect(),
            sequence: stages.map(|s| audit_sequence(record, s)),
            envelope: record.envelope.clone(),
            instrumentation: record.instrumentation,
            stop_reason: record.stop_reason,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnsembleAccumulator {
    digests: Vec<Digest>,
}

impl EnsembleAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, record: &TrajectoryRecord, scenario: &Scenario) {
        self.digests.push(Digest::new(record, sequence_stages(scenario)));
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.digests.extend(other.digests);
        self
    }

    pub fn len(&self) -> usize {
        self.digests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digests.is_empty()
    }

    pub fn finish(mut self, scenario: &Scenario, seed: u64, dt: f64) -> EnsembleSummary {
        self.digests.sort_by_key(|d| d.stream_id);
        summarize(&self.digests, scenario, seed, dt)
    }
}

fn sequence_stages(scenario: &Scenario) -> Option<&[String]> {
    scenario.observables.iter().find_map(|o| match o {
        Observable::Sequence { stages } => Some(stages.as_slice()),
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchFrequency {
    /// Component chosen by the first collapse, or `none`.
    pub branch: String,
    pub count: u64,
    pub frequency: f64,
    /// Binomial standard error `sqrt(f (1 - f) / N)`.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceSummary {
    pub passed: u64,
    pub failed: u64,
    /// First failing trajectory and its violation.
    pub first_violation: Option<(u64, SequenceViolation)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopePoint {
    pub time: f64,
    pub mean_from: f64,
    pub mean_to: f64,
    /// Mean of `(from - to) / (from + to)`.
    pub mean_contrast: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct InstrumentationSummary {
    pub max_relative_drift: f64,
    pub max_consistency_ratio: f64,
    pub max_ready_emission: f64,
    pub phantom_changes: u64,
    pub phantoms_marked: u64,
    pub clamps: u64,
    pub total_mismatches: u64,
    pub coexistence_violations: u64,
    pub exclusivity_violations: u64,
    pub max_second_hop_modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub scenario: String,
    pub n: u64,
    pub seed: u64,
    pub dt: f64,
    /// Collapses across all trajectories.
    pub reduction_events: u64,
    /// Hits on components without ready states.
    pub noop_hits: u64,
    /// Trajectories that ended without any collapse.
    pub censored: u64,
    pub branches: Vec<BranchFrequency>,
    /// Times of each trajectory's first collapse, sorted.
    #[serde(skip)]
    pub first_hit_times: Vec<f64>,
    pub first_hit_histogram: Histogram,
    pub sequence: Option<SequenceSummary>,
    /// Trajectories realizing more than one of the probed intermediates.
    pub multiple_intermediates: u64,
    pub envelope: Vec<EnvelopePoint>,
    pub stop_reasons: BTreeMap<String, u64>,
    pub instrumentation: InstrumentationSummary,
}

impl EnsembleSummary {
    pub fn branch(&self, name: &str) -> Option<&BranchFrequency> {
        self.branches.iter().find(|b| b.branch == name)
    }

    pub fn frequency(&self, name: &str) -> f64 {
        self.branch(name).map_or(0.0, |b| b.frequency)
    }
}

const HISTOGRAM_BINS: usize = 20;

fn summarize(digests: &[Digest], scenario: &Scenario, seed: u64, dt: f64) -> EnsembleSummary {
    let n = digests.len() as u64;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut times = Vec::new();
    let mut stop_reasons = BTreeMap::new();
    let mut inst = InstrumentationSummary::default();
    let mut sequence: Option<SequenceSummary> = None;
    let intermediates: Option<&Vec<String>> = scenario.observables.iter().find_map(|o| match o {
        Observable::Exclusive { intermediates, .. } => Some(intermediates),
        _ => None,
    });
    let mut multiple_intermediates = 0;
    let (mut reduction_events, mut noop_hits, mut censored) = (0, 0, 0);

    for d in digests {
        reduction_events += d.collapses;
        noop_hits += d.noops;
        match &d.first_collapse {
            Some((name, t)) => {
                *counts.entry(name.clone()).or_default() += 1;
                times.push(*t);
            }
            None => {
                censored += 1;
                *counts.entry("none".into()).or_default() += 1;
            }
        }
        let reason = serde_json_name(d.stop_reason);
        *stop_reasons.entry(reason.to_string()).or_default() += 1;
        let i = &d.instrumentation;
        inst.max_relative_drift = inst.max_relative_drift.max(i.max_relative_drift);
        inst.max_consistency_ratio = inst.max_consistency_ratio.max(i.max_consistency_ratio);
        inst.max_ready_emission = inst.max_ready_emission.max(i.max_ready_emission);
        inst.max_second_hop_modulus = inst.max_second_hop_modulus.max(i.max_second_hop_modulus);
        inst.phantom_changes += i.phantom_changes;
        inst.phantoms_marked += i.phantoms_marked;
        inst.clamps += i.clamps;
        inst.total_mismatches += i.total_mismatches;
        inst.coexistence_violations += i.coexistence_violations;
        inst.exclusivity_violations += i.exclusivity_violations;
        if let Some(audit) = &d.sequence {
            let s = sequence.get_or_insert(SequenceSummary {
                passed: 0,
                failed: 0,
                first_violation: None,
            });
            if audit.passed {
                s.passed += 1;
            } else {
                s.failed += 1;
                if s.first_violation.is_none() {
                    s.first_violation = audit.violation.clone().map(|v| (d.stream_id, v));
                }
            }
        }
        if let Some(names) = intermediates {
            if d.realized.iter().filter(|r| names.contains(r)).count() > 1 {
                multiple_intermediates += 1;
            }
        }
    }

    let branches = counts
        .into_iter()
        .map(|(branch, count)| {
            let f = count as f64 / n.max(1) as f64;
            BranchFrequency {
                branch,
                count,
                frequency: f,
                std_error: (f * (1.0 - f) / n.max(1) as f64).sqrt(),
            }
        })
        .collect();

    times.sort_by(f64::total_cmp);
    let hist_max = times.last().copied().unwrap_or(0.0);
    let bin_width = if hist_max > 0.0 {
        hist_max / HISTOGRAM_BINS as f64
    } else {
        1.0
    };
    let mut hist = vec![0u64; HISTOGRAM_BINS];
    for &t in &times {
        let b = ((t / bin_width) as usize).min(HISTOGRAM_BINS - 1);
        hist[b] += 1;
    }

    let samples = digests.iter().map(|d| d.envelope.len()).max().unwrap_or(0);
    let envelope = (0..samples)
        .map(|k| {
            let pts: Vec<&EnvelopeSample> = digests.iter().filter_map(|d| d.envelope.get(k)).collect();
            let m = pts.len() as f64;
            let mean = |f: &dyn Fn(&EnvelopeSample) -> f64| pts.iter().map(|p| f(p)).sum::<f64>() / m;
            EnvelopePoint {
                time: mean(&|p| p.time),
                mean_from: mean(&|p| p.from_modulus),
                mean_to: mean(&|p| p.to_modulus),
                mean_contrast: mean(&|p| {
                    let w = p.from_modulus + p.to_modulus;
                    if w > 0.0 {
                        (p.from_modulus - p.to_modulus) / w
                    } else {
                        0.0
                    }
                }),
            }
        })
        .collect();

    EnsembleSummary {
        scenario: scenario.name.clone(),
        n,
        seed,
        dt,
        reduction_events,
        noop_hits,
        censored,
        branches,
        first_hit_times: times,
        first_hit_histogram: Histogram {
            bin_width,
            counts: hist,
        },
        sequence,
        multiple_intermediates,
        envelope,
        stop_reasons,
        instrumentation: inst,
    }
}

fn serde_json_name(r: StopReason) -> &'static str {
    match r {
        StopReason::MaxTime => "max_time",
        StopReason::EpochCount => "epoch_count",
        StopReason::Quiescent => "quiescent",
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub summary: EnsembleSummary,
    /// Present when [`EnsembleConfig::keep_records`] is set, in stream order.
    pub records: Option<Vec<TrajectoryRecord>>,
}

/// Runs `config.n` trajectories on streams `0..n`.
pub fn run_ensemble(scenario: &Scenario, config: &EnsembleConfig) -> Result<EnsembleRun, EnsembleError> {
    if config.n == 0 {
        return Err(EnsembleError::Empty);
    }
    // Validation failures surface before any trajectory runs.
    scenario.instantiate()?;
    let dt = config.dt.unwrap_or_else(|| scenario.default_dt());
    let stages = sequence_stages(scenario);

    let one = |k: u64| -> Result<(Digest, Option<TrajectoryRecord>), EnsembleError> {
        let record = run_trajectory(
            scenario,
            TrajectoryOptions {
                seed: config.seed,
                stream_id: k,
                dt: Some(dt),
                flags: config.flags,
                enforce_nrule4: config.enforce_nrule4,
            },
        )
        .map_err(|source| EnsembleError::Trajectory { stream: k, source })?;
        let digest = Digest::new(&record, stages);
        Ok((digest, config.keep_records.then_some(record)))
    };

    let workers = config.workers.unwrap_or(0);
    let results: Vec<(Digest, Option<TrajectoryRecord>)> = if workers == 1 {
        (0..config.n).map(one).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| EnsembleError::Pool(e.to_string()))?;
        pool.install(|| (0..config.n).into_par_iter().map(one).collect::<Result<_, _>>())?
    };

    let mut digests = Vec::with_capacity(results.len());
    let mut records = config.keep_records.then(Vec::new);
    for (d, r) in results {
        digests.push(d);
        if let (Some(list), Some(r)) = (records.as_mut(), r) {
            list.push(r);
        }
    }
    let acc = EnsembleAccumulator { digests };
    Ok(EnsembleRun {
        summary: acc.finish(scenario, config.seed, dt),
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfLife {
    /// Sample median of first-hit times.
    pub median: f64,
    /// Order-statistic standard error of the median.
    pub median_std_error: f64,
    pub mean: f64,
    /// `ln 2` times the mean, the exponential maximum-likelihood half-life.
    pub mle: f64,
    pub events: usize,
}

pub const HALF_LIFE_MIN_EVENTS: usize = 100;

/// Half-life from the first-hit times of a single-decay ensemble.
pub fn half_life(summary: &EnsembleSummary) -> Result<HalfLife, StatsError> {
    half_life_of(&summary.first_hit_times)
}

/// Same as [`half_life`] for raw hit times.
pub fn half_life_of(times: &[f64]) -> Result<HalfLife, StatsError> {
    let n = times.len();
    if n < HALF_LIFE_MIN_EVENTS {
        return Err(StatsError::InsufficientEvents {
            needed: HALF_LIFE_MIN_EVENTS,
            got: n,
        });
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    // The median's rank is Binomial(n, 1/2): one standard deviation is sqrt(n)/2 ranks.
    let half_width = (0.5 * (n as f64).sqrt()).ceil() as usize;
    let lo = sorted[(n / 2).saturating_sub(half_width)];
    let hi = sorted[(n / 2 + half_width).min(n - 1)];
    let mean = sorted.iter().sum::<f64>() / n as f64;
    Ok(HalfLife {
        median,
        median_std_error: 0.5 * (hi - lo),
        mean,
        mle: std::f64::consts::LN_2 * mean,
        events: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
        n,
    }
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::RngStream;
    use crate::scenario::{counter, neutron_decay, parallel, spin_continuous};
    use crate::trajectory::Realization;

    fn record_with(names: &[&str]) -> TrajectoryRecord {
        let mut r = run_trajectory(&spin_continuous(), TrajectoryOptions::default()).unwrap();
        r.realizations = names
            .iter()
            .enumerate()
            .map(|(i, n)| Realization {
                time: i as f64,
                component: n.to_string(),
                via: crate::trajectory::RealizedVia::Collapse,
            })
            .collect();
        r
    }

    fn stages() -> Vec<String> {
        (0..5).map(|k| format!("C{k}")).collect()
    }

    #[test]
    fn audit_passes_consecutive_stages() {
        let a = audit_sequence(&record_with(&["C0", "C1", "C2", "C3"]), &stages());
        assert!(a.passed);
    }

    #[test]
    fn audit_flags_skipped_stage() {
        let a = audit_sequence(&record_with(&["C0", "C2", "C1"]), &stages());
        assert!(!a.passed);
        let v = a.violation.unwrap();
        assert_eq!(v.found_index, 2);
        assert_eq!(v.position, 1);
        assert_eq!(v.expected, "C1");
    }

    #[test]
    fn audit_of_empty_log_is_vacuous() {
        assert!(audit_sequence(&record_with(&[]), &stages()).passed);
    }

    #[test]
    fn ks_accepts_matching_and_rejects_shifted() {
        let mut rng = RngStream::new(2, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.exp1()).collect();
        let ok = ks_test(&xs, |x| 1.0 - (-x).exp());
        assert!(ok.p_value > 0.01, "{ok:?}");
        let bad = ks_test(&xs, |x| 1.0 - (-1.1 * x).exp());
        assert!(bad.p_value < 0.01, "{bad:?}");
    }

    #[test]
    fn kolmogorov_tail_known_values() {
        // Q(1.36) ~ 0.049, Q(1.63) ~ 0.0098.
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 5e-4);
    }

    #[test]
    fn half_life_needs_events() {
        assert_eq!(
            half_life_of(&[1.0; 10]).unwrap_err(),
            StatsError::InsufficientEvents { needed: 100, got: 10 }
        );
    }

    #[test]
    fn half_life_scales_with_rate() {
        let cfg = EnsembleConfig {
            n: 2000,
            seed: 4,
            ..Default::default()
        };
        let slow = half_life(&run_ensemble(&neutron_decay(1.0), &cfg).unwrap().summary).unwrap();
        let fast = half_life(&run_ensemble(&neutron_decay(2.0), &cfg).unwrap().summary).unwrap();
        assert!((slow.median - std::f64::consts::LN_2).abs() < 0.1);
        let ratio = slow.median / fast.median;
        assert!((ratio - 2.0).abs() < 0.25, "ratio {ratio}");
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = parallel();
        let base = EnsembleConfig {
            n: 200,
            seed: 8,
            ..Default::default()
        };
        let serial = run_ensemble(&s, &EnsembleConfig { workers: Some(1), ..base }).unwrap();
        let pooled = run_ensemble(&s, &EnsembleConfig { workers: Some(3), ..base }).unwrap();
        assert_eq!(serial.summary, pooled.summary);
    }

    #[test]
    fn accumulators_merge_in_any_order() {
        let s = counter();
        let records: Vec<_> = (0..12)
            .map(|k| {
                run_trajectory(
                    &s,
                    TrajectoryOptions {
                        stream_id: k,
                        ..Default::default()
                    },
                )
                .unwrap()
            })
            .collect();
        let mut a = EnsembleAccumulator::new();
        let mut b = EnsembleAccumulator::new();
        for (i, r) in records.iter().enumerate() {
            if i % 3 == 0 {
                a.add(r, &s);
            } else {
                b.add(r, &s);
            }
        }
        let ab = a.clone().merge(b.clone()).finish(&s, 0, 1e-3);
        let ba = b.merge(a).finish(&s, 0, 1e-3);
        assert_eq!(ab, ba);
        assert_eq!(ab.sequence.as_ref().unwrap().passed, 12);
    }

    #[test]
    fn frequencies_sum_to_one() {
        let run = run_ensemble(
            &parallel(),
            &EnsembleConfig {
                n: 300,
                ..Default::default()
            },
        )
        .unwrap();
        let total: f64 = run.summary.branches.iter().map(|b| b.frequency).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_ensemble_rejected() {
        let cfg = EnsembleConfig {
            n: 0,
            ..Default::default()
        };
        assert!(matches!(run_ensemble(&counter(), &cfg), Err(EnsembleError::Empty)));
    }
}
