//! Statistical model checking over forwarder traces.
//!
//! Probability estimation draws a fixed number of independent traces, sized
//! by the additive Chernoff-Hoeffding bound, and reports the fraction that
//! satisfy a Boolean monitor together with the mean satisfaction ratio.
//! Wald's sequential probability ratio test decides a threshold question
//! with as few traces as the evidence allows.
//!
//! Trace `i` of an experiment seeded with `master` always uses the seed
//! `derive_seed(master, i)`, so results do not depend on how traces are
//! scheduled across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CalibrationProfile;
use crate::forwarder::{build_model_with, Counters, FactorConfig, ForwarderError, ForwarderModel, ModelOptions};
use crate::kernel::Trace;
use crate::rng::derive_seed;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum SmcError {
    #[error("invalid parameter: {0}")]
    Domain(String),
    #[error("trace {index} (seed {seed}) failed: {source}")]
    Trace {
        index: u64,
        seed: u64,
        #[source]
        source: BoxError,
    },
    #[error("monitor: {0}")]
    Monitor(String),
    #[error(transparent)]
    Model(#[from] ForwarderError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Property checked on one trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    /// Every Interest sent in the measurement window was satisfied.
    AllSatisfied,
    /// Satisfied over sent in the measurement window.
    SatisfactionRatio,
    /// An event with this label fires within `deadline` ticks of the trace
    /// start. Needs a recorded trace.
    EventuallyBounded { label: String, deadline: u64 },
}

impl Monitor {
    pub fn needs_trace(&self) -> bool {
        matches!(self, Monitor::EventuallyBounded { .. })
    }
}

/// Value of a monitor on one trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MonitorValue {
    Bool(bool),
    Ratio(f64),
}

impl MonitorValue {
    /// Boolean reading; a ratio holds when it is exactly one.
    pub fn holds(self) -> bool {
        match self {
            MonitorValue::Bool(b) => b,
            MonitorValue::Ratio(r) => r == 1.0,
        }
    }
}

/// Evaluates `monitor` on the counters (and, if needed, the trace) of one
/// completed run.
pub fn evaluate_monitor(
    monitor: &Monitor,
    counters: &Counters,
    trace: Option<&Trace>,
) -> Result<MonitorValue, SmcError> {
    match monitor {
        Monitor::AllSatisfied | Monitor::SatisfactionRatio => {
            if counters.window.sent == 0 {
                return Err(SmcError::Monitor("no Interests were sent in the measurement window".into()));
            }
            Ok(if *monitor == Monitor::AllSatisfied {
                MonitorValue::Bool(counters.window.satisfied == counters.window.sent)
            } else {
                MonitorValue::Ratio(counters.window.satisfied as f64 / counters.window.sent as f64)
            })
        }
        Monitor::EventuallyBounded { label, deadline } => {
            let trace = trace.ok_or_else(|| SmcError::Monitor("bounded-eventually needs a recorded trace".into()))?;
            let id =
                trace.label_id(label).ok_or_else(|| SmcError::Monitor(format!("unknown event label {label:?}")))?;
            let limit = trace.start.saturating_add(*deadline);
            Ok(MonitorValue::Bool(trace.events.iter().any(|e| e.label == id && e.tick <= limit)))
        }
    }
}

/// Number of traces for additive precision `alpha` with risk `delta_conf`.
pub fn required_samples(alpha: f64, delta_conf: f64) -> Result<u64, SmcError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SmcError::Domain(format!("precision {alpha} not in (0, 1)")));
    }
    if !(delta_conf > 0.0 && delta_conf < 1.0) {
        return Err(SmcError::Domain(format!("confidence parameter {delta_conf} not in (0, 1)")));
    }
    let n = ((2.0 / delta_conf).ln() / (2.0 * alpha * alpha)).ceil();
    Ok((n as u64).max(1))
}

/// Outcome of one trace as seen by the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub holds: bool,
    /// Numeric reading averaged into `mean_ratio`, when there is one.
    pub value: Option<f64>,
}

impl Sample {
    pub fn bool(holds: bool) -> Self {
        Sample { holds, value: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcEstimate {
    /// Fraction of traces on which the Boolean property holds.
    pub p_hat: f64,
    pub alpha: f64,
    pub delta_conf: f64,
    pub n: u64,
    /// Seed of each trace, in trace order.
    pub seeds: Vec<u64>,
    /// Mean of the numeric readings, if every trace produced one.
    pub mean_ratio: Option<f64>,
    /// Standard error of `mean_ratio`.
    pub stderr: Option<f64>,
    pub successes: u64,
}

/// Runs `f` on `count` trace seeds, in parallel on at most `jobs` threads
/// (`0` means the global pool). Results come back in trace order.
fn run_seeds<T, E, F>(master_seed: u64, count: u64, jobs: usize, f: F) -> Result<Vec<Result<T, E>>, SmcError>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync,
{
    let work = || (0..count).into_par_iter().map(|i| f(derive_seed(master_seed, i))).collect::<Vec<_>>();
    if jobs == 0 {
        Ok(work())
    } else {
        let pool =
            rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| SmcError::Pool(e.to_string()))?;
        Ok(pool.install(work))
    }
}

/// Probability estimation over an arbitrary sampler. `sample` receives the
/// trace seed; the first failing trace (by index) aborts the estimate.
pub fn estimate_with<E, F>(
    alpha: f64,
    delta_conf: f64,
    master_seed: u64,
    jobs: usize,
    sample: F,
) -> Result<SmcEstimate, SmcError>
where
    E: Into<BoxError> + Send,
    F: Fn(u64) -> Result<Sample, E> + Sync,
{
    let n = required_samples(alpha, delta_conf)?;
    let results = run_seeds(master_seed, n, jobs, sample)?;
    let seeds: Vec<u64> = (0..n).map(|i| derive_seed(master_seed, i)).collect();
    let mut samples = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => return Err(SmcError::Trace { index: i as u64, seed: seeds[i], source: e.into() }),
        }
    }
    let successes = samples.iter().filter(|s| s.holds).count() as u64;
    let values: Option<Vec<f64>> = samples.iter().map(|s| s.value).collect();
    let (mean_ratio, stderr) = match values {
        Some(v) if !v.is_empty() => {
            let (mean, se) = mean_and_stderr(&v);
            (Some(mean), Some(se))
        }
        _ => (None, None),
    };
    Ok(SmcEstimate { p_hat: successes as f64 / n as f64, alpha, delta_conf, n, seeds, mean_ratio, stderr, successes })
}

/// Sample mean and standard error of the mean (zero for one value).
pub fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs one trace of `model` and evaluates `monitor` on it. The numeric
/// reading is the window satisfaction ratio.
pub fn sample_trace(model: &ForwarderModel, monitor: &Monitor, seed: u64) -> Result<(Sample, Counters), SmcError> {
    let (counters, trace) = if monitor.needs_trace() {
        let (c, t, _) = model.clone().run_traced(seed)?;
        (c, Some(t))
    } else {
        (model.clone().run(seed)?, None)
    };
    let holds = evaluate_monitor(monitor, &counters, trace.as_ref())?.holds();
    Ok((Sample { holds, value: counters.satisfaction_rate().ok() }, counters))
}

/// Everything needed to produce traces of one forwarder configuration.
#[derive(Debug, Clone)]
pub struct TraceSource<'a> {
    pub cfg: &'a FactorConfig,
    pub calibration: &'a CalibrationProfile,
    pub options: &'a ModelOptions,
}

impl TraceSource<'_> {
    pub fn build(&self) -> Result<ForwarderModel, SmcError> {
        Ok(build_model_with(self.cfg, self.calibration, self.options)?)
    }
}

/// Probability estimation for one forwarder configuration.
pub fn estimate(
    source: &TraceSource<'_>,
    monitor: &Monitor,
    alpha: f64,
    delta_conf: f64,
    master_seed: u64,
    jobs: usize,
) -> Result<SmcEstimate, SmcError> {
    required_samples(alpha, delta_conf)?;
    let model = source.build()?;
    estimate_with(alpha, delta_conf, master_seed, jobs, |seed| sample_trace(&model, monitor, seed).map(|s| s.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SprtConfig {
    /// Threshold θ on the probability that the property holds.
    pub theta: f64,
    /// Indifference half-width w.
    pub half_width: f64,
    /// Probability of accepting the lower hypothesis when p ≥ θ + w.
    pub alpha_err: f64,
    /// Probability of accepting the upper hypothesis when p ≤ θ - w.
    pub beta_err: f64,
    pub max_samples: u64,
}

impl Default for SprtConfig {
    fn default() -> Self {
        SprtConfig { theta: 0.9, half_width: 0.01, alpha_err: 0.05, beta_err: 0.05, max_samples: 100_000 }
    }
}

impl SprtConfig {
    pub fn validate(&self) -> Result<(), SmcError> {
        let (lo, hi) = (self.theta - self.half_width, self.theta + self.half_width);
        if !(self.half_width > 0.0 && lo > 0.0 && hi < 1.0) {
            return Err(SmcError::Domain(format!(
                "need 0 < theta - w < theta + w < 1, got theta {} w {}",
                self.theta, self.half_width
            )));
        }
        for (what, e) in [("alpha_err", self.alpha_err), ("beta_err", self.beta_err)] {
            if !(e > 0.0 && e < 0.5) {
                return Err(SmcError::Domain(format!("{what} {e} not in (0, 0.5)")));
            }
        }
        if self.max_samples == 0 {
            return Err(SmcError::Domain("max_samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// p ≥ θ + w
    Upper,
    /// p ≤ θ - w
    Lower,
    /// The sample cap was reached first.
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprtOutcome {
    pub verdict: Verdict,
    pub samples: u64,
    pub successes: u64,
    /// Final log-likelihood ratio of upper over lower hypothesis.
    pub llr: f64,
    pub accept_upper_at: f64,
    pub accept_lower_at: f64,
}

/// Wald's test over an arbitrary sampler, drawing traces one at a time.
pub fn sprt_with<E, F>(cfg: &SprtConfig, master_seed: u64, mut sample: F) -> Result<SprtOutcome, SmcError>
where
    E: Into<BoxError>,
    F: FnMut(u64) -> Result<bool, E>,
{
    cfg.validate()?;
    let p1 = cfg.theta + cfg.half_width;
    let p0 = cfg.theta - cfg.half_width;
    let up = (p1 / p0).ln();
    let down = ((1.0 - p1) / (1.0 - p0)).ln();
    let a = ((1.0 - cfg.beta_err) / cfg.alpha_err).ln();
    let b = (cfg.beta_err / (1.0 - cfg.alpha_err)).ln();
    let mut llr = 0.0;
    let mut successes = 0;
    for i in 0..cfg.max_samples {
        let seed = derive_seed(master_seed, i);
        let holds = sample(seed).map_err(|e| SmcError::Trace { index: i, seed, source: e.into() })?;
        if holds {
            successes += 1;
            llr += up;
        } else {
            llr += down;
        }
        let verdict = if llr >= a {
            Some(Verdict::Upper)
        } else if llr <= b {
            Some(Verdict::Lower)
        } else {
            None
        };
        if let Some(verdict) = verdict {
            return Ok(SprtOutcome { verdict, samples: i + 1, successes, llr, accept_upper_at: a, accept_lower_at: b });
        }
    }
    Ok(SprtOutcome {
        verdict: Verdict::Undecided,
        samples: cfg.max_samples,
        successes,
        llr,
        accept_upper_at: a,
        accept_lower_at: b,
    })
}

/// Wald's test for one forwarder configuration.
pub fn sprt(
    source: &TraceSource<'_>,
    monitor: &Monitor,
    cfg: &SprtConfig,
    master_seed: u64,
) -> Result<SprtOutcome, SmcError> {
    cfg.validate()?;
    let model = source.build()?;
    sprt_with(cfg, master_seed, |seed| sample_trace(&model, monitor, seed).map(|s| s.0.holds))
}

#[cfg(test)]
mod tests;
