use rand::Rng;

use super::*;
use crate::dist::Distribution;
use crate::forwarder::Outcomes;
use crate::rng::seeded;

/// Smallest N with 2 exp(-2 N alpha^2) <= delta, by direct search.
fn bound_oracle(alpha: f64, delta: f64) -> u64 {
    let mut n = 1u64;
    while 2.0 * (-2.0 * n as f64 * alpha * alpha).exp() > delta {
        n += 1;
    }
    n
}

fn bernoulli(p: f64) -> impl Fn(u64) -> Result<Sample, SmcError> + Sync {
    move |seed| Ok(Sample::bool(seeded(seed).random_bool(p)))
}

fn counters(sent: u64, satisfied: u64) -> Counters {
    let o = Outcomes { sent, satisfied, nacked: 0, dropped: 0, in_flight: sent - satisfied };
    Counters {
        horizon: 0,
        window_start: 0,
        window_end: 0,
        all: o,
        window: o,
        nacks_duplicate: 0,
        nacks_no_route: 0,
        queue_drops: vec![0],
        max_queue_occupancy: vec![0],
        queue_capacity: 1,
        rx_drops: [0; 2],
        malformed_drops: 0,
        unsolicited_drops: 0,
        pit_full_drops: 0,
        dispatched: vec![sent],
        live_packets: sent - satisfied,
        stray_responses: 0,
    }
}

#[test]
fn sample_bound_examples() {
    assert_eq!(required_samples(0.1, 0.1).unwrap(), 150);
    assert_eq!(required_samples(0.01, 0.01).unwrap(), 26_492);
    assert!(required_samples(0.5, 1.0 - 1e-12).unwrap() >= 1);
}

#[test]
fn sample_bound_matches_search_oracle() {
    for alpha in [0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.9] {
        for delta in [0.001, 0.01, 0.05, 0.1, 0.2, 0.5, 0.9] {
            assert_eq!(required_samples(alpha, delta).unwrap(), bound_oracle(alpha, delta), "{alpha} {delta}");
        }
    }
}

#[test]
fn sample_bound_domain() {
    for (a, d) in [(0.0, 0.1), (1.0, 0.1), (0.1, 0.0), (0.1, 1.0), (f64::NAN, 0.1), (-0.1, 0.5)] {
        assert!(matches!(required_samples(a, d), Err(SmcError::Domain(_))), "{a} {d}");
    }
}

#[test]
fn always_true_stub() {
    let e = estimate_with(0.1, 0.1, 1, 1, |_| Ok::<_, SmcError>(Sample { holds: true, value: Some(1.0) })).unwrap();
    assert_eq!(e.p_hat, 1.0);
    assert_eq!(e.n, 150);
    assert_eq!(e.seeds.len(), 150);
    assert_eq!(e.mean_ratio, Some(1.0));
    assert_eq!(e.stderr, Some(0.0));
}

#[test]
fn estimator_meets_its_guarantee() {
    let hits = (0..200u64)
        .filter(|rep| {
            let e = estimate_with(0.1, 0.1, 1000 + rep, 1, bernoulli(0.7)).unwrap();
            (e.p_hat - 0.7).abs() <= 0.1
        })
        .count();
    assert!(hits >= 180, "{hits}");
}

#[test]
fn estimate_is_independent_of_job_count() {
    let a = estimate_with(0.05, 0.1, 42, 1, bernoulli(0.3)).unwrap();
    let b = estimate_with(0.05, 0.1, 42, 3, bernoulli(0.3)).unwrap();
    let c = estimate_with(0.05, 0.1, 42, 0, bernoulli(0.3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(a.seeds[7], derive_seed(42, 7));
}

#[test]
fn failing_trace_reports_index_and_seed() {
    let bad = derive_seed(9, 5);
    let err = estimate_with(0.1, 0.1, 9, 2, |seed| {
        if seed == bad || seed == derive_seed(9, 77) {
            Err(SmcError::Monitor("boom".into()))
        } else {
            Ok(Sample::bool(true))
        }
    })
    .unwrap_err();
    match err {
        SmcError::Trace { index, seed, .. } => {
            assert_eq!(index, 5);
            assert_eq!(seed, bad);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn numeric_summary() {
    let (m, se) = mean_and_stderr(&[0.9, 1.0, 0.8, 1.0]);
    assert!((m - 0.925).abs() < 1e-15);
    // sample variance 0.009166..., over n = 4
    assert!((se - (0.0275f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
}

#[test]
fn monitors_on_counters() {
    let full = counters(10, 10);
    let short = counters(10, 9);
    assert_eq!(evaluate_monitor(&Monitor::AllSatisfied, &full, None).unwrap(), MonitorValue::Bool(true));
    assert_eq!(evaluate_monitor(&Monitor::SatisfactionRatio, &full, None).unwrap(), MonitorValue::Ratio(1.0));
    assert_eq!(evaluate_monitor(&Monitor::AllSatisfied, &short, None).unwrap(), MonitorValue::Bool(false));
    assert_eq!(evaluate_monitor(&Monitor::SatisfactionRatio, &short, None).unwrap(), MonitorValue::Ratio(0.9));
    for m in [Monitor::AllSatisfied, Monitor::SatisfactionRatio] {
        assert!(matches!(evaluate_monitor(&m, &counters(0, 0), None), Err(SmcError::Monitor(_))));
    }
    assert!(MonitorValue::Ratio(1.0).holds());
    assert!(!MonitorValue::Ratio(0.999).holds());
}

fn dd1() -> CalibrationProfile {
    CalibrationProfile::uniform(Distribution::dirac(300.0), Distribution::dirac(200.0), Distribution::dirac(0.0))
}

#[test]
fn bounded_eventually_on_a_trace() {
    let cfg = FactorConfig { send_interval: 10_000, horizon: 20_000, ..FactorConfig::default() };
    let (c, trace, _) = build_model_with(&cfg, &dd1(), &ModelOptions::default()).unwrap().run_traced(1).unwrap();
    let ev = |label: &str, deadline| Monitor::EventuallyBounded { label: label.into(), deadline };
    // first Interest leaves at 10 000 and its Data reaches the consumer 500 ticks later
    assert_eq!(evaluate_monitor(&ev("deliver", 10_500), &c, Some(&trace)).unwrap(), MonitorValue::Bool(true));
    assert_eq!(evaluate_monitor(&ev("deliver", 10_499), &c, Some(&trace)).unwrap(), MonitorValue::Bool(false));
    assert!(evaluate_monitor(&ev("nope", 1), &c, Some(&trace)).is_err());
    assert!(evaluate_monitor(&ev("deliver", 1), &c, None).is_err());
}

#[test]
fn forwarder_estimate_under_light_load() {
    let cfg = FactorConfig { send_interval: 2_000, horizon: 200_000, ..FactorConfig::default() };
    let (cal, opts) = (dd1(), ModelOptions::default());
    let src = TraceSource { cfg: &cfg, calibration: &cal, options: &opts };
    let e = estimate(&src, &Monitor::AllSatisfied, 0.2, 0.2, 3, 1).unwrap();
    assert_eq!(e.n, required_samples(0.2, 0.2).unwrap());
    assert_eq!(e.p_hat, 1.0);
    assert_eq!(e.mean_ratio, Some(1.0));
    let ev = Monitor::EventuallyBounded { label: "deliver".into(), deadline: 2_500 };
    assert_eq!(estimate(&src, &ev, 0.2, 0.2, 3, 1).unwrap().p_hat, 1.0);
}

#[test]
fn forwarder_estimate_reports_bad_config() {
    let cfg = FactorConfig { queue_capacity: 0, ..FactorConfig::default() };
    let (cal, opts) = (dd1(), ModelOptions::default());
    let src = TraceSource { cfg: &cfg, calibration: &cal, options: &opts };
    assert!(matches!(estimate(&src, &Monitor::AllSatisfied, 0.1, 0.1, 0, 1), Err(SmcError::Model(_))));
}

#[test]
fn sprt_trivial_verdicts() {
    let always = SprtConfig { theta: 0.9, half_width: 0.05, ..SprtConfig::default() };
    let o = sprt_with(&always, 1, |_| Ok::<_, SmcError>(true)).unwrap();
    assert_eq!(o.verdict, Verdict::Upper);
    // each success adds ln(0.95 / 0.85); ln(19) needs 27 of them
    assert_eq!(o.samples, 27);
    let never = SprtConfig { theta: 0.5, ..SprtConfig::default() };
    let o = sprt_with(&never, 1, |_| Ok::<_, SmcError>(false)).unwrap();
    assert_eq!(o.verdict, Verdict::Lower);
    assert_eq!(o.successes, 0);
}

#[test]
fn sprt_in_indifference_region_hits_the_cap() {
    let cfg = SprtConfig { theta: 0.7, half_width: 0.01, max_samples: 200, ..SprtConfig::default() };
    let undecided = (0..100u64)
        .filter(|rep| {
            let o = sprt_with(&cfg, *rep, |seed| Ok::<_, SmcError>(seeded(seed).random_bool(0.7))).unwrap();
            o.verdict == Verdict::Undecided && o.samples == 200
        })
        .count();
    assert!(undecided >= 90, "{undecided}");
}

#[test]
fn sprt_error_rates_stay_within_bounds() {
    let cfg = SprtConfig { theta: 0.7, half_width: 0.03, max_samples: 100_000, ..SprtConfig::default() };
    // binomial tolerance: three standard deviations over 500 runs at rate 0.05
    let limit = 0.05 + 3.0 * (0.05f64 * 0.95 / 500.0).sqrt();
    for (p, wrong) in [(0.73, Verdict::Lower), (0.67, Verdict::Upper)] {
        let errors = (0..500u64)
            .filter(|rep| {
                let o = sprt_with(&cfg, 7_000 + rep, |seed| Ok::<_, SmcError>(seeded(seed).random_bool(p))).unwrap();
                assert_ne!(o.verdict, Verdict::Undecided);
                o.verdict == wrong
            })
            .count();
        assert!(errors as f64 / 500.0 <= limit, "p {p}: {errors} wrong verdicts");
    }
}

#[test]
fn sprt_config_validation() {
    for bad in [
        SprtConfig { theta: 0.995, ..SprtConfig::default() },
        SprtConfig { theta: 0.005, ..SprtConfig::default() },
        SprtConfig { half_width: 0.0, ..SprtConfig::default() },
        SprtConfig { alpha_err: 0.0, ..SprtConfig::default() },
        SprtConfig { beta_err: 0.5, ..SprtConfig::default() },
        SprtConfig { max_samples: 0, ..SprtConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(SmcError::Domain(_))), "{bad:?}");
    }
    assert!(SprtConfig::default().validate().is_ok());
}

#[test]
fn sprt_reports_failing_seed() {
    let err = sprt_with(&SprtConfig::default(), 4, |seed| {
        if seed == derive_seed(4, 2) {
            Err(SmcError::Monitor("x".into()))
        } else {
            Ok(true)
        }
    })
    .unwrap_err();
    assert!(matches!(err, SmcError::Trace { index: 2, .. }));
}
