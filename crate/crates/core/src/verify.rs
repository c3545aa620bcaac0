//! Empirical checks of the ECI threshold bounds and coverage guarantees.
//!
//! All checks run one calibrator on a single bounded score stream
//! `s_t ∈ [0, B]`. `M_t` is the running maximum of the rates up to step `t`
//! (`M_0 = 0`) and `λ` bounds `|x f'(x)|`.

use serde::{Deserialize, Serialize};

use crate::calibrators::ThresholdState;
use crate::datagen::NormalStream;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::smoothing::{LambdaMode, SmoothingKernel};

/// Absolute slack, scaled by the bound's magnitude, for floating-point rounding.
const ROUNDING_SLACK: f64 = 1e-12;

/// Window length `⌊1/α⌋` of the one-miss-per-window guarantee.
pub fn window_length(alpha: f64) -> usize {
    // nudge so that 1/0.1 = 9.999999999999998 still floors to 10
    (1.0 / alpha + 1e-9).floor() as usize
}

/// Largest admissible sigmoid scale for the one-miss-per-window guarantee,
/// `min{η, N²} / (2N²[B + (1-α+λ)η])`.
pub fn max_admissible_c(bound: f64, alpha: f64, eta: f64, lambda: f64) -> f64 {
    let n = window_length(alpha) as f64;
    eta.min(n * n) / (2.0 * n * n * (bound + (1.0 - alpha + lambda) * eta))
}

/// Which ceiling on `c` a Theorem 1 battery scales from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleCeiling {
    /// [`max_admissible_c`] as stated.
    #[default]
    Stated,
    /// The stated ceiling divided by `η`. The EQ terms enter the update
    /// multiplied by `η`, so after a miss `q` can sink by up to
    /// `η c (N-2)[B + (1-α+λ)η]` beyond the `ηα` steps; this ceiling keeps
    /// that drift below `η / 2N`.
    RateScaled,
}

impl ScaleCeiling {
    pub fn ceiling(self, bound: f64, alpha: f64, eta: f64, lambda: f64) -> f64 {
        let stated = max_admissible_c(bound, alpha, eta, lambda);
        match self {
            ScaleCeiling::Stated => stated,
            ScaleCeiling::RateScaled => stated / eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremConfig {
    pub bound: f64,
    pub alpha: f64,
    pub eta: f64,
    pub c: f64,
    pub lambda_mode: LambdaMode,
    pub horizon: usize,
    pub seed: u64,
}

impl TheoremConfig {
    /// Validates the premises of the one-miss-per-window guarantee.
    pub fn theorem1(bound: f64, alpha: f64, eta: f64, c: f64, horizon: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            bound,
            alpha,
            eta,
            c,
            lambda_mode: LambdaMode::Analytic,
            horizon,
            seed,
        };
        cfg.check_premises()?;
        Ok(cfg)
    }

    pub fn window_length(&self) -> usize {
        window_length(self.alpha)
    }

    pub fn kernel(&self) -> Result<SmoothingKernel> {
        SmoothingKernel::new(self.c)
    }

    pub fn lambda(&self) -> f64 {
        SmoothingKernel::new(self.c)
            .map(|k| k.lambda_sup(self.lambda_mode))
            .unwrap_or(crate::smoothing::LAMBDA_BOUND)
    }

    pub fn check_premises(&self) -> Result<()> {
        let hv = |m: String| Err(Error::HypothesisViolated(m));
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return hv(format!("score bound must be positive, got {}", self.bound));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return hv(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return hv(format!("c must be positive, got {}", self.c));
        }
        let n = self.window_length();
        if self.eta.is_nan() || self.eta <= 2.0 * n as f64 * self.bound {
            return hv(format!(
                "eta = {} must exceed 2 N B = {}",
                self.eta,
                2.0 * n as f64 * self.bound
            ));
        }
        let c_max = max_admissible_c(self.bound, self.alpha, self.eta, self.lambda());
        if self.c >= c_max {
            return hv(format!("c = {} must be below {c_max}", self.c));
        }
        Ok(())
    }
}

/// A threshold sequence produced by ECI on a score stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EciRun {
    pub scores: Vec<f64>,
    pub rates: Vec<f64>,
    /// `q_t` before observing `s_t`, then the final `q_{T+1}`.
    pub thresholds: Vec<f64>,
    pub errs: Vec<bool>,
}

impl EciRun {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `M_t` for `t = 0..=T`.
    pub fn running_max_rates(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.rates.iter().scan(0.0_f64, |m, &r| {
                *m = m.max(r);
                Some(*m)
            }))
            .collect()
    }
}

/// Runs ECI with per-step rates, optionally clamping `q` from below.
pub fn simulate_eci(
    scores: &[f64],
    rates: &[f64],
    q1: f64,
    alpha: f64,
    kernel: &SmoothingKernel,
    clamp_floor: Option<f64>,
) -> EciRun {
    assert_eq!(scores.len(), rates.len(), "one rate per score");
    let mut st = ThresholdState::new(alpha, q1);
    let mut thresholds = Vec::with_capacity(scores.len() + 1);
    let mut errs = Vec::with_capacity(scores.len());
    for (&s, &eta) in scores.iter().zip(rates) {
        thresholds.push(st.q);
        errs.push(st.eci_update(s, eta, kernel).err);
        if let Some(floor) = clamp_floor {
            st.clamp_threshold(floor);
        }
    }
    thresholds.push(st.q);
    EciRun {
        scores: scores.to_vec(),
        rates: rates.to_vec(),
        thresholds,
        errs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowViolation {
    /// 0-based index of the first step in the window.
    pub start: usize,
    pub misses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub window: usize,
    pub steps: usize,
    pub misses: usize,
    pub violations: Vec<WindowViolation>,
}

/// Checks that every `N` consecutive steps contain at most one miss.
pub fn check_theorem1(config: &TheoremConfig, scores: &[f64]) -> Result<Theorem1Report> {
    config.check_premises()?;
    if let Some(s) = scores.iter().find(|s| !(0.0..=config.bound).contains(*s)) {
        return Err(Error::HypothesisViolated(format!(
            "score {s} outside [0, {}]",
            config.bound
        )));
    }
    let kernel = config.kernel()?;
    let rates = vec![config.eta; scores.len()];
    let run = simulate_eci(scores, &rates, 0.0, config.alpha, &kernel, Some(0.0));
    let n = config.window_length();
    Ok(Theorem1Report {
        window: n,
        steps: scores.len(),
        misses: run.errs.iter().filter(|&&e| e).count(),
        violations: crowded_windows(&run.errs, n),
    })
}

/// Windows of length `n` holding two or more misses.
pub fn crowded_windows(errs: &[bool], n: usize) -> Vec<WindowViolation> {
    if errs.len() < n || n == 0 {
        return Vec::new();
    }
    let mut misses: usize = errs[..n].iter().filter(|&&e| e).count();
    let mut out = Vec::new();
    for start in 0..=errs.len() - n {
        if start > 0 {
            misses = misses + errs[start + n - 1] as usize - errs[start - 1] as usize;
        }
        if misses >= 2 {
            out.push(WindowViolation { start, misses });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    /// 1-based step.
    pub t: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundReport {
    pub checked: usize,
    pub violations: Vec<BoundViolation>,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

fn within(value: f64, lower: f64, upper: f64) -> bool {
    let slack = |b: f64| ROUNDING_SLACK * (1.0 + b.abs());
    value >= lower - slack(lower) && value <= upper + slack(upper)
}

/// `-(α+λ) M_{t-1} ≤ q_t ≤ B + (1-α+λ) M_{t-1}` for every `t` including `T+1`.
pub fn check_proposition1(run: &EciRun, bound: f64, alpha: f64, lambda: f64) -> BoundReport {
    let m = run.running_max_rates();
    let mut report = BoundReport::default();
    for (i, &q) in run.thresholds.iter().enumerate() {
        let lower = -(alpha + lambda) * m[i];
        let upper = bound + (1.0 - alpha + lambda) * m[i];
        report.checked += 1;
        if !within(q, lower, upper) {
            report.violations.push(BoundViolation {
                t: i + 1,
                value: q,
                lower,
                upper,
            });
        }
    }
    report
}

/// `|x f'(x)| ≤ c [B + (1-α+λ) M_{t-1}]` at `x = s_t - q_t`.
pub fn check_proposition2(
    run: &EciRun,
    kernel: &SmoothingKernel,
    bound: f64,
    alpha: f64,
    lambda: f64,
) -> BoundReport {
    let m = run.running_max_rates();
    let mut report = BoundReport::default();
    for (i, &s) in run.scores.iter().enumerate() {
        let eq = kernel.eq_term(s - run.thresholds[i]).abs();
        let upper = kernel.c() * (bound + (1.0 - alpha + lambda) * m[i]);
        report.checked += 1;
        if !within(eq, 0.0, upper) {
            report.violations.push(BoundViolation {
                t: i + 1,
                value: eq,
                lower: 0.0,
                upper,
            });
        }
    }
    report
}

/// `|1/η_1| + Σ |1/η_t - 1/η_{t-1}|`.
pub fn rate_variation(rates: &[f64]) -> f64 {
    let inv: Vec<f64> = rates.iter().map(|r| 1.0 / r).collect();
    inv.first().map_or(0.0, |f| f.abs()) + inv.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// The bound with the threshold range taken from the proposition-1
    /// envelope at `M_T`: `(B + (1+2λ) M_T) ‖Δ‖_1 / T + c [B + (1-α+λ) M_{T-1}]`.
    /// It also covers horizons where the final rate is a new maximum.
    pub envelope_rhs: f64,
}

/// Long-run miscoverage gap against its bound for an arbitrary positive rate sequence.
pub fn check_theorem2(
    run: &EciRun,
    kernel: &SmoothingKernel,
    bound: f64,
    alpha: f64,
    lambda: f64,
) -> Theorem2Report {
    let t = run.len() as f64;
    let gap: f64 = run.errs.iter().map(|&e| e as u8 as f64 - alpha).sum();
    let lhs = (gap / t).abs();
    // M_{T-1}
    let maxima = run.running_max_rates();
    let m = maxima[run.len().saturating_sub(1)];
    let m_last = maxima[run.len()];
    let variation = rate_variation(&run.rates);
    let eq_part = kernel.c() * (bound + (1.0 - alpha + lambda) * m);
    let rhs = (bound + m) * variation / t + eq_part;
    Theorem2Report {
        lhs,
        rhs,
        holds: lhs <= rhs,
        envelope_rhs: (bound + (1.0 + 2.0 * lambda) * m_last) * variation / t + eq_part,
    }
}

/// Uniform draws on `(0, scale)`.
pub fn uniform_stream(seed: u64, stream: u64, len: usize, scale: f64) -> Vec<f64> {
    let mut rng = NormalStream::new(seed, stream);
    (0..len).map(|_| scale * rng.next_uniform()).collect()
}

/// Piecewise-constant positive rates: segment boundaries and levels drawn from `seed`.
pub fn piecewise_constant_rates(seed: u64, len: usize, max_resets: usize, min_rate: f64, max_rate: f64) -> Vec<f64> {
    let mut rng = NormalStream::new(seed, 3);
    let resets = (rng.next_uniform() * (max_resets + 1) as f64) as usize;
    let mut cuts: Vec<usize> = (0..resets)
        .map(|_| (rng.next_uniform() * len as f64) as usize)
        .collect();
    cuts.sort_unstable();
    let mut level = || min_rate + (max_rate - min_rate) * rng.next_uniform();
    let mut rates = Vec::with_capacity(len);
    let mut current = level();
    let mut next_cut = cuts.into_iter().peekable();
    for t in 0..len {
        while next_cut.peek() == Some(&t) {
            next_cut.next();
            current = level();
        }
        rates.push(current);
    }
    rates
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Battery {
    pub bound: f64,
    pub alpha: f64,
    pub eta: f64,
    /// Sigmoid scale as a fraction of its admissible maximum.
    #[serde(default = "default_c_fraction")]
    pub c_fraction: f64,
    #[serde(default)]
    pub ceiling: ScaleCeiling,
    pub horizon: usize,
    pub seeds: Vec<u64>,
}

fn default_c_fraction() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBattery {
    pub bound: f64,
    pub alpha: f64,
    pub c: f64,
    pub max_rate: f64,
    pub horizon: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem2Battery {
    pub bound: f64,
    pub alpha: f64,
    pub c: f64,
    pub min_rate: f64,
    pub max_rate: f64,
    pub max_resets: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
}

/// The full set of seeded checks run by `eci verify`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBattery {
    pub theorem1: Option<Theorem1Battery>,
    pub bounds: Option<BoundsBattery>,
    pub theorem2: Option<Theorem2Battery>,
}

impl VerifyBattery {
    /// Ten, one hundred and one hundred seeds at the reference settings.
    pub fn standard() -> Self {
        Self {
            theorem1: Some(Theorem1Battery {
                bound: 1.0,
                alpha: 0.1,
                eta: 21.0,
                c_fraction: 0.9,
                ceiling: ScaleCeiling::Stated,
                horizon: 100_000,
                seeds: (0..10).collect(),
            }),
            bounds: Some(BoundsBattery {
                bound: 1.0,
                alpha: 0.1,
                c: 1.0,
                max_rate: 5.0,
                horizon: 10_000,
                seeds: (0..100).collect(),
            }),
            theorem2: Some(Theorem2Battery {
                bound: 1.0,
                alpha: 0.1,
                c: 0.1,
                min_rate: 0.01,
                max_rate: 5.0,
                max_resets: 50,
                horizon: 10_000,
                seeds: (0..100).collect(),
            }),
        }
    }

    pub fn is_empty(&self) -> bool {
        let n1 = self.theorem1.as_ref().map_or(0, |b| b.seeds.len());
        let n2 = self.bounds.as_ref().map_or(0, |b| b.seeds.len());
        let n3 = self.theorem2.as_ref().map_or(0, |b| b.seeds.len());
        n1 + n2 + n3 == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub check: String,
    pub seed: u64,
    pub violations: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatteryReport {
    pub outcomes: Vec<SeedOutcome>,
}

impl BatteryReport {
    pub fn total_violations(&self) -> usize {
        self.outcomes.iter().map(|o| o.violations).sum()
    }
}

pub fn run_battery(battery: &VerifyBattery, exec: Execution) -> Result<BatteryReport> {
    if battery.is_empty() {
        return Err(Error::EmptySuite("verification battery has no seeds".into()));
    }
    let mut outcomes = Vec::new();
    if let Some(b) = &battery.theorem1 {
        let lambda = crate::smoothing::LAMBDA_BOUND;
        let c = b.c_fraction * b.ceiling.ceiling(b.bound, b.alpha, b.eta, lambda);
        // validate once so a bad config fails before any simulation
        TheoremConfig::theorem1(b.bound, b.alpha, b.eta, c, b.horizon, 0)?;
        let results = par::try_map(exec, &b.seeds, |&seed| {
            let cfg = TheoremConfig::theorem1(b.bound, b.alpha, b.eta, c, b.horizon, seed)?;
            let scores = uniform_stream(seed, 2, b.horizon, b.bound);
            let r = check_theorem1(&cfg, &scores)?;
            Ok::<_, Error>(SeedOutcome {
                check: "theorem1".into(),
                seed,
                violations: r.violations.len(),
                detail: format!("misses={} window={} c={c:e}", r.misses, r.window),
            })
        })?;
        outcomes.extend(results);
    }
    if let Some(b) = &battery.bounds {
        let kernel = SmoothingKernel::new(b.c)?;
        let lambda = kernel.lambda_sup(LambdaMode::Analytic);
        let results = par::map(exec, &b.seeds, |&seed| {
            let scores = uniform_stream(seed, 2, b.horizon, b.bound);
            let rates = uniform_stream(seed, 4, b.horizon, b.max_rate);
            let q1 = b.bound * uniform_stream(seed, 5, 1, 1.0)[0];
            let run = simulate_eci(&scores, &rates, q1, b.alpha, &kernel, None);
            let p1 = check_proposition1(&run, b.bound, b.alpha, lambda);
            let p2 = check_proposition2(&run, &kernel, b.bound, b.alpha, lambda);
            [
                SeedOutcome {
                    check: "proposition1".into(),
                    seed,
                    violations: p1.violations.len(),
                    detail: format!("checked={}", p1.checked),
                },
                SeedOutcome {
                    check: "proposition2".into(),
                    seed,
                    violations: p2.violations.len(),
                    detail: format!("checked={}", p2.checked),
                },
            ]
        });
        outcomes.extend(results.into_iter().flatten());
    }
    if let Some(b) = &battery.theorem2 {
        let kernel = SmoothingKernel::new(b.c)?;
        let lambda = kernel.lambda_sup(LambdaMode::Analytic);
        let results = par::map(exec, &b.seeds, |&seed| {
            let scores = uniform_stream(seed, 2, b.horizon, b.bound);
            let rates = piecewise_constant_rates(seed, b.horizon, b.max_resets, b.min_rate, b.max_rate);
            let run = simulate_eci(&scores, &rates, 0.0, b.alpha, &kernel, None);
            let r = check_theorem2(&run, &kernel, b.bound, b.alpha, lambda);
            SeedOutcome {
                check: "theorem2".into(),
                seed,
                violations: (!r.holds) as usize,
                detail: format!("lhs={:e} rhs={:e}", r.lhs, r.rhs),
            }
        });
        outcomes.extend(results);
    }
    Ok(BatteryReport { outcomes })
}
