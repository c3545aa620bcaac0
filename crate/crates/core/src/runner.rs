//! The online loop: forecast, emit an interval, observe, update.
//!
//! In the default asymmetric mode each step produces
//! `[ŷ - q^l, ŷ + q^u]` from two independent calibrators at level `α/2`,
//! fed the signed scores `s^u = y - ŷ` and `s^l = ŷ - y`. Symmetric mode runs
//! one calibrator at level `α` on `|y - ŷ|`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibrators::{Calibrator, MethodSpec, RateSchedule, StepFeedback, StepInputs};
use crate::datagen::{generate, SyntheticSpec};
use crate::error::{Error, Result};
use crate::forecasters::{Forecaster, ForecasterConfig};
use crate::ingest::{load_series, SeriesFile};
use crate::stats::TrailingWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMode {
    #[default]
    Asymmetric,
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    Csv(SeriesFile),
    Synthetic(SyntheticSpec),
    /// The default two-changepoint linear model.
    Changepoint,
}

impl DataSource {
    /// Loads the observation sequence. `seed` replaces the synthetic seed.
    pub fn load(&self, seed: u64) -> Result<Vec<f64>> {
        match self {
            DataSource::Csv(file) => Ok(load_series(file)?.values),
            DataSource::Synthetic(spec) => {
                let spec = SyntheticSpec {
                    seed,
                    ..spec.clone()
                };
                Ok(generate(&spec)?.y)
            }
            DataSource::Changepoint => Ok(generate(&SyntheticSpec::changepoint_default(seed))?.y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    pub method: MethodSpec,
    pub forecaster: ForecasterConfig,
    pub data: DataSource,
    pub train_fraction: f64,
    pub rolling_window: usize,
    pub seed: u64,
    pub mode: IntervalMode,
}

impl RunConfig {
    pub fn new(method: MethodSpec, data: DataSource) -> Self {
        Self {
            alpha: 0.1,
            method,
            forecaster: ForecasterConfig::default(),
            data,
            train_fraction: 0.0,
            rolling_window: 50,
            seed: 0,
            mode: IntervalMode::Asymmetric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.train_fraction) {
            return Err(Error::InvalidParameter(format!(
                "train_fraction must lie in [0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.rolling_window == 0 {
            return Err(Error::InvalidParameter("rolling_window must be positive".into()));
        }
        self.method.validate()?;
        self.forecaster.validate()
    }
}

/// `[center - lower_offset, center + upper_offset]` on the extended reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub center: f64,
    pub lower_offset: f64,
    pub upper_offset: f64,
}

impl PredictionInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.lower_offset
    }

    pub fn upper(&self) -> f64 {
        self.center + self.upper_offset
    }

    pub fn width(&self) -> f64 {
        interval_width(self.lower_offset, self.upper_offset)
    }

    /// Closed-interval membership, written in score form so that it agrees
    /// with the calibrators' strict-exceedance miscoverage rule.
    pub fn contains(&self, y: f64) -> bool {
        self.center - y <= self.lower_offset && y - self.center <= self.upper_offset
    }
}

/// `q^l + q^u` with `+∞` absorbing. A `-∞` offset (an empty ACI set) with no
/// `+∞` on the other side has width zero.
pub fn interval_width(lower_offset: f64, upper_offset: f64) -> f64 {
    if lower_offset == f64::INFINITY || upper_offset == f64::INFINITY {
        f64::INFINITY
    } else if lower_offset == f64::NEG_INFINITY || upper_offset == f64::NEG_INFINITY {
        0.0
    } else {
        lower_offset + upper_offset
    }
}

/// `η (max - min)` over the window, or `η` when the window has zero range.
pub fn adaptive_rate(window: &TrailingWindow, eta_base: f64) -> f64 {
    let r = window.range();
    if r > 0.0 {
        eta_base * r
    } else {
        eta_base
    }
}

/// `h (max - min)` over the window.
pub fn adaptive_cutoff(window: &TrailingWindow, h_base: f64) -> f64 {
    h_base * window.range()
}

/// One calibrated side: a calibrator plus the trailing window of its own scores.
#[derive(Debug, Clone)]
pub struct SideDriver {
    calibrator: Calibrator,
    window: TrailingWindow,
    schedule: RateSchedule,
    eta: f64,
    h: f64,
}

impl SideDriver {
    pub fn new(spec: &MethodSpec, alpha: f64) -> Result<Self> {
        Ok(Self {
            calibrator: Calibrator::new(spec, alpha)?,
            window: TrailingWindow::new(spec.window),
            schedule: spec.rate_schedule(),
            eta: spec.eta,
            h: spec.h,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.calibrator.threshold()
    }

    pub fn observe(&mut self, s: f64) -> StepFeedback {
        self.window.push(s);
        let eta = match self.schedule {
            RateSchedule::Fixed => self.eta,
            RateSchedule::Adaptive => adaptive_rate(&self.window, self.eta),
        };
        let cutoff = adaptive_cutoff(&self.window, self.h);
        self.calibrator.update(s, StepInputs { eta, cutoff })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 0-based index into the observed series.
    pub t: usize,
    pub y: f64,
    pub yhat: f64,
    pub score_upper: f64,
    pub score_lower: f64,
    pub q_upper: f64,
    pub q_lower: f64,
    pub err_upper: bool,
    pub err_lower: bool,
    pub covered: bool,
    pub width: f64,
    pub eta_upper: f64,
    pub eta_lower: f64,
}

impl StepRecord {
    pub fn interval(&self) -> PredictionInterval {
        PredictionInterval {
            center: self.yhat,
            lower_offset: self.q_lower,
            upper_offset: self.q_upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub alpha: f64,
    pub mode: IntervalMode,
    pub steps: Vec<StepRecord>,
    pub final_q_upper: f64,
    pub final_q_lower: f64,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// First online index: after forecaster warm-up and the training split.
pub fn online_start(n: usize, forecaster: &ForecasterConfig, train_fraction: f64) -> usize {
    let split = (train_fraction * n as f64).floor() as usize;
    forecaster.warmup().max(split)
}

/// One-step forecasts `ŷ_t` for every `t` in `start..y.len()`.
pub fn forecast_series(y: &[f64], config: &ForecasterConfig, start: usize) -> Result<Vec<f64>> {
    let mut f = Forecaster::new(config.clone())?;
    (start..y.len()).map(|t| f.forecast(&y[..t])).collect()
}

/// Runs the calibration loop over precomputed forecasts; `yhat[i]` forecasts `y[start + i]`.
pub fn calibrate(
    y: &[f64],
    yhat: &[f64],
    start: usize,
    method: &MethodSpec,
    alpha: f64,
    mode: IntervalMode,
) -> Result<RunTrace> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    assert_eq!(y.len() - start, yhat.len(), "one forecast per online step");
    let (mut upper, mut lower) = match mode {
        IntervalMode::Asymmetric => (
            SideDriver::new(method, alpha / 2.0)?,
            Some(SideDriver::new(method, alpha / 2.0)?),
        ),
        IntervalMode::Symmetric => (SideDriver::new(method, alpha)?, None),
    };

    let mut steps = Vec::with_capacity(yhat.len());
    for (i, &pred) in yhat.iter().enumerate() {
        let t = start + i;
        let obs = y[t];
        if !obs.is_finite() {
            return Err(Error::NonFiniteObservation { step: t });
        }
        if !pred.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite forecast at step {t}")));
        }
        let rec = match lower.as_mut() {
            Some(lower) => {
                let (su, sl) = (obs - pred, pred - obs);
                let (qu, ql) = (upper.threshold(), lower.threshold());
                let fu = upper.observe(su);
                let fl = lower.observe(sl);
                StepRecord {
                    t,
                    y: obs,
                    yhat: pred,
                    score_upper: su,
                    score_lower: sl,
                    q_upper: qu,
                    q_lower: ql,
                    err_upper: fu.err,
                    err_lower: fl.err,
                    covered: !(fu.err || fl.err),
                    width: interval_width(ql, qu),
                    eta_upper: fu.eta_used,
                    eta_lower: fl.eta_used,
                }
            }
            None => {
                let s = (obs - pred).abs();
                let q = upper.threshold();
                let fb = upper.observe(s);
                StepRecord {
                    t,
                    y: obs,
                    yhat: pred,
                    score_upper: s,
                    score_lower: s,
                    q_upper: q,
                    q_lower: q,
                    err_upper: fb.err,
                    err_lower: fb.err,
                    covered: !fb.err,
                    width: interval_width(q, q),
                    eta_upper: fb.eta_used,
                    eta_lower: fb.eta_used,
                }
            }
        };
        steps.push(rec);
    }
    let final_q_upper = upper.threshold();
    let final_q_lower = lower.as_ref().map_or(final_q_upper, |l| l.threshold());
    Ok(RunTrace {
        alpha,
        mode,
        steps,
        final_q_upper,
        final_q_lower,
    })
}

/// Feeds a raw score stream through one calibrator at level `alpha`.
pub fn calibrate_scores(scores: &[f64], method: &MethodSpec, alpha: f64) -> Result<RunTrace> {

    let mut side = SideDriver::new(method, alpha)?;
    let steps = scores
        .iter()
        .enumerate()
        .map(|(t, &s)| {
            let q = side.threshold();
            let fb = side.observe(s);
            StepRecord {
                t,
                y: s,
                yhat: 0.0,
                score_upper: s,
                score_lower: s,
                q_upper: q,
                q_lower: q,
                err_upper: fb.err,
                err_lower: fb.err,
                covered: !fb.err,
                width: interval_width(q, q),
                eta_upper: fb.eta_used,
                eta_lower: fb.eta_used,
            }
        })
        .collect();
    let q = side.threshold();
    Ok(RunTrace {
        alpha,
        mode: IntervalMode::Symmetric,
        steps,
        final_q_upper: q,
        final_q_lower: q,
    })
}

/// Forecast and calibrate the configured series.
pub fn run_online(config: &RunConfig) -> Result<RunTrace> {
    config.validate()?;
    let y = config.data.load(config.seed)?;
    run_on_series(config, &y)
}

pub fn run_on_series(config: &RunConfig, y: &[f64]) -> Result<RunTrace> {
    let start = online_start(y.len(), &config.forecaster, config.train_fraction);
    if start >= y.len() {
        return Err(Error::InsufficientHistory {
            needed: start + 1,
            have: y.len(),
        });
    }
    if let Some(t) = y[..start].iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObservation { step: t });
    }
    let mut yhat = Vec::with_capacity(y.len() - start);
    let mut f = Forecaster::new(config.forecaster.clone())?;
    for t in start..y.len() {
        if !y[t - 1].is_finite() {
            return Err(Error::NonFiniteObservation { step: t - 1 });
        }
        yhat.push(f.forecast(&y[..t])?);
    }
    calibrate(y, &yhat, start, &config.method, config.alpha, config.mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub coverage: f64,
    pub avg_width: f64,
    pub median_width: f64,
    pub rolling_coverage: Vec<f64>,
    pub long_run_gap: f64,
}

pub fn coverage_metrics(trace: &RunTrace, rolling_window: usize) -> Result<Metrics> {
    if trace.steps.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let n = trace.steps.len() as f64;
    let covered: Vec<bool> = trace.steps.iter().map(|r| r.covered).collect();
    let widths: Vec<f64> = trace.steps.iter().map(|r| r.width).collect();
    let coverage = covered.iter().filter(|&&c| c).count() as f64 / n;
    Ok(Metrics {
        coverage,
        avg_width: mean_width(&widths),
        median_width: median_width(&widths),
        rolling_coverage: rolling_mean(&covered, rolling_window.max(1)),
        long_run_gap: (coverage - (1.0 - trace.alpha)).abs(),
    })
}

/// Mean on the extended reals; any `+∞` makes the mean `+∞`.
pub fn mean_width(widths: &[f64]) -> f64 {
    if widths.contains(&f64::INFINITY) {
        return f64::INFINITY;
    }
    widths.iter().sum::<f64>() / widths.len() as f64
}

/// Midpoint of the central order statistics with `+∞` sorted last; when one
/// central value is infinite the finite one is reported.
pub fn median_width(widths: &[f64]) -> f64 {
    let mut v = widths.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        return v[n / 2];
    }
    let (a, b) = (v[n / 2 - 1], v[n / 2]);
    match (a.is_infinite(), b.is_infinite()) {
        (false, false) => 0.5 * (a + b),
        (false, true) => a,
        _ => f64::INFINITY,
    }
}

/// Trailing mean of `covered` over at most `window` most recent steps.
pub fn rolling_mean(covered: &[bool], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(covered.len());
    let mut hits = 0usize;
    for (i, &c) in covered.iter().enumerate() {
        hits += c as usize;
        if i >= window {
            hits -= covered[i - window] as usize;
        }
        out.push(hits as f64 / (i + 1).min(window) as f64);
    }
    out
}

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:?}")
    }
}

/// Writes `t,y,yhat,lower,upper,covered,width,eta_t`. `eta_t` is the rate used
/// by the upper-side calibrator.
pub fn write_trace_csv<W: Write>(trace: &RunTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "y", "yhat", "lower", "upper", "covered", "width", "eta_t"])?;
    for r in &trace.steps {
        let iv = r.interval();
        w.write_record([
            r.t.to_string(),
            fmt_num(r.y),
            fmt_num(r.yhat),
            fmt_num(iv.lower()),
            fmt_num(iv.upper()),
            (r.covered as u8).to_string(),
            fmt_num(r.width),
            fmt_num(r.eta_upper),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

pub fn write_trace_file(trace: &RunTrace, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace_csv(trace, std::io::BufWriter::new(f))
}
