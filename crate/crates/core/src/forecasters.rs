//! One-step-ahead base forecasters: AR(p) by least squares, the Theta method
//! and a last-value fallback.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative ridge added to the diagonal of the AR normal equations.
const RIDGE_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterKind {
    Ar,
    Theta,
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterConfig {
    pub kind: ForecasterKind,
    pub ar_order: usize,
    pub min_history: usize,
    pub refit_every: usize,
    pub include_intercept: bool,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            kind: ForecasterKind::Ar,
            ar_order: 3,
            min_history: 50,
            refit_every: 1,
            include_intercept: true,
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ar_order == 0 {
            return Err(Error::InvalidParameter("ar_order must be at least 1".into()));
        }
        if self.min_history <= self.ar_order + 2 {
            return Err(Error::InvalidParameter(format!(
                "min_history ({}) must exceed ar_order + 2 ({})",
                self.min_history,
                self.ar_order + 2
            )));
        }
        if self.refit_every == 0 {
            return Err(Error::InvalidParameter("refit_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of observations needed before the first forecast.
    pub fn warmup(&self) -> usize {
        match self.kind {
            ForecasterKind::Naive => 1,
            _ => self.min_history,
        }
    }
}

fn check_history(history: &[f64], min_history: usize) -> Result<()> {
    if history.len() < min_history {
        return Err(Error::InsufficientHistory {
            needed: min_history,
            have: history.len(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// AR(p)

/// Fitted `y_t = intercept + Σ_j coefs[j] y_{t-1-j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub intercept: f64,
    pub coefs: Vec<f64>,
}

impl ArFit {
    /// Forecast of the value following `history`.
    pub fn predict_next(&self, history: &[f64]) -> f64 {
        let n = history.len();
        self.coefs
            .iter()
            .enumerate()
            .fold(self.intercept, |acc, (j, &phi)| acc + phi * history[n - 1 - j])
    }
}

/// Least-squares AR(p) fit over the full history.
///
/// With an intercept the lag columns and the target are centered before
/// solving, which keeps the fit exactly shift-equivariant; the ridge term is
/// scaled by the mean diagonal of the normal matrix so the fit is also
/// scale-equivariant.
#[allow(clippy::needless_range_loop)]
pub fn ar_fit(history: &[f64], order: usize, include_intercept: bool) -> Result<ArFit> {
    let p = order;
    if history.len() < 2 * p + 2 {
        return Err(Error::InsufficientHistory {
            needed: 2 * p + 2,
            have: history.len(),
        });
    }
    let rows = p..history.len();
    let m = rows.len() as f64;

    let (mean_x, mean_y) = if include_intercept {
        let mut mx = vec![0.0; p];
        let mut my = 0.0;
        for t in rows.clone() {
            my += history[t];
            for (j, v) in mx.iter_mut().enumerate() {
                *v += history[t - 1 - j];
            }
        }
        mx.iter_mut().for_each(|v| *v /= m);
        (mx, my / m)
    } else {
        (vec![0.0; p], 0.0)
    };

    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    let mut row = vec![0.0; p];
    for t in rows {
        for (j, r) in row.iter_mut().enumerate() {
            *r = history[t - 1 - j] - mean_x[j];
        }
        let yc = history[t] - mean_y;
        for i in 0..p {
            xty[i] += row[i] * yc;
            for j in 0..=i {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            xtx[j][i] = xtx[i][j];
        }
    }
    let mean_diag = (0..p).map(|i| xtx[i][i]).sum::<f64>() / p as f64;
    let ridge = if mean_diag > 0.0 {
        RIDGE_JITTER * mean_diag
    } else {
        RIDGE_JITTER
    };
    for (i, r) in xtx.iter_mut().enumerate() {
        r[i] += ridge;
    }
    let coefs = cholesky_solve(xtx, xty);
    let intercept = mean_y - coefs.iter().zip(&mean_x).map(|(c, x)| c * x).sum::<f64>();
    Ok(ArFit { intercept, coefs })
}

pub fn ar_fit_predict(history: &[f64], config: &ForecasterConfig) -> Result<f64> {
    check_history(history, config.min_history)?;
    if let Some(v) = constant_value(history) {
        return Ok(v);
    }
    let fit = ar_fit(history, config.ar_order, config.include_intercept)?;
    Ok(fit.predict_next(history))
}

/// Solves `A x = b` for symmetric positive definite `A`.
#[allow(clippy::needless_range_loop)]
fn cholesky_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        let d = d.max(f64::MIN_POSITIVE).sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i][k] * b[k];
        }
        b[i] = s / a[i][i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k][i] * b[k];
        }
        b[i] = s / a[i][i];
    }
    b
}

fn constant_value(history: &[f64]) -> Option<f64> {
    let first = *history.first()?;
    history.iter().all(|&v| v == first).then_some(first)
}

// ---------------------------------------------------------------------------
// Theta

/// SES smoothing parameters searched when fitting the θ=2 line.
pub fn ses_grid() -> impl Iterator<Item = f64> {
    (1..=19).map(|i| i as f64 * 0.05)
}

/// Theta decomposition fitted on `y_1..y_n` (time index starting at 1).
///
/// The θ=0 line is the least-squares trend `a + b t`. The θ=2 line
/// `z_t = 2 y_t - (a + b t)` is extrapolated by exponential smoothing with
/// drift `b`: `ℓ_t = α z_t + (1-α)(ℓ_{t-1} + b)`, `ℓ_1 = z_1`, forecasting
/// `ℓ_n + b`. The forecast is the equal-weight mean of both extrapolations.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFit {
    pub trend_intercept: f64,
    pub trend_slope: f64,
    pub ses_alpha: f64,
    pub level: f64,
    /// Time index of the last observation absorbed into `level`.
    pub n: usize,
}

impl ThetaFit {
    pub fn trend_forecast(&self) -> f64 {
        self.trend_intercept + self.trend_slope * (self.n + 1) as f64
    }

    pub fn ses_forecast(&self) -> f64 {
        self.level + self.trend_slope
    }

    pub fn forecast(&self) -> f64 {
        0.5 * self.trend_forecast() + 0.5 * self.ses_forecast()
    }

    /// Absorb one more observation without refitting the trend or `α`.
    pub fn advance(&mut self, y: f64) {
        self.n += 1;
        let t = self.n as f64;
        let z = 2.0 * y - (self.trend_intercept + self.trend_slope * t);
        self.level = self.ses_alpha * z + (1.0 - self.ses_alpha) * (self.level + self.trend_slope);
    }
}

pub fn theta_fit(history: &[f64]) -> Result<ThetaFit> {
    let n = history.len();
    if n < 3 {
        return Err(Error::InsufficientHistory { needed: 3, have: n });
    }
    let nf = n as f64;
    let t_mean = (nf + 1.0) / 2.0;
    let y_mean = history.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in history.iter().enumerate() {
        let dt = (i + 1) as f64 - t_mean;
        sxy += dt * (y - y_mean);
        sxx += dt * dt;
    }
    let b = sxy / sxx;
    let a = y_mean - b * t_mean;
    let z: Vec<f64> = history
        .iter()
        .enumerate()
        .map(|(i, &y)| 2.0 * y - (a + b * (i + 1) as f64))
        .collect();

    let mut best: Option<(f64, f64, f64)> = None; // (sse, alpha, level)
    for alpha in ses_grid() {
        let mut level = z[0];
        let mut sse = 0.0;
        for &zt in &z[1..] {
            let pred = level + b;
            let e = zt - pred;
            sse += e * e;
            level = pred + alpha * e;
        }
        if best.is_none_or(|(s, _, _)| sse < s) {
            best = Some((sse, alpha, level));
        }
    }
    let (_, ses_alpha, level) = best.expect("grid is non-empty");
    Ok(ThetaFit {
        trend_intercept: a,
        trend_slope: b,
        ses_alpha,
        level,
        n,
    })
}

pub fn theta_forecast(history: &[f64], min_history: usize) -> Result<f64> {
    check_history(history, min_history.max(3))?;
    if let Some(v) = constant_value(history) {
        return Ok(v);
    }
    Ok(theta_fit(history)?.forecast())
}

pub fn theta_fit_predict(history: &[f64], config: &ForecasterConfig) -> Result<f64> {
    theta_forecast(history, config.min_history)
}

// ---------------------------------------------------------------------------
// Naive

pub fn naive_predict(history: &[f64]) -> Result<f64> {
    history.last().copied().ok_or(Error::EmptyHistory)
}

// ---------------------------------------------------------------------------
// Stateful wrapper

#[derive(Debug, Clone)]
enum Fitted {
    Ar(ArFit),
    Theta(ThetaFit),
}

/// Forecaster that refits every `refit_every` calls and otherwise reuses the
/// cached fit on the newest observations.
#[derive(Debug, Clone)]
pub struct Forecaster {
    config: ForecasterConfig,
    fit: Option<Fitted>,
    last_fit_len: usize,
}

impl Forecaster {
    pub fn new(config: ForecasterConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            fit: None,
            last_fit_len: 0,
        })
    }

    pub fn config(&self) -> &ForecasterConfig {
        &self.config
    }

    /// One-step forecast of the value following `history`. Successive calls
    /// are expected to pass a growing prefix of the same series.
    pub fn forecast(&mut self, history: &[f64]) -> Result<f64> {
        let cfg = &self.config;
        if cfg.kind == ForecasterKind::Naive {
            return naive_predict(history);
        }
        check_history(history, cfg.min_history)?;
        let stale = self.fit.is_none()
            || history.len() < self.last_fit_len
            || history.len() - self.last_fit_len >= cfg.refit_every;
        if stale {
            if cfg.kind == ForecasterKind::Ar {
                let v = ar_fit_predict(history, cfg)?;
                if constant_value(history).is_none() {
                    self.fit = Some(Fitted::Ar(ar_fit(history, cfg.ar_order, cfg.include_intercept)?));
                } else {
                    self.fit = None;
                }
                self.last_fit_len = history.len();
                return Ok(v);
            }
            if let Some(v) = constant_value(history) {
                self.fit = None;
                self.last_fit_len = history.len();
                return Ok(v);
            }
            self.fit = Some(Fitted::Theta(theta_fit(history)?));
            self.last_fit_len = history.len();
        }
        match self.fit.as_mut() {
            Some(Fitted::Ar(fit)) => Ok(fit.predict_next(history)),
            Some(Fitted::Theta(fit)) => {
                while fit.n < history.len() {
                    fit.advance(history[fit.n]);
                }
                Ok(fit.forecast())
            }
            // cached constant series
            None => Ok(*history.last().expect("checked non-empty")),
        }
    }
}
