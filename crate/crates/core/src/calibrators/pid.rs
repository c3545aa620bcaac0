//! Conformal PID: quantile tracking around a scorecast plus a saturating
//! integrator on the cumulative miscoverage error.

use serde::{Deserialize, Serialize};

use super::threshold::indicator;
use super::StepFeedback;
use crate::forecasters::theta_forecast;
use crate::stats::TrailingWindow;

const SATURATION_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorForm {
    /// `K_I tan(clamp(E_t log(t+1) / (C_sat (t+1))))`.
    #[default]
    Tan,
    /// `K_I E_t / t`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorecaster {
    /// Empirical `(1-α)`-quantile of the trailing score window.
    #[default]
    WindowQuantile,
    /// Theta forecast of the next score from the trailing window, falling back
    /// to the window quantile until the window holds `min_history` scores.
    Theta,
}

#[derive(Debug, Clone)]
pub struct PidState {
    pub q: f64,
    pub alpha: f64,
    /// Running `Σ (err_i - α)`.
    pub err_sum: f64,
    pub k_i: f64,
    /// Fixed saturation constant; `None` uses twice the trailing score range.
    pub c_sat: Option<f64>,
    pub integrator: IntegratorForm,
    pub scorecaster: Scorecaster,
    pub theta_min_history: usize,
    t: u64,
    window: TrailingWindow,
}

impl PidState {
    pub fn new(alpha: f64, q1: f64, window: usize) -> Self {
        Self {
            q: q1,
            alpha,
            err_sum: 0.0,
            k_i: 1.0,
            c_sat: None,
            integrator: IntegratorForm::Tan,
            scorecaster: Scorecaster::WindowQuantile,
            theta_min_history: 50,
            t: 1,
            window: TrailingWindow::new(window),
        }
    }

    pub fn with_integrator(mut self, k_i: f64, c_sat: Option<f64>, form: IntegratorForm) -> Self {
        self.k_i = k_i;
        self.c_sat = c_sat;
        self.integrator = form;
        self
    }

    pub fn with_scorecaster(mut self, scorecaster: Scorecaster, theta_min_history: usize) -> Self {
        self.scorecaster = scorecaster;
        self.theta_min_history = theta_min_history;
        self
    }

    pub fn update(&mut self, s: f64, eta_t: f64) -> StepFeedback {
        let before = self.q;
        let err = s > before;
        let step_err = indicator(err) - self.alpha;
        self.err_sum += step_err;
        self.window.push(s);

        let r = self.integrator_value();
        let g = self.scorecast();
        self.q = g + eta_t * step_err + r;
        self.t += 1;
        StepFeedback {
            err,
            score: s,
            threshold_before: before,
            threshold_after: self.q,
            eta_used: eta_t,
        }
    }

    /// Integrator output for the current `err_sum` and step count.
    pub fn integrator_value(&self) -> f64 {
        if self.k_i == 0.0 {
            return 0.0;
        }
        let t = self.t as f64;
        match self.integrator {
            IntegratorForm::Linear => self.k_i * self.err_sum / t,
            IntegratorForm::Tan => {
                let c_sat = self.c_sat.unwrap_or_else(|| {
                    let r = 2.0 * self.window.range();
                    if r > 0.0 {
                        r
                    } else {
                        1.0
                    }
                });
                tan_integrator(self.err_sum, self.t, self.k_i, c_sat)
            }
        }
    }

    fn scorecast(&self) -> f64 {
        let level = 1.0 - self.alpha;
        match self.scorecaster {
            Scorecaster::WindowQuantile => self.window.quantile(level),
            Scorecaster::Theta => {
                let hist = self.window.to_vec();
                theta_forecast(&hist, self.theta_min_history)
                    .unwrap_or_else(|_| self.window.quantile(level))
            }
        }
    }
}

/// `K_I tan(clamp(E log(t+1) / (C_sat (t+1)), -π/2 + 0.01, π/2 - 0.01))`.
pub fn tan_integrator(err_sum: f64, t: u64, k_i: f64, c_sat: f64) -> f64 {
    let t1 = t as f64 + 1.0;
    let lim = std::f64::consts::FRAC_PI_2 - SATURATION_MARGIN;
    let arg = (err_sum * t1.ln() / (c_sat * t1)).clamp(-lim, lim);
    k_i * arg.tan()
}
