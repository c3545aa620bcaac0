//! Online threshold calibrators.
//!
//! Every rule is a single-step state machine: it exposes the current threshold
//! `q_t`, consumes the realized score `s_t`, and reports a [`StepFeedback`].
//! Miscoverage is the strict exceedance `s_t > q_t`, so a tie counts as covered.
//!
//! [`Calibrator`] wraps the per-rule states behind one interface driven by the
//! runner, which supplies the per-step learning rate and cutoff.

mod aci;
mod integral;
mod pid;
mod sf_ogd;
mod threshold;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use aci::AciState;
pub use integral::{IntegralState, DEFAULT_GAMMA};
pub use pid::{tan_integrator, IntegratorForm, PidState, Scorecaster};
pub use sf_ogd::SfOgdState;
pub use threshold::{decay_rate, ThresholdState, DECAY_EPSILON};

use crate::error::{Error, Result};
use crate::smoothing::SmoothingKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibratorKind {
    Ogd,
    Aci,
    SfOgd,
    DecayOgd,
    Pid,
    FullSmoothed,
    IndicatorSmoothed,
    Eci,
    EciCutoff,
    EciIntegral,
}

impl CalibratorKind {
    pub const ALL: [CalibratorKind; 10] = [
        CalibratorKind::Aci,
        CalibratorKind::Ogd,
        CalibratorKind::SfOgd,
        CalibratorKind::DecayOgd,
        CalibratorKind::Pid,
        CalibratorKind::Eci,
        CalibratorKind::EciCutoff,
        CalibratorKind::EciIntegral,
        CalibratorKind::FullSmoothed,
        CalibratorKind::IndicatorSmoothed,
    ];

    /// Identifier used in config files and output names.
    pub fn key(self) -> &'static str {
        match self {
            CalibratorKind::Ogd => "ogd",
            CalibratorKind::Aci => "aci",
            CalibratorKind::SfOgd => "sf_ogd",
            CalibratorKind::DecayOgd => "decay_ogd",
            CalibratorKind::Pid => "pid",
            CalibratorKind::FullSmoothed => "full_smoothed",
            CalibratorKind::IndicatorSmoothed => "indicator_smoothed",
            CalibratorKind::Eci => "eci",
            CalibratorKind::EciCutoff => "eci_cutoff",
            CalibratorKind::EciIntegral => "eci_integral",
        }
    }

    /// Rate schedule used when the config does not override it.
    pub fn default_rate(self) -> RateSchedule {
        match self {
            CalibratorKind::Ogd | CalibratorKind::Aci => RateSchedule::Fixed,
            // these scale the base rate internally
            CalibratorKind::SfOgd | CalibratorKind::DecayOgd => RateSchedule::Fixed,
            _ => RateSchedule::Adaptive,
        }
    }
}

impl fmt::Display for CalibratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CalibratorKind::Ogd => "OGD",
            CalibratorKind::Aci => "ACI",
            CalibratorKind::SfOgd => "SF-OGD",
            CalibratorKind::DecayOgd => "decay-OGD",
            CalibratorKind::Pid => "PID",
            CalibratorKind::FullSmoothed => "full-smoothed",
            CalibratorKind::IndicatorSmoothed => "indicator-smoothed",
            CalibratorKind::Eci => "ECI",
            CalibratorKind::EciCutoff => "ECI-cutoff",
            CalibratorKind::EciIntegral => "ECI-integral",
        };
        f.write_str(name)
    }
}

impl FromStr for CalibratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        CalibratorKind::ALL
            .into_iter()
            .find(|k| k.key() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

/// How the runner turns the base rate `η` into the per-step rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSchedule {
    /// `η_t = η`.
    Fixed,
    /// `η_t = η (max - min)` over the trailing score window.
    Adaptive,
}

/// Outcome of one calibrator step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFeedback {
    /// `s > threshold_before`.
    pub err: bool,
    pub score: f64,
    pub threshold_before: f64,
    pub threshold_after: f64,
    pub eta_used: f64,
}

/// Method choice plus every hyperparameter any rule may need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSpec {
    pub kind: CalibratorKind,
    /// Base learning rate `η`.
    pub eta: f64,
    /// Sigmoid scale.
    pub c: f64,
    /// Cutoff multiplier for ECI-cutoff.
    pub h: f64,
    /// Weight decay for ECI-integral.
    pub gamma: f64,
    /// Trailing window length for adaptive rates, cutoffs and PID scorecasts.
    pub window: usize,
    pub k_i: f64,
    pub c_sat: Option<f64>,
    pub integrator: IntegratorForm,
    pub scorecaster: Scorecaster,
    pub decay_epsilon: f64,
    /// Overrides [`CalibratorKind::default_rate`].
    pub rate: Option<RateSchedule>,
    /// Clamp `q` to at least this value after every update.
    pub clamp_floor: Option<f64>,
    /// Initial threshold `q_1`.
    pub q1: f64,
}

impl Default for MethodSpec {
    fn default() -> Self {
        Self {
            kind: CalibratorKind::Eci,
            eta: 0.1,
            c: 1.0,
            h: 1.0,
            gamma: DEFAULT_GAMMA,
            window: 100,
            k_i: 1.0,
            c_sat: None,
            integrator: IntegratorForm::Tan,
            scorecaster: Scorecaster::WindowQuantile,
            decay_epsilon: DECAY_EPSILON,
            rate: None,
            clamp_floor: None,
            q1: 0.0,
        }
    }
}

impl MethodSpec {
    pub fn new(kind: CalibratorKind, eta: f64) -> Self {
        Self {
            kind,
            eta,
            ..Self::default()
        }
    }

    pub fn rate_schedule(&self) -> RateSchedule {
        self.rate.unwrap_or_else(|| self.kind.default_rate())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return bad(format!("c must be positive, got {}", self.c));
        }
        if self.h.is_nan() || self.h < 0.0 {
            return bad(format!("h must be nonnegative, got {}", self.h));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.window < 2 {
            return bad(format!("window must be at least 2, got {}", self.window));
        }
        if let Some(cs) = self.c_sat {
            if !(cs.is_finite() && cs > 0.0) {
                return bad(format!("c_sat must be positive, got {cs}"));
            }
        }
        if !self.k_i.is_finite() {
            return bad(format!("k_i must be finite, got {}", self.k_i));
        }
        if !self.q1.is_finite() {
            return bad(format!("q1 must be finite, got {}", self.q1));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum RuleState {
    Threshold(ThresholdState),
    Aci(AciState),
    SfOgd(SfOgdState),
    Pid(PidState),
    Integral(IntegralState),
}

/// A configured calibrator for one score stream.
#[derive(Debug, Clone)]
pub struct Calibrator {
    kind: CalibratorKind,
    kernel: SmoothingKernel,
    eta: f64,
    decay_epsilon: f64,
    clamp_floor: Option<f64>,
    state: RuleState,
}

/// Per-step inputs computed by the driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInputs {
    /// Learning rate for this step (already scaled when adaptive).
    pub eta: f64,
    /// Absolute cutoff `h_t` for ECI-cutoff.
    pub cutoff: f64,
}

impl Calibrator {
    pub fn new(spec: &MethodSpec, alpha: f64) -> Result<Self> {
        spec.validate()?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        let q1 = spec.q1;
        let state = match spec.kind {
            CalibratorKind::Aci => RuleState::Aci(AciState::new(alpha, spec.eta)),
            CalibratorKind::SfOgd => RuleState::SfOgd(SfOgdState::new(alpha, q1)),
            CalibratorKind::Pid => RuleState::Pid(
                PidState::new(alpha, q1, spec.window)
                    .with_integrator(spec.k_i, spec.c_sat, spec.integrator)
                    .with_scorecaster(spec.scorecaster, 50),
            ),
            CalibratorKind::EciIntegral => {
                RuleState::Integral(IntegralState::new(alpha, q1, spec.gamma))
            }
            _ => RuleState::Threshold(ThresholdState::new(alpha, q1)),
        };
        Ok(Self {
            kind: spec.kind,
            kernel: SmoothingKernel::new(spec.c)?,
            eta: spec.eta,
            decay_epsilon: spec.decay_epsilon,
            clamp_floor: spec.clamp_floor,
            state,
        })
    }

    pub fn kind(&self) -> CalibratorKind {
        self.kind
    }

    pub fn kernel(&self) -> &SmoothingKernel {
        &self.kernel
    }

    /// Current threshold `q_t`; ACI may return `±∞`.
    pub fn threshold(&self) -> f64 {
        match &self.state {
            RuleState::Threshold(s) => s.q,
            RuleState::Aci(s) => s.threshold(),
            RuleState::SfOgd(s) => s.q,
            RuleState::Pid(s) => s.q,
            RuleState::Integral(s) => s.q,
        }
    }

    pub fn update(&mut self, s: f64, inputs: StepInputs) -> StepFeedback {
        let k = &self.kernel;
        let eta = inputs.eta;
        let mut fb = match (&mut self.state, self.kind) {
            (RuleState::Aci(st), _) => st.update(s),
            (RuleState::SfOgd(st), _) => st.update(s, eta),
            (RuleState::Pid(st), _) => st.update(s, eta),
            (RuleState::Integral(st), _) => st.update(s, eta, k),
            (RuleState::Threshold(st), kind) => match kind {
                CalibratorKind::Ogd => st.ogd_update(s, eta),
                CalibratorKind::DecayOgd => st.decay_ogd_update(s, eta, self.decay_epsilon),
                CalibratorKind::Eci => st.eci_update(s, eta, k),
                CalibratorKind::EciCutoff => st.eci_cutoff_update(s, eta, k, inputs.cutoff),
                CalibratorKind::FullSmoothed => st.full_smoothed_update(s, eta, k),
                CalibratorKind::IndicatorSmoothed => st.indicator_smoothed_update(s, eta, k),
                _ => unreachable!("{kind} does not use a plain threshold state"),
            },
        };
        if let Some(floor) = self.clamp_floor {
            self.clamp(floor);
            fb.threshold_after = self.threshold();
        }
        fb
    }

    fn clamp(&mut self, floor: f64) {
        match &mut self.state {
            RuleState::Threshold(s) => s.clamp_threshold(floor),
            RuleState::SfOgd(s) => s.q = s.q.max(floor),
            RuleState::Pid(s) => s.q = s.q.max(floor),
            RuleState::Integral(s) => s.q = s.q.max(floor),
            // ACI thresholds are order statistics of the observed scores.
            RuleState::Aci(_) => {}
        }
    }

    /// Base rate the calibrator was configured with.
    pub fn base_eta(&self) -> f64 {
        self.eta
    }
}
