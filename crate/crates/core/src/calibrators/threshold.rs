//! Threshold-space update rules sharing a single `q_t` state: OGD, decay-OGD,
//! ECI and its cutoff variant, and the two smoothed ablations.

use super::StepFeedback;
use crate::smoothing::SmoothingKernel;

/// Exponent offset `ε` in the decay-OGD step size `η t^{-1/2-ε}`.
pub const DECAY_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdState {
    pub q: f64,
    /// 1-based index of the step about to be processed.
    pub t: u64,
    pub alpha: f64,
}

impl ThresholdState {
    pub fn new(alpha: f64, q1: f64) -> Self {
        Self { q: q1, t: 1, alpha }
    }

    fn apply(&mut self, s: f64, eta: f64, feedback: impl FnOnce(bool, f64) -> f64) -> StepFeedback {
        let before = self.q;
        let err = s > before;
        self.q = before + eta * feedback(err, s - before);
        self.t += 1;
        StepFeedback {
            err,
            score: s,
            threshold_before: before,
            threshold_after: self.q,
            eta_used: eta,
        }
    }

    /// Quantile tracking: `q += η (err - α)`.
    pub fn ogd_update(&mut self, s: f64, eta: f64) -> StepFeedback {
        let alpha = self.alpha;
        self.apply(s, eta, |err, _| indicator(err) - alpha)
    }

    /// `q += η [err - α + x f'(x)]` with `x = s - q`.
    pub fn eci_update(&mut self, s: f64, eta: f64, kernel: &SmoothingKernel) -> StepFeedback {
        let alpha = self.alpha;
        self.apply(s, eta, |err, x| indicator(err) - alpha + kernel.eq_term(x))
    }

    /// ECI with the EQ term suppressed when `|s - q| ≤ h`.
    pub fn eci_cutoff_update(
        &mut self,
        s: f64,
        eta: f64,
        kernel: &SmoothingKernel,
        h: f64,
    ) -> StepFeedback {
        let alpha = self.alpha;
        self.apply(s, eta, |err, x| {
            indicator(err) - alpha + kernel.eq_term_cutoff(x, h)
        })
    }

    /// Gradient step on the sigmoid-smoothed pinball loss:
    /// `q += η [f(x) - α + x f'(x)]`. The returned `err` is still the true indicator.
    pub fn full_smoothed_update(
        &mut self,
        s: f64,
        eta: f64,
        kernel: &SmoothingKernel,
    ) -> StepFeedback {
        let alpha = self.alpha;
        self.apply(s, eta, |_, x| kernel.value(x) - alpha + kernel.eq_term(x))
    }

    /// `q += η [f(x) - α]`.
    pub fn indicator_smoothed_update(
        &mut self,
        s: f64,
        eta: f64,
        kernel: &SmoothingKernel,
    ) -> StepFeedback {
        let alpha = self.alpha;
        self.apply(s, eta, |_, x| kernel.value(x) - alpha)
    }

    /// OGD with step size `η t^{-1/2-ε}`.
    pub fn decay_ogd_update(&mut self, s: f64, eta_base: f64, epsilon: f64) -> StepFeedback {
        let eta_t = decay_rate(eta_base, self.t, epsilon);
        self.ogd_update(s, eta_t)
    }

    pub fn clamp_threshold(&mut self, floor: f64) {
        self.q = self.q.max(floor);
    }
}

pub fn decay_rate(eta_base: f64, t: u64, epsilon: f64) -> f64 {
    eta_base * (t as f64).powf(-0.5 - epsilon)
}

#[inline]
pub(crate) fn indicator(err: bool) -> f64 {
    if err {
        1.0
    } else {
        0.0
    }
}
