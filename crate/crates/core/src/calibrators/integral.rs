use super::threshold::indicator;
use super::StepFeedback;
use crate::smoothing::SmoothingKernel;

/// Default geometric decay of the ECI-integral weights.
pub const DEFAULT_GAMMA: f64 = 0.95;

/// ECI-integral: the step direction is a geometrically weighted mean of all
/// past ECI feedback values `g_i = err_i - α + (s_i - q_i) f'(s_i - q_i)`.
///
/// With weights `w_i ∝ γ^{t-i}` the mean is `U_t / Z_t` where
/// `U_t = γ U_{t-1} + g_t` and `Z_t = γ Z_{t-1} + 1`. Past `g_i` are frozen at
/// the values they had when observed.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralState {
    pub q: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub weighted_sum: f64,
    pub weight_norm: f64,
}

impl IntegralState {
    pub fn new(alpha: f64, q1: f64, gamma: f64) -> Self {
        Self {
            q: q1,
            alpha,
            gamma,
            weighted_sum: 0.0,
            weight_norm: 0.0,
        }
    }

    pub fn weighted_mean(&self) -> f64 {
        if self.weight_norm > 0.0 {
            self.weighted_sum / self.weight_norm
        } else {
            0.0
        }
    }

    pub fn update(&mut self, s: f64, eta: f64, kernel: &SmoothingKernel) -> StepFeedback {
        let before = self.q;
        let err = s > before;
        let g = indicator(err) - self.alpha + kernel.eq_term(s - before);
        self.push_feedback(g);
        self.q = before + eta * self.weighted_mean();
        StepFeedback {
            err,
            score: s,
            threshold_before: before,
            threshold_after: self.q,
            eta_used: eta,
        }
    }

    pub(crate) fn push_feedback(&mut self, g: f64) {
        self.weighted_sum = self.gamma * self.weighted_sum + g;
        self.weight_norm = self.gamma * self.weight_norm + 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_matches_eci() {
        let mut s = IntegralState::new(0.1, 1.0, DEFAULT_GAMMA);
        s.update(2.0, 0.1, &SmoothingKernel::default());
        assert_abs_diff_eq!(s.q, 1.109_661_19, epsilon = 1e-8);
    }

    #[test]
    fn constant_feedback_mean_is_constant() {
        for gamma in [0.1, 0.5, 0.95, 0.999] {
            let mut s = IntegralState::new(0.1, 0.0, gamma);
            for _ in 0..20 {
                s.push_feedback(1.096_611_9);
                assert_abs_diff_eq!(s.weighted_mean(), 1.096_611_9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn two_term_weighted_mean() {
        let mut s = IntegralState::new(0.1, 0.0, 0.95);
        s.push_feedback(1.0);
        s.push_feedback(0.0);
        assert_abs_diff_eq!(s.weighted_mean(), 0.95 / 1.95, epsilon = 1e-15);
        assert_abs_diff_eq!(s.weighted_mean(), 0.487_179_49, epsilon = 1e-8);
    }
}
