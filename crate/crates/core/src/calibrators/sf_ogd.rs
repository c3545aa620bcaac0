use super::StepFeedback;

/// Scale-free OGD: the pinball subgradient normalized by the root of the
/// cumulative squared subgradients.
#[derive(Debug, Clone, PartialEq)]
pub struct SfOgdState {
    pub q: f64,
    pub alpha: f64,
    pub grad_sq_sum: f64,
}

impl SfOgdState {
    pub fn new(alpha: f64, q1: f64) -> Self {
        Self {
            q: q1,
            alpha,
            grad_sq_sum: 0.0,
        }
    }

    pub fn update(&mut self, s: f64, eta_base: f64) -> StepFeedback {
        let before = self.q;
        let err = s > before;
        let g = if err { -(1.0 - self.alpha) } else { self.alpha };
        self.grad_sq_sum += g * g;
        let eta_t = eta_base / self.grad_sq_sum.sqrt();
        self.q = before - eta_t * g;
        StepFeedback {
            err,
            score: s,
            threshold_before: before,
            threshold_after: self.q,
            eta_used: eta_t,
        }
    }
}
