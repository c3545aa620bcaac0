//! Adaptive conformal inference: online updates of the working level `α_t`,
//! with the threshold read off the empirical score distribution.

use super::StepFeedback;
use crate::stats::SortedScores;

#[derive(Debug, Clone)]
pub struct AciState {
    /// Nominal miscoverage level.
    pub alpha: f64,
    /// Working level; not confined to `(0, 1)`.
    pub alpha_t: f64,
    pub eta: f64,
    history: SortedScores,
}

impl AciState {
    pub fn new(alpha: f64, eta: f64) -> Self {
        Self {
            alpha,
            alpha_t: alpha,
            eta,
            history: SortedScores::new(),
        }
    }

    /// `Q̂(1 - α_t)` over the full expanding score history.
    pub fn threshold(&self) -> f64 {
        self.history.quantile(1.0 - self.alpha_t)
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn update(&mut self, s: f64) -> StepFeedback {
        let q = self.threshold();
        let err = s > q;
        self.alpha_t += self.eta * (self.alpha - if err { 1.0 } else { 0.0 });
        self.history.insert(s);
        StepFeedback {
            err,
            score: s,
            threshold_before: q,
            threshold_after: self.threshold(),
            eta_used: self.eta,
        }
    }
}
