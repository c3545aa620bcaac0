//! Sigmoid smoothing kernel and the error-quantification (EQ) term.
//!
//! The kernel `f(x) = 1 / (1 + exp(-c x))` is a smooth stand-in for the
//! indicator `1{x > 0}`. Calibrators use two derived quantities:
//!
//! - the gradient `f'(x) = c f(x) (1 - f(x))`, bounded by `c / 4`;
//! - the EQ term `x f'(x)`, an odd function bounded in magnitude by `1/e`
//!   for every `c > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analytic bound on `|x f'(x)|` for the sigmoid kernel, independent of `c`.
pub const LAMBDA_BOUND: f64 = 0.367_879_441_171_442_33; // 1/e

/// How [`SmoothingKernel::lambda_sup`] picks the constant bounding the EQ term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// The loose analytic bound `1/e`.
    #[default]
    Analytic,
    /// Grid search of `|u σ(u)(1-σ(u))|` over `u ∈ [-20, 20]` at step `1e-4`.
    Tight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingKernel {
    c: f64,
}

impl Default for SmoothingKernel {
    fn default() -> Self {
        Self { c: 1.0 }
    }
}

impl SmoothingKernel {
    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigmoid scale c must be finite and positive, got {c}"
            )));
        }
        Ok(Self { c })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `1 / (1 + exp(-c x))`, evaluated on the branch that never exponentiates
    /// a positive argument.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        logistic(self.c * x)
    }

    /// `c f(x) (1 - f(x))`.
    #[inline]
    pub fn grad(&self, x: f64) -> f64 {
        self.c * logistic_slope(self.c * x)
    }

    /// EQ term `x f'(x)`.
    ///
    /// Computed from `|x|` and the sign of `x` so that `eq_term(-x) == -eq_term(x)`
    /// holds bit for bit.
    #[inline]
    pub fn eq_term(&self, x: f64) -> f64 {
        let a = x.abs();
        let mag = a * self.c * logistic_slope(self.c * a);
        if x < 0.0 {
            -mag
        } else {
            mag
        }
    }

    /// EQ term gated by `|x| > h` (strict); zero at and below the cutoff.
    #[inline]
    pub fn eq_term_cutoff(&self, x: f64, h: f64) -> f64 {
        if x.abs() > h {
            self.eq_term(x)
        } else {
            0.0
        }
    }

    /// A valid `λ` with `|x f'(x)| ≤ λ` for all `x`.
    pub fn lambda_sup(&self, mode: LambdaMode) -> f64 {
        match mode {
            LambdaMode::Analytic => LAMBDA_BOUND,
            // |x f'(x)| = |u σ(u)(1-σ(u))| with u = c x, so the supremum
            // does not depend on c.
            LambdaMode::Tight => {
                let steps = 400_000;
                (0..=steps)
                    .map(|i| {
                        let u = -20.0 + i as f64 * 1e-4;
                        (u * logistic_slope(u)).abs()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// Standard logistic `1 / (1 + e^{-u})`.
#[inline]
fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `σ(u)(1 - σ(u))`, symmetric in `u`.
#[inline]
fn logistic_slope(u: f64) -> f64 {
    let e = (-u.abs()).exp();
    let d = 1.0 + e;
    e / (d * d)
}
