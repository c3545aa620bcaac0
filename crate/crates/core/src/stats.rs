//! Small order-statistic and windowing helpers shared by calibrators and the runner.

use std::collections::VecDeque;

/// The `⌈p n⌉`-th order statistic of an ascending slice, with the
/// extended-real conventions used by ACI: `p > 1` gives `+∞`, `p ≤ 0` gives
/// `-∞`, and an empty slice gives `+∞`.
pub fn order_statistic_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 || p > 1.0 {
        return f64::INFINITY;
    }
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let k = (p * n as f64).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

/// Ascending multiset of scores with `O(log n)` search and `O(n)` insert.
#[derive(Debug, Clone, Default)]
pub struct SortedScores {
    values: Vec<f64>,
}

impl SortedScores {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, x: f64) {
        let idx = self.values.partition_point(|&v| v <= x);
        self.values.insert(idx, x);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn quantile(&self, p: f64) -> f64 {
        order_statistic_quantile(&self.values, p)
    }
}

/// Fixed-capacity trailing window over a score stream.
#[derive(Debug, Clone)]
pub struct TrailingWindow {
    cap: usize,
    buf: VecDeque<f64>,
}

impl TrailingWindow {
    pub fn new(cap: usize) -> Self {
        assert!(cap >= 1, "window capacity must be positive");
        Self {
            cap,
            buf: VecDeque::with_capacity(cap),
        }
    }

    pub fn push(&mut self, x: f64) {
        if self.buf.len() == self.cap {
            self.buf.pop_front();
        }
        self.buf.push_back(x);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// `max - min` over the window; zero when empty.
    pub fn range(&self) -> f64 {
        let mut it = self.buf.iter().copied();
        let Some(first) = it.next() else {
            return 0.0;
        };
        let (lo, hi) = it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x)));
        hi - lo
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.buf.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.buf.iter().copied().collect()
    }

    /// Order-statistic quantile of the window contents.
    pub fn quantile(&self, p: f64) -> f64 {
        let mut v = self.to_vec();
        v.sort_by(f64::total_cmp);
        order_statistic_quantile(&v, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistic_conventions() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(order_statistic_quantile(&s, 0.6), 3.0);
        assert_eq!(order_statistic_quantile(&s, 1.0), 5.0);
        assert_eq!(order_statistic_quantile(&s, 1.01), f64::INFINITY);
        assert_eq!(order_statistic_quantile(&s, 0.0), f64::NEG_INFINITY);
        assert_eq!(order_statistic_quantile(&s, 1e-9), 1.0);
        assert_eq!(order_statistic_quantile(&[], 0.5), f64::INFINITY);
    }

    #[test]
    fn sorted_insert_keeps_order() {
        let mut s = SortedScores::new();
        for x in [3.0, 1.0, 2.0, 2.0, -1.0] {
            s.insert(x);
        }
        assert_eq!(s.as_slice(), &[-1.0, 1.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn window_evicts_oldest() {
        let mut w = TrailingWindow::new(3);
        for x in [5.0, 1.0, 3.0, 2.0] {
            w.push(x);
        }
        assert_eq!(w.to_vec(), vec![1.0, 3.0, 2.0]);
        assert_eq!(w.range(), 2.0);
        assert_eq!(TrailingWindow::new(2).range(), 0.0);
    }
}
