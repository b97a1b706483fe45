//! SGD helpers shared by the trainers.

use crate::embed_store::norm;

/// Scale `grad` in place so its L2 norm is at most `max_norm`.
pub fn clip_norm(grad: &mut [f64], max_norm: f64) {
    let n = norm(grad);
    if n > max_norm {
        let scale = max_norm / n;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
}

/// Learning rate decaying linearly from `initial` to `initial / 10`.
#[derive(Debug, Clone, Copy)]
pub struct LinearDecay {
    initial: f64,
    total: u64,
}

impl LinearDecay {
    pub fn new(initial: f64, total: u64) -> Self {
        LinearDecay {
            initial,
            total: total.max(1),
        }
    }

    pub fn at(&self, progress: u64) -> f64 {
        let frac = (progress as f64 / self.total as f64).min(1.0);
        self.initial * (1.0 - 0.9 * frac)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln(sigmoid(x))`, stable for large |x|.
#[inline]
pub fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_caps_norm() {
        let mut g = vec![3.0, 4.0];
        clip_norm(&mut g, 1.0);
        assert!((norm(&g) - 1.0).abs() < 1e-12);
        let mut small = vec![0.3, 0.4];
        clip_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.3, 0.4]);
    }

    #[test]
    fn decay_endpoints() {
        let d = LinearDecay::new(0.08, 100);
        assert_eq!(d.at(0), 0.08);
        assert!((d.at(100) - 0.008).abs() < 1e-15);
        assert!((d.at(1000) - 0.008).abs() < 1e-15);
    }

    #[test]
    fn log_sigmoid_stable() {
        assert!((neg_log_sigmoid(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(neg_log_sigmoid(800.0) >= 0.0);
        assert!((neg_log_sigmoid(-800.0) - 800.0).abs() < 1e-9);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub step: u64,
    /// Mean loss per step since the previous record.
    pub loss: f64,
    pub lr: f64,
}

impl std::fmt::Display for LogRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {} {:.6} {:.6}", self.epoch, self.step, self.loss, self.lr)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Number of SGD steps taken.
    pub steps: u64,
    /// Mean loss per step for each epoch.
    pub epoch_losses: Vec<f64>,
    pub log: Vec<LogRecord>,
}

/// Split `0..len` into `parts` contiguous ranges of near-equal size.
pub(crate) fn shards(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let parts = parts.max(1);
    (0..parts)
        .map(|p| (p * len / parts)..((p + 1) * len / parts))
        .collect()
}
