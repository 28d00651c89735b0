//! Small statistics helpers for Monte Carlo estimates.

use serde::Serialize;

/// Binomial proportion estimate with a Wilson score interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// z for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

impl Proportion {
    pub fn wilson(successes: u64, trials: u64, z: f64) -> Self {
        assert!(trials > 0, "no trials");
        let nf = trials as f64;
        let p = successes as f64 / nf;
        let z2 = z * z;
        let denom = 1.0 + z2 / nf;
        let centre = (p + z2 / (2.0 * nf)) / denom;
        let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
        Proportion {
            successes,
            trials,
            estimate: p,
            lower: if successes == 0 { 0.0 } else { (centre - half).max(0.0) },
            upper: if successes == trials { 1.0 } else { (centre + half).min(1.0) },
        }
    }

    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }

    /// Standard error of the estimate under the true probability `p`.
    pub fn sigma_at(p: f64, trials: u64) -> f64 {
        (p * (1.0 - p) / trials as f64).sqrt()
    }

    /// `|estimate - p| <= k·σ(p)`; when `σ(p)` vanishes the estimate must be exact.
    pub fn within_sigmas(&self, p: f64, k: f64) -> bool {
        let s = Self::sigma_at(p, self.trials);
        (self.estimate - p).abs() <= k * s + 1e-12
    }
}
