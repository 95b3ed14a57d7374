//! Stress-gated viability.

use std::f64::consts::PI;

use crate::config::MechanoParams;

/// Sigmoid viability 𝓜_B of a perceived stress. Evaluated without overflow
/// for arbitrarily large exponents.
pub fn sigmoid_viability(sigma: f64, p: &MechanoParams) -> f64 {
    let s = sigma.abs();
    if p.disruption_cutoff && s > p.threshold {
        return 0.0;
    }
    let x = p.smoothness * (s - p.beta_s * p.threshold);
    if x > 0.0 {
        let e = (-x).exp();
        (p.q * e + (1.0 - p.q)) / (e + 1.0)
    } else {
        let e = x.exp();
        (p.q + (1.0 - p.q) * e) / (1.0 + e)
    }
}

/// σ_M(t) = σ_s^h + amp·sin(2πft).
pub fn perceived_stress(slow: f64, amp: f64, t: f64, f: f64) -> f64 {
    slow + amp * (2.0 * PI * f * t).sin()
}

/// Mean of 𝓜_B over one drive period, trapezoidal in the phase θ = 2πft.
pub fn period_average_viability(slow: f64, amp: f64, p: &MechanoParams, n_quad: usize) -> f64 {
    PhaseTable::new(n_quad).average(slow, amp, p)
}

/// Sine samples for the periodic trapezoidal rule, shared across nodes.
#[derive(Debug, Clone)]
pub struct PhaseTable {
    sines: Vec<f64>,
}

impl PhaseTable {
    pub fn new(n_quad: usize) -> Self {
        let n = n_quad.max(1);
        Self {
            sines: (0..n).map(|k| (2.0 * PI * k as f64 / n as f64).sin()).collect(),
        }
    }

    pub fn average(&self, slow: f64, amp: f64, p: &MechanoParams) -> f64 {
        if amp == 0.0 {
            return sigmoid_viability(slow, p);
        }
        let sum: f64 = self
            .sines
            .iter()
            .map(|s| sigmoid_viability(slow + amp * s, p))
            .sum();
        // Each sample lies in the sigmoid's range; keep the mean there despite rounding.
        let floor = if p.disruption_cutoff { 0.0 } else { p.q };
        (sum / self.sines.len() as f64).clamp(floor, 1.0 - p.q)
    }

    /// Period-averaged viability at every node.
    pub fn field(&self, slow: &[f64], amp: &[f64], p: &MechanoParams) -> Vec<f64> {
        slow.iter()
            .zip(amp)
            .map(|(&s, &a)| self.average(s, a, p))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tumor() -> MechanoParams {
        MechanoParams::default()
    }

    #[test]
    fn midpoint_is_half() {
        let p = tumor();
        assert_eq!(sigmoid_viability(p.beta_s * p.threshold, &p), 0.5);
        assert_eq!(sigmoid_viability(-240.0, &p), 0.5);
    }

    #[test]
    fn low_and_high_stress_limits() {
        let p = tumor();
        let low = sigmoid_viability(0.0, &p);
        assert!((low - 0.95).abs() < 1e-5, "{low}");
        let high = sigmoid_viability(1e5, &p);
        assert!((high - 0.05).abs() < 1e-12);
        assert!(sigmoid_viability(f64::MAX, &p).is_finite());
    }

    #[test]
    fn cutoff_zeroes_above_threshold() {
        let p = MechanoParams {
            disruption_cutoff: true,
            ..tumor()
        };
        assert_eq!(sigmoid_viability(1300.0, &p), 0.0);
        assert!(sigmoid_viability(1100.0, &p) > 0.0);
    }

    #[test]
    fn perceived_stress_examples() {
        let f = 5e6;
        assert_eq!(perceived_stress(-30.0, 0.0, 1.23e-7, f), -30.0);
        assert!((perceived_stress(0.0, 1000.0, 0.25 / f, f) - 1000.0).abs() < 1e-9);
        assert!((perceived_stress(-100.0, 1000.0, 0.75 / f, f) + 1100.0).abs() < 1e-9);
    }

    #[test]
    fn zero_amplitude_average_is_pointwise() {
        let p = tumor();
        assert_eq!(period_average_viability(123.0, 0.0, &p, 256), sigmoid_viability(123.0, &p));
    }

    #[test]
    fn unit_amplitude_matches_fine_quadrature() {
        let p = tumor();
        let fine = period_average_viability(0.0, 1000.0, &p, 4096);
        let prod = period_average_viability(0.0, 1000.0, &p, 256);
        assert!((fine - prod).abs() < 1e-6);
        // Reference from adaptive high-precision quadrature.
        assert!((fine - 0.188_964_858_251_919).abs() < 1e-8, "{fine}");
    }

    #[test]
    fn large_amplitude_saturates() {
        let p = tumor();
        let m = period_average_viability(0.0, 1e6, &p, 4096);
        assert!(m - p.q < 2.0 * p.threshold / 1e6 + 1e-3);
        assert!(m >= p.q);
    }

    proptest! {
        #[test]
        fn range_is_q_to_one_minus_q(slow in -1e5..1e5f64, amp in 0.0..1e5f64) {
            let p = tumor();
            let m = period_average_viability(slow, amp, &p, 64);
            prop_assert!(m >= p.q && m <= 1.0 - p.q);
        }

        #[test]
        fn symmetric_in_slow_stress(slow in -5e3..5e3f64, amp in 0.0..5e3f64) {
            let p = tumor();
            let a = period_average_viability(slow, amp, &p, 256);
            let b = period_average_viability(-slow, amp, &p, 256);
            prop_assert!((a - b).abs() < 1e-14);
        }

        #[test]
        fn monotone_when_saturated(amp in 0.0..3e3f64, extra in 0.0..3e3f64, step in 1e-3..500.0f64) {
            let p = tumor();
            let s = amp + extra;
            let a = period_average_viability(s, amp, &p, 256);
            let b = period_average_viability(s + step, amp, &p, 256);
            prop_assert!(b <= a + 1e-15);
        }
    }
}
