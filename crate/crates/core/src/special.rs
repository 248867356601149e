//! Polygamma functions for the log-spectrum bias and variance.

pub use statrs::function::gamma::digamma;

/// `psi'(x)` for `x > 0`: upward recurrence to `x >= 10`, then the
/// asymptotic series.
pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let z = 1.0 / (x * x);
    // Bernoulli terms B_2k / x^(2k+1)
    let tail =
        z * (1.0 / 6.0 - z * (1.0 / 30.0 - z * (1.0 / 42.0 - z * (1.0 / 30.0 - z * 5.0 / 66.0))));
    acc + 1.0 / x + 0.5 * z + tail / x
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn trigamma_known_values() {
        assert!((trigamma(1.0) - PI * PI / 6.0).abs() < 1e-12);
        assert!((trigamma(0.5) - PI * PI / 2.0).abs() < 1e-12);
        // psi'(n+1) = psi'(n) - 1/n^2
        for n in 1..30 {
            let x = n as f64 + 0.3;
            assert!((trigamma(x + 1.0) - trigamma(x) + 1.0 / (x * x)).abs() < 1e-12);
        }
        assert!(trigamma(0.0).is_nan());
    }

    #[test]
    fn trigamma_is_derivative_of_digamma() {
        for x in [0.7, 2.0, 5.5, 27.0, 300.0] {
            let h = 1e-4 * x;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!(
                (fd - trigamma(x)).abs() < 1e-7 * trigamma(x).max(1.0),
                "{x}"
            );
        }
    }
}
