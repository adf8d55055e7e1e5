//! Binomial standard errors and confidence bands (normal approximation).

/// Two-sided 95% z value for the normal approximation.
pub const Z_95: f64 = 1.96;

/// Standard error of a binomial proportion estimate.
pub fn binomial_stderr(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Confidence band around proportion `p` at `z` sigmas, clamped to [0, 1].
pub fn binomial_band(p: f64, n: usize, z: f64) -> (f64, f64) {
    let half = z * binomial_stderr(p, n);
    ((p - half).max(0.0), (p + half).min(1.0))
}

/// Whether an observed proportion falls inside the band around `p`.
pub fn within_band(observed: f64, p: f64, n: usize, z: f64) -> bool {
    let (lo, hi) = binomial_band(p, n, z);
    observed >= lo && observed <= hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_is_symmetric_and_clamped() {
        let (lo, hi) = binomial_band(0.5, 100, Z_95);
        assert!((lo - (0.5 - 1.96 * 0.05)).abs() < 1e-12);
        assert!((hi - (0.5 + 1.96 * 0.05)).abs() < 1e-12);

        let (lo, hi) = binomial_band(1.0, 100, Z_95);
        assert_eq!((lo, hi), (1.0, 1.0));
    }

    #[test]
    fn degenerate_band_requires_exact_hit() {
        assert!(within_band(1.0, 1.0, 50, Z_95));
        assert!(!within_band(0.99, 1.0, 50, Z_95));
    }
}
