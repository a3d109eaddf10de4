//! Small numeric helpers shared across modules.

/// Numerically stable logistic function `1 / (1 + exp(-u))`.
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`logistic`]: `ln(p / (1 - p))`.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Clamp an occupancy value into the open interval (0, 1).
pub fn clamp_occupancy(v: f64) -> f64 {
    v.clamp(1e-12, 1.0 - 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_logit_roundtrip() {
        // Past |u| ~ 15 the rounding of p near 1 limits what logit can
        // recover, so the tight check stays in the usable range.
        for &u in &[-13.0, -2.0, 0.0, 0.5, 7.0, 13.0] {
            let p = logistic(u);
            assert!(p > 0.0 && p < 1.0);
            assert!((logit(p) - u).abs() < 1e-9 * u.abs().max(1.0));
        }
        assert!(logit(clamp_occupancy(logistic(40.0))) > 20.0);
    }

    #[test]
    fn extreme_values_stay_open() {
        assert!(clamp_occupancy(logistic(1e4)) < 1.0);
        assert!(clamp_occupancy(logistic(-1e4)) > 0.0);
    }
}
