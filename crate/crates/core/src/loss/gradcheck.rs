//! Central-difference gradient checking for the loss kernels.

/// Default finite-difference step.
pub const STEP: f64 = 1e-5;
/// Default relative tolerance.
pub const RTOL: f64 = 1e-3;
/// Absolute floor below which components are compared absolutely.
pub const ATOL: f64 = 1e-6;

/// Numeric gradient of `f` at `x` by central differences with step `h`.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = probe[k];
            probe[k] = orig + h;
            let up = f(&probe);
            probe[k] = orig - h;
            let down = f(&probe);
            probe[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Componentwise `|a - n| <= atol + rtol * max(|a|, |n|)`.
pub fn gradients_agree(analytic: &[f64], numeric: &[f64], rtol: f64, atol: f64) -> bool {
    analytic.len() == numeric.len()
        && analytic
            .iter()
            .zip(numeric)
            .all(|(a, n)| (a - n).abs() <= atol + rtol * a.abs().max(n.abs()))
}

/// Largest componentwise relative discrepancy, for diagnostics.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], atol: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (atol + a.abs().max(n.abs())))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let x = [1.0, -2.0, 0.5];
        let numeric = central_difference(|v| v.iter().map(|a| a * a).sum(), &x, STEP);
        let analytic: Vec<f64> = x.iter().map(|a| 2.0 * a).collect();
        assert!(gradients_agree(&analytic, &numeric, RTOL, ATOL));
        assert!(!gradients_agree(&[2.0, -4.0, 2.0], &numeric, RTOL, ATOL));
    }
}
