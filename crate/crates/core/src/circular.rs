//! Directional statistics on the hue circle.

/// Wraps an angle in degrees into `[0, 360)`.
pub fn wrap_degrees(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if wrapped >= 360.0 {
        0.0
    } else {
        wrapped
    }
}

/// Accumulates weighted unit vectors for a circular mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CircularMean {
    sin_sum: f64,
    cos_sum: f64,
    weight: f64,
}

impl CircularMean {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, degrees: f64, weight: f64) {
        let radians = degrees.to_radians();
        self.sin_sum += weight * radians.sin();
        self.cos_sum += weight * radians.cos();
        self.weight += weight;
    }

    pub fn merge(&mut self, other: &CircularMean) {
        self.sin_sum += other.sin_sum;
        self.cos_sum += other.cos_sum;
        self.weight += other.weight;
    }

    pub fn total_weight(&self) -> f64 {
        self.weight
    }

    /// Mean direction in `[0, 360)`; `None` when nothing was accumulated.
    pub fn mean_degrees(&self) -> Option<f64> {
        if self.weight <= 0.0 {
            return None;
        }
        Some(wrap_degrees(self.sin_sum.atan2(self.cos_sum).to_degrees()))
    }

    /// Mean resultant length `R` in `[0, 1]`.
    pub fn resultant_length(&self) -> Option<f64> {
        if self.weight <= 0.0 {
            return None;
        }
        Some((self.sin_sum.hypot(self.cos_sum) / self.weight).min(1.0))
    }

    /// Circular standard deviation `sqrt(-2 ln R)` in degrees.
    ///
    /// Undefined (`None`) when the resultant vanishes, i.e. the directions
    /// cancel out and no mean direction exists.
    pub fn std_degrees(&self) -> Option<f64> {
        let r = self.resultant_length()?;
        if r < 1e-12 {
            return None;
        }
        Some((-2.0 * r.ln()).max(0.0).sqrt().to_degrees())
    }
}

/// Shortest distance between two hues in degrees, in `[0, 180]`.
pub fn hue_distance_degrees(a: f64, b: f64) -> f64 {
    let d = (wrap_degrees(a) - wrap_degrees(b)).abs();
    d.min(360.0 - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraparound_mean() {
        let mut acc = CircularMean::new();
        acc.push(350.0, 1.0);
        acc.push(10.0, 1.0);
        let mean = acc.mean_degrees().unwrap();
        assert!(hue_distance_degrees(mean, 0.0) < 1e-9, "mean = {mean}");
    }

    #[test]
    fn empty_has_no_mean() {
        assert_eq!(CircularMean::new().mean_degrees(), None);
        assert_eq!(CircularMean::new().std_degrees(), None);
    }

    #[test]
    fn identical_angles_have_zero_spread() {
        let mut acc = CircularMean::new();
        for _ in 0..5 {
            acc.push(123.0, 1.0);
        }
        assert!(acc.std_degrees().unwrap() < 1e-6);
        assert!((acc.mean_degrees().unwrap() - 123.0).abs() < 1e-9);
    }

    #[test]
    fn wrap_handles_negative_zero_edge() {
        assert_eq!(wrap_degrees(-1e-18), 0.0);
        assert_eq!(wrap_degrees(720.0), 0.0);
        assert!((wrap_degrees(-90.0) - 270.0).abs() < 1e-12);
    }
}
