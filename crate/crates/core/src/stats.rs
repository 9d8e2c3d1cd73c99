//! Robust and classical summary statistics shared across the crate.
//!
//! Callers are expected to pass finite values.

/// Consistency constant that makes MAD an estimator of σ under normality.
pub const MAD_SCALE: f64 = 1.4826;

/// Floor added to robust denominators so a zero MAD never divides by zero.
pub const EPSILON: f64 = 1e-9;

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn median_of_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(median_of_sorted(&sorted(values)))
}

/// Raw (unscaled) median absolute deviation around `center`.
pub fn mad_around(values: &[f64], center: f64) -> Option<f64> {
    let dev: Vec<f64> = values.iter().map(|v| (v - center).abs()).collect();
    median(&dev)
}

/// Returns `(median, raw MAD)`.
pub fn median_mad(values: &[f64]) -> Option<(f64, f64)> {
    let m = median(values)?;
    Some((m, mad_around(values, m)?))
}

/// `|x - median| / (1.4826 * MAD + ε)`.
pub fn robust_z(x: f64, median: f64, mad: f64) -> f64 {
    (x - median).abs() / (MAD_SCALE * mad + EPSILON)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Population (divide-by-n) standard deviation.
pub fn population_std(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
    Some(var.sqrt())
}

/// Sample (divide-by-(n-1)) variance; zero for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// Linear-interpolation quantile (type 7), `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let v = sorted(values);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(v[lo] + (v[hi] - v[lo]) * frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn robust_z_matches_hand_arithmetic() {
        // median 100, MAD 2, observed 70
        let z = robust_z(70.0, 100.0, 2.0);
        assert!((z - 30.0 / (2.9652 + 1e-9)).abs() < 1e-12);
        assert!(z > 10.1 && z < 10.12);
    }

    #[test]
    fn zero_mad_uses_epsilon_floor() {
        let (m, mad) = median_mad(&[10.0, 10.0, 10.0, 10.0, 100.0]).unwrap();
        assert_eq!((m, mad), (10.0, 0.0));
        assert!((robust_z(100.0, m, mad) - 90.0 / EPSILON).abs() < 1.0);
    }

    #[test]
    fn quantile_endpoints() {
        let v = [5.0, 1.0, 3.0];
        assert_eq!(quantile(&v, 0.0), Some(1.0));
        assert_eq!(quantile(&v, 1.0), Some(5.0));
        assert_eq!(quantile(&v, 0.5), Some(3.0));
        assert_eq!(quantile(&v, 0.25), Some(2.0));
    }

    #[test]
    fn population_std_of_small_series() {
        let s = population_std(&[8.0, 10.0, 9.0]).unwrap();
        assert!((s - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
