//! Small statistical helpers shared by the pipeline stages.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population (1/n) standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    var.sqrt()
}

/// Sample (1/(n-1)) standard deviation.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

/// Two-sided p-value of a Student t statistic.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() || df <= 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Pearson correlation and its two-sided p-value (t test, n - 2 dof).
///
/// Returns `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Some((r, correlation_p_value(r, n)))
}

/// p-value of the null r = 0 for a sample of `n` pairs.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n <= 2 {
        return 1.0;
    }
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    t_two_sided_p(r * (df / denom).sqrt(), df)
}

/// One-sample t test of mean zero. Zero-variance samples get p = 0 when the
/// mean is nonzero and p = 1 otherwise.
pub fn one_sample_t_test(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, 1.0);
    }
    let sd = sample_std(xs);
    if sd == 0.0 || !sd.is_finite() {
        let p = if m != 0.0 { 0.0 } else { 1.0 };
        return (m, p);
    }
    let t = m / (sd / (xs.len() as f64).sqrt());
    (m, t_two_sided_p(t, (xs.len() - 1) as f64))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln σ(x), stable for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlation_has_zero_p() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let (r, p) = pearson(&x, &y).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!(p < 1e-10);
    }

    #[test]
    fn constant_input_has_no_correlation() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn t_test_reference_value() {
        // scipy.stats.ttest_1samp([1, 2, 3, 4, 6], 0) -> t = 3.71992, p = 0.0204759
        let (m, p) = one_sample_t_test(&[1.0, 2.0, 3.0, 4.0, 6.0]);
        assert!((m - 3.2).abs() < 1e-12);
        assert!((p - 0.020_475_874_420_910_676).abs() < 1e-9, "p = {p}");
    }

    #[test]
    fn degenerate_t_test() {
        assert_eq!(one_sample_t_test(&[2.0, 2.0, 2.0]).1, 0.0);
        assert_eq!(one_sample_t_test(&[0.0, 0.0]).1, 1.0);
    }

    #[test]
    fn log_sigmoid_saturates() {
        assert_eq!(log_sigmoid(1e6), 0.0);
        assert!((log_sigmoid(-1e6) + 1e6).abs() < 1e-6);
        assert!((log_sigmoid(0.3) - sigmoid(0.3).ln()).abs() < 1e-15);
    }
}
