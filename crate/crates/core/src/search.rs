//! Small deterministic 1D search helpers shared by the estimators.

use crate::extval::ExtValue;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization on `[lo, hi]`. Handles extended values by
/// ordering (`+inf` never wins against a finite probe). Deterministic.
pub fn golden_min<F: FnMut(f64) -> ExtValue>(
    lo: f64,
    hi: f64,
    iters: usize,
    mut f: F,
) -> (f64, ExtValue) {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Geometric grid with `n` points from `lo` to `hi` (both positive).
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).powf(1.0 / (n as f64 - 1.0));
    (0..n).map(|i| lo * ratio.powi(i as i32)).collect()
}

/// Least-squares slope of `log|y|` against `log x`, for convergence-rate fits.
/// Pairs with `y <= 0` are skipped.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = data.len() as f64;
    if data.len() < 2 {
        return 0.0;
    }
    let mx = data.iter().map(|d| d.0).sum::<f64>() / n;
    let my = data.iter().map(|d| d.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|d| (d.0 - mx) * (d.0 - mx)).sum();
    let sxy: f64 = data.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extval::ExtValue;

    #[test]
    fn golden_finds_parabola_min() {
        let (x, v) = golden_min(0.0, 2.0, 60, |x| ExtValue::finite((x - 0.7) * (x - 0.7)));
        assert!((x - 0.7).abs() < 1e-9);
        assert!(v.to_f64() < 1e-17);
    }

    #[test]
    fn golden_ignores_infinite_plateau() {
        // finite only on [1, 2]
        let (x, v) = golden_min(0.0, 3.0, 80, |x| {
            if (1.0..=2.0).contains(&x) {
                ExtValue::finite((x - 1.5) * (x - 1.5))
            } else {
                ExtValue::Infinite
            }
        });
        assert!(v.is_finite());
        assert!((x - 1.5).abs() < 1e-6);
    }

    #[test]
    fn slope_of_inverse_is_minus_one() {
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&n| (n, 3.0 / n))
            .collect();
        assert!((loglog_slope(&pts) + 1.0).abs() < 1e-12);
    }
}
