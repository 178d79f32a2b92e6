//! Small numerical helpers shared by the analysis modules.

/// Derivative of a sampled series on a non-uniform grid: three-point
/// centered formula in the interior, first-order one-sided at the ends.
/// A result is `None` whenever a value it needs is `None`.
pub fn centered_difference(t: &[f64], y: &[Option<f64>]) -> Vec<Option<f64>> {
    let m = t.len();
    (0..m)
        .map(|i| {
            if m < 2 {
                return None;
            }
            if i == 0 {
                return Some((y[1]? - y[0]?) / (t[1] - t[0]));
            }
            if i == m - 1 {
                return Some((y[m - 1]? - y[m - 2]?) / (t[m - 1] - t[m - 2]));
            }
            let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
            let (a, b, c) = (y[i - 1]?, y[i]?, y[i + 1]?);
            Some(-h2 / (h1 * (h1 + h2)) * a + (h2 - h1) / (h1 * h2) * b + h1 / (h2 * (h1 + h2)) * c)
        })
        .collect()
}

/// Sign changes between consecutive values whose magnitude exceeds
/// `abs_tol`; smaller values are skipped.
pub fn count_sign_changes(series: &[f64], abs_tol: f64) -> usize {
    let mut last: Option<bool> = None;
    let mut count = 0;
    for &v in series {
        if !(v.abs() > abs_tol) {
            continue;
        }
        let positive = v > 0.0;
        if last.is_some_and(|l| l != positive) {
            count += 1;
        }
        last = Some(positive);
    }
    count
}

/// [`count_sign_changes`] with the threshold scaled by `max |series|`.
pub fn count_sign_changes_rel(series: &[f64], rel_tol: f64) -> usize {
    let max = series.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    count_sign_changes(series, rel_tol * max)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Running trapezoid integral of `y` over `t`, starting at zero.
pub fn cumulative_trapezoid(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for i in 0..t.len() {
        if i > 0 {
            acc += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
        }
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sign_change_counting() {
        assert_eq!(count_sign_changes(&[1.0, -1.0, 1.0, -1.0], 0.0), 3);
        assert_eq!(count_sign_changes(&[3.0, 2.0, 1.0, 0.5], 0.0), 0);
        assert_eq!(count_sign_changes(&[1.0, 1e-15, -1e-15, 1.0], 1e-12), 0);
        assert_eq!(count_sign_changes(&[1.0, 0.0, -1.0], 0.0), 1);
        assert_eq!(count_sign_changes(&[], 0.0), 0);
    }

    #[test]
    fn centered_difference_is_exact_for_quadratics() {
        let t = [0.0, 0.1, 0.35, 0.4, 1.0];
        let y: Vec<Option<f64>> = t.iter().map(|&x| Some(3.0 * x * x - x + 2.0)).collect();
        let d = centered_difference(&t, &y);
        for i in 1..t.len() - 1 {
            assert!((d[i].unwrap() - (6.0 * t[i] - 1.0)).abs() < 1e-12);
        }
        let gap = [Some(1.0), None, Some(2.0)];
        assert_eq!(centered_difference(&[0.0, 1.0, 2.0], &gap), vec![None, None, None]);
    }

    #[test]
    fn trapezoid_and_pearson() {
        let t = [0.0, 0.5, 1.0, 2.0];
        let c = cumulative_trapezoid(&t, &[2.0, 2.0, 2.0, 2.0]);
        assert_eq!(c, vec![0.0, 1.0, 2.0, 4.0]);
        assert!((pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]) + 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn sign_changes_ignore_positive_scaling(
            series in proptest::collection::vec(-1e3f64..1e3, 0..60),
            scale in 1e-6f64..1e6,
        ) {
            let scaled: Vec<f64> = series.iter().map(|v| v * scale).collect();
            prop_assert_eq!(
                count_sign_changes_rel(&series, 1e-9),
                count_sign_changes_rel(&scaled, 1e-9)
            );
        }
    }
}
