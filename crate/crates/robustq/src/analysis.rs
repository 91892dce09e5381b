//! Small summaries of error traces: percentiles across seeds, plateau
//! levels, and a decay-rate fit on the log-log curve.

/// Linearly interpolated percentile, `p` in `[0, 1]`. Sorts a copy.
pub fn percentile(data: &[f64], p: f64) -> f64 {
    assert!(!data.is_empty(), "percentile of empty slice");
    assert!((0.0..=1.0).contains(&p), "p must lie in [0,1]");
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN data"));
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn median(data: &[f64]) -> f64 {
    percentile(data, 0.5)
}

/// Ordinary least-squares slope of `y` against `x`. Returns 0 for fewer
/// than two points or a degenerate (constant) x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Fits the decay exponent of an error series `d_t` (indexed by iteration,
/// `d[0]` = initial error) over the second half of the log-domain, i.e.
/// iterations in `[sqrt(T), T]`. Points are sampled log-uniformly so late
/// iterations do not dominate the fit; non-positive errors are skipped.
/// A flat series yields slope 0.
pub fn loglog_slope_second_half(errors: &[f64]) -> f64 {
    let t_max = errors.len() - 1;
    if t_max < 4 {
        return 0.0;
    }
    let t_min = (t_max as f64).sqrt().ceil().max(1.0) as usize;
    let samples = 200usize;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut last_t = 0usize;
    for i in 0..=samples {
        let frac = i as f64 / samples as f64;
        let t = ((t_min as f64).ln() + frac * ((t_max as f64).ln() - (t_min as f64).ln())).exp();
        let t = (t.round() as usize).clamp(t_min, t_max);
        if t == last_t {
            continue;
        }
        last_t = t;
        if errors[t] > 0.0 {
            xs.push((t as f64).ln());
            ys.push(errors[t].ln());
        }
    }
    ols_slope(&xs, &ys)
}

/// Mean error over the last 10% of iterations (at least one point).
pub fn plateau_level(errors: &[f64]) -> f64 {
    assert!(!errors.is_empty());
    let tail = (errors.len() / 10).max(1);
    let slice = &errors[errors.len() - tail..];
    slice.iter().sum::<f64>() / slice.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let data = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&data, 0.0), 1.0);
        assert_eq!(percentile(&data, 1.0), 4.0);
        assert_eq!(median(&data), 2.5);
        assert!((percentile(&data, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        assert!((ols_slope(&x, &y) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_slope_is_recovered() {
        // d_t = 5 t^{-1/2} for t >= 1.
        let errors: Vec<f64> = (0..=10_000)
            .map(|t| if t == 0 { 5.0 } else { 5.0 / (t as f64).sqrt() })
            .collect();
        let slope = loglog_slope_second_half(&errors);
        assert!((slope + 0.5).abs() < 1e-6, "slope {slope}");
    }

    #[test]
    fn flat_series_has_zero_slope() {
        let errors = vec![2.0; 1000];
        assert!(loglog_slope_second_half(&errors).abs() < 1e-12);
    }

    #[test]
    fn plateau_is_tail_mean() {
        let mut errors = vec![10.0; 90];
        errors.extend(vec![1.0; 10]);
        assert!((plateau_level(&errors) - 1.0).abs() < 1e-15);
    }
}
