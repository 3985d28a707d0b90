//! Chain health measures.

/// Effective sample size of one parameter series via the initial-positive-
/// sequence estimator: autocorrelations are summed in lag pairs until a pair
/// sum turns nonpositive.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    if var <= 0.0 {
        // Constant chain; call it fully informative rather than dividing by 0.
        return nf;
    }
    let autocov = |lag: usize| {
        series[..n - lag]
            .iter()
            .zip(&series[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / nf
    };
    let mut sum = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = autocov(lag) + autocov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair / var;
        lag += 2;
    }
    (nf / (1.0 + 2.0 * sum)).clamp(1.0, nf)
}
