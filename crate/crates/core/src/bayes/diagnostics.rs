//! Convergence diagnostics: split-R̂ and effective sample size.

/// Split-R̂ for one scalar quantity. Each chain is halved and the between/within variance
/// ratio computed over the halves. Chains are truncated to the shortest length.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = n / 2;
    if half < 2 {
        return f64::NAN;
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[half..2 * half]])
        .collect();
    let m = halves.len() as f64;
    let nh = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / nh).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = nh / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nh - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (nh - 1.0) / nh * w + b / nh;
    (var_plus / w).sqrt()
}

/// Autocovariance at lags `0..n` (biased, divisor n).
fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..n)
        .map(|lag| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence estimator.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let m = chains.len();
    if n < 4 || m == 0 {
        return f64::NAN;
    }
    let acovs: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(&c[..n])).collect();
    let means: Vec<f64> = chains.iter().map(|c| c[..n].iter().sum::<f64>() / n as f64).collect();
    let nf = n as f64;
    let mean_var = acovs.iter().map(|a| a[0]).sum::<f64>() / m as f64 * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        let grand = means.iter().sum::<f64>() / m as f64;
        let b_over_n = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        var_plus += b_over_n;
    }
    if var_plus <= 0.0 {
        return f64::NAN;
    }
    let rho = |t: usize| -> f64 {
        let mean_acov = acovs.iter().map(|a| a[t]).sum::<f64>() / m as f64;
        1.0 - (mean_var - mean_acov) / var_plus
    };
    // pair sums Γ_k = ρ_{2k} + ρ_{2k+1}, truncated at the first negative pair and
    // forced to be monotone
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev {
            pair = prev;
        }
        sum += pair;
        prev = pair;
        t += 2;
    }
    let tau = -1.0 + 2.0 * sum;
    let tau = tau.max(1.0 / (nf * m as f64).log10().max(1.0));
    m as f64 * nf / tau
}
