//! Split R-hat and multi-chain effective sample size.
//!
//! Degenerate conventions: a parameter that is constant across all draws gets
//! R-hat 1.0 and ESS equal to the draw count. R-hat needs at least two chains of
//! four or more draws and is `None` otherwise.

use serde::{Deserialize, Serialize};

use super::draws::PosteriorDraws;

pub const R_HAT_THRESHOLD: f64 = 1.05;
pub const DIVERGENCE_WARNING_RATE: f64 = 0.2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub r_hat: Option<f64>,
    pub ess: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub r_hat_available: bool,
    pub chain_acceptance: Vec<Option<f64>>,
    pub divergence_rate: Vec<f64>,
    pub divergence_warning: bool,
    /// Parameters with R-hat above the threshold.
    pub flagged: Vec<String>,
    pub max_r_hat: Option<f64>,
    pub min_ess: f64,
    pub parameters: Vec<ParameterDiagnostics>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split R-hat over equal-length chains.
pub fn split_r_hat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 {
        return None;
    }
    let n = chains.iter().map(Vec::len).min()?;
    if n < 4 {
        return None;
    }
    let half = n / 2;
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[n - half..n]);
    }
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = mean(&halves.iter().map(|h| sample_var(h)).collect::<Vec<_>>());
    let b_over_n = sample_var(&means);
    if w <= 0.0 {
        return Some(if b_over_n <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    let h = half as f64;
    let var_plus = (h - 1.0) / h * w + b_over_n;
    Some((var_plus / w).sqrt())
}

fn autocovariance(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain ESS with Geyer's initial monotone sequence. Autocovariances are
/// computed lag by lag until the truncation point.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let total = (m * n) as f64;
    if n < 2 {
        return total;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&chain_means)
            .map(|(c, &cm)| autocovariance(c, cm, lag))
            .sum::<f64>()
            / m as f64
    };
    let nf = n as f64;
    let acov0 = acov(0);
    let mean_var = acov0 * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_var(&chain_means);
    }
    if var_plus <= 0.0 || !var_plus.is_finite() {
        return total;
    }
    let rho = |a: f64| 1.0 - (mean_var - a) / var_plus;

    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let r0 = if lag == 0 { 1.0 } else { rho(acov(lag)) };
        let r1 = rho(acov(lag + 1));
        let mut pair = r0 + r1;
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        prev_pair = pair;
        sum += pair;
        lag += 2;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0 / total.log10().max(1.0));
    (total / tau).min(total * total.log10().max(1.0))
}

pub fn diagnostics(draws: &PosteriorDraws) -> RunDiagnostics {
    let parameters: Vec<ParameterDiagnostics> = draws
        .parameter_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let chains = draws.chain_values(i);
            let r_hat = split_r_hat(&chains);
            ParameterDiagnostics {
                name: name.clone(),
                r_hat,
                ess: effective_sample_size(&chains),
                flagged: r_hat.is_some_and(|r| !(r <= R_HAT_THRESHOLD)),
            }
        })
        .collect();
    let divergence_rate: Vec<f64> = draws
        .chains
        .iter()
        .map(|c| {
            if c.is_empty() {
                0.0
            } else {
                c.divergences() as f64 / c.len() as f64
            }
        })
        .collect();
    RunDiagnostics {
        r_hat_available: parameters.iter().any(|p| p.r_hat.is_some()),
        chain_acceptance: draws
            .chains
            .iter()
            .map(|c| Some(c.mean_accept()).filter(|a| a.is_finite()))
            .collect(),
        divergence_warning: divergence_rate.iter().any(|&r| r > DIVERGENCE_WARNING_RATE),
        divergence_rate,
        flagged: parameters
            .iter()
            .filter(|p| p.flagged)
            .map(|p| p.name.clone())
            .collect(),
        max_r_hat: parameters.iter().filter_map(|p| p.r_hat).reduce(f64::max),
        min_ess: parameters
            .iter()
            .map(|p| p.ess)
            .fold(f64::INFINITY, f64::min),
        parameters,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                shift + {
                    let z: f64 = StandardNormal.sample(rng);
                    z
                }
            })
            .collect::<Vec<f64>>()
    }

    #[test]
    fn constant_chains() {
        let c = vec![vec![2.0; 10], vec![2.0; 10]];
        assert_eq!(split_r_hat(&c), Some(1.0));
        assert_eq!(effective_sample_size(&c), 20.0);
    }

    #[test]
    fn single_chain_has_no_r_hat() {
        assert_eq!(split_r_hat(&[vec![1.0, 2.0, 3.0, 4.0, 5.0]]), None);
    }

    #[test]
    fn iid_ess_near_nominal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chains: Vec<Vec<f64>> = (0..4).map(|_| normals(&mut rng, 1000, 0.0)).collect();
        let ess = effective_sample_size(&chains);
        assert!((ess - 4000.0).abs() < 800.0, "{ess}");
        let r = split_r_hat(&chains).unwrap();
        assert!(r < 1.01, "{r}");
    }

    #[test]
    fn separated_chains_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let chains = vec![normals(&mut rng, 500, 0.0), normals(&mut rng, 500, 5.0)];
        assert!(split_r_hat(&chains).unwrap() > 1.05);
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // AR(1) with coefficient 0.5 has integrated autocorrelation time 3
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..5000)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x = 0.5 * x + z;
                        x
                    })
                    .collect()
            })
            .collect();
        let ess = effective_sample_size(&chains);
        assert!((ess - 20000.0 / 3.0).abs() < 0.15 * 20000.0 / 3.0, "{ess}");
    }
}
