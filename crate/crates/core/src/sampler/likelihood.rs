//! Node marginal likelihood with the leaf value integrated out.

use std::f64::consts::PI;

use crate::tree::NodeSufficientStats;

/// `log p(R_1..R_n | σ²)` for one node whose leaf value has a
/// `Normal(0, σ_μ²)` prior. For a nonzero prior mean shift the statistics
/// first (see [`NodeSufficientStats::shifted`]).
pub fn log_node_marginal_likelihood(stats: &NodeSufficientStats, sigma_sq: f64, sigma_mu_sq: f64) -> f64 {
    if stats.n == 0 {
        return 0.0;
    }
    let n = stats.n as f64;
    -0.5 * n * (2.0 * PI * sigma_sq).ln() + 0.5 * (sigma_sq / (sigma_sq + n * sigma_mu_sq)).ln()
        - (stats.sum_sq - stats.sum * stats.sum / (n + sigma_sq / sigma_mu_sq)) / (2.0 * sigma_sq)
}

/// The part of the log marginal likelihood that does not cancel when the
/// same rows are split differently: everything except the terms in `n`
/// and `Σ R²`.
#[inline]
pub(crate) fn log_lik_core(n: usize, sum: f64, sigma_sq: f64, sigma_mu_sq: f64) -> f64 {
    let denom = sigma_sq + n as f64 * sigma_mu_sq;
    0.5 * (sigma_sq / denom).ln() + sigma_mu_sq * sum * sum / (2.0 * sigma_sq * denom)
}

/// Only the data term of [`log_lik_core`]; the log-determinant part cancels
/// when child counts are unchanged.
#[inline]
pub(crate) fn log_lik_quad(n: usize, sum: f64, sigma_sq: f64, sigma_mu_sq: f64) -> f64 {
    sigma_mu_sq * sum * sum / (2.0 * sigma_sq * (sigma_sq + n as f64 * sigma_mu_sq))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_single_row() {
        let s = NodeSufficientStats::default();
        assert_eq!(log_node_marginal_likelihood(&s, 1.0, 1.0), 0.0);
        let s = NodeSufficientStats { n: 1, sum: 0.0, sum_sq: 0.0 };
        let v = log_node_marginal_likelihood(&s, 1.0, 1.0);
        assert!((v + 0.5 * (4.0 * PI).ln()).abs() < 1e-14);
        assert!((v + 1.2655).abs() < 1e-4);
    }
}
