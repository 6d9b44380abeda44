//! Conjugate Gibbs draws: leaf values, σ², and probit latent variables.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};

use crate::tree::NodeSufficientStats;

/// Posterior mean and variance of a leaf value given its residuals.
pub fn leaf_posterior(stats: &NodeSufficientStats, sigma_sq: f64, sigma_mu_sq: f64, prior_mean: f64) -> (f64, f64) {
    let n = stats.n as f64;
    let denom = n * sigma_mu_sq + sigma_sq;
    let mean = (sigma_mu_sq * stats.sum + sigma_sq * prior_mean) / denom;
    let var = sigma_sq * sigma_mu_sq / denom;
    (mean, var)
}

pub fn draw_leaf<R: Rng + ?Sized>(
    stats: &NodeSufficientStats,
    sigma_sq: f64,
    sigma_mu_sq: f64,
    prior_mean: f64,
    rng: &mut R,
) -> f64 {
    let (mean, var) = leaf_posterior(stats, sigma_sq, sigma_mu_sq, prior_mean);
    let z: f64 = rng.sample(StandardNormal);
    mean + var.sqrt() * z
}

/// σ² ~ InvGamma((ν + n)/2, (νλ + SSE)/2).
pub fn draw_sigma_sq<R: Rng + ?Sized>(n: usize, sse: f64, nu: f64, lambda: f64, rng: &mut R) -> f64 {
    let shape = 0.5 * (nu + n as f64);
    let rate = 0.5 * (nu * lambda + sse);
    let g = Gamma::new(shape, 1.0).expect("valid gamma shape").sample(rng);
    rate / g
}

/// Standard normal truncated to `[a, ∞)`.
pub fn truncated_standard_normal<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a < 0.0 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z >= a {
                return z;
            }
        }
    }
    // exponential proposal with the optimal rate
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp = Exp::new(rate).expect("positive rate");
    loop {
        let x = a + exp.sample(rng);
        let u: f64 = rng.random();
        if u.ln() <= -0.5 * (x - rate) * (x - rate) {
            return x;
        }
    }
}

/// Latent probit draw: Normal(g, 1) truncated to `[0, ∞)` when `label` is
/// positive, to `(-∞, 0]` otherwise.
pub fn draw_latent<R: Rng + ?Sized>(label: f64, g: f64, rng: &mut R) -> f64 {
    if label > 0.5 {
        g + truncated_standard_normal(-g, rng)
    } else {
        g - truncated_standard_normal(g, rng)
    }
}

/// Redraws every latent variable given the current sum-of-trees values.
pub fn draw_latent_z<R: Rng + ?Sized>(labels: &[f64], g: &[f64], out: &mut [f64], rng: &mut R) {
    for ((z, &y), &gi) in out.iter_mut().zip(labels).zip(g) {
        *z = draw_latent(y, gi, rng);
    }
}
