//! Hyperparameters, data-driven prior calibration and the tree-structure prior.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::dataset::ModelFrame;
use crate::error::{BartError, Result};
use crate::tree::{SplitIndex, Tree};

/// User-facing model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub num_trees: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub q: f64,
    pub nu: f64,
    /// (GROW, PRUNE, CHANGE)
    pub proposal_probs: (f64, f64, f64),
    /// One weight per model-frame column; `None` means the frame default.
    pub cov_prior_vec: Option<Vec<f64>>,
    pub burn_in: usize,
    pub post_burn_in: usize,
    pub chains: usize,
    pub prob_rule_class: f64,
    pub memcache: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            num_trees: 50,
            alpha: 0.95,
            beta: 2.0,
            k: 2.0,
            q: 0.9,
            nu: 3.0,
            proposal_probs: (0.28, 0.28, 0.44),
            cov_prior_vec: None,
            burn_in: 250,
            post_burn_in: 1000,
            chains: 1,
            prob_rule_class: 0.5,
            memcache: true,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(BartError::arg("num_trees must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(BartError::arg("alpha must lie in (0, 1)"));
        }
        if !(self.beta >= 0.0) {
            return Err(BartError::arg("beta must be nonnegative"));
        }
        if !(self.k > 0.0) {
            return Err(BartError::arg("k must be positive"));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(BartError::arg("q must lie in (0, 1)"));
        }
        if !(self.nu > 0.0) {
            return Err(BartError::arg("nu must be positive"));
        }
        let (g, p, c) = self.proposal_probs;
        if [g, p, c].iter().any(|&x| !(x >= 0.0)) || ((g + p + c) - 1.0).abs() > 1e-9 {
            return Err(BartError::arg("proposal probabilities must be nonnegative and sum to 1"));
        }
        if g == 0.0 || p == 0.0 {
            return Err(BartError::arg("GROW and PRUNE probabilities must be positive"));
        }
        if let Some(w) = &self.cov_prior_vec {
            if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(BartError::arg("cov_prior_vec entries must be positive"));
            }
        }
        if self.chains == 0 {
            return Err(BartError::arg("chains must be at least 1"));
        }
        if self.post_burn_in == 0 {
            return Err(BartError::arg("post_burn_in must be at least 1"));
        }
        if !(self.prob_rule_class > 0.0 && self.prob_rule_class < 1.0) {
            return Err(BartError::arg("prob_rule_class must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Iterations kept by each chain.
    pub fn kept_per_chain(&self) -> usize {
        self.post_burn_in.div_ceil(self.chains)
    }

    /// Covariate weights for `frame`, falling back to the frame defaults.
    pub fn covariate_weights(&self, frame: &ModelFrame) -> Result<Vec<f64>> {
        match &self.cov_prior_vec {
            Some(w) if w.len() != frame.p() => Err(BartError::arg(format!(
                "cov_prior_vec has {} entries but the design matrix has {} columns",
                w.len(),
                frame.p()
            ))),
            Some(w) => Ok(w.clone()),
            None => Ok(frame.default_covariate_weights()),
        }
    }

    #[inline]
    pub fn prob_split(&self, depth: usize) -> f64 {
        prob_split(depth, self.alpha, self.beta)
    }
}

/// Prior probability that a node at `depth` is nonterminal.
#[inline]
pub fn prob_split(depth: usize, alpha: f64, beta: f64) -> f64 {
    alpha * (1.0 + depth as f64).powf(-beta)
}

/// Values derived from the training response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedPriors {
    /// Center of the summed leaf prior; each leaf is centered at `mu_mu / m`.
    pub mu_mu: f64,
    pub sigma_mu: f64,
    /// Scale of the σ² prior; unused for classification.
    pub lambda: f64,
    pub sigsq_hat: f64,
}

impl CalibratedPriors {
    pub fn leaf_prior_mean(&self, m: usize) -> f64 {
        self.mu_mu / m as f64
    }

    pub fn sigma_mu_sq(&self) -> f64 {
        self.sigma_mu * self.sigma_mu
    }

    /// Regression calibration: leaf prior from the response range, σ² prior
    /// from the least-squares noise estimate.
    pub fn regression(frame: &ModelFrame, hyper: &Hyperparameters) -> Result<Self> {
        let y = &frame.y;
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let (mu_mu, sigma_mu) = calibrate_leaf_prior(lo, hi, hyper.num_trees, hyper.k)?;
        let sigsq_hat = estimate_sigsq(frame)?;
        let lambda = calibrate_lambda(sigsq_hat, hyper.nu, hyper.q)?;
        Ok(CalibratedPriors { mu_mu, sigma_mu, lambda, sigsq_hat })
    }

    /// Probit classification: σ² is fixed at 1 and the summed leaf prior
    /// puts ±k prior sd at ±3 on the latent scale.
    pub fn classification(hyper: &Hyperparameters) -> Self {
        CalibratedPriors {
            mu_mu: 0.0,
            sigma_mu: 3.0 / (hyper.k * (hyper.num_trees as f64).sqrt()),
            lambda: 0.0,
            sigsq_hat: 1.0,
        }
    }

    pub fn for_frame(frame: &ModelFrame, hyper: &Hyperparameters) -> Result<Self> {
        if frame.task.is_classification() {
            Ok(Self::classification(hyper))
        } else {
            Self::regression(frame, hyper)
        }
    }
}

/// Solves `m·mu0 ∓ k√m·σ_μ = y_min / y_max` for the summed leaf prior.
pub fn calibrate_leaf_prior(y_min: f64, y_max: f64, m: usize, k: f64) -> Result<(f64, f64)> {
    if !(y_max > y_min) {
        return Err(BartError::data("response is constant; the leaf prior cannot be calibrated"));
    }
    let mu_mu = 0.5 * (y_min + y_max);
    let sigma_mu = (y_max - mu_mu) / (k * (m as f64).sqrt());
    Ok((mu_mu, sigma_mu))
}

/// λ such that `P(σ² ≤ sigsq_hat) = q` under `σ² ~ InvGamma(ν/2, νλ/2)`.
pub fn calibrate_lambda(sigsq_hat: f64, nu: f64, q: f64) -> Result<f64> {
    if !(sigsq_hat > 0.0) {
        return Err(BartError::data("noise variance estimate must be positive"));
    }
    Ok(sigsq_hat * chi_squared_quantile(1.0 - q, nu)? / nu)
}

pub fn chi_squared_cdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(0.5 * df, 0.5 * x)
    }
}

/// Quantile of χ²_df by bracketing and bisection on the incomplete gamma
/// function.
pub fn chi_squared_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(df > 0.0) {
        return Err(BartError::arg("chi-squared quantile needs p in (0,1) and df > 0"));
    }
    let mut hi = df.max(1.0);
    while chi_squared_cdf(hi, df) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_squared_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi.max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Residual variance of an ordinary least-squares fit (with intercept) of
/// the response on the fully observed columns, over complete rows.
/// Rank-deficient designs use the pseudo-inverse and their effective rank;
/// with no residual degrees of freedom this falls back to `var(y)`.
pub fn estimate_sigsq(frame: &ModelFrame) -> Result<f64> {
    let n = frame.n();
    if n < 2 {
        return Err(BartError::data("need at least two rows to estimate the noise variance"));
    }
    let cols: Vec<usize> = (0..frame.p()).filter(|&j| !frame.columns[j].iter().any(|v| v.is_nan())).collect();
    let y = &frame.y;
    let fallback = sample_variance(y);
    let p = cols.len() + 1;
    if n <= p {
        return Ok(fallback);
    }
    // normal equations, solved through a thresholded eigen-decomposition
    let mut x = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        x[(i, 0)] = 1.0;
    }
    for (c, &j) in cols.iter().enumerate() {
        for i in 0..n {
            x[(i, c + 1)] = frame.columns[j][i];
        }
    }
    let yv = DVector::from_column_slice(y);
    let xtx = x.tr_mul(&x);
    let xty = x.tr_mul(&yv);
    let eig = xtx.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tol = max_ev * 1e-10;
    let mut rank = 0usize;
    let mut beta = DVector::<f64>::zeros(p);
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > tol {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            beta += v * (v.dot(&xty) / ev);
        }
    }
    if n <= rank {
        return Ok(fallback);
    }
    let resid = yv - x * beta;
    let sse = resid.norm_squared();
    let est = sse / (n - rank) as f64;
    if est > 0.0 && est.is_finite() {
        Ok(est)
    } else {
        Ok(fallback)
    }
}

pub(crate) fn sample_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Log of the tree-structure prior: terminal nodes contribute
/// `log(1 - P_split)`, internal nodes `log P_split` plus the log probability
/// of their rule (weighted predictor choice, then uniform candidate).
pub fn tree_structure_log_prior(tree: &Tree, index: &SplitIndex, hyper: &Hyperparameters) -> f64 {
    let mut lp = 0.0;
    for id in tree.preorder() {
        let node = tree.node(id);
        let ps = hyper.prob_split(node.depth);
        match node.rule {
            None => lp += (1.0 - ps).ln(),
            Some(rule) => {
                let cache = index.compute_cache(&node.rows);
                let w = index.weights()[rule.feature] / cache.weight_total;
                lp += ps.ln() + w.ln() - (cache.counts[rule.feature] as f64).ln();
            }
        }
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_probabilities() {
        assert_eq!(prob_split(0, 0.95, 2.0), 0.95);
        assert!((prob_split(1, 0.95, 2.0) - 0.2375).abs() < 1e-15);
        for d in 0..5 {
            assert_eq!(prob_split(d, 0.7, 0.0), 0.7);
        }
    }

    #[test]
    fn leaf_prior_examples() {
        let (a, b) = calibrate_leaf_prior(0.0, 1.0, 1, 2.0).unwrap();
        assert!((a - 0.5).abs() < 1e-15 && (b - 0.25).abs() < 1e-15);
        let (a, b) = calibrate_leaf_prior(-1.0, 1.0, 4, 2.0).unwrap();
        assert!(a.abs() < 1e-15 && (b - 0.25).abs() < 1e-15);
        assert!(calibrate_leaf_prior(3.0, 3.0, 4, 2.0).is_err());
        // both defining equations
        let (lo, hi, m, k) = (-2.3, 7.9, 50usize, 2.0);
        let (mu, s) = calibrate_leaf_prior(lo, hi, m, k).unwrap();
        let mf = m as f64;
        assert!((mf * (mu / mf) - k * mf.sqrt() * s - lo).abs() < 1e-12);
        assert!((mf * (mu / mf) + k * mf.sqrt() * s - hi).abs() < 1e-12);
    }

    #[test]
    fn lambda_examples() {
        // frozen from scipy.stats.chi2.ppf
        let q10 = chi_squared_quantile(0.1, 3.0).unwrap();
        assert!((q10 - 0.584_374_374_155_183_6).abs() < 1e-8);
        assert!((calibrate_lambda(1.0, 3.0, 0.9).unwrap() - 0.194_791_458_051_727_9).abs() < 1e-8);
        assert!((calibrate_lambda(1.0, 3.0, 0.5).unwrap() - 0.788_657_961_458_445_9).abs() < 1e-8);
        assert!((chi_squared_cdf(q10, 3.0) - 0.1).abs() < 1e-10);
    }
}
