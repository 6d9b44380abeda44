//! Checks on the error assumptions and on MCMC convergence.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{BartError, Result};
use crate::inference::cv::{ConfusionMatrix, ErrorStats};
use crate::model::BartModel;
use crate::sampler::PosteriorEnsemble;
use crate::stats::{mean, normal_cdf, sd};

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

/// Shapiro-Wilk W and its p-value (Royston's AS R94 approximation).
pub fn shapiro_wilk(x: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if !(3..=5000).contains(&n) {
        return Err(BartError::arg(format!("Shapiro-Wilk needs 3 <= n <= 5000, got {n}")));
    }
    let mut xs = x.to_vec();
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(BartError::data("Shapiro-Wilk input contains non-finite values"));
    }
    xs.sort_by(f64::total_cmp);
    let range = xs[n - 1] - xs[0];
    if range < 1e-19 {
        return Err(BartError::data("Shapiro-Wilk input is constant"));
    }

    let half = n / 2;
    let an = n as f64;
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = 0.5f64.sqrt();
    } else {
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let std = Normal::new(0.0, 1.0).unwrap();
        let m: Vec<f64> = (1..=half).map(|i| std.inverse_cdf((i as f64 - 0.375) / (an + 0.25))).collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            a[1] = a2;
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
            (2, fac)
        } else {
            (1, ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt())
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    // W as the squared correlation of the ordered sample with the
    // coefficients (antisymmetric, zero middle for odd n)
    let xm = mean(&xs);
    let ssx: f64 = xs.iter().map(|v| (v - xm).powi(2)).sum();
    let ssa: f64 = 2.0 * a.iter().map(|v| v * v).sum::<f64>();
    let sax: f64 = (0..half).map(|i| a[i] * (xs[n - 1 - i] - xs[i])).sum();
    let w = (sax * sax / (ssa * ssx)).min(1.0);

    if n == 3 {
        const PI6: f64 = 6.0 / std::f64::consts::PI;
        const STQR: f64 = std::f64::consts::FRAC_PI_3;
        let p = (PI6 * (w.sqrt().asin() - STQR)).max(0.0);
        return Ok((w, p.min(1.0)));
    }
    let mut y = (1.0 - w).ln();
    let (mu, s) = if n <= 11 {
        let gamma = poly(&[-2.273, 0.459], an);
        if y >= gamma {
            return Ok((w, 1e-99));
        }
        y = -(gamma - y).ln();
        (poly(&[0.5440, -0.39978, 0.025054, -6.714e-4], an), poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp())
    } else {
        let ln_n = an.ln();
        (poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n), poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp())
    };
    let p = normal_cdf(-(y - mu) / s);
    Ok((w, p.clamp(0.0, 1.0)))
}

/// Two-sided one-sample t-test of mean zero.
pub fn zero_mean_t_test(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(BartError::arg("t-test needs at least two values"));
    }
    let s = sd(x);
    if !(s > 0.0) || !s.is_finite() {
        return Err(BartError::data("t-test input has zero or undefined standard deviation"));
    }
    let t = mean(x) / (s / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| BartError::Invariant(e.to_string()))?;
    Ok((2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSeries {
    pub chain: usize,
    pub sigma_sq: Vec<f64>,
    pub acceptance: Vec<f64>,
    pub mean_leaves: Vec<f64>,
    pub mean_depth: Vec<f64>,
}

/// Per-iteration sampler diagnostics of every chain. Iterations below
/// `burn_in` are burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub burn_in: usize,
    pub chains: Vec<ChainSeries>,
}

pub const TRACE_SERIES: [&str; 4] = ["sigma_sq", "acceptance", "mean_leaves", "mean_depth"];

impl ConvergenceTrace {
    fn series(&self, c: usize, name: &str) -> &[f64] {
        let ch = &self.chains[c];
        match name {
            "sigma_sq" => &ch.sigma_sq,
            "acceptance" => &ch.acceptance,
            "mean_leaves" => &ch.mean_leaves,
            _ => &ch.mean_depth,
        }
    }

    /// One long-format CSV per series, columns `chain,iteration,phase,value`.
    pub fn series_csv(&self, name: &str) -> Result<String> {
        if !TRACE_SERIES.contains(&name) {
            return Err(BartError::arg(format!("unknown trace series `{name}`")));
        }
        let mut out = String::from("chain,iteration,phase,value\n");
        for c in 0..self.chains.len() {
            for (i, v) in self.series(c, name).iter().enumerate() {
                let phase = if i < self.burn_in { "burn_in" } else { "kept" };
                writeln!(out, "{},{},{},{}", self.chains[c].chain, i, phase, v).unwrap();
            }
        }
        Ok(out)
    }

    /// Writes `<name>.csv` for every series into `dir`.
    pub fn write_csv_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| BartError::Io { path: dir.to_path_buf(), source: e })?;
        for name in TRACE_SERIES {
            let path = dir.join(format!("{name}.csv"));
            fs::write(&path, self.series_csv(name)?)
                .map_err(|e| BartError::Io { path: path.clone(), source: e })?;
        }
        Ok(())
    }

    /// Inverse of [`ConvergenceTrace::write_csv_dir`].
    pub fn read_csv_dir(dir: &Path) -> Result<Self> {
        let mut chains: Vec<ChainSeries> = Vec::new();
        let mut burn_in = 0;
        for name in TRACE_SERIES {
            let path = dir.join(format!("{name}.csv"));
            let mut rdr = csv::Reader::from_path(&path).map_err(|e| BartError::Csv(e.to_string()))?;
            let mut burn = 0;
            for rec in rdr.records() {
                let rec = rec.map_err(|e| BartError::Csv(e.to_string()))?;
                let parse_err = || BartError::data(format!("malformed trace row in {}", path.display()));
                let chain: usize = rec[0].parse().map_err(|_| parse_err())?;
                let value: f64 = rec[3].parse().map_err(|_| parse_err())?;
                if chain == 0 && &rec[2] == "burn_in" {
                    burn += 1;
                }
                let idx = match chains.iter().position(|c| c.chain == chain) {
                    Some(i) => i,
                    None => {
                        chains.push(ChainSeries {
                            chain,
                            sigma_sq: vec![],
                            acceptance: vec![],
                            mean_leaves: vec![],
                            mean_depth: vec![],
                        });
                        chains.len() - 1
                    }
                };
                let ch = &mut chains[idx];
                match name {
                    "sigma_sq" => ch.sigma_sq.push(value),
                    "acceptance" => ch.acceptance.push(value),
                    "mean_leaves" => ch.mean_leaves.push(value),
                    _ => ch.mean_depth.push(value),
                }
            }
            burn_in = burn;
        }
        Ok(ConvergenceTrace { burn_in, chains })
    }
}

pub fn convergence_trace(ensemble: &PosteriorEnsemble) -> Result<ConvergenceTrace> {
    if ensemble.traces.is_empty() {
        return Err(BartError::Unsupported("model carries no sampler diagnostics".into()));
    }
    let chains = ensemble
        .traces
        .iter()
        .map(|t| ChainSeries {
            chain: t.chain,
            sigma_sq: t.iterations.iter().map(|d| d.sigma_sq).collect(),
            acceptance: t.iterations.iter().map(|d| d.acceptance).collect(),
            mean_leaves: t.iterations.iter().map(|d| d.mean_leaves).collect(),
            mean_depth: t.iterations.iter().map(|d| d.mean_depth).collect(),
        })
        .collect();
    Ok(ConvergenceTrace { burn_in: ensemble.traces[0].burn_in, chains })
}

/// In-sample (fitted, residual) pairs of a regression model.
pub fn residuals_vs_fitted(model: &BartModel) -> Result<Vec<(f64, f64)>> {
    if model.is_classification() {
        return Err(BartError::Unsupported("residual diagnostics apply to regression models".into()));
    }
    Ok(model.meta.train_fitted.iter().zip(&model.meta.train_y).map(|(&f, &y)| (f, y - f)).collect())
}

pub fn in_sample_residuals(model: &BartModel) -> Result<Vec<f64>> {
    Ok(residuals_vs_fitted(model)?.into_iter().map(|(_, r)| r).collect())
}

/// `x` rounded to `digits` decimals, trailing zeros dropped.
pub fn fmt_round(x: f64, digits: usize) -> String {
    let s = format!("{x:.digits$}");
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" { "0".into() } else { t.into() }
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub classification: bool,
    pub missing_data: bool,
    pub n: usize,
    pub p: usize,
    /// Absent for models loaded from an archive.
    pub seconds: Option<f64>,
    pub num_trees: usize,
    pub burn_in: usize,
    pub post_burn_in: usize,
    pub chains: usize,
    pub sigsq_before: Option<f64>,
    pub sigsq_after: Option<f64>,
    pub stats: Option<ErrorStats>,
    pub confusion: Option<ConfusionMatrix>,
    pub shapiro_p: Option<f64>,
    pub zero_mean_p: Option<f64>,
}

pub fn model_summary(model: &BartModel) -> ModelSummary {
    let meta = &model.meta;
    let h = &meta.hyper;
    let mut s = ModelSummary {
        classification: model.is_classification(),
        missing_data: meta.use_missing_data,
        n: model.n_train(),
        p: model.p(),
        seconds: (meta.train_seconds > 0.0).then_some(meta.train_seconds),
        num_trees: h.num_trees,
        burn_in: h.burn_in,
        post_burn_in: h.post_burn_in,
        chains: h.chains,
        sigsq_before: None,
        sigsq_after: None,
        stats: None,
        confusion: None,
        shapiro_p: None,
        zero_mean_p: None,
    };
    match &meta.train_prob {
        Some(prob) => {
            let cls: Vec<bool> = prob.iter().map(|&p| p >= h.prob_rule_class).collect();
            s.confusion = Some(ConfusionMatrix::from_labels(&meta.train_y, &cls));
        }
        None => {
            s.sigsq_before = Some(meta.priors.sigsq_hat);
            s.sigsq_after = Some(mean(&model.samples().iter().map(|x| x.sigma_sq).collect::<Vec<_>>()));
            s.stats = Some(ErrorStats::compute(&meta.train_y, &meta.train_fitted, mean(&meta.train_y)));
            let res: Vec<f64> = meta.train_y.iter().zip(&meta.train_fitted).map(|(y, f)| y - f).collect();
            s.shapiro_p = shapiro_wilk(&res).ok().map(|r| r.1);
            s.zero_mean_p = zero_mean_t_test(&res).ok();
        }
    }
    s
}

impl ModelSummary {
    /// Plain-text report in the layout of the R package's print method.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let task = if self.classification { "classification" } else { "regression" };
        writeln!(out, "BART model for {task}\n").unwrap();
        if self.missing_data {
            writeln!(out, "Missing data feature ON").unwrap();
        }
        writeln!(out, "training data n = {} and p = {}", self.n, self.p).unwrap();
        let chains = if self.chains == 1 { "1 chain".to_string() } else { format!("{} chains", self.chains) };
        let built = self.seconds.map_or("built".to_string(), |s| format!("built in {} secs", fmt_round(s, 1)));
        writeln!(
            out,
            "{built} on {}, {} trees, {} burn-in and {} post. samples",
            chains,
            self.num_trees,
            self.burn_in,
            self.post_burn_in
        )
        .unwrap();
        let na = |v: Option<f64>, d: usize| v.map_or("NA".to_string(), |x| fmt_round(x, d));
        if let Some(st) = &self.stats {
            writeln!(out).unwrap();
            writeln!(out, "sigsq est for y beforehand: {}", na(self.sigsq_before, 3)).unwrap();
            writeln!(out, "avg sigsq estimate after burn-in: {}", na(self.sigsq_after, 5)).unwrap();
            writeln!(out, "\nin-sample statistics:").unwrap();
            writeln!(out, " L1 = {}", fmt_round(st.l1, 2)).unwrap();
            writeln!(out, " L2 = {}", fmt_round(st.l2, 2)).unwrap();
            writeln!(out, " rmse = {}", fmt_round(st.rmse, 2)).unwrap();
            writeln!(out, " Pseudo-Rsq = {}", fmt_round(st.pseudo_r2, 4)).unwrap();
            writeln!(out, "p-val for shapiro-wilk test of normality of residuals: {}", na(self.shapiro_p, 5)).unwrap();
            writeln!(out, "p-val for zero-mean noise: {}", na(self.zero_mean_p, 5)).unwrap();
        }
        if let Some(cm) = &self.confusion {
            let c = cm.counts;
            writeln!(out, "\nconfusion matrix (rows actual, columns predicted):").unwrap();
            writeln!(out, "            pred 0  pred 1").unwrap();
            writeln!(out, "actual 0  {:>8}{:>8}", c[0][0], c[0][1]).unwrap();
            writeln!(out, "actual 1  {:>8}{:>8}", c[1][0], c[1][1]).unwrap();
            writeln!(out, "misclassification rate: {}", fmt_round(cm.misclassification_rate(), 4)).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_format() {
        assert_eq!(fmt_round(0.9790, 4), "0.979");
        assert_eq!(fmt_round(8.0149, 2), "8.01");
        assert_eq!(fmt_round(2.0, 2), "2");
        assert_eq!(fmt_round(-0.0001, 2), "0");
    }

    #[test]
    fn t_test_symmetric_is_one() {
        assert!((zero_mean_t_test(&[-2.0, -1.0, 1.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(zero_mean_t_test(&[1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn shapiro_rejects_bad_sizes() {
        assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
        assert!(shapiro_wilk(&[3.0; 10]).is_err());
    }
}
