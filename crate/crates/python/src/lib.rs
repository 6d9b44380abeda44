//! Python bindings: fit, predict, intervals, importance and archives.
//!
//! Predictor matrices cross the boundary as lists of rows; missing values
//! are `float("nan")`.

use std::path::PathBuf;

use bart_core::dataset::generate_friedman;
use bart_core::diagnostics::model_summary;
use bart_core::inference::{inclusion_proportions, interaction_counts, intervals, predict, IntervalKind};
use bart_core::persistence::{export_json, load_model, save_model};
use bart_core::{load_csv, BartError, BartModel, Hyperparameters, ModelFrame, Task};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: BartError) -> PyErr {
    match e {
        BartError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Row-major to column-major, checking that every row has the same width.
pub fn rows_to_columns(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, String> {
    let p = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(format!("row {i} has {} values, expected {p}", rows[i].len()));
    }
    Ok((0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect())
}

#[allow(clippy::too_many_arguments)]
fn hyper(
    num_trees: usize,
    burn_in: usize,
    post_burn_in: usize,
    chains: usize,
    alpha: f64,
    beta: f64,
    k: f64,
    q: f64,
    nu: f64,
    cov_prior: Option<Vec<f64>>,
    memcache: bool,
) -> Hyperparameters {
    Hyperparameters {
        num_trees,
        burn_in,
        post_burn_in,
        chains,
        alpha,
        beta,
        k,
        q,
        nu,
        cov_prior_vec: cov_prior,
        memcache,
        ..Default::default()
    }
}

#[pyclass(name = "Model", module = "bart_py")]
pub struct PyModel {
    inner: BartModel,
}

impl PyModel {
    fn frame(&self, x: Vec<Vec<f64>>) -> PyResult<ModelFrame> {
        let n = x.len();
        let cols = rows_to_columns(&x).map_err(PyValueError::new_err)?;
        let mut frame =
            ModelFrame::from_columns(self.inner.meta.column_names.clone(), cols, vec![0.0; n], self.inner.meta.task.clone())
                .map_err(to_py)?;
        frame.use_missing_data = self.inner.meta.use_missing_data;
        self.inner.check_frame(&frame).map_err(to_py)?;
        Ok(frame)
    }
}

#[pymethods]
impl PyModel {
    /// Posterior mean of the sum of trees (probit scale for classification).
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let frame = self.frame(x)?;
        Ok(predict(&self.inner, &frame).map_err(to_py)?.point)
    }

    /// Classification only: posterior mean probability of the positive class.
    fn predict_proba(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let frame = self.frame(x)?;
        predict(&self.inner, &frame)
            .map_err(to_py)?
            .prob
            .ok_or_else(|| PyValueError::new_err("predict_proba needs a classification model"))
    }

    /// (lower, upper) per row. `kind` is "credible" or "predictive".
    #[pyo3(signature = (x, kind = "credible", conf = 0.95, num_draws = 1000, seed = 1))]
    fn intervals(&self, x: Vec<Vec<f64>>, kind: &str, conf: f64, num_draws: usize, seed: u64) -> PyResult<Vec<(f64, f64)>> {
        let kind = match kind {
            "credible" => IntervalKind::Credible,
            "predictive" => IntervalKind::Predictive,
            other => return Err(PyValueError::new_err(format!("unknown interval kind `{other}`"))),
        };
        let frame = self.frame(x)?;
        let pred = predict(&self.inner, &frame).map_err(to_py)?;
        let iv = intervals(&self.inner, &pred, kind, conf, num_draws, seed).map_err(to_py)?;
        Ok(iv.iter().map(|i| (i.lower, i.upper)).collect())
    }

    fn inclusion_proportions(&self) -> Vec<(String, f64)> {
        self.inner.meta.column_names.iter().cloned().zip(inclusion_proportions(&self.inner)).collect()
    }

    fn interaction_counts(&self) -> Vec<Vec<f64>> {
        interaction_counts(&self.inner)
    }

    fn summary(&self) -> String {
        model_summary(&self.inner).render()
    }

    #[pyo3(signature = (path, include_traces = true))]
    fn save(&self, path: PathBuf, include_traces: bool) -> PyResult<()> {
        save_model(&self.inner, &path, include_traces).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { inner: load_model(&path).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        export_json(&self.inner).map_err(to_py)
    }

    #[getter]
    fn column_names(&self) -> Vec<String> {
        self.inner.meta.column_names.clone()
    }

    #[getter]
    fn num_samples(&self) -> usize {
        self.inner.samples().len()
    }

    #[getter]
    fn is_classification(&self) -> bool {
        self.inner.is_classification()
    }

    /// Mean of the kept σ² draws.
    #[getter]
    fn sigma_sq(&self) -> f64 {
        let s = self.inner.samples();
        s.iter().map(|d| d.sigma_sq).sum::<f64>() / s.len() as f64
    }
}

/// Fits a model to rows `x` and response `y`. With `classification`, `y`
/// must hold 0/1 labels.
#[pyfunction]
#[pyo3(signature = (
    x, y, names = None, classification = false, seed = 1, num_trees = 50, burn_in = 250,
    post_burn_in = 1000, chains = 1, alpha = 0.95, beta = 2.0, k = 2.0, q = 0.9, nu = 3.0,
    cov_prior = None, memcache = true
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    names: Option<Vec<String>>,
    classification: bool,
    seed: u64,
    num_trees: usize,
    burn_in: usize,
    post_burn_in: usize,
    chains: usize,
    alpha: f64,
    beta: f64,
    k: f64,
    q: f64,
    nu: f64,
    cov_prior: Option<Vec<f64>>,
    memcache: bool,
) -> PyResult<PyModel> {
    let cols = rows_to_columns(&x).map_err(PyValueError::new_err)?;
    let names = names.unwrap_or_else(|| (1..=cols.len()).map(|j| format!("x{j}")).collect());
    let task = if classification {
        Task::Classification { positive: "1".into(), negative: "0".into() }
    } else {
        Task::Regression
    };
    let mut frame = ModelFrame::from_columns(names, cols, y, task).map_err(to_py)?;
    frame.use_missing_data = frame.has_missing();
    let h = hyper(num_trees, burn_in, post_burn_in, chains, alpha, beta, k, q, nu, cov_prior, memcache);
    let model = py.detach(|| BartModel::fit(&frame, &h, seed)).map_err(to_py)?;
    Ok(PyModel { inner: model })
}

/// Fits from a CSV file; factors are dummified and a two-level text
/// response means classification.
#[pyfunction]
#[pyo3(signature = (path, response, seed = 1, num_trees = 50, burn_in = 250, post_burn_in = 1000, use_missing_data = false))]
fn fit_csv(
    py: Python<'_>,
    path: PathBuf,
    response: &str,
    seed: u64,
    num_trees: usize,
    burn_in: usize,
    post_burn_in: usize,
    use_missing_data: bool,
) -> PyResult<PyModel> {
    let raw = load_csv(&path, response, None).map_err(to_py)?;
    let frame = bart_core::build_model_frame(&raw, use_missing_data, false).map_err(to_py)?;
    let h = Hyperparameters { num_trees, burn_in, post_burn_in, ..Default::default() };
    let model = py.detach(|| BartModel::fit(&frame, &h, seed)).map_err(to_py)?;
    Ok(PyModel { inner: model })
}

/// Friedman benchmark data as (rows, y).
#[pyfunction]
#[pyo3(signature = (n, p = 10, sigma = 1.0, seed = 1))]
fn simulate_friedman(n: usize, p: usize, sigma: f64, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let frame = generate_friedman(n, p, sigma, seed).map_err(to_py)?;
    Ok(((0..frame.n()).map(|i| frame.row(i)).collect(), frame.y))
}

#[pymodule]
fn bart_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_csv, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_friedman, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::rows_to_columns;

    #[test]
    fn transposes_and_checks_width() {
        let cols = rows_to_columns(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(cols, vec![vec![1.0, 3.0, 5.0], vec![2.0, 4.0, 6.0]]);
        assert!(rows_to_columns(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(rows_to_columns(&[]).unwrap().is_empty());
    }
}
