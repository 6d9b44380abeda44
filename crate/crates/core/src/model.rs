//! A fitted model: posterior ensemble plus everything needed to predict on
//! new data and to report in-sample statistics.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{DummyGroup, FrameSchema, ModelFrame, RawTable, Task};
use crate::error::{BartError, Result};
use crate::priors::{CalibratedPriors, Hyperparameters};
use crate::sampler::{derive_seed, run_gibbs, PosteriorEnsemble, PosteriorSample, ProposalRecord, SamplerOptions};

/// Training-time metadata stored alongside the trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub hyper: Hyperparameters,
    pub priors: CalibratedPriors,
    pub covariate_weights: Vec<f64>,
    pub column_names: Vec<String>,
    pub dummy_groups: Vec<DummyGroup>,
    pub missing_dummy_columns: Vec<usize>,
    pub response_name: String,
    pub task: Task,
    pub use_missing_data: bool,
    pub schema: Option<FrameSchema>,
    pub seed: u64,
    /// Wall-clock fit time. Not persisted, so archives stay reproducible.
    #[serde(skip)]
    pub train_seconds: f64,
    pub train_y: Vec<f64>,
    /// Posterior mean of the sum of trees at each training row.
    pub train_fitted: Vec<f64>,
    /// Classification: posterior mean probability at each training row.
    pub train_prob: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BartModel {
    pub meta: ModelMeta,
    pub ensemble: PosteriorEnsemble,
}

impl BartModel {
    /// Calibrates priors and runs `hyper.chains` chains seeded from `seed`.
    pub fn fit(frame: &ModelFrame, hyper: &Hyperparameters, seed: u64) -> Result<Self> {
        Ok(Self::fit_with(frame, hyper, seed, SamplerOptions::default())?.0)
    }

    pub fn fit_with(
        frame: &ModelFrame,
        hyper: &Hyperparameters,
        seed: u64,
        options: SamplerOptions,
    ) -> Result<(Self, Vec<ProposalRecord>)> {
        hyper.validate()?;
        let start = Instant::now();
        let priors = CalibratedPriors::for_frame(frame, hyper)?;
        let seeds: Vec<u64> = (0..hyper.chains as u64).map(|c| derive_seed(seed, c)).collect();
        let out = run_gibbs(frame, hyper, &priors, &seeds, options)?;
        let meta = ModelMeta {
            hyper: hyper.clone(),
            priors,
            covariate_weights: hyper.covariate_weights(frame)?,
            column_names: frame.column_names.clone(),
            dummy_groups: frame.dummy_groups.clone(),
            missing_dummy_columns: frame.missing_dummy_columns.clone(),
            response_name: frame.response_name.clone(),
            task: frame.task.clone(),
            use_missing_data: frame.use_missing_data,
            schema: frame.schema.clone(),
            seed,
            train_seconds: start.elapsed().as_secs_f64(),
            train_y: frame.y.clone(),
            train_fitted: out.fitted_mean,
            train_prob: out.fitted_prob,
        };
        Ok((BartModel { meta, ensemble: out.ensemble }, out.proposals))
    }

    pub fn samples(&self) -> &[PosteriorSample] {
        &self.ensemble.samples
    }

    pub fn p(&self) -> usize {
        self.meta.column_names.len()
    }

    pub fn n_train(&self) -> usize {
        self.meta.train_y.len()
    }

    pub fn is_classification(&self) -> bool {
        self.meta.task.is_classification()
    }

    /// Builds a prediction frame from a raw table with the training layout.
    /// The response column may be absent from `raw`; then y is zeros.
    pub fn frame_from_raw(&self, raw: &RawTable) -> Result<ModelFrame> {
        let schema = self
            .meta
            .schema
            .as_ref()
            .ok_or_else(|| BartError::Unsupported("model was not trained from a raw table".into()))?;
        let n = raw.n_rows();
        let columns = schema.apply(&raw.columns, n)?;
        let y = match &raw.response.values {
            crate::dataset::RawValues::Numeric(v) if !self.is_classification() => {
                v.iter().map(|c| c.unwrap_or(f64::NAN)).collect()
            }
            _ => vec![0.0; n],
        };
        let mut frame = ModelFrame::from_columns(schema.column_names.clone(), columns, y, self.meta.task.clone())?;
        frame.use_missing_data = self.meta.use_missing_data;
        frame.dummy_groups = self.meta.dummy_groups.clone();
        frame.missing_dummy_columns = self.meta.missing_dummy_columns.clone();
        Ok(frame)
    }

    /// Checks that `frame` has the training column layout.
    pub fn check_frame(&self, frame: &ModelFrame) -> Result<()> {
        if frame.column_names != self.meta.column_names {
            return Err(BartError::data(format!(
                "prediction data has columns {:?}, model expects {:?}",
                frame.column_names, self.meta.column_names
            )));
        }
        if !self.meta.use_missing_data && frame.has_missing() {
            return Err(BartError::data("prediction data has missing values but the model was trained without missing-data support"));
        }
        Ok(())
    }
}
