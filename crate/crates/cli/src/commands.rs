use std::fs;
use std::io::Write;
use std::path::Path;

use bart_core::dataset::{generate_friedman, load_prediction_csv, RawValues};
use bart_core::diagnostics::{convergence_trace, in_sample_residuals, model_summary};
use bart_core::inference::{
    cov_importance_test, cv_grid_search, importance_report, inclusion_proportions, interaction_counts, intervals,
    k_fold_cv, partial_dependence, predict, rmse_by_num_trees, split_counts, var_selection, var_selection_cv,
    CovariateSpec, CvGrid, IntervalKind, SelectionMethod, VarSelectionConfig,
};
use bart_core::persistence::{export_json, load_model, save_model};
use bart_core::sampler::derive_seed;
use bart_core::{load_csv, BartModel, Hyperparameters, ModelFrame, SamplerOptions};
use serde::Serialize;

use crate::args::*;
use crate::error::{CliError, CliResult};

pub struct Ctx {
    pub seed: u64,
    pub progress: bool,
}

fn write_output(path: Option<&Path>, body: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, body).map_err(|e| CliError::data(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(body).and_then(|_| out.flush()) {
                // a closed downstream pipe (`| head`) is not a failure
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::internal(format!("stdout: {e}"))),
                _ => Ok(()),
            }
        }
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    s.push('\n');
    write_output(path, s.as_bytes())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::internal(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::internal(e.to_string()))
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn load_frame(d: &DataArgs) -> CliResult<ModelFrame> {
    let positive = match (d.task, &d.positive_level) {
        (_, Some(p)) => Some(p.as_str()),
        (TaskArg::Classification, None) => Some("1"),
        _ => None,
    };
    let mut raw = load_csv(&d.data, &d.response, positive)?;
    if d.drop_missing {
        raw = raw.drop_missing_rows();
    }
    let categorical = matches!(raw.response.values, RawValues::Categorical { .. });
    match d.task {
        TaskArg::Regression if categorical => {
            return Err(CliError::usage(format!("response `{}` is categorical; cannot fit a regression", d.response)))
        }
        TaskArg::Regression if positive.is_some() => raw.positive_level = None,
        _ => {}
    }
    Ok(bart_core::build_model_frame(&raw, d.use_missing_data, d.missing_dummies)?)
}

pub fn build_hyper(h: &HyperArgs) -> CliResult<Hyperparameters> {
    let mut hyper = match &h.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::usage(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {}", p.display(), e.message())))?
        }
        None => Hyperparameters::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = h.$f.clone() { hyper.$f = v; } )* };
    }
    set!(num_trees, burn_in, post_burn_in, chains, alpha, beta, k, q, nu, prob_rule_class);
    if let Some(p) = &h.proposal_probs {
        hyper.proposal_probs = (p[0], p[1], p[2]);
    }
    if let Some(w) = &h.cov_prior {
        hyper.cov_prior_vec = Some(w.clone());
    }
    if h.no_memcache {
        hyper.memcache = false;
    }
    hyper.validate()?;
    Ok(hyper)
}

fn open_model(path: &Path) -> CliResult<BartModel> {
    load_model(path).map_err(|e| match e {
        bart_core::BartError::Io { .. } => CliError::model(e.to_string()),
        other => other.into(),
    })
}

fn prediction_frame(model: &BartModel, path: &Path) -> CliResult<ModelFrame> {
    let raw = load_prediction_csv(path, &model.meta.response_name)?;
    let frame = model.frame_from_raw(&raw)?;
    model.check_frame(&frame)?;
    Ok(frame)
}

pub fn train(a: &TrainArgs, ctx: &Ctx) -> CliResult<()> {
    let frame = load_frame(&a.data)?;
    let hyper = build_hyper(&a.hyper)?;
    let opts = SamplerOptions { progress: ctx.progress, ..Default::default() };
    let (model, _) = BartModel::fit_with(&frame, &hyper, ctx.seed, opts)?;
    save_model(&model, &a.out, !a.no_traces).map_err(|e| CliError::data(e.to_string()))?;
    let summary = model_summary(&model).render();
    if let Some(p) = &a.summary {
        write_output(Some(p), summary.as_bytes())?;
    }
    write_output(None, summary.as_bytes())
}

pub fn predict_cmd(a: &PredictArgs, ctx: &Ctx) -> CliResult<()> {
    let model = open_model(&a.model)?;
    let frame = prediction_frame(&model, &a.data)?;
    let pred = predict(&model, &frame)?;
    let kind = match a.intervals {
        IntervalArg::None => None,
        IntervalArg::Credible => Some(IntervalKind::Credible),
        IntervalArg::Predictive => Some(IntervalKind::Predictive),
    };
    let iv = match kind {
        Some(k) => Some(intervals(&model, &pred, k, a.conf, a.num_draws, derive_seed(ctx.seed, 1))?),
        None => None,
    };
    let body = if let (Some(prob), Some(pos)) = (&pred.prob, &pred.is_positive) {
        if iv.is_some() {
            return Err(CliError::usage("intervals are only available for regression models"));
        }
        let (yes, no) = match &model.meta.task {
            bart_core::Task::Classification { positive, negative } => (positive.clone(), negative.clone()),
            bart_core::Task::Regression => unreachable!(),
        };
        let rows = prob.iter().zip(pos).map(|(p, &c)| vec![num(*p), if c { yes.clone() } else { no.clone() }]);
        csv_bytes(&["probability", "class"], rows)?
    } else if let Some(iv) = iv {
        let rows = pred.point.iter().zip(&iv).map(|(p, i)| vec![num(*p), num(i.lower), num(i.upper)]);
        csv_bytes(&["prediction", "lower", "upper"], rows)?
    } else {
        csv_bytes(&["prediction"], pred.point.iter().map(|p| vec![num(*p)]))?
    };
    write_output(a.out.as_deref(), &body)
}

pub fn cv(a: &CvArgs, ctx: &Ctx) -> CliResult<()> {
    let frame = load_frame(&a.data)?;
    let hyper = build_hyper(&a.hyper)?;
    let res = k_fold_cv(&frame, &hyper, a.folds, ctx.seed)?;
    write_json(a.out.as_deref(), &res)
}

pub fn cvgrid(a: &CvGridArgs, ctx: &Ctx) -> CliResult<()> {
    let frame = load_frame(&a.data)?;
    let hyper = build_hyper(&a.hyper)?;
    let nu_q = a
        .grid_nu_q
        .iter()
        .map(|s| {
            let (nu, q) = s.split_once(':').ok_or_else(|| CliError::usage(format!("bad nu:q pair `{s}`")))?;
            let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| CliError::usage(format!("bad nu:q pair `{s}`")));
            Ok((parse(nu)?, parse(q)?))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let grid = CvGrid { k: a.grid_k.clone(), nu_q, num_trees: a.grid_trees.clone() };
    let res = cv_grid_search(&frame, &hyper, &grid, a.folds, ctx.seed)?;
    write_json(a.out.as_deref(), &res)
}

#[derive(Serialize)]
struct VarselOut {
    names: Vec<String>,
    real_props: Vec<f64>,
    local_thresholds: Vec<f64>,
    global_max_threshold: f64,
    global_se_thresholds: Vec<f64>,
    selected: std::collections::BTreeMap<&'static str, Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv: Option<bart_core::inference::VarSelectionCvResult>,
}

pub fn varsel(a: &VarselArgs, ctx: &Ctx) -> CliResult<()> {
    let frame = load_frame(&a.data)?;
    let hyper = build_hyper(&a.hyper)?;
    let cfg = VarSelectionConfig {
        permutations: a.permutations,
        alpha: a.alpha_level,
        reps_for_avg: a.reps,
        num_trees: a.selection_trees,
    };
    let cv = match a.cv_folds {
        Some(k) => Some(var_selection_cv(&frame, &hyper, &cfg, k, ctx.seed)?),
        None => None,
    };
    let sel = var_selection(&frame, &hyper, &cfg, ctx.seed)?;
    let selected = SelectionMethod::ALL.iter().map(|&m| (m.name(), sel.selected_names(m))).collect();
    let out = VarselOut {
        names: sel.names.clone(),
        real_props: sel.real_props.clone(),
        local_thresholds: sel.local_thresholds.clone(),
        global_max_threshold: sel.global_max_threshold,
        global_se_thresholds: sel.global_se_thresholds.clone(),
        selected,
        cv,
    };
    write_json(a.out.as_deref(), &out)
}

pub fn covtest(a: &CovtestArgs, ctx: &Ctx) -> CliResult<()> {
    let frame = load_frame(&a.data)?;
    let hyper = build_hyper(&a.hyper)?;
    let spec = match (&a.covariates, a.all_covariates, a.omnibus) {
        (Some(c), false, false) => CovariateSpec::Columns(c.clone()),
        (None, true, false) => CovariateSpec::All,
        (None, false, true) => CovariateSpec::Response,
        _ => return Err(CliError::usage("give exactly one of --covariates, --all-covariates, --omnibus")),
    };
    let res = cov_importance_test(&frame, &hyper, &spec, a.permutations, ctx.seed)?;
    write_json(a.out.as_deref(), &res)
}

pub fn pdp(a: &PdpArgs) -> CliResult<()> {
    let model = open_model(&a.model)?;
    let frame = prediction_frame(&model, &a.data)?;
    let j = frame
        .column_index(&a.feature)
        .ok_or_else(|| CliError::usage(format!("unknown feature `{}`", a.feature)))?;
    let res = partial_dependence(&model, &frame, j)?;
    let rows = res.points.iter().map(|p| vec![num(p.level), num(p.value), num(p.estimate), num(p.lower), num(p.upper)]);
    write_output(a.out.as_deref(), &csv_bytes(&["quantile", "value", "estimate", "lower", "upper"], rows)?)
}

pub fn importance(a: &ImportanceArgs, ctx: &Ctx) -> CliResult<()> {
    let body = match (&a.model, &a.data) {
        (Some(m), None) => {
            let model = open_model(m)?;
            let props = inclusion_proportions(&model);
            let counts = split_counts(&model);
            let rows = (0..props.len()).map(|j| vec![model.meta.column_names[j].clone(), num(props[j]), counts[j].to_string()]);
            csv_bytes(&["feature", "inclusion", "splits"], rows)?
        }
        (None, Some(path)) => {
            let d = DataArgs {
                data: path.clone(),
                response: a.response.clone().unwrap_or_default(),
                task: a.task,
                positive_level: a.positive_level.clone(),
                use_missing_data: a.use_missing_data,
                missing_dummies: false,
                drop_missing: false,
            };
            let frame = load_frame(&d)?;
            let hyper = build_hyper(&a.hyper)?;
            let rep = importance_report(&frame, &hyper, a.replicates, ctx.seed)?.inclusion;
            let rows = (0..rep.names.len())
                .map(|j| vec![rep.names[j].clone(), num(rep.mean[j]), num(rep.lower[j]), num(rep.upper[j])]);
            csv_bytes(&["feature", "inclusion", "lower", "upper"], rows)?
        }
        _ => return Err(CliError::usage("give --model or --data/--response")),
    };
    write_output(a.out.as_deref(), &body)
}

pub fn interactions(a: &InteractionsArgs) -> CliResult<()> {
    let model = open_model(&a.model)?;
    let m = interaction_counts(&model);
    let names = &model.meta.column_names;
    let mut pairs = Vec::new();
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            pairs.push((i, j, m[i][j]));
        }
    }
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let rows = pairs.into_iter().map(|(i, j, c)| vec![names[i].clone(), names[j].clone(), num(c)]);
    write_output(a.out.as_deref(), &csv_bytes(&["feature_a", "feature_b", "count"], rows)?)
}

pub fn diagnostics(a: &DiagnosticsArgs) -> CliResult<()> {
    let model = open_model(&a.model)?;
    let summary = model_summary(&model).render();
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
        write_output(Some(&dir.join("summary.txt")), summary.as_bytes())?;
        if let Ok(trace) = convergence_trace(&model.ensemble) {
            trace.write_csv_dir(dir)?;
        }
        if !model.is_classification() {
            let res = in_sample_residuals(&model)?;
            let rows = model.meta.train_fitted.iter().zip(&res).map(|(f, r)| vec![num(*f), num(*r)]);
            write_output(Some(&dir.join("residuals.csv")), &csv_bytes(&["fitted", "residual"], rows)?)?;
        }
    }
    write_output(None, summary.as_bytes())
}

pub fn rmse_by_trees(a: &RmseByTreesArgs, ctx: &Ctx) -> CliResult<()> {
    let frame = load_frame(&a.data)?;
    let hyper = build_hyper(&a.hyper)?;
    let res = rmse_by_num_trees(&frame, &hyper, &a.trees, a.replicates, ctx.seed)?;
    let mut header = vec!["num_trees".to_string(), "mean_rmse".to_string()];
    header.extend((1..=a.replicates).map(|r| format!("rep{r}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = res.iter().map(|t| {
        let mut r = vec![t.num_trees.to_string(), num(t.mean_rmse)];
        r.extend(t.replicate_rmse.iter().map(|v| num(*v)));
        r
    });
    write_output(a.out.as_deref(), &csv_bytes(&header, rows)?)
}

pub fn simulate(a: &SimulateArgs, ctx: &Ctx) -> CliResult<()> {
    let frame = generate_friedman(a.n, a.p, a.sigma, ctx.seed)?;
    let mut buf = Vec::new();
    frame.write_csv(&mut buf)?;
    write_output(a.out.as_deref(), &buf)
}

pub fn export(a: &ExportArgs) -> CliResult<()> {
    let model = open_model(&a.model)?;
    let mut s = export_json(&model)?;
    s.push('\n');
    write_output(a.out.as_deref(), s.as_bytes())
}
