//! The run modes: fit, select, predict and named experiments.

use std::path::{Path, PathBuf};

use blockg_core::block::{
    bf_block_hyper_g, sigma2_posterior_block, BlockHyperGPrior, IntegrationMethod,
};
use blockg_core::design::{
    block_orthogonalize, center_design, fit_least_squares, BlockPartition, BlockTransform,
    CenteredDesign, FitSummary,
};
use blockg_core::gprior::{
    ln_bf_fixed_g, ln_bf_hyper_g, shrinkage_fixed_g, shrinkage_hyper_g, sigma2_posterior_fixed_g,
    FixedGPrior, HyperGPrior,
};
use blockg_core::models::{
    bma_predict, check_mode, select_models, EnumerationMode, ModelFit, ModelPosterior, ModelPrior,
    PriorSpec,
};
use blockg_lab::scenarios::{run_named_with, EXPERIMENTS};
use nalgebra::DVector;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Mode, Resolved};
use crate::data::Table;
use crate::error::{CliError, CliResult, EXIT_CONFIG, EXIT_VERDICT};
use crate::report::{measured, num, nums, provenance, write_json};

/// Centered design built from the data file, block orthogonalized when
/// requested.
pub struct Prepared {
    pub names: Vec<String>,
    pub design: CenteredDesign,
    pub transform: Option<BlockTransform>,
    pub data_sha256: String,
}

impl Prepared {
    fn coordinates(&self) -> &'static str {
        if self.transform.is_some() {
            "orthogonalized"
        } else {
            "original"
        }
    }
}

/// Load the data and build the design.
pub fn prepare(run: &Resolved) -> CliResult<Prepared> {
    let data = run.config.data.as_deref().ok_or_else(|| CliError::config("missing data path"))?;
    let response =
        run.config.response.as_deref().ok_or_else(|| CliError::config("missing response"))?;
    let table = Table::read(&run.path(data))?;
    let names = run.predictors();
    let y = DVector::from_vec(table.column(response)?);
    let x = table.matrix(&names)?;
    let sizes: Vec<usize> = run.config.blocks.iter().map(Vec::len).collect();
    let centered = center_design(&x, &y, BlockPartition::contiguous(&sizes)?)?;
    let (design, transform) = if run.config.orthogonalize {
        let (q, t) = block_orthogonalize(&centered)?;
        (q, Some(t))
    } else {
        (centered, None)
    };
    Ok(Prepared { names, design, transform, data_sha256: table.sha256 })
}

fn per_block(fit: &FitSummary, t: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; fit.p];
    for (i, block) in fit.partition.blocks().iter().enumerate() {
        for &j in block {
            out[j] = t[i] * fit.beta_hat_ls[j];
        }
    }
    out
}

/// Coefficients in the original predictor coordinates.
fn original(prep: &Prepared, kappa: &[f64]) -> CliResult<Vec<f64>> {
    match &prep.transform {
        Some(t) => Ok(t.beta_from_kappa(kappa)?),
        None => Ok(kappa.to_vec()),
    }
}

fn intercept(prep: &Prepared, beta: &[f64]) -> f64 {
    let d = &prep.design;
    d.y_mean() - d.x_means().iter().zip(beta).map(|(m, b)| m * b).sum::<f64>()
}

/// Fit the full model and write `fit.json`.
pub fn fit(run: &Resolved, out: &Path) -> CliResult<Vec<PathBuf>> {
    let prep = prepare(run)?;
    let prior = run.prior()?;
    let fit = fit_least_squares(&prep.design)?;
    let k = fit.p_blocks.len();
    let (lbf, method, err, shrink, sigma2) = match prior {
        PriorSpec::FixedG { g } => {
            let pr = FixedGPrior::new(g)?;
            let ig = sigma2_posterior_fixed_g(&pr, &fit)?;
            let s2 = json!({
                "mean": num(ig.mean()),
                "law": "inverse-gamma",
                "shape": num(ig.shape),
                "rate": num(ig.rate),
                "method": IntegrationMethod::ClosedForm.as_str(),
            });
            let t = shrinkage_fixed_g(&pr);
            (ln_bf_fixed_g(&pr, &fit)?, IntegrationMethod::ClosedForm, 0.0, vec![t; k], s2)
        }
        PriorSpec::HyperG { a } => {
            let pr = HyperGPrior::new(a)?;
            let single = FitSummary::from_sums(fit.n, &[fit.p], &[fit.tss - fit.rss], fit.rss)?;
            let dens = sigma2_posterior_block(&BlockHyperGPrior::for_fit(a, &single)?, &single)?;
            let s2 = json!({
                "mean": num(dens.mean()),
                "method": IntegrationMethod::Quadrature.as_str(),
            });
            let t = shrinkage_hyper_g(&pr, &fit)?;
            (ln_bf_hyper_g(&pr, &fit)?, IntegrationMethod::ClosedForm, 0.0, vec![t; k], s2)
        }
        PriorSpec::BlockHyperG { a } => {
            let pr = BlockHyperGPrior::for_fit(a, &fit)?;
            let post = bf_block_hyper_g(&pr, &fit, &run.integration())?;
            let dens = sigma2_posterior_block(&pr, &fit)?;
            let s2 = json!({
                "mean": num(dens.mean()),
                "method": IntegrationMethod::Quadrature.as_str(),
            });
            (post.log_bf_null, post.method, post.error_estimate, post.t_mean, s2)
        }
    };
    let kappa = per_block(&fit, &shrink);
    let beta = original(&prep, &kappa)?;
    let beta_ls = original(&prep, &fit.beta_hat_ls)?;
    let mut doc = json!({
        "provenance": provenance(run, Some(&prep.data_sha256)),
        "prior": prior,
        "predictors": prep.names,
        "blocks": run.config.blocks,
        "response": run.config.response,
        "fit_summary": fit,
        "fit_summary_coordinates": prep.coordinates(),
        "least_squares": {
            "coefficients": nums(&beta_ls),
            "intercept": num(intercept(&prep, &beta_ls)),
        },
        "log_bf_null": measured(lbf, method.as_str(), err),
        "shrinkage": { "per_block": nums(&shrink), "method": method.as_str() },
        "posterior_mean": {
            "coefficients": nums(&beta),
            "intercept": num(intercept(&prep, &beta)),
            "method": method.as_str(),
        },
        "sigma2": sigma2,
    });
    if prep.transform.is_some() {
        doc["posterior_mean"]["orthogonalized_coefficients"] = nums(&kappa);
    }
    let path = out.join("fit.json");
    write_json(&path, &doc)?;
    Ok(vec![path])
}

fn enumeration(run: &Resolved, prior: &PriorSpec) -> CliResult<EnumerationMode> {
    let mode = run.config.select.enumeration.unwrap_or(match prior {
        PriorSpec::BlockHyperG { .. } => EnumerationMode::BlockSubsets,
        _ => EnumerationMode::AllSubsets,
    });
    check_mode(prior, mode).map_err(|e| CliError::config(e.to_string()))?;
    Ok(mode)
}

fn model_space(
    run: &Resolved,
    prep: &Prepared,
) -> CliResult<(PriorSpec, EnumerationMode, ModelPosterior, Vec<ModelFit>)> {
    let prior = run.prior()?;
    let mode = enumeration(run, &prior)?;
    let (post, fits) =
        select_models(&prep.design, &prior, mode, &ModelPrior::Uniform, &run.integration())?;
    Ok((prior, mode, post, fits))
}

/// Enumerate the model space and write `models.json`, most probable model
/// first.
pub fn select(run: &Resolved, out: &Path) -> CliResult<Vec<PathBuf>> {
    let prep = prepare(run)?;
    let (prior, mode, post, fits) = model_space(run, &prep)?;
    let rows: Vec<Value> = post
        .rows_by_probability()
        .iter()
        .enumerate()
        .map(|(rank, r)| {
            let m = &post.models[r.model_id];
            let f = &fits[r.model_id];
            let included: Vec<&String> =
                prep.names.iter().zip(&m.gamma).filter(|(_, &g)| g).map(|(n, _)| n).collect();
            json!({
                "rank": rank + 1,
                "model_id": r.model_id,
                "gamma_bits": r.gamma_bits,
                "included": included,
                "blocks_included": m.blocks_included,
                "log_bf_null": num(r.log_bf_null),
                "prior_prob": num(post.prior_prob[r.model_id]),
                "post_prob": num(r.post_prob),
                "method": f.method.as_str(),
                "shrinkage": nums(&f.shrinkage),
                "posterior_mean": nums(&f.posterior_mean),
            })
        })
        .collect();
    let doc = json!({
        "provenance": provenance(run, Some(&prep.data_sha256)),
        "prior": prior,
        "enumeration": mode,
        "predictors": prep.names,
        "coefficient_coordinates": prep.coordinates(),
        "models": rows,
    });
    let path = out.join("models.json");
    write_json(&path, &doc)?;
    Ok(vec![path])
}

/// Model-averaged predictions at the points file; writes
/// `predictions.json`.
pub fn predict(run: &Resolved, out: &Path) -> CliResult<Vec<PathBuf>> {
    let prep = prepare(run)?;
    let settings = run.config.predict.as_ref().ok_or_else(|| {
        CliError::config("predict mode needs a [predict] table with points")
    })?;
    let points = Table::read(&run.path(&settings.points))?;
    let xs = points.matrix(&prep.names)?;
    let (prior, mode, post, fits) = model_space(run, &prep)?;
    let means: Vec<Vec<f64>> = fits.iter().map(|f| f.posterior_mean.clone()).collect();
    let d = &prep.design;
    let p = prep.names.len();
    let mut preds = Vec::with_capacity(points.rows());
    for i in 0..points.rows() {
        let x: Vec<f64> = xs.row(i).iter().cloned().collect();
        let value = match &prep.transform {
            Some(t) => {
                let xc = DVector::from_iterator(p, x.iter().zip(d.x_means()).map(|(v, m)| v - m));
                let q = t.t.transpose().lu().solve(&xc).ok_or_else(|| {
                    CliError::from(blockg_core::Error::RankDeficient("singular block transform".into()))
                })?;
                let q: Vec<f64> = q.iter().cloned().collect();
                bma_predict(&q, &post, &means, &vec![0.0; p], d.y_mean())?
            }
            None => bma_predict(&x, &post, &means, d.x_means(), d.y_mean())?,
        };
        preds.push(json!({ "row": i, "value": num(value) }));
    }
    let mut methods: Vec<&str> = fits.iter().map(|f| f.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    let doc = json!({
        "provenance": provenance(run, Some(&prep.data_sha256)),
        "points_sha256": points.sha256,
        "prior": prior,
        "enumeration": mode,
        "predictors": prep.names,
        "map_model": post.models[post.map_index()].gamma_bits(),
        "method": "model-average",
        "model_methods": methods,
        "predictions": preds,
    });
    let path = out.join("predictions.json");
    write_json(&path, &doc)?;
    Ok(vec![path])
}

/// Run a named experiment and write `<name>.csv` and
/// `<name>.verdict.json`. A failed verdict is reported after both files
/// are written.
pub fn experiment(run: &Resolved, name: &str, out: &Path) -> CliResult<Vec<PathBuf>> {
    if !EXPERIMENTS.contains(&name) {
        return Err(CliError::new(
            EXIT_CONFIG,
            "UnknownExperiment",
            format!("unknown experiment '{name}'; expected one of {}", EXPERIMENTS.join(", ")),
        ));
    }
    let res =
        run_named_with(name, run.config.seed, run.config.simulation_budget, &run.config.experiment)?;
    let csv_path = out.join(format!("{name}.csv"));
    res.write_csv(&csv_path)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", csv_path.display())))?;
    let csv_bytes = std::fs::read(&csv_path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", csv_path.display())))?;
    let mut doc = res.verdict_json();
    doc["provenance"] = provenance(run, None);
    doc["csv"] = json!(format!("{name}.csv"));
    doc["csv_sha256"] =
        json!(Sha256::digest(&csv_bytes).iter().map(|b| format!("{b:02x}")).collect::<String>());
    let json_path = out.join(format!("{name}.verdict.json"));
    write_json(&json_path, &doc)?;
    if !res.passed() {
        let failed: Vec<&str> =
            res.verdicts.iter().filter(|v| !v.pass).map(|v| v.claim.as_str()).collect();
        return Err(CliError::new(
            EXIT_VERDICT,
            "VerdictFailed",
            format!("{name}: {}", failed.join("; ")),
        ));
    }
    Ok(vec![csv_path, json_path])
}

/// Dispatch on the configured mode. Returns the files written.
pub fn execute(run: &Resolved) -> CliResult<Vec<PathBuf>> {
    let out = run.output_dir();
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", out.display())))?;
    match &run.mode {
        Mode::Fit => fit(run, &out),
        Mode::Select => select(run, &out),
        Mode::Predict => predict(run, &out),
        Mode::Experiment(name) => experiment(run, name, &out),
    }
}
