use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::designs::{FitPlan, Scenario};
use super::dgp::DgpSpec;
use crate::error::Result;
use crate::estimator::{align_labels, lloyd_fit, LloydConfig};
use crate::inference::{block_coverage, coverage_indicator, hac_covariance, InferenceResult};
use crate::metrics::{block_cluster_loss, cluster_loss, prediction_losses};
use crate::panel::Assignment;
use crate::rng::{child_seed, domain};
use crate::selection::{cp_select, model_loss};

const DEGENERATE_SE: f64 = 1e-10;

/// Mean with its Monte Carlo standard error over the available replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub mc_se: f64,
    pub count: usize,
}

impl Stat {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let count = values.len();
        if count == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let mc_se = if count > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, mc_se, count })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub plan: String,
    pub risk: f64,
    pub param_mse: f64,
    /// `param_mse / p`, the per-coefficient average.
    pub param_mse_per_coef: f64,
    pub function_mse: f64,
    /// Present only when the fitted layout matches the truth.
    pub cluster_loss: Option<f64>,
    pub block_cluster_loss: Option<Vec<f64>>,
    /// Mean of `block_cluster_loss` over blocks.
    pub cluster_loss_per_block: Option<f64>,
    /// Absent when the layout differs from the truth or the intervals are
    /// degenerate (some standard error is numerically zero) or `M_hat` is singular.
    pub coverage: Option<f64>,
    pub block_coverage: Option<Vec<f64>>,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub fits: Vec<FitRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub plan: String,
    pub risk: Option<Stat>,
    pub param_mse: Option<Stat>,
    pub param_mse_per_coef: Option<Stat>,
    pub function_mse: Option<Stat>,
    pub cluster_loss: Option<Stat>,
    pub cluster_loss_per_block: Option<Stat>,
    pub coverage: Option<Stat>,
    pub block_cluster_loss: Vec<Option<Stat>>,
    pub block_coverage: Vec<Option<Stat>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub reps: usize,
    pub failures: usize,
    pub plans: Vec<PlanSummary>,
    pub replications: Vec<ReplicationRecord>,
}

impl McReport {
    pub fn plan(&self, label: &str) -> Option<&PlanSummary> {
        self.plans.iter().find(|p| p.plan == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub reps: usize,
    pub seed: u64,
    pub level: f64,
}

fn fit_record(
    generated: &super::dgp::Generated,
    plan: &FitPlan,
    config: &LloydConfig,
    level: f64,
) -> Result<FitRecord> {
    let data = &generated.data;
    let truth = &generated.params;
    let fit = lloyd_fit(data, &plan.blocks, &plan.clusters, config)?;
    let (param_mse, function_mse) = prediction_losses(data, &fit.params, &fit.gamma, truth, &generated.gamma)?;
    let mut record = FitRecord {
        plan: plan.label.clone(),
        risk: fit.risk,
        param_mse,
        param_mse_per_coef: param_mse / data.p() as f64,
        function_mse,
        cluster_loss: None,
        block_cluster_loss: None,
        cluster_loss_per_block: None,
        coverage: None,
        block_coverage: None,
        rank_deficient: fit.rank_deficient,
    };
    if plan.blocks != *truth.blocks() || plan.clusters != *truth.clusters() {
        return Ok(record);
    }
    let alignment = align_labels(&fit.params, truth)?;
    let gamma: Assignment = alignment.relabel(&fit.gamma)?;
    record.cluster_loss = Some(cluster_loss(&gamma, &generated.gamma)?);
    let per_block: Vec<f64> = (0..truth.blocks().num_blocks())
        .map(|l| block_cluster_loss(&gamma, &generated.gamma, l))
        .collect::<Result<_>>()?;
    record.cluster_loss_per_block = Some(per_block.iter().sum::<f64>() / per_block.len() as f64);
    record.block_cluster_loss = Some(per_block);
    if let Ok(inf) = hac_covariance(data, &alignment.params, &gamma, level) {
        if !degenerate(&inf) {
            record.coverage = Some(coverage_indicator(&inf, truth)?);
            record.block_coverage = Some(per_block_coverage(&inf, truth)?);
        }
    }
    Ok(record)
}

/// Standard errors at rounding level, as in noiseless data.
fn degenerate(inf: &InferenceResult) -> bool {
    inf.se
        .iter()
        .zip(inf.estimate.as_vec())
        .any(|(s, b)| *s <= DEGENERATE_SE * (1.0 + b.abs()))
}

fn per_block_coverage(inf: &InferenceResult, truth: &crate::panel::ParamSet) -> Result<Vec<f64>> {
    (0..truth.blocks().num_blocks()).map(|l| block_coverage(inf, truth, l)).collect()
}

fn replication(scenario: &Scenario, config: &LloydConfig, options: &McOptions, r: usize) -> ReplicationRecord {
    let seed = child_seed(options.seed, domain::REPLICATION, r as u64);
    let run = || -> Result<Vec<FitRecord>> {
        let generated = scenario.dgp.with_seed(child_seed(seed, domain::DATA, 0)).generate()?;
        scenario
            .fits
            .iter()
            .enumerate()
            .map(|(f, plan)| {
                let cfg = config.with_seed(child_seed(seed, domain::FIT, f as u64));
                fit_record(&generated, plan, &cfg, options.level)
            })
            .collect()
    };
    match run() {
        Ok(fits) => ReplicationRecord { replication: r, seed, fits, error: None },
        Err(e) => ReplicationRecord { replication: r, seed, fits: Vec::new(), error: Some(e.to_string()) },
    }
}

fn summarize(plan: &FitPlan, index: usize, b: usize, records: &[ReplicationRecord]) -> PlanSummary {
    let fits: Vec<&FitRecord> = records.iter().filter(|r| r.error.is_none()).map(|r| &r.fits[index]).collect();
    let collect = |f: &dyn Fn(&FitRecord) -> Option<f64>| -> Option<Stat> {
        Stat::from_values(&fits.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
    };
    PlanSummary {
        plan: plan.label.clone(),
        risk: collect(&|r| Some(r.risk)),
        param_mse: collect(&|r| Some(r.param_mse)),
        param_mse_per_coef: collect(&|r| Some(r.param_mse_per_coef)),
        function_mse: collect(&|r| Some(r.function_mse)),
        cluster_loss: collect(&|r| r.cluster_loss),
        cluster_loss_per_block: collect(&|r| r.cluster_loss_per_block),
        coverage: collect(&|r| r.coverage),
        block_cluster_loss: (0..b)
            .map(|l| collect(&|r| r.block_cluster_loss.as_ref().map(|v| v[l])))
            .collect(),
        block_coverage: (0..b).map(|l| collect(&|r| r.block_coverage.as_ref().map(|v| v[l]))).collect(),
    }
}

/// Independent generate, fit, align, score and inference pipelines, one per
/// replication, each seeded from `(options.seed, r)`.
pub fn run_mc(scenario: &Scenario, config: &LloydConfig, options: &McOptions) -> Result<McReport> {
    config.validate()?;
    scenario.dgp.validate()?;
    if options.reps == 0 {
        return Err(crate::error::Error::Config("at least one replication is required".into()));
    }
    let replications: Vec<ReplicationRecord> = (0..options.reps)
        .into_par_iter()
        .map(|r| replication(scenario, config, options, r))
        .collect();
    let failures = replications.iter().filter(|r| r.error.is_some()).count();
    let b = scenario.dgp.blocks().num_blocks();
    let plans = scenario
        .fits
        .iter()
        .enumerate()
        .map(|(f, plan)| summarize(plan, f, b, &replications))
        .collect();
    Ok(McReport { reps: options.reps, failures, plans, replications })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub replication: usize,
    pub seed: u64,
    pub k_hat: Vec<usize>,
    pub model_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionMcReport {
    pub k_true: Vec<usize>,
    pub k_max: Vec<usize>,
    pub reps: usize,
    pub failures: usize,
    pub model_loss: Option<Stat>,
    /// Distinct `k_hat` values with their frequencies, sorted by `k`.
    pub frequencies: Vec<(Vec<usize>, usize)>,
    pub replications: Vec<SelectionRecord>,
}

/// Cp selection repeated over independent samples of `dgp`.
pub fn run_selection_mc(dgp: &DgpSpec, k_max: &[usize], config: &LloydConfig, options: &McOptions) -> Result<SelectionMcReport> {
    config.validate()?;
    dgp.validate()?;
    let k_true = dgp.clusters().counts().to_vec();
    let results: Vec<Result<SelectionRecord>> = (0..options.reps)
        .into_par_iter()
        .map(|r| {
            let seed = child_seed(options.seed, domain::REPLICATION, r as u64);
            let generated = dgp.with_seed(child_seed(seed, domain::DATA, 0)).generate()?;
            let cfg = config.with_seed(child_seed(seed, domain::FIT, 0));
            let sel = cp_select(&generated.data, dgp.blocks(), k_max, &cfg)?;
            let loss = model_loss(&sel.k_hat, &k_true)?;
            Ok(SelectionRecord { replication: r, seed, k_hat: sel.k_hat, model_loss: loss })
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_err()).count();
    let replications: Vec<SelectionRecord> = results.into_iter().filter_map(|r| r.ok()).collect();
    let model_loss = Stat::from_values(&replications.iter().map(|r| r.model_loss).collect::<Vec<_>>());
    let mut frequencies: Vec<(Vec<usize>, usize)> = Vec::new();
    for rec in &replications {
        match frequencies.iter_mut().find(|(k, _)| *k == rec.k_hat) {
            Some((_, c)) => *c += 1,
            None => frequencies.push((rec.k_hat.clone(), 1)),
        }
    }
    frequencies.sort();
    Ok(SelectionMcReport {
        k_true,
        k_max: k_max.to_vec(),
        reps: options.reps,
        failures,
        model_loss,
        frequencies,
        replications,
    })
}
