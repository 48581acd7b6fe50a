use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::RunConfig;
use crate::error::{Error, Result};
use crate::estimator::{canonical_labels, run_starts, FitResult, StartSummary};
use crate::inference::{hac_covariance_with, CoefficientRow, InferenceOptions, InferenceResult};
use crate::io::{read_panel, PanelInput};
use crate::panel::{BlockSpec, ClusterConfig, PanelData, ParamSet};
use crate::selection::{cp_select_with, SelectionOptions};
use crate::simulation::designs::{self, DEFAULT_N, DEFAULT_T};
use crate::simulation::diagnostics::{first_below, relative_error_paths, THRESHOLD};
use crate::simulation::mc::PlanSummary;
use crate::simulation::{
    convergence_diagnostics, run_mc, run_selection_mc, DesignName, DgpSpec, ErrorKind, McOptions, Scenario, Stat,
};
use crate::transforms::fe_fit_demeaned;

pub(super) fn dispatch(cfg: &RunConfig, out: &Path) -> Result<()> {
    match cfg.command.as_str() {
        "fit" => fit(cfg, out, false),
        "fe-fit" => fit(cfg, out, true),
        "select" => select(cfg, out),
        "simulate" => simulate(cfg, out),
        "diagnose" => diagnose(cfg, out),
        other => Err(Error::Config(format!("unknown command '{other}'"))),
    }
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(out, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    write_json(out, "resolved-config.json", cfg)
}

fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

/// Shape problems in user-supplied `--blocks`/`--k` are configuration errors.
fn as_config<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Shape(m) => Error::Config(m),
        other => other,
    })
}

fn clusters_for(k: &[usize], blocks: &BlockSpec) -> Result<ClusterConfig> {
    as_config(ClusterConfig::new(k.to_vec()).and_then(|c| c.check_blocks(blocks).map(|_| c)))
}

fn load_input(cfg: &RunConfig) -> Result<(PanelInput, BlockSpec)> {
    let path = require(&cfg.input, "input")?;
    let input = read_panel(path)?;
    let blocks = as_config(match &cfg.blocks {
        Some(dims) => BlockSpec::new(dims.clone()).and_then(|b| b.check_panel(&input.data).map(|_| b)),
        None => BlockSpec::single(input.data.p()),
    })?;
    Ok((input, blocks))
}

#[derive(Serialize)]
struct FitOutput<'a> {
    units: &'a [String],
    n: usize,
    t: usize,
    risk: f64,
    params: &'a ParamSet,
    /// 1-based labels, one row per unit.
    assignment: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fixed_effects: Option<&'a [f64]>,
    best_start_index: usize,
    rank_deficient: bool,
    per_start: &'a [StartSummary],
    #[serde(skip_serializing_if = "Option::is_none")]
    inference: Option<Vec<CoefficientRow>>,
}

fn fit(cfg: &RunConfig, out: &Path, fixed_effects: bool) -> Result<()> {
    let (input, blocks) = load_input(cfg)?;
    let clusters = clusters_for(require(&cfg.k, "k")?, &blocks)?;
    let options = InferenceOptions { level: cfg.level.unwrap_or(0.95), dof_correction: cfg.dof_correction };
    write_config(cfg, out)?;

    let (result, effects, data): (FitResult, Option<Vec<f64>>, PanelData) = if fixed_effects {
        let (fe, demeaned) = fe_fit_demeaned(&input.data, &blocks, &clusters, &cfg.lloyd)?;
        (fe.fit, Some(fe.fixed_effects), demeaned.data)
    } else {
        (crate::estimator::lloyd_fit(&input.data, &blocks, &clusters, &cfg.lloyd)?, None, input.data.clone())
    };
    let (params, gamma) = canonical_labels(&result.params, &result.gamma)?;
    eprintln!("{}: risk {:.6} from start {}", cfg.command, result.risk, result.best_start_index);

    let inference: Option<InferenceResult> = match hac_covariance_with(&data, &params, &gamma, &options) {
        Ok(inf) => Some(inf),
        Err(e) => {
            eprintln!("warning: inference skipped: {e}");
            None
        }
    };
    if let Some(inf) = &inference {
        let mut w = create(out, "inference.csv")?;
        inf.write_csv(&mut w)?;
        w.flush()?;
    }
    let output = FitOutput {
        units: &input.units,
        n: data.n(),
        t: data.t(),
        risk: result.risk,
        params: &params,
        assignment: gamma.to_one_based(),
        fixed_effects: effects.as_deref(),
        best_start_index: result.best_start_index,
        rank_deficient: result.rank_deficient,
        per_start: &result.per_start,
        inference: inference.as_ref().map(|i| i.rows()),
    };
    write_json(out, "fit.json", &output)
}

fn select(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (input, blocks) = load_input(cfg)?;
    let k_max = require(&cfg.k_max, "k-max")?;
    clusters_for(k_max, &blocks)?;
    let defaults = SelectionOptions::default();
    let options = SelectionOptions {
        epsilon: cfg.epsilon.unwrap_or(defaults.epsilon),
        grid_cap: cfg.grid_cap.unwrap_or(defaults.grid_cap),
    };
    write_config(cfg, out)?;
    let result = cp_select_with(&input.data, &blocks, k_max, &cfg.lloyd, &options)?;
    eprintln!("select: k_hat = ({})", designs::join(&result.k_hat));
    let mut w = create(out, "selection.csv")?;
    result.write_csv(&mut w)?;
    w.flush()?;
    write_json(out, "selection.json", &result)
}

#[derive(Serialize)]
struct StartRecord {
    start: usize,
    #[serde(flatten)]
    summary: StartSummary,
    r_q: f64,
    r_theta: f64,
}

#[derive(Serialize)]
struct DiagnoseOutput {
    threshold: f64,
    s_q: usize,
    s_theta: usize,
    starts: Vec<StartRecord>,
}

fn diagnose(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (input, blocks) = load_input(cfg)?;
    let clusters = clusters_for(require(&cfg.k, "k")?, &blocks)?;
    cfg.lloyd.validate()?;
    write_config(cfg, out)?;
    let outcomes = run_starts(&input.data, &blocks, &clusters, &cfg.lloyd)?;
    let (r_q, r_theta) = relative_error_paths(&outcomes)?;
    let starts: Vec<StartRecord> = outcomes
        .iter()
        .enumerate()
        .map(|(j, o)| StartRecord { start: j + 1, summary: o.summary(), r_q: r_q[j], r_theta: r_theta[j] })
        .collect();
    let mut w = csv::Writer::from_writer(create(out, "diagnostics.csv")?);
    w.write_record(["start", "risk", "iterations", "termination", "r_q", "r_theta"])?;
    for s in &starts {
        w.write_record([
            s.start.to_string(),
            s.summary.risk.to_string(),
            s.summary.iterations.to_string(),
            format!("{:?}", s.summary.termination),
            s.r_q.to_string(),
            s.r_theta.to_string(),
        ])?;
    }
    w.flush()?;
    let output = DiagnoseOutput {
        threshold: THRESHOLD,
        s_q: first_below(&r_q, THRESHOLD),
        s_theta: first_below(&r_theta, THRESHOLD),
        starts,
    };
    eprintln!("diagnose: s_q = {}, s_theta = {}", output.s_q, output.s_theta);
    write_json(out, "diagnostics.json", &output)
}

/// Fills every design parameter left unset so the resolved config is explicit.
pub(super) fn simulate_defaults(cfg: &mut RunConfig) -> Result<()> {
    let design = match cfg.design {
        Some(d) => d,
        None => {
            let names: Vec<&str> = DesignName::ALL.iter().map(|d| d.as_str()).collect();
            return Err(Error::Config(format!("a design is required; valid designs: {}", names.join(", "))));
        }
    };
    cfg.errors.get_or_insert(match design {
        DesignName::Dimension => ErrorKind::Indep,
        _ => ErrorKind::Ar1,
    });
    cfg.n.get_or_insert(DEFAULT_N);
    cfg.t.get_or_insert(DEFAULT_T);
    cfg.level.get_or_insert(0.95);
    match design {
        DesignName::Separation => {
            cfg.alpha.get_or_insert(1.57);
        }
        DesignName::SampleSize => {}
        DesignName::Clusters | DesignName::Misspec => {
            cfg.k.get_or_insert(vec![3, 3]);
        }
        DesignName::Imbalance => {
            cfg.m.get_or_insert(1);
        }
        DesignName::Dimension => {
            cfg.p.get_or_insert(3);
        }
        DesignName::ModelSelect => {
            cfg.k.get_or_insert(vec![2, 3]);
            cfg.k_max.get_or_insert(vec![6, 6]);
        }
        DesignName::Convergence => {
            if cfg.k.is_none() {
                cfg.alpha.get_or_insert(FRAC_PI_2);
            }
            cfg.s_max.get_or_insert(200);
        }
    }
    cfg.reps.get_or_insert(match design {
        DesignName::ModelSelect | DesignName::Convergence => 200,
        _ => 500,
    });
    Ok(())
}

fn pair(k: &[usize]) -> Result<(usize, usize)> {
    match k {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::Config(format!("--k needs two cluster counts, got {}", k.len()))),
    }
}

fn design_dgp(cfg: &RunConfig, design: DesignName) -> Result<DgpSpec> {
    let errors = *require(&cfg.errors, "errors")?;
    let mut dgp = match design {
        DesignName::Separation => designs::design_separation(*require(&cfg.alpha, "alpha")?, errors)?,
        DesignName::SampleSize => designs::design_sample_size(DEFAULT_N, DEFAULT_T, errors)?,
        DesignName::Clusters | DesignName::Misspec | DesignName::ModelSelect => {
            let (k1, k2) = pair(require(&cfg.k, "k")?)?;
            designs::design_clusters(k1, k2, errors)?
        }
        DesignName::Imbalance => designs::design_imbalance(*require(&cfg.m, "m")?, errors)?,
        DesignName::Dimension => designs::design_dimension(*require(&cfg.p, "p")?, errors)?,
        DesignName::Convergence => match &cfg.k {
            Some(k) => {
                let (k1, k2) = pair(k)?;
                designs::design_clusters(k1, k2, errors)?
            }
            None => designs::design_separation(*require(&cfg.alpha, "alpha")?, errors)?,
        },
    };
    dgp.n = *require(&cfg.n, "n")?;
    dgp.t = *require(&cfg.t, "t")?;
    dgp.validate()?;
    Ok(dgp)
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let design = *require(&cfg.design, "design")?;
    cfg.lloyd.validate()?;
    let dgp = design_dgp(cfg, design)?;
    let options = McOptions { reps: *require(&cfg.reps, "reps")?, seed: cfg.lloyd.seed, level: cfg.level.unwrap_or(0.95) };
    write_config(cfg, out)?;
    eprintln!("simulate {design}: N={} T={} reps={}", dgp.n, dgp.t, options.reps);
    match design {
        DesignName::ModelSelect => {
            let k_max = require(&cfg.k_max, "k-max")?;
            let report = run_selection_mc(&dgp, k_max, &cfg.lloyd, &options)?;
            let mut w = csv::Writer::from_writer(create(out, "summary.csv")?);
            w.write_record(["k_hat", "count", "share"])?;
            for (k, count) in &report.frequencies {
                let share = *count as f64 / (report.reps - report.failures).max(1) as f64;
                w.write_record([designs::join(k), count.to_string(), share.to_string()])?;
            }
            w.flush()?;
            let mut w = csv::Writer::from_writer(create(out, "model_loss.csv")?);
            write_stat_header(&mut w, &["metric"])?;
            write_stat_row(&mut w, &["model_loss".to_string()], report.model_loss.as_ref())?;
            w.flush()?;
            if let Some(s) = &report.model_loss {
                eprintln!("model loss {:.4} (se {:.4}), failures {}", s.mean, s.mc_se, report.failures);
            }
            write_json(out, "replications.json", &report)
        }
        DesignName::Convergence => {
            let s_max = *require(&cfg.s_max, "s-max")?;
            let report = convergence_diagnostics(&dgp, s_max, options.reps, &cfg.lloyd, cfg.lloyd.seed)?;
            let mut w = csv::Writer::from_writer(create(out, "convergence.csv")?);
            w.write_record(["starts", "r_q", "r_theta"])?;
            for s in 0..report.s_max {
                w.write_record([(s + 1).to_string(), report.r_q[s].to_string(), report.r_theta[s].to_string()])?;
            }
            w.flush()?;
            let mut w = csv::Writer::from_writer(create(out, "summary.csv")?);
            w.write_record(["threshold", "s_q", "s_theta"])?;
            w.write_record([THRESHOLD.to_string(), report.s_q.to_string(), report.s_theta.to_string()])?;
            w.flush()?;
            eprintln!("s_q = {}, s_theta = {}", report.s_q, report.s_theta);
            write_json(out, "convergence.json", &report)
        }
        _ => {
            let scenario = match design {
                DesignName::Misspec => {
                    let (k1, k2) = pair(require(&cfg.k, "k")?)?;
                    let mut s = designs::design_misspec(k1, k2, *require(&cfg.errors, "errors")?)?;
                    s.dgp.n = dgp.n;
                    s.dgp.t = dgp.t;
                    s
                }
                DesignName::Clusters => match &cfg.k_max {
                    Some(k_over) => designs::design_overspecified(dgp, k_over)?,
                    None => Scenario::well_specified(dgp),
                },
                _ => Scenario::well_specified(dgp),
            };
            let report = run_mc(&scenario, &cfg.lloyd, &options)?;
            let mut w = csv::Writer::from_writer(create(out, "summary.csv")?);
            write_stat_header(&mut w, &["plan", "metric"])?;
            for plan in &report.plans {
                for (metric, stat) in plan_metrics(plan) {
                    write_stat_row(&mut w, &[plan.plan.clone(), metric], stat)?;
                }
            }
            w.flush()?;
            for plan in &report.plans {
                let show = |s: Option<&Stat>| s.map_or("NA".to_string(), |s| format!("{:.4}", s.mean));
                eprintln!(
                    "{}: param mse/p {}, cluster loss/block {}, coverage {}, function mse {}",
                    plan.plan,
                    show(plan.param_mse_per_coef.as_ref()),
                    show(plan.cluster_loss_per_block.as_ref()),
                    show(plan.coverage.as_ref()),
                    show(plan.function_mse.as_ref()),
                );
            }
            if report.failures > 0 {
                eprintln!("warning: {} of {} replications failed", report.failures, report.reps);
            }
            write_json(out, "replications.json", &report)
        }
    }
}

fn plan_metrics(plan: &PlanSummary) -> Vec<(String, Option<&Stat>)> {
    let mut rows = vec![
        ("risk".to_string(), plan.risk.as_ref()),
        ("param_mse".to_string(), plan.param_mse.as_ref()),
        ("param_mse_per_coef".to_string(), plan.param_mse_per_coef.as_ref()),
        ("function_mse".to_string(), plan.function_mse.as_ref()),
        ("cluster_loss".to_string(), plan.cluster_loss.as_ref()),
        ("cluster_loss_per_block".to_string(), plan.cluster_loss_per_block.as_ref()),
        ("coverage".to_string(), plan.coverage.as_ref()),
    ];
    for (l, s) in plan.block_cluster_loss.iter().enumerate() {
        rows.push((format!("cluster_loss_block{}", l + 1), s.as_ref()));
    }
    for (l, s) in plan.block_coverage.iter().enumerate() {
        rows.push((format!("coverage_block{}", l + 1), s.as_ref()));
    }
    rows
}

fn write_stat_header<W: Write>(w: &mut csv::Writer<W>, keys: &[&str]) -> Result<()> {
    let mut header: Vec<&str> = keys.to_vec();
    header.extend(["mean", "mc_se", "count"]);
    w.write_record(header)?;
    Ok(())
}

fn write_stat_row<W: Write>(w: &mut csv::Writer<W>, keys: &[String], stat: Option<&Stat>) -> Result<()> {
    let mut row: Vec<String> = keys.to_vec();
    match stat {
        Some(s) => row.extend([s.mean.to_string(), s.mc_se.to_string(), s.count.to_string()]),
        None => row.extend(["NA".to_string(), "NA".to_string(), "0".to_string()]),
    }
    w.write_record(row)?;
    Ok(())
}
