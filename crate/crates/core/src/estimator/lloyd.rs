//! Multistart Lloyd iteration: alternate the per-unit assignment step with a
//! least-squares parameter update until the parameters stop moving or the
//! assignment reaches an exact fixed point.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assign::assign_with_moments;
use super::update::{full_update_moments, partial_update_moments, UpdateOutcome};
use crate::error::{Error, Result};
use crate::moments::UnitMoments;
use crate::panel::{sample_risk_unchecked, Assignment, BlockSpec, ClusterConfig, PanelData, ParamSet};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    Full,
    #[default]
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LloydConfig {
    pub tol: f64,
    pub itermax: usize,
    pub n_starts: usize,
    pub init_sigma: f64,
    pub seed: u64,
    pub update_mode: UpdateMode,
    /// Keep the per-half-step risk path of every start (tests and diagnostics).
    #[serde(skip)]
    pub record_trace: bool,
}

impl Default for LloydConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            itermax: 400,
            n_starts: 50,
            init_sigma: 1.0,
            seed: 0,
            update_mode: UpdateMode::Partial,
            record_trace: false,
        }
    }
}

impl LloydConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.itermax == 0 {
            return Err(Error::Config("itermax must be at least 1".into()));
        }
        if self.n_starts == 0 {
            return Err(Error::Config("number of starts must be at least 1".into()));
        }
        if !(self.init_sigma > 0.0 && self.init_sigma.is_finite()) {
            return Err(Error::Config(format!("init_sigma must be positive, got {}", self.init_sigma)));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// `|theta_new - theta_old|_F < tol`.
    Tolerance,
    /// Assignment unchanged after a full update at that assignment.
    StableAssignment,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub risk: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

/// Everything produced by a single random start.
#[derive(Debug, Clone)]
pub struct StartOutcome {
    pub params: ParamSet,
    pub gamma: Assignment,
    pub risk: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub rank_deficient: bool,
    /// Sample risk after every assignment and every update, if requested.
    pub trace: Option<Vec<f64>>,
}

impl StartOutcome {
    pub fn summary(&self) -> StartSummary {
        StartSummary {
            risk: self.risk,
            iterations: self.iterations,
            converged: self.termination != Termination::MaxIterations,
            termination: self.termination,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub risk: f64,
    pub params: ParamSet,
    pub gamma: Assignment,
    pub best_start_index: usize,
    pub per_start: Vec<StartSummary>,
    /// Some update in the winning start needed a least-norm fallback.
    pub rank_deficient: bool,
}

/// Initial draw for start `index`: `theta ~ N(0, sigma^2)` entrywise, then
/// `c_il ~ Uniform[k_l]` for every unit and block.
pub fn initialize(
    n: usize,
    blocks: &BlockSpec,
    clusters: &ClusterConfig,
    config: &LloydConfig,
    index: usize,
) -> Result<(ParamSet, Assignment)> {
    let mut rng = rng::stream(config.seed, index as u64);
    let mut params = ParamSet::zeros(blocks, clusters)?;
    let normal = Normal::new(0.0, config.init_sigma)
        .map_err(|e| Error::Config(format!("init_sigma: {e}")))?;
    for v in params.as_mut_vec() {
        *v = normal.sample(&mut rng);
    }
    let b = clusters.num_blocks();
    let mut labels = Vec::with_capacity(n * b);
    for _ in 0..n {
        for l in 0..b {
            labels.push(rng.random_range(0..clusters.count(l) as u32) as usize);
        }
    }
    Ok((params, Assignment::from_flat(b, labels)))
}

fn update(moments: &UnitMoments, gamma: &Assignment, params: &ParamSet, mode: UpdateMode) -> UpdateOutcome {
    match mode {
        UpdateMode::Full => full_update_moments(moments, gamma, params),
        UpdateMode::Partial => partial_update_moments(moments, gamma, params),
    }
}

/// Runs one start from a given initial point.
pub fn run_from(
    data: &PanelData,
    moments: &UnitMoments,
    init_params: ParamSet,
    init_gamma: Assignment,
    config: &LloydConfig,
) -> StartOutcome {
    let mut trace = config.record_trace.then(Vec::new);
    let record = |trace: &mut Option<Vec<f64>>, p: &ParamSet, g: &Assignment| {
        if let Some(tr) = trace.as_mut() {
            tr.push(sample_risk_unchecked(data, p, g));
        }
    };

    let mut gamma = init_gamma;
    let first = update(moments, &gamma, &init_params, config.update_mode);
    let mut params = first.params;
    let mut rank_deficient = first.rank_deficient;
    let mut polished = config.update_mode == UpdateMode::Full;
    record(&mut trace, &params, &gamma);

    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    while iterations < config.itermax {
        iterations += 1;
        let new_gamma = assign_with_moments(moments, &params);
        let stable = new_gamma == gamma;
        gamma = new_gamma;
        record(&mut trace, &params, &gamma);
        if stable && polished {
            termination = Termination::StableAssignment;
            break;
        }
        // A stable assignment is finished with an exact joint solve so that
        // termination only happens at a coordinate-descent fixed point.
        let mode = if stable { UpdateMode::Full } else { config.update_mode };
        let next = update(moments, &gamma, &params, mode);
        polished = mode == UpdateMode::Full;
        rank_deficient |= next.rank_deficient;
        let step = next.params.distance(&params).unwrap_or(f64::INFINITY);
        params = next.params;
        record(&mut trace, &params, &gamma);
        if step < config.tol {
            termination = Termination::Tolerance;
            break;
        }
    }

    let risk = sample_risk_unchecked(data, &params, &gamma);
    StartOutcome {
        params,
        gamma,
        risk,
        iterations,
        termination,
        rank_deficient,
        trace,
    }
}

fn check_inputs(data: &PanelData, blocks: &BlockSpec, clusters: &ClusterConfig, config: &LloydConfig) -> Result<()> {
    config.validate()?;
    blocks.check_panel(data)?;
    clusters.check_blocks(blocks)
}

/// Runs every start and returns all outcomes in start order.
pub fn run_starts(
    data: &PanelData,
    blocks: &BlockSpec,
    clusters: &ClusterConfig,
    config: &LloydConfig,
) -> Result<Vec<StartOutcome>> {
    check_inputs(data, blocks, clusters, config)?;
    let moments = UnitMoments::new(data);
    (0..config.n_starts)
        .into_par_iter()
        .map(|j| {
            let (p0, g0) = initialize(data.n(), blocks, clusters, config, j)?;
            Ok(run_from(data, &moments, p0, g0, config))
        })
        .collect()
}

/// Multistart estimator: the start with the lowest final risk wins, ties
/// going to the lowest start index (risks within `RISK_TIE_TOL` count as tied).
pub fn lloyd_fit(data: &PanelData, blocks: &BlockSpec, clusters: &ClusterConfig, config: &LloydConfig) -> Result<FitResult> {
    let outcomes = run_starts(data, blocks, clusters, config)?;
    Ok(best_of(outcomes))
}

pub(crate) fn best_of(outcomes: Vec<StartOutcome>) -> FitResult {
    let per_start: Vec<StartSummary> = outcomes.iter().map(StartOutcome::summary).collect();
    let best_start_index = first_near_min(outcomes.iter().map(|o| o.risk));
    let best = outcomes.into_iter().nth(best_start_index).expect("at least one start");
    FitResult {
        risk: best.risk,
        params: best.params,
        gamma: best.gamma,
        best_start_index,
        per_start,
        rank_deficient: best.rank_deficient,
    }
}

/// Relative gap under which two final risks count as the same optimum.
pub const RISK_TIE_TOL: f64 = 1e-12;

/// First start whose risk is within `RISK_TIE_TOL` of the minimum, so that
/// rounding noise in the risk does not decide between equivalent starts.
fn first_near_min(values: impl Iterator<Item = f64> + Clone) -> usize {
    let best = values.clone().fold(f64::INFINITY, f64::min);
    values.into_iter().position(|v| v <= best + RISK_TIE_TOL * best.abs()).unwrap_or(0)
}

/// Index of the smallest value, first occurrence on ties. NaN never wins.
pub(crate) fn best_index(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::INFINITY;
    for (j, v) in values.enumerate() {
        if v < best_value {
            best_value = v;
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::canonical_labels;
    use crate::panel::sample_risk;
    use crate::testing::{random_instance, TestRng};

    fn cfg(starts: usize, seed: u64) -> LloydConfig {
        LloydConfig { n_starts: starts, seed, ..LloydConfig::default() }
    }

    #[test]
    fn single_cluster_fit_is_pooled_regression_in_one_iteration() {
        let mut rng = TestRng::new(20);
        let inst = random_instance(&mut rng, 30, 5, &[2, 1], &[1, 1], 1.0);
        let c = LloydConfig { update_mode: UpdateMode::Full, ..cfg(1, 3) };
        let fit = lloyd_fit(&inst.data, inst.params.blocks(), inst.params.clusters(), &c).unwrap();
        assert_eq!(fit.per_start[0].iterations, 1);
        assert_eq!(fit.per_start[0].termination, Termination::StableAssignment);
        let (m, v) = crate::estimator::normal_equations(&inst.data, &fit.gamma, &fit.params).unwrap();
        let ols = m.lu().solve(&v).unwrap();
        for (a, b) in fit.params.as_vec().iter().zip(ols.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn reported_risk_is_sample_risk_and_minimum() {
        let mut rng = TestRng::new(21);
        let inst = random_instance(&mut rng, 20, 5, &[1, 1], &[2, 2], 0.5);
        let fit = lloyd_fit(&inst.data, inst.params.blocks(), inst.params.clusters(), &cfg(8, 1)).unwrap();
        let direct = sample_risk(&inst.data, &fit.params, &fit.gamma).unwrap();
        assert!((fit.risk - direct).abs() <= 1e-12);
        let min = fit.per_start.iter().map(|s| s.risk).fold(f64::INFINITY, f64::min);
        assert_eq!(fit.risk, min);
        assert_eq!(fit.per_start[fit.best_start_index].risk, min);
    }

    #[test]
    fn descent_holds_along_every_path() {
        let mut rng = TestRng::new(22);
        for mode in [UpdateMode::Partial, UpdateMode::Full] {
            let inst = random_instance(&mut rng, 25, 6, &[2, 1], &[2, 3], 1.0);
            let c = LloydConfig { record_trace: true, update_mode: mode, ..cfg(10, 5) };
            for out in run_starts(&inst.data, inst.params.blocks(), inst.params.clusters(), &c).unwrap() {
                let tr = out.trace.unwrap();
                for w in tr.windows(2) {
                    assert!(w[1] <= w[0] + 1e-12, "{w:?}");
                }
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = TestRng::new(23);
        let inst = random_instance(&mut rng, 20, 4, &[1, 1], &[2, 2], 1.0);
        let a = lloyd_fit(&inst.data, inst.params.blocks(), inst.params.clusters(), &cfg(6, 9)).unwrap();
        let b = lloyd_fit(&inst.data, inst.params.blocks(), inst.params.clusters(), &cfg(6, 9)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn noiseless_separated_clusters_are_recovered() {
        let mut rng = TestRng::new(24);
        let inst = random_instance(&mut rng, 50, 10, &[2, 2], &[2, 2], 0.0);
        let fit = lloyd_fit(&inst.data, inst.params.blocks(), inst.params.clusters(), &cfg(20, 2)).unwrap();
        assert!(fit.risk <= 1e-16, "risk {}", fit.risk);
        let (ph, gh) = canonical_labels(&fit.params, &fit.gamma).unwrap();
        let (pt, gt) = canonical_labels(&inst.params, &inst.gamma).unwrap();
        assert_eq!(gh, gt);
        assert!(ph.distance(&pt).unwrap() < 1e-8);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut rng = TestRng::new(25);
        let inst = random_instance(&mut rng, 5, 2, &[1], &[2], 1.0);
        for bad in [
            LloydConfig { tol: 0.0, ..LloydConfig::default() },
            LloydConfig { itermax: 0, ..LloydConfig::default() },
            LloydConfig { n_starts: 0, ..LloydConfig::default() },
        ] {
            assert!(lloyd_fit(&inst.data, inst.params.blocks(), inst.params.clusters(), &bad).is_err());
        }
    }
}
