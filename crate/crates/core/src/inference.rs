//! Inference at a fixed assignment: the oracle normal-equations estimator,
//! the unit-clustered HAC covariance `V = M^-1 Omega M^-1`, standard errors
//! and normal confidence intervals.
//!
//! With `z_it` the `d_theta` vector holding `x_itl` in the `(l, c_il)` slot
//! of every block, `M = (1/NT) sum z_it z_it'` and
//! `Omega = (1/NT) sum_i (sum_t e_it z_it)(sum_t e_it z_it)'`, which keeps all
//! within-unit lags and drops cross-unit terms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::normal_equations;
use crate::linalg::{condition_number, least_norm_solve};
use crate::panel::{residuals, Assignment, BlockSpec, ClusterConfig, PanelData, ParamSet};

/// Matrices with a condition number above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    /// Confidence level of the intervals, in (0, 1).
    pub level: f64,
    /// Multiply `V` by `NT / (NT - d_theta)`.
    pub dof_correction: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self { level: 0.95, dof_correction: false }
    }
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub estimate: ParamSet,
    pub m_hat: DMatrix<f64>,
    pub omega_hat: DMatrix<f64>,
    pub v_hat: DMatrix<f64>,
    pub se: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub level: f64,
}

/// One coefficient of the inference table; indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub block: usize,
    pub cluster: usize,
    pub covariate: usize,
    pub coefficient: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl InferenceResult {
    pub fn rows(&self) -> Vec<CoefficientRow> {
        let blocks = self.estimate.blocks();
        let clusters = self.estimate.clusters();
        let mut rows = Vec::with_capacity(self.se.len());
        for l in 0..blocks.num_blocks() {
            for a in 0..clusters.count(l) {
                let start = self.estimate.coord(l, a);
                for u in 0..blocks.dim(l) {
                    let j = start + u;
                    rows.push(CoefficientRow {
                        block: l + 1,
                        cluster: a + 1,
                        covariate: blocks.range(l).start + u + 1,
                        coefficient: self.estimate.as_vec()[j],
                        se: self.se[j],
                        ci_lower: self.ci_lower[j],
                        ci_upper: self.ci_upper[j],
                    });
                }
            }
        }
        rows
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn layout(blocks: &BlockSpec, clusters: &ClusterConfig) -> Result<ParamSet> {
    ParamSet::zeros(blocks, clusters)
}

/// `M_hat` in `vec(theta)` order, normalised by `1/NT`.
pub fn build_m(data: &PanelData, gamma: &Assignment, blocks: &BlockSpec, clusters: &ClusterConfig) -> Result<DMatrix<f64>> {
    let (m, _) = normal_equations(data, gamma, &layout(blocks, clusters)?)?;
    Ok(m / (data.n() * data.t()) as f64)
}

/// `v_la = (1/NT) sum_{i,t} y_it 1(c_il = a) x_itl`.
pub fn build_v(data: &PanelData, gamma: &Assignment, blocks: &BlockSpec, clusters: &ClusterConfig) -> Result<DVector<f64>> {
    let (_, v) = normal_equations(data, gamma, &layout(blocks, clusters)?)?;
    Ok(v / (data.n() * data.t()) as f64)
}

#[derive(Debug, Clone)]
pub struct OracleEstimate {
    pub params: ParamSet,
    pub rank_deficient: bool,
}

/// Least squares at a known assignment: solves `M_hat vec(theta) = v`.
pub fn oracle_estimate(
    data: &PanelData,
    gamma: &Assignment,
    blocks: &BlockSpec,
    clusters: &ClusterConfig,
) -> Result<OracleEstimate> {
    let m = build_m(data, gamma, blocks, clusters)?;
    let v = build_v(data, gamma, blocks, clusters)?;
    let sol = least_norm_solve(m, &v);
    Ok(OracleEstimate {
        params: ParamSet::from_vec(blocks, clusters, sol.x.as_slice().to_vec())?,
        rank_deficient: sol.rank_deficient,
    })
}

/// `Omega_hat` from residuals of `(params, gamma)`.
pub fn build_omega(data: &PanelData, params: &ParamSet, gamma: &Assignment) -> Result<DMatrix<f64>> {
    let resid = residuals(data, params, gamma)?;
    let blocks = params.blocks();
    let dim = params.len();
    let p = data.p();
    let mut omega = DMatrix::<f64>::zeros(dim, dim);
    let mut score = vec![0.0; p];
    let mut index = vec![0usize; p];
    for i in 0..data.n() {
        let label = gamma.label(i);
        for l in 0..blocks.num_blocks() {
            let start = params.coord(l, label[l]);
            for (u, j) in blocks.range(l).enumerate() {
                index[j] = start + u;
            }
        }
        score.iter_mut().for_each(|s| *s = 0.0);
        for s in 0..data.t() {
            let e = resid[i * data.t() + s];
            for (sc, x) in score.iter_mut().zip(data.covariates(i, s)) {
                *sc += e * x;
            }
        }
        for a in 0..p {
            for b in 0..p {
                omega[(index[a], index[b])] += score[a] * score[b];
            }
        }
    }
    Ok(omega / (data.n() * data.t()) as f64)
}

fn z_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

/// HAC covariance at the estimated clusters with default options.
pub fn hac_covariance(data: &PanelData, params: &ParamSet, gamma: &Assignment, level: f64) -> Result<InferenceResult> {
    hac_covariance_with(data, params, gamma, &InferenceOptions { level, ..InferenceOptions::default() })
}

pub fn hac_covariance_with(
    data: &PanelData,
    params: &ParamSet,
    gamma: &Assignment,
    options: &InferenceOptions,
) -> Result<InferenceResult> {
    let z = z_value(options.level)?;
    let m_hat = build_m(data, gamma, params.blocks(), params.clusters())?;
    let condition = condition_number(&m_hat);
    if condition.is_nan() || condition >= MAX_CONDITION {
        return Err(Error::Singular {
            condition,
            context: "M_hat (empty cluster or collinear covariates)".into(),
        });
    }
    let m_inv = m_hat
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular { condition, context: "M_hat is not positive definite".into() })?;
    let omega_hat = build_omega(data, params, gamma)?;
    let mut v_hat = &m_inv * &omega_hat * &m_inv;
    v_hat = (&v_hat + v_hat.transpose()) * 0.5;
    let nt = (data.n() * data.t()) as f64;
    if options.dof_correction {
        let dof = nt - params.len() as f64;
        if dof <= 0.0 {
            return Err(Error::Config("degrees-of-freedom correction needs NT > d_theta".into()));
        }
        v_hat *= nt / dof;
    }
    let se: Vec<f64> = (0..params.len()).map(|j| (v_hat[(j, j)].max(0.0) / nt).sqrt()).collect();
    let est = params.as_vec();
    let ci_lower = est.iter().zip(&se).map(|(b, s)| b - z * s).collect();
    let ci_upper = est.iter().zip(&se).map(|(b, s)| b + z * s).collect();
    Ok(InferenceResult {
        estimate: params.clone(),
        m_hat,
        omega_hat,
        v_hat,
        se,
        ci_lower,
        ci_upper,
        level: options.level,
    })
}

/// Fraction of true coefficients inside their intervals. `truth` must be
/// aligned to the estimate's labels.
pub fn coverage_indicator(inference: &InferenceResult, truth: &ParamSet) -> Result<f64> {
    let hits = coverage_hits(inference, truth)?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// Coverage restricted to the coefficients of one block.
pub fn block_coverage(inference: &InferenceResult, truth: &ParamSet, block: usize) -> Result<f64> {
    let hits = coverage_hits(inference, truth)?;
    let est = &inference.estimate;
    if block >= est.blocks().num_blocks() {
        return Err(Error::Shape(format!("block {block} out of range")));
    }
    let start = est.coord(block, 0);
    let len = est.blocks().dim(block) * est.clusters().count(block);
    let slice = &hits[start..start + len];
    Ok(slice.iter().filter(|&&h| h).count() as f64 / len as f64)
}

fn coverage_hits(inference: &InferenceResult, truth: &ParamSet) -> Result<Vec<bool>> {
    if truth.len() != inference.se.len()
        || truth.blocks() != inference.estimate.blocks()
        || truth.clusters() != inference.estimate.clusters()
    {
        return Err(Error::Shape("true parameters do not match the inference layout".into()));
    }
    Ok(truth
        .as_vec()
        .iter()
        .zip(inference.ci_lower.iter().zip(&inference.ci_upper))
        .map(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::full_update;
    use crate::testing::{random_instance, TestRng};

    fn naive_m(data: &PanelData, gamma: &Assignment, layout: &ParamSet) -> DMatrix<f64> {
        let dim = layout.len();
        let blocks = layout.blocks();
        let mut m = DMatrix::zeros(dim, dim);
        for l in 0..blocks.num_blocks() {
            for a in 0..layout.clusters().count(l) {
                for s in 0..blocks.num_blocks() {
                    for b in 0..layout.clusters().count(s) {
                        for i in 0..data.n() {
                            if gamma.block_label(i, l) != a || gamma.block_label(i, s) != b {
                                continue;
                            }
                            for t in 0..data.t() {
                                let x = data.covariates(i, t);
                                for (u, j) in blocks.range(l).enumerate() {
                                    for (w, q) in blocks.range(s).enumerate() {
                                        m[(layout.coord(l, a) + u, layout.coord(s, b) + w)] += x[j] * x[q];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        m / (data.n() * data.t()) as f64
    }

    fn naive_omega(data: &PanelData, params: &ParamSet, gamma: &Assignment) -> DMatrix<f64> {
        let dim = params.len();
        let blocks = params.blocks();
        let mut o = DMatrix::zeros(dim, dim);
        let e = residuals(data, params, gamma).unwrap();
        for i in 0..data.n() {
            for t in 0..data.t() {
                for t2 in 0..data.t() {
                    let (x, x2) = (data.covariates(i, t), data.covariates(i, t2));
                    let w = e[i * data.t() + t] * e[i * data.t() + t2];
                    for l in 0..blocks.num_blocks() {
                        for s in 0..blocks.num_blocks() {
                            let r0 = params.coord(l, gamma.block_label(i, l));
                            let c0 = params.coord(s, gamma.block_label(i, s));
                            for (u, j) in blocks.range(l).enumerate() {
                                for (v, q) in blocks.range(s).enumerate() {
                                    o[(r0 + u, c0 + v)] += w * x[j] * x2[q];
                                }
                            }
                        }
                    }
                }
            }
        }
        o / (data.n() * data.t()) as f64
    }

    #[test]
    fn pooled_gram_for_single_cluster() {
        let mut rng = TestRng::new(40);
        let inst = random_instance(&mut rng, 6, 4, &[3], &[1], 1.0);
        let m = build_m(&inst.data, &inst.gamma, inst.params.blocks(), inst.params.clusters()).unwrap();
        let mut pooled = DMatrix::zeros(3, 3);
        for i in 0..6 {
            for t in 0..4 {
                let x = DVector::from_row_slice(inst.data.covariates(i, t));
                pooled += &x * x.transpose();
            }
        }
        assert!((m - pooled / 24.0).amax() < 1e-12);
    }

    #[test]
    fn m_and_omega_match_naive_loops() {
        let mut rng = TestRng::new(41);
        for _ in 0..10 {
            let inst = random_instance(&mut rng, 7, 5, &[2, 1], &[2, 3], 1.0);
            let m = build_m(&inst.data, &inst.gamma, inst.params.blocks(), inst.params.clusters()).unwrap();
            let naive = naive_m(&inst.data, &inst.gamma, &inst.params);
            assert!((&m - &naive).amax() < 1e-12);
            assert!((&m - m.transpose()).amax() < 1e-12);

            let omega = build_omega(&inst.data, &inst.params, &inst.gamma).unwrap();
            let naive = naive_omega(&inst.data, &inst.params, &inst.gamma);
            assert!((&omega - &naive).amax() < 1e-12 * (1.0 + naive.amax()));
            assert!((&omega - omega.transpose()).amax() < 1e-10);
            let min_eig = omega.clone().symmetric_eigen().eigenvalues.min();
            assert!(min_eig >= -1e-8 * omega.trace());
        }
    }

    #[test]
    fn diagonal_blocks_are_within_cluster_grams() {
        let mut rng = TestRng::new(42);
        let inst = random_instance(&mut rng, 10, 3, &[1, 2], &[2, 2], 1.0);
        let m = build_m(&inst.data, &inst.gamma, inst.params.blocks(), inst.params.clusters()).unwrap();
        let l = 1;
        for a in 0..2 {
            let mut g = DMatrix::zeros(2, 2);
            for i in (0..10).filter(|&i| inst.gamma.block_label(i, l) == a) {
                for t in 0..3 {
                    let x = DVector::from_row_slice(&inst.data.covariates(i, t)[1..3]);
                    g += &x * x.transpose();
                }
            }
            let c = inst.params.coord(l, a);
            assert!((m.view((c, c), (2, 2)) - g / 30.0).amax() < 1e-12);
        }
    }

    #[test]
    fn oracle_equals_full_update_and_noiseless_truth() {
        let mut rng = TestRng::new(43);
        for noise in [0.0, 1.0] {
            let inst = random_instance(&mut rng, 40, 6, &[2, 2], &[2, 3], noise);
            let oracle = oracle_estimate(&inst.data, &inst.gamma, inst.params.blocks(), inst.params.clusters()).unwrap();
            let full = full_update(&inst.data, &inst.gamma, &inst.params).unwrap();
            assert!(oracle.params.distance(&full.params).unwrap() < 1e-10);
            if noise == 0.0 {
                assert!(oracle.params.distance(&inst.params).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_residuals_give_zero_omega_and_se() {
        let mut rng = TestRng::new(44);
        let inst = random_instance(&mut rng, 30, 6, &[1, 1], &[2, 2], 0.0);
        let inf = hac_covariance(&inst.data, &inst.params, &inst.gamma, 0.95).unwrap();
        assert!(inf.omega_hat.amax() < 1e-20);
        assert!(inf.se.iter().all(|&s| s < 1e-10));
    }

    #[test]
    fn coverage_extremes() {
        let mut rng = TestRng::new(45);
        let inst = random_instance(&mut rng, 40, 5, &[1, 1], &[2, 2], 1.0);
        let mut inf = hac_covariance(&inst.data, &inst.params, &inst.gamma, 0.95).unwrap();
        let mut shifted = inst.params.clone();
        for v in shifted.as_mut_vec() {
            *v += 0.5;
        }
        inf.ci_lower = vec![-1e300; inf.se.len()];
        inf.ci_upper = vec![1e300; inf.se.len()];
        assert_eq!(coverage_indicator(&inf, &shifted).unwrap(), 1.0);
        inf.ci_lower = inf.estimate.as_vec().to_vec();
        inf.ci_upper = inf.estimate.as_vec().to_vec();
        assert_eq!(coverage_indicator(&inf, &shifted).unwrap(), 0.0);
    }

    #[test]
    fn empty_cluster_is_singular() {
        let mut rng = TestRng::new(46);
        let inst = random_instance(&mut rng, 10, 4, &[1], &[3], 1.0);
        let gamma = Assignment::new(vec![vec![0]; 10], inst.params.clusters()).unwrap();
        let err = hac_covariance(&inst.data, &inst.params, &gamma, 0.95).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn interval_width_matches_normal_quantile() {
        let mut rng = TestRng::new(47);
        let inst = random_instance(&mut rng, 30, 5, &[2], &[2], 1.0);
        let inf = hac_covariance(&inst.data, &inst.params, &inst.gamma, 0.95).unwrap();
        for j in 0..inf.se.len() {
            let half = (inf.ci_upper[j] - inf.ci_lower[j]) / 2.0;
            assert!((half - 1.959963984540054 * inf.se[j]).abs() < 1e-12);
            let nt = 150.0;
            assert!((inf.se[j] - (inf.v_hat[(j, j)] / nt).sqrt()).abs() < 1e-15);
        }
        assert!(hac_covariance(&inst.data, &inst.params, &inst.gamma, 1.0).is_err());
    }

    #[test]
    fn dof_correction_inflates_variance() {
        let mut rng = TestRng::new(48);
        let inst = random_instance(&mut rng, 20, 5, &[2], &[2], 1.0);
        let plain = hac_covariance(&inst.data, &inst.params, &inst.gamma, 0.9).unwrap();
        let opts = InferenceOptions { level: 0.9, dof_correction: true };
        let corr = hac_covariance_with(&inst.data, &inst.params, &inst.gamma, &opts).unwrap();
        let ratio = corr.v_hat[(0, 0)] / plain.v_hat[(0, 0)];
        assert!((ratio - 100.0 / 96.0).abs() < 1e-12);
    }
}
