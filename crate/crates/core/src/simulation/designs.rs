//! The Monte Carlo designs. Each returns the data-generating process plus
//! the models fitted to it in every replication.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dgp::{DgpSpec, ErrorKind};
use crate::error::{Error, Result};
use crate::panel::{BlockSpec, ClusterConfig, ParamSet};

pub const DEFAULT_N: usize = 150;
pub const DEFAULT_T: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignName {
    Separation,
    SampleSize,
    Clusters,
    Misspec,
    Imbalance,
    Dimension,
    ModelSelect,
    Convergence,
}

impl DesignName {
    pub const ALL: [DesignName; 8] = [
        DesignName::Separation,
        DesignName::SampleSize,
        DesignName::Clusters,
        DesignName::Misspec,
        DesignName::Imbalance,
        DesignName::Dimension,
        DesignName::ModelSelect,
        DesignName::Convergence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DesignName::Separation => "separation",
            DesignName::SampleSize => "sample-size",
            DesignName::Clusters => "clusters",
            DesignName::Misspec => "misspec",
            DesignName::Imbalance => "imbalance",
            DesignName::Dimension => "dimension",
            DesignName::ModelSelect => "model-select",
            DesignName::Convergence => "convergence",
        }
    }
}

impl fmt::Display for DesignName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DesignName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|d| d.as_str()).collect();
            Error::Config(format!("unknown design '{s}'; valid designs: {}", names.join(", ")))
        })
    }
}

/// A model fitted in every replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPlan {
    pub label: String,
    pub blocks: BlockSpec,
    pub clusters: ClusterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub dgp: DgpSpec,
    pub fits: Vec<FitPlan>,
}

impl Scenario {
    /// The well-specified fit only.
    pub fn well_specified(dgp: DgpSpec) -> Self {
        let plan = FitPlan {
            label: "fit".into(),
            blocks: dgp.blocks().clone(),
            clusters: dgp.clusters().clone(),
        };
        Self { dgp, fits: vec![plan] }
    }
}

/// Two blocks of two covariates; the two clusters in each block rotate
/// towards each other as `alpha` shrinks.
pub fn separation_params(alpha: f64) -> Result<ParamSet> {
    if !(alpha > 0.0 && alpha <= PI / 2.0 + 1e-12) {
        return Err(Error::Config(format!("alpha must lie in (0, pi/2], got {alpha}")));
    }
    let (s, c) = alpha.sin_cos();
    ParamSet::from_columns(&[vec![vec![1.0, 0.0], vec![c, s]], vec![vec![0.0, 1.0], vec![-s, c]]])
}

pub fn design_separation(alpha: f64, errors: ErrorKind) -> Result<DgpSpec> {
    Ok(DgpSpec::new(DEFAULT_N, DEFAULT_T, separation_params(alpha)?, errors))
}

pub fn design_sample_size(n: usize, t: usize, errors: ErrorKind) -> Result<DgpSpec> {
    Ok(DgpSpec::new(n, t, separation_params(PI / 2.0)?, errors))
}

/// Cluster `a` (1-based) of each block sits at angle `2 pi a / 5` on the unit circle.
pub fn clusters_params(k1: usize, k2: usize) -> Result<ParamSet> {
    for k in [k1, k2] {
        if !(1..=5).contains(&k) {
            return Err(Error::Config(format!("cluster counts must lie in 1..=5, got ({k1}, {k2})")));
        }
    }
    let block = |k: usize| -> Vec<Vec<f64>> {
        (1..=k)
            .map(|a| {
                let (s, c) = (2.0 * PI * a as f64 / 5.0).sin_cos();
                vec![c, s]
            })
            .collect()
    };
    ParamSet::from_columns(&[block(k1), block(k2)])
}

pub fn design_clusters(k1: usize, k2: usize, errors: ErrorKind) -> Result<DgpSpec> {
    Ok(DgpSpec::new(DEFAULT_N, DEFAULT_T, clusters_params(k1, k2)?, errors))
}

/// Two-block truth scored against both the two-block fit and a single-block
/// fit with `k1 * k2` clusters.
pub fn design_misspec(k1: usize, k2: usize, errors: ErrorKind) -> Result<Scenario> {
    let dgp = design_clusters(k1, k2, errors)?;
    let mut scenario = Scenario::well_specified(dgp);
    scenario.fits[0].label = "B=2".into();
    scenario.fits.push(FitPlan {
        label: "B=1".into(),
        blocks: BlockSpec::single(4)?,
        clusters: ClusterConfig::new(vec![k1 * k2])?,
    });
    Ok(scenario)
}

pub const IMBALANCE_P: usize = 12;
pub const IMBALANCE_LEVEL: f64 = 0.5;

/// `p = 12` split as `(m, 12 - m)`, two clusters per block at `+-0.5` in
/// every coordinate.
pub fn design_imbalance(m: usize, errors: ErrorKind) -> Result<DgpSpec> {
    if !(1..IMBALANCE_P).contains(&m) {
        return Err(Error::Config(format!("small block size must lie in 1..{IMBALANCE_P}, got {m}")));
    }
    let block = |d: usize| vec![vec![IMBALANCE_LEVEL; d], vec![-IMBALANCE_LEVEL; d]];
    let theta = ParamSet::from_columns(&[block(m), block(IMBALANCE_P - m)])?;
    Ok(DgpSpec::new(DEFAULT_N, DEFAULT_T, theta, errors))
}

/// One block per covariate with clusters `+1` and `-1`.
pub fn design_dimension(p: usize, errors: ErrorKind) -> Result<DgpSpec> {
    if p == 0 {
        return Err(Error::Config("dimension must be positive".into()));
    }
    let theta = ParamSet::from_columns(&vec![vec![vec![1.0], vec![-1.0]]; p])?;
    Ok(DgpSpec::new(DEFAULT_N, DEFAULT_T, theta, errors))
}

/// Well-specified fit plus a fit with cluster counts `k_over >= k0`.
pub fn design_overspecified(dgp: DgpSpec, k_over: &[usize]) -> Result<Scenario> {
    let over = ClusterConfig::new(k_over.to_vec())?;
    over.check_blocks(dgp.blocks())?;
    if over.counts().iter().zip(dgp.clusters().counts()).any(|(a, b)| a < b) {
        return Err(Error::Config("over-specified counts must be componentwise >= the truth".into()));
    }
    let mut scenario = Scenario::well_specified(dgp);
    scenario.fits[0].label = "k0".into();
    scenario.fits.push(FitPlan {
        label: format!("k={}", join(over.counts())),
        blocks: scenario.dgp.blocks().clone(),
        clusters: over,
    });
    Ok(scenario)
}

pub(crate) fn join(v: &[usize]) -> String {
    v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
}
