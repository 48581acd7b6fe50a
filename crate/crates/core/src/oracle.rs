//! Exhaustive minimisation over all assignments. Only usable for tiny
//! instances; serves as ground truth for the heuristic.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::full_update_moments;
use crate::moments::UnitMoments;
use crate::panel::{sample_risk_unchecked, Assignment, BlockSpec, ClusterConfig, PanelData, ParamSet};

pub const DEFAULT_CAP: u128 = 2_000_000;

/// Two assignments whose risks differ by at most this are both minimisers.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub global_risk: f64,
    /// Every minimising assignment, in enumeration order.
    pub minimizers: Vec<Assignment>,
    /// Least-squares parameters of the first minimiser.
    pub params: ParamSet,
    pub enumeration_count: u128,
}

/// Assignment number `index` in row-major order over units (unit 0 most
/// significant), each unit's label in row-major order over blocks.
fn decode(mut index: u64, n: usize, clusters: &ClusterConfig) -> Assignment {
    let size = clusters.label_space_size() as u64;
    let b = clusters.num_blocks();
    let mut labels = vec![0; n * b];
    for i in (0..n).rev() {
        let label = clusters.label_at((index % size) as usize);
        labels[i * b..(i + 1) * b].copy_from_slice(&label);
        index /= size;
    }
    Assignment::from_flat(b, labels)
}

pub fn exhaustive_fit(data: &PanelData, blocks: &BlockSpec, clusters: &ClusterConfig, cap: u128) -> Result<OracleResult> {
    blocks.check_panel(data)?;
    clusters.check_blocks(blocks)?;
    let size = clusters.label_space_size() as u128;
    let required = (0..data.n()).try_fold(1u128, |acc, _| acc.checked_mul(size)).unwrap_or(u128::MAX);
    if required > cap {
        return Err(Error::EnumerationCap { required, cap });
    }
    let count = required as u64;
    let moments = UnitMoments::new(data);
    let zeros = ParamSet::zeros(blocks, clusters)?;
    let risks: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|idx| {
            let gamma = decode(idx, data.n(), clusters);
            let fit = full_update_moments(&moments, &gamma, &zeros);
            sample_risk_unchecked(data, &fit.params, &gamma)
        })
        .collect();
    let global_risk = risks.iter().copied().fold(f64::INFINITY, f64::min);
    let minimizers: Vec<Assignment> = risks
        .iter()
        .enumerate()
        .filter(|(_, &r)| r - global_risk <= TIE_TOL)
        .map(|(idx, _)| decode(idx as u64, data.n(), clusters))
        .collect();
    let params = full_update_moments(&moments, &minimizers[0], &zeros).params;
    Ok(OracleResult { global_risk, minimizers, params, enumeration_count: required })
}
