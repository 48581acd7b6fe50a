//! Cp model selection over the grid of cluster-count vectors `k <= k_max`.
//!
//! `Cp(k) = Q(k) + sigma2 * g(T) * sum_l k_l` with `g(T) = log T / T^(1 - eps)`
//! and `sigma2 = Q(k_max)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{lloyd_fit, LloydConfig};
use crate::panel::{BlockSpec, ClusterConfig, PanelData};
use crate::rng::{self, child_seed, domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionOptions {
    /// Exponent slack in `log T / T^(1 - eps)`; 0 gives `log T / T`.
    pub epsilon: f64,
    /// Largest grid that will be fitted.
    pub grid_cap: usize,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self { epsilon: 0.0, grid_cap: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpRow {
    pub k: Vec<usize>,
    pub risk: f64,
    pub penalty: f64,
    pub cp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub k_hat: Vec<usize>,
    pub sigma2_hat: f64,
    /// Penalty per unit of `sum_l k_l`, i.e. `sigma2 * g(T)`.
    pub penalty_weight: f64,
    pub penalty_fn: String,
    pub table: Vec<CpRow>,
}

impl SelectionResult {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let b = self.k_hat.len();
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=b).map(|l| format!("k{l}")).collect();
        header.extend(["risk", "penalty", "cp", "selected"].map(String::from));
        w.write_record(&header)?;
        for row in &self.table {
            let mut rec: Vec<String> = row.k.iter().map(|k| k.to_string()).collect();
            rec.push(row.risk.to_string());
            rec.push(row.penalty.to_string());
            rec.push(row.cp.to_string());
            rec.push(u8::from(row.k == self.k_hat).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `log T / T^(1 - eps)`.
pub fn penalty_rate(t: usize, epsilon: f64) -> f64 {
    let t = t as f64;
    t.ln() / t.powf(1.0 - epsilon)
}

/// All `k` with `1 <= k_l <= k_max_l`, last block varying fastest.
pub fn cluster_grid(k_max: &[usize]) -> Vec<Vec<usize>> {
    let mut grid = vec![Vec::new()];
    for &kl in k_max {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                (1..=kl).map(move |k| {
                    let mut v = prefix.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    grid
}

/// Mean absolute deviation `|k_hat - k_true|_1 / B`.
pub fn model_loss(k_hat: &[usize], k_true: &[usize]) -> Result<f64> {
    if k_hat.len() != k_true.len() || k_hat.is_empty() {
        return Err(Error::Shape(format!(
            "cluster-count vectors of lengths {} and {}",
            k_hat.len(),
            k_true.len()
        )));
    }
    let total: usize = k_hat.iter().zip(k_true).map(|(a, b)| a.abs_diff(*b)).sum();
    Ok(total as f64 / k_hat.len() as f64)
}

/// Selects from a fixed risk table. Exact ties in `Cp` are broken uniformly
/// at random by `seed`.
pub fn select_from_risks(grid: &[Vec<usize>], risks: &[f64], penalty_weight: f64, seed: u64) -> Result<(Vec<usize>, Vec<CpRow>)> {
    if grid.len() != risks.len() || grid.is_empty() {
        return Err(Error::Shape("risk table and grid differ in length".into()));
    }
    let table: Vec<CpRow> = grid
        .iter()
        .zip(risks)
        .map(|(k, &risk)| {
            let penalty = penalty_weight * k.iter().sum::<usize>() as f64;
            CpRow { k: k.clone(), risk, penalty, cp: risk + penalty }
        })
        .collect();
    let best = table.iter().map(|r| r.cp).fold(f64::INFINITY, f64::min);
    let tied: Vec<usize> = (0..table.len()).filter(|&j| table[j].cp == best).collect();
    if tied.is_empty() {
        return Err(Error::Config("no finite Cp value in the grid".into()));
    }
    let pick = if tied.len() == 1 {
        tied[0]
    } else {
        let mut r = rng::stream(child_seed(seed, domain::TIE_BREAK, 0), 0);
        tied[r.random_range(0..tied.len())]
    };
    Ok((table[pick].k.clone(), table))
}

pub fn cp_select(data: &PanelData, blocks: &BlockSpec, k_max: &[usize], config: &LloydConfig) -> Result<SelectionResult> {
    cp_select_with(data, blocks, k_max, config, &SelectionOptions::default())
}

pub fn cp_select_with(
    data: &PanelData,
    blocks: &BlockSpec,
    k_max: &[usize],
    config: &LloydConfig,
    options: &SelectionOptions,
) -> Result<SelectionResult> {
    config.validate()?;
    blocks.check_panel(data)?;
    let k_max_cfg = ClusterConfig::new(k_max.to_vec())?;
    k_max_cfg.check_blocks(blocks)?;
    if !(options.epsilon >= 0.0 && options.epsilon < 1.0) {
        return Err(Error::Config(format!("epsilon must lie in [0, 1), got {}", options.epsilon)));
    }
    let size = k_max.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k)).unwrap_or(usize::MAX);
    if size > options.grid_cap {
        return Err(Error::GridCap { size, cap: options.grid_cap });
    }
    let grid = cluster_grid(k_max);
    let risks: Vec<f64> = grid
        .par_iter()
        .enumerate()
        .map(|(j, k)| {
            let cfg = config.with_seed(child_seed(config.seed, domain::GRID, j as u64));
            lloyd_fit(data, blocks, &ClusterConfig::new(k.clone())?, &cfg).map(|fit| fit.risk)
        })
        .collect::<Result<_>>()?;
    let sigma2_hat = *risks.last().expect("nonempty grid");
    let penalty_weight = sigma2_hat * penalty_rate(data.t(), options.epsilon);
    let (k_hat, table) = select_from_risks(&grid, &risks, penalty_weight, config.seed)?;
    Ok(SelectionResult {
        k_hat,
        sigma2_hat,
        penalty_weight,
        penalty_fn: format!("sigma2_hat * ln(T) / T^(1 - {}) * sum(k)", options.epsilon),
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_row_major() {
        assert_eq!(cluster_grid(&[2, 3]), vec![
            vec![1, 1],
            vec![1, 2],
            vec![1, 3],
            vec![2, 1],
            vec![2, 2],
            vec![2, 3]
        ]);
        assert_eq!(cluster_grid(&[1, 1, 1]), vec![vec![1, 1, 1]]);
    }

    #[test]
    fn model_loss_arithmetic() {
        assert_eq!(model_loss(&[2, 3], &[2, 3]).unwrap(), 0.0);
        assert_eq!(model_loss(&[3, 3], &[4, 4]).unwrap(), 1.0);
        assert_eq!(model_loss(&[3, 4], &[2, 3]).unwrap(), 1.0);
        assert!(model_loss(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn ties_are_broken_reproducibly() {
        let grid = cluster_grid(&[2, 2]);
        let risks = [1.0, 0.5, 0.5, 0.0];
        // penalty 0.5 per cluster: Cp = 2.0, 2.0, 2.0, 2.0
        let picks: Vec<Vec<usize>> = (0..40).map(|s| select_from_risks(&grid, &risks, 0.5, s).unwrap().0).collect();
        for s in 0..40 {
            assert_eq!(picks[s as usize], select_from_risks(&grid, &risks, 0.5, s).unwrap().0);
        }
        let distinct: std::collections::BTreeSet<_> = picks.into_iter().collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn cp_rows_decompose() {
        let grid = cluster_grid(&[3, 2]);
        let risks: Vec<f64> = (0..grid.len()).map(|j| 1.0 / (1.0 + j as f64)).collect();
        let (_, table) = select_from_risks(&grid, &risks, 0.07, 1).unwrap();
        for row in &table {
            assert_eq!(row.cp, row.risk + row.penalty);
            assert_eq!(row.penalty, 0.07 * row.k.iter().sum::<usize>() as f64);
        }
    }

    #[test]
    fn penalty_rate_matches_formula() {
        assert!((penalty_rate(10, 0.0) - 10f64.ln() / 10.0).abs() < 1e-15);
        assert!((penalty_rate(10, 0.5) - 10f64.ln() / 10f64.sqrt()).abs() < 1e-15);
        assert_eq!(penalty_rate(1, 0.0), 0.0);
    }
}
