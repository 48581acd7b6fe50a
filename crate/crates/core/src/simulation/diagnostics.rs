use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::DgpSpec;
use crate::error::{Error, Result};
use crate::estimator::{align_labels, run_starts, LloydConfig, StartOutcome};
use crate::rng::{child_seed, domain};

/// Relative error below which a path counts as converged (0.1%).
pub const THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub s_max: usize,
    pub reps: usize,
    /// `r_q[s - 1]` is the mean relative risk gap after `s` starts.
    pub r_q: Vec<f64>,
    pub r_theta: Vec<f64>,
    /// Smallest number of starts with `r < THRESHOLD`.
    pub s_q: usize,
    pub s_theta: usize,
}

/// Per-path relative errors of the best-so-far solution against the best of
/// all `S` starts. Parameters are compared after matching labels to the
/// final solution.
pub fn relative_error_paths(outcomes: &[StartOutcome]) -> Result<(Vec<f64>, Vec<f64>)> {
    if outcomes.is_empty() {
        return Err(Error::Config("no starts to summarise".into()));
    }
    let mut best = Vec::with_capacity(outcomes.len());
    let mut current = 0;
    for (j, o) in outcomes.iter().enumerate() {
        if o.risk < outcomes[current].risk {
            current = j;
        }
        best.push(current);
    }
    let last = &outcomes[*best.last().unwrap()];
    let q_final = last.risk;
    let theta_norm = last.params.norm();
    let mut r_q = Vec::with_capacity(best.len());
    let mut r_theta = Vec::with_capacity(best.len());
    for &j in &best {
        let o = &outcomes[j];
        r_q.push(if q_final > 0.0 { (o.risk - q_final) / q_final } else { 0.0 });
        let aligned = align_labels(&o.params, &last.params)?;
        let gap = aligned.params.distance(&last.params)?;
        r_theta.push(if theta_norm > 0.0 { gap / theta_norm } else { 0.0 });
    }
    Ok((r_q, r_theta))
}

pub fn first_below(path: &[f64], threshold: f64) -> usize {
    path.iter().position(|&r| r < threshold).map_or(path.len(), |j| j + 1)
}

pub fn convergence_diagnostics(dgp: &DgpSpec, s_max: usize, reps: usize, config: &LloydConfig, seed: u64) -> Result<ConvergenceReport> {
    if s_max == 0 || reps == 0 {
        return Err(Error::Config("S_max and the number of paths must be positive".into()));
    }
    let paths: Vec<(Vec<f64>, Vec<f64>)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let rep_seed = child_seed(seed, domain::REPLICATION, r as u64);
            let generated = dgp.with_seed(child_seed(rep_seed, domain::DATA, 0)).generate()?;
            let cfg = LloydConfig { n_starts: s_max, ..config.with_seed(child_seed(rep_seed, domain::FIT, 0)) };
            let outcomes = run_starts(&generated.data, dgp.blocks(), dgp.clusters(), &cfg)?;
            relative_error_paths(&outcomes)
        })
        .collect::<Result<_>>()?;
    let mean = |path: Vec<&Vec<f64>>| -> Vec<f64> {
        (0..s_max).map(|s| path.iter().map(|p| p[s]).sum::<f64>() / reps as f64).collect()
    };
    let r_q = mean(paths.iter().map(|p| &p.0).collect());
    let r_theta = mean(paths.iter().map(|p| &p.1).collect());
    Ok(ConvergenceReport {
        s_max,
        reps,
        s_q: first_below(&r_q, THRESHOLD),
        s_theta: first_below(&r_theta, THRESHOLD),
        r_q,
        r_theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::designs::design_clusters;
    use crate::simulation::dgp::ErrorKind;

    #[test]
    fn paths_are_monotone_and_end_at_zero() {
        let mut dgp = design_clusters(3, 3, ErrorKind::Ar1).unwrap();
        dgp.n = 40;
        let report = convergence_diagnostics(&dgp, 12, 3, &LloydConfig::default(), 9).unwrap();
        assert_eq!(*report.r_q.last().unwrap(), 0.0);
        assert_eq!(*report.r_theta.last().unwrap(), 0.0);
        for w in report.r_q.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(report.s_q >= 1 && report.s_q <= 12);
    }

    #[test]
    fn first_below_counts_starts() {
        assert_eq!(first_below(&[0.5, 0.01, 0.0], 1e-3), 3);
        assert_eq!(first_below(&[0.0, 0.0], 1e-3), 1);
    }
}
