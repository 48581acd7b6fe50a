use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Assignment, ParamSet};

/// Estimated parameters reordered to match a reference model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Alignment {
    /// Column `a` of block `l` estimates reference cluster `a`.
    pub params: ParamSet,
    /// `perms[l][a]` = estimated column matched to reference cluster `a`.
    pub perms: Vec<Vec<usize>>,
    /// Nearest-column matching was not injective in this block and was
    /// resolved greedily.
    pub collisions: Vec<bool>,
}

impl Alignment {
    pub fn any_collision(&self) -> bool {
        self.collisions.iter().any(|&c| c)
    }

    /// Rewrites estimated labels into reference labels.
    pub fn relabel(&self, gamma: &Assignment) -> Result<Assignment> {
        gamma.relabel(&self.inverse_maps())
    }

    /// `maps[l][b]` = reference cluster matched to estimated column `b`.
    pub fn inverse_maps(&self) -> Vec<Vec<usize>> {
        self.perms
            .iter()
            .map(|perm| {
                let mut inv = vec![0; perm.len()];
                for (a, &b) in perm.iter().enumerate() {
                    inv[b] = a;
                }
                inv
            })
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per block, matches each reference cluster `a` to
/// `argmin_b |theta_hat_lb - theta_ref_la|`. When two reference clusters
/// pick the same column the block is flagged and all pairs are instead
/// matched greedily in order of increasing distance.
pub fn align_labels(params_hat: &ParamSet, params_ref: &ParamSet) -> Result<Alignment> {
    if params_hat.blocks() != params_ref.blocks() || params_hat.clusters() != params_ref.clusters() {
        return Err(Error::Shape(
            "alignment requires identical block dimensions and cluster counts".into(),
        ));
    }
    let b = params_hat.blocks().num_blocks();
    let mut perms = Vec::with_capacity(b);
    let mut collisions = Vec::with_capacity(b);
    for l in 0..b {
        let k = params_hat.clusters().count(l);
        let dist: Vec<Vec<f64>> = (0..k)
            .map(|a| (0..k).map(|bb| sq_dist(params_hat.column(l, bb), params_ref.column(l, a))).collect())
            .collect();
        let nearest: Vec<usize> = dist
            .iter()
            .map(|row| super::lloyd::best_index(row.iter().copied()))
            .collect();
        let mut used = vec![false; k];
        let injective = nearest.iter().all(|&bb| !std::mem::replace(&mut used[bb], true));
        if injective {
            perms.push(nearest);
            collisions.push(false);
            continue;
        }
        let mut pairs: Vec<(f64, usize, usize)> = (0..k)
            .flat_map(|a| (0..k).map(move |bb| (a, bb)))
            .map(|(a, bb)| (dist[a][bb], a, bb))
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut perm = vec![usize::MAX; k];
        let mut taken = vec![false; k];
        for (_, a, bb) in pairs {
            if perm[a] == usize::MAX && !taken[bb] {
                perm[a] = bb;
                taken[bb] = true;
            }
        }
        perms.push(perm);
        collisions.push(true);
    }
    let params = params_hat.permute(&perms)?;
    Ok(Alignment { params, perms, collisions })
}

/// Sorts clusters within every block lexicographically by parameter vector
/// and relabels the assignment to match. The sample risk is unchanged.
pub fn canonical_labels(params: &ParamSet, gamma: &Assignment) -> Result<(ParamSet, Assignment)> {
    if gamma.num_blocks() != params.blocks().num_blocks() {
        return Err(Error::Shape("assignment and parameters disagree on block count".into()));
    }
    let perms: Vec<Vec<usize>> = (0..params.blocks().num_blocks())
        .map(|l| {
            let mut order: Vec<usize> = (0..params.clusters().count(l)).collect();
            order.sort_by(|&a, &b| {
                let (ca, cb) = (params.column(l, a), params.column(l, b));
                ca.iter()
                    .zip(cb)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            order
        })
        .collect();
    let sorted = params.permute(&perms)?;
    let alignment = Alignment { params: sorted, perms, collisions: Vec::new() };
    let relabeled = alignment.relabel(gamma)?;
    Ok((alignment.params, relabeled))
}
