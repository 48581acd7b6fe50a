//! Parameter updates given a fixed assignment.
//!
//! The full update solves the stacked normal equations `M vec(theta) = v`
//! jointly over all occupied `(block, cluster)` coordinates, where
//! `M_{la,sb} = sum_{i,t} 1(c_il = a) 1(c_is = b) x_itl x_its'` and
//! `v_la = sum_{i,t} 1(c_il = a) x_itl y_it`. The partial update performs one
//! block-coordinate sweep, regressing the partial residual of each block on
//! that block's covariates cluster by cluster.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::least_norm_solve;
use crate::moments::UnitMoments;
use crate::panel::{Assignment, PanelData, ParamSet};

#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub params: ParamSet,
    /// A least-norm fallback was needed for some system.
    pub rank_deficient: bool,
}

/// Unnormalised stacked normal equations `(M, v)` in `vec(theta)` order.
pub fn normal_equations(data: &PanelData, gamma: &Assignment, layout: &ParamSet) -> Result<(DMatrix<f64>, DVector<f64>)> {
    layout.check_compatible(data)?;
    gamma.check(data.n(), layout.clusters())?;
    Ok(normal_equations_moments(&UnitMoments::new(data), gamma, layout))
}

pub(crate) fn normal_equations_moments(
    moments: &UnitMoments,
    gamma: &Assignment,
    layout: &ParamSet,
) -> (DMatrix<f64>, DVector<f64>) {
    let dim = layout.len();
    let p = moments.p();
    let blocks = layout.blocks();
    let b = blocks.num_blocks();
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    let mut v = DVector::<f64>::zeros(dim);
    for i in 0..moments.n() {
        let label = gamma.label(i);
        let g = moments.gram(i);
        let xy = moments.xy(i);
        for l in 0..b {
            let rl = blocks.range(l);
            let row0 = layout.coord(l, label[l]);
            for (u, j) in rl.clone().enumerate() {
                v[row0 + u] += xy[j];
            }
            for s in 0..b {
                let rs = blocks.range(s);
                let col0 = layout.coord(s, label[s]);
                for (u, j) in rl.clone().enumerate() {
                    for (w, q) in rs.clone().enumerate() {
                        m[(row0 + u, col0 + w)] += g[j * p + q];
                    }
                }
            }
        }
    }
    (m, v)
}

/// Joint least-squares update over all blocks. Unoccupied clusters keep
/// their column from `previous`.
pub fn full_update(data: &PanelData, gamma: &Assignment, previous: &ParamSet) -> Result<UpdateOutcome> {
    previous.check_compatible(data)?;
    gamma.check(data.n(), previous.clusters())?;
    Ok(full_update_moments(&UnitMoments::new(data), gamma, previous))
}

pub(crate) fn full_update_moments(moments: &UnitMoments, gamma: &Assignment, previous: &ParamSet) -> UpdateOutcome {
    let (m, v) = normal_equations_moments(moments, gamma, previous);
    let occupied = occupied_coordinates(gamma, previous);
    let r = occupied.len();
    let mut params = previous.clone();
    if r == 0 {
        return UpdateOutcome { params, rank_deficient: false };
    }
    let reduced = DMatrix::from_fn(r, r, |a, b| m[(occupied[a], occupied[b])]);
    let rhs = DVector::from_fn(r, |a, _| v[occupied[a]]);
    let sol = least_norm_solve(reduced, &rhs);
    let values = params.as_mut_vec();
    for (k, &idx) in occupied.iter().enumerate() {
        values[idx] = sol.x[k];
    }
    UpdateOutcome { params, rank_deficient: sol.rank_deficient }
}

fn occupied_coordinates(gamma: &Assignment, layout: &ParamSet) -> Vec<usize> {
    let mut out = Vec::with_capacity(layout.len());
    for l in 0..layout.blocks().num_blocks() {
        let occupancy = gamma.occupancy(l, layout.clusters().count(l));
        for (a, &count) in occupancy.iter().enumerate() {
            if count > 0 {
                let start = layout.coord(l, a);
                out.extend(start..start + layout.blocks().dim(l));
            }
        }
    }
    out
}

/// One block-coordinate sweep `l = 1..B`, each block using the blocks
/// already updated earlier in the sweep.
pub fn partial_update(data: &PanelData, gamma: &Assignment, previous: &ParamSet) -> Result<UpdateOutcome> {
    previous.check_compatible(data)?;
    gamma.check(data.n(), previous.clusters())?;
    Ok(partial_update_moments(&UnitMoments::new(data), gamma, previous))
}

pub(crate) fn partial_update_moments(moments: &UnitMoments, gamma: &Assignment, previous: &ParamSet) -> UpdateOutcome {
    let p = moments.p();
    let blocks = previous.blocks().clone();
    let b = blocks.num_blocks();
    let mut params = previous.clone();
    let mut rank_deficient = false;

    for l in 0..b {
        let d = blocks.dim(l);
        let k = previous.clusters().count(l);
        let rl = blocks.range(l);
        let mut grams = vec![0.0; k * d * d];
        let mut rhs = vec![0.0; k * d];
        let mut occupied = vec![false; k];
        for i in 0..moments.n() {
            let label = gamma.label(i);
            let a = label[l];
            occupied[a] = true;
            let g = moments.gram(i);
            let xy = moments.xy(i);
            let ga = &mut grams[a * d * d..(a + 1) * d * d];
            let ra = &mut rhs[a * d..(a + 1) * d];
            for (u, j) in rl.clone().enumerate() {
                let row = &g[j * p..(j + 1) * p];
                for (w, q) in rl.clone().enumerate() {
                    ga[u * d + w] += row[q];
                }
                // partial residual: xy_l - sum_{s != l} G_ls theta_s(c_is)
                let mut acc = xy[j];
                for s in (0..b).filter(|&s| s != l) {
                    let theta = params.column(s, label[s]);
                    let rs = blocks.range(s);
                    acc -= row[rs].iter().zip(theta).map(|(x, y)| x * y).sum::<f64>();
                }
                ra[u] += acc;
            }
        }
        for a in (0..k).filter(|&a| occupied[a]) {
            let gram = DMatrix::from_row_slice(d, d, &grams[a * d * d..(a + 1) * d * d]);
            let r = DVector::from_row_slice(&rhs[a * d..(a + 1) * d]);
            let sol = least_norm_solve(gram, &r);
            rank_deficient |= sol.rank_deficient;
            params.column_mut(l, a).copy_from_slice(sol.x.as_slice());
        }
    }
    UpdateOutcome { params, rank_deficient }
}
