//! Unit fixed effects via the within transformation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{lloyd_fit, FitResult, LloydConfig};
use crate::panel::{BlockSpec, ClusterConfig, PanelData};

/// Within-unit variance below which a column counts as constant.
pub const CONSTANT_COLUMN_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DemeanedPanel {
    pub data: PanelData,
    /// `y_bar_i`, length N.
    pub y_mean: Vec<f64>,
    /// `x_bar_i`, N x p row-major.
    pub x_mean: Vec<f64>,
}

impl DemeanedPanel {
    pub fn unit_x_mean(&self, i: usize) -> &[f64] {
        let p = self.data.p();
        &self.x_mean[i * p..(i + 1) * p]
    }
}

/// Subtracts per-unit time means from `y` and every covariate.
pub fn demean(data: &PanelData) -> Result<DemeanedPanel> {
    let (n, t, p) = (data.n(), data.t(), data.p());
    if t < 2 {
        return Err(Error::FixedEffects("demeaning needs T >= 2".into()));
    }
    let tf = t as f64;
    let mut y = data.y().to_vec();
    let mut x = data.x().to_vec();
    let mut y_mean = vec![0.0; n];
    let mut x_mean = vec![0.0; n * p];
    for i in 0..n {
        let ys = &mut y[i * t..(i + 1) * t];
        let my = ys.iter().sum::<f64>() / tf;
        ys.iter_mut().for_each(|v| *v -= my);
        y_mean[i] = my;

        let xs = &mut x[i * t * p..(i + 1) * t * p];
        let mx = &mut x_mean[i * p..(i + 1) * p];
        for row in xs.chunks(p) {
            for (m, v) in mx.iter_mut().zip(row) {
                *m += v;
            }
        }
        mx.iter_mut().for_each(|m| *m /= tf);
        for row in xs.chunks_mut(p) {
            for (v, m) in row.iter_mut().zip(mx.iter()) {
                *v -= m;
            }
        }
    }
    Ok(DemeanedPanel { data: PanelData::new(n, t, p, y, x)?, y_mean, x_mean })
}

/// 0-based indices of covariates whose within-unit variance is below
/// [`CONSTANT_COLUMN_TOL`] for every unit.
pub fn constant_columns(data: &PanelData) -> Vec<usize> {
    let (n, t, p) = (data.n(), data.t(), data.p());
    (0..p)
        .filter(|&j| {
            (0..n).all(|i| {
                let mean = (0..t).map(|s| data.covariates(i, s)[j]).sum::<f64>() / t as f64;
                let var = (0..t).map(|s| (data.covariates(i, s)[j] - mean).powi(2)).sum::<f64>() / t as f64;
                var < CONSTANT_COLUMN_TOL
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeFitResult {
    #[serde(flatten)]
    pub fit: FitResult,
    /// `a_i = y_bar_i - x_bar_i' theta(c_i)`.
    pub fixed_effects: Vec<f64>,
}

/// Lloyd fit on the demeaned panel followed by recovery of the unit effects.
pub fn fe_fit(data: &PanelData, blocks: &BlockSpec, clusters: &ClusterConfig, config: &LloydConfig) -> Result<FeFitResult> {
    Ok(fe_fit_demeaned(data, blocks, clusters, config)?.0)
}

/// As [`fe_fit`], also returning the demeaned panel used for inference.
pub fn fe_fit_demeaned(
    data: &PanelData,
    blocks: &BlockSpec,
    clusters: &ClusterConfig,
    config: &LloydConfig,
) -> Result<(FeFitResult, DemeanedPanel)> {
    blocks.check_panel(data)?;
    let demeaned = demean(data)?;
    if let Some(&j) = constant_columns(data).first() {
        return Err(Error::FixedEffects(format!(
            "covariate x{} is constant within every unit and is absorbed by the fixed effects",
            j + 1
        )));
    }
    let fit = lloyd_fit(&demeaned.data, blocks, clusters, config)?;
    let fixed_effects = (0..data.n())
        .map(|i| {
            let coef = fit.params.composite(fit.gamma.label(i))?;
            let xb: f64 = demeaned.unit_x_mean(i).iter().zip(&coef).map(|(x, b)| x * b).sum();
            Ok(demeaned.y_mean[i] - xb)
        })
        .collect::<Result<_>>()?;
    Ok((FeFitResult { fit, fixed_effects }, demeaned))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{random_instance, TestRng};

    #[test]
    fn constant_series_demeans_to_zero() {
        let data = PanelData::new(2, 3, 1, vec![3.0; 6], vec![1.0, 2.0, 4.0, 0.0, 1.0, 5.0]).unwrap();
        let d = demean(&data).unwrap();
        assert!(d.data.y().iter().all(|&v| v == 0.0));
        assert_eq!(d.y_mean, vec![3.0, 3.0]);
        assert!((d.x_mean[0] - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn demean_is_idempotent_with_zero_means() {
        let mut rng = TestRng::new(60);
        let inst = random_instance(&mut rng, 8, 5, &[2, 1], &[2, 2], 1.0);
        let once = demean(&inst.data).unwrap();
        let twice = demean(&once.data).unwrap();
        for (a, b) in once.data.y().iter().zip(twice.data.y()) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in once.data.x().iter().zip(twice.data.x()) {
            assert!((a - b).abs() < 1e-14);
        }
        for i in 0..8 {
            assert!(once.data.unit_response(i).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn single_period_is_rejected() {
        let data = PanelData::new(2, 1, 1, vec![1.0, 2.0], vec![1.0, 2.0]).unwrap();
        assert!(matches!(demean(&data), Err(Error::FixedEffects(_))));
    }

    #[test]
    fn constant_column_is_named() {
        let mut rng = TestRng::new(61);
        let inst = random_instance(&mut rng, 5, 4, &[2], &[1], 1.0);
        let mut x = inst.data.x().to_vec();
        for i in 0..5 {
            for s in 0..4 {
                x[(i * 4 + s) * 2 + 1] = i as f64;
            }
        }
        let data = PanelData::new(5, 4, 2, inst.data.y().to_vec(), x).unwrap();
        assert_eq!(constant_columns(&data), vec![1]);
        let blocks = BlockSpec::new(vec![2]).unwrap();
        let clusters = ClusterConfig::new(vec![1]).unwrap();
        let err = fe_fit(&data, &blocks, &clusters, &LloydConfig { n_starts: 2, ..Default::default() }).unwrap_err();
        assert!(err.to_string().contains("x2"));
    }
}
