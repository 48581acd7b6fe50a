//! Estimation loss measures used throughout the Monte Carlo designs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Assignment, PanelData, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `(1/N) sum_i |theta_hat(c_hat_i) - theta0(c0_i)|^2`
    pub param_mse: f64,
    /// `(1/NT) sum_{i,t} (x_it' theta_hat(c_hat_i) - x_it' theta0(c0_i))^2`
    pub function_mse: f64,
    /// Fraction of units whose full label tuple is wrong.
    pub cluster_loss: f64,
}

/// Parameter and function MSE. The two models may use different blockings
/// (e.g. a single-block fit scored against a two-block truth) as long as
/// both cover the same `p` covariates.
pub fn prediction_losses(
    data: &PanelData,
    params_hat: &ParamSet,
    gamma_hat: &Assignment,
    params_true: &ParamSet,
    gamma_true: &Assignment,
) -> Result<(f64, f64)> {
    params_hat.check_compatible(data)?;
    params_true.check_compatible(data)?;
    gamma_hat.check(data.n(), params_hat.clusters())?;
    gamma_true.check(data.n(), params_true.clusters())?;

    let p = data.p();
    let mut coef_hat = vec![0.0; p];
    let mut coef_true = vec![0.0; p];
    let mut diff = vec![0.0; p];
    let mut param_sum = 0.0;
    let mut function_sum = 0.0;
    for i in 0..data.n() {
        params_hat.composite_into(gamma_hat.label(i), &mut coef_hat);
        params_true.composite_into(gamma_true.label(i), &mut coef_true);
        for j in 0..p {
            diff[j] = coef_hat[j] - coef_true[j];
        }
        param_sum += diff.iter().map(|d| d * d).sum::<f64>();
        for s in 0..data.t() {
            let gap: f64 = data.covariates(i, s).iter().zip(&diff).map(|(x, d)| x * d).sum();
            function_sum += gap * gap;
        }
    }
    let n = data.n() as f64;
    Ok((param_sum / n, function_sum / (n * data.t() as f64)))
}

/// Fraction of units with `c_hat_i != c0_i` (any block differing).
pub fn cluster_loss(gamma_hat: &Assignment, gamma_true: &Assignment) -> Result<f64> {
    check_same_layout(gamma_hat, gamma_true)?;
    let wrong = gamma_hat
        .labels()
        .zip(gamma_true.labels())
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / gamma_hat.n() as f64)
}

/// Fraction of units misclassified in a single block.
pub fn block_cluster_loss(gamma_hat: &Assignment, gamma_true: &Assignment, block: usize) -> Result<f64> {
    check_same_layout(gamma_hat, gamma_true)?;
    if block >= gamma_hat.num_blocks() {
        return Err(Error::Shape(format!("block {block} out of range")));
    }
    let wrong = (0..gamma_hat.n())
        .filter(|&i| gamma_hat.block_label(i, block) != gamma_true.block_label(i, block))
        .count();
    Ok(wrong as f64 / gamma_hat.n() as f64)
}

fn check_same_layout(a: &Assignment, b: &Assignment) -> Result<()> {
    if a.n() != b.n() || a.num_blocks() != b.num_blocks() {
        return Err(Error::Shape(format!(
            "assignments differ in shape: {}x{} vs {}x{}",
            a.n(),
            a.num_blocks(),
            b.n(),
            b.num_blocks()
        )));
    }
    Ok(())
}

/// All three losses. `params_hat` should already be aligned to the truth so
/// that cluster labels are comparable.
pub fn evaluate_metrics(
    data: &PanelData,
    params_hat: &ParamSet,
    gamma_hat: &Assignment,
    params_true: &ParamSet,
    gamma_true: &Assignment,
) -> Result<Metrics> {
    if params_hat.clusters() != params_true.clusters() || params_hat.blocks() != params_true.blocks() {
        return Err(Error::Shape(
            "estimated and true models must share blocks and cluster counts".into(),
        ));
    }
    let (param_mse, function_mse) = prediction_losses(data, params_hat, gamma_hat, params_true, gamma_true)?;
    Ok(Metrics {
        param_mse,
        function_mse,
        cluster_loss: cluster_loss(gamma_hat, gamma_true)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::ClusterConfig;
    use crate::testing::{random_instance, TestRng};

    /// Straight transcription of the three loss formulas with explicit loops.
    fn naive_metrics(
        data: &PanelData,
        ph: &ParamSet,
        gh: &Assignment,
        pt: &ParamSet,
        gt: &Assignment,
    ) -> (f64, f64, f64) {
        let (n, t, p) = (data.n(), data.t(), data.p());
        let mut pm = 0.0;
        let mut fm = 0.0;
        let mut cl = 0.0;
        for i in 0..n {
            let a = ph.composite(gh.label(i)).unwrap();
            let b = pt.composite(gt.label(i)).unwrap();
            for j in 0..p {
                pm += (a[j] - b[j]).powi(2);
            }
            for s in 0..t {
                let mut fa = 0.0;
                let mut fb = 0.0;
                for j in 0..p {
                    fa += a[j] * data.covariates(i, s)[j];
                    fb += b[j] * data.covariates(i, s)[j];
                }
                fm += (fa - fb).powi(2);
            }
            if gh.label(i) != gt.label(i) {
                cl += 1.0;
            }
        }
        (pm / n as f64, fm / (n * t) as f64, cl / n as f64)
    }

    #[test]
    fn identical_models_have_zero_loss() {
        let mut rng = TestRng::new(3);
        let inst = random_instance(&mut rng, 7, 4, &[2, 1], &[2, 3], 0.5);
        let m = evaluate_metrics(&inst.data, &inst.params, &inst.gamma, &inst.params, &inst.gamma).unwrap();
        assert_eq!(m, Metrics { param_mse: 0.0, function_mse: 0.0, cluster_loss: 0.0 });
    }

    #[test]
    fn wrong_labels_with_identical_coefficients() {
        // Both clusters carry the same parameter, so every label is "wrong"
        // while the fitted coefficients agree exactly.
        let params = ParamSet::from_columns(&[vec![vec![0.7, -0.2], vec![0.7, -0.2]]]).unwrap();
        let cfg = params.clusters().clone();
        let data = PanelData::new(3, 2, 2, vec![0.0; 6], (0..12).map(|v| v as f64).collect()).unwrap();
        let gh = Assignment::new(vec![vec![1]; 3], &cfg).unwrap();
        let gt = Assignment::new(vec![vec![0]; 3], &cfg).unwrap();
        let m = evaluate_metrics(&data, &params, &gh, &params, &gt).unwrap();
        assert_eq!(m.cluster_loss, 1.0);
        assert_eq!(m.param_mse, 0.0);
        assert_eq!(m.function_mse, 0.0);
    }

    #[test]
    fn matches_loop_reference_on_random_instances() {
        let mut rng = TestRng::new(11);
        for _ in 0..50 {
            let n = 1 + rng.below(8);
            let t = 1 + rng.below(8);
            let truth = random_instance(&mut rng, n, t, &[1, 2], &[2, 2], 1.0);
            let est = random_instance(&mut rng, n, t, &[1, 2], &[2, 2], 1.0);
            let m = evaluate_metrics(&truth.data, &est.params, &est.gamma, &truth.params, &truth.gamma).unwrap();
            let (pm, fm, cl) = naive_metrics(&truth.data, &est.params, &est.gamma, &truth.params, &truth.gamma);
            assert!((m.param_mse - pm).abs() <= 1e-12 * (1.0 + pm));
            assert!((m.function_mse - fm).abs() <= 1e-12 * (1.0 + fm));
            assert_eq!(m.cluster_loss, cl);
            assert!((0.0..=1.0).contains(&m.cluster_loss));
        }
    }

    #[test]
    fn mismatched_structures_are_rejected() {
        let mut rng = TestRng::new(5);
        let a = random_instance(&mut rng, 4, 3, &[2, 2], &[2, 2], 1.0);
        let single = ParamSet::zeros(
            &crate::panel::BlockSpec::single(4).unwrap(),
            &ClusterConfig::new(vec![4]).unwrap(),
        )
        .unwrap();
        let g = Assignment::uniform(4, single.clusters());
        assert!(evaluate_metrics(&a.data, &single, &g, &a.params, &a.gamma).is_err());
        // Prediction losses work across blockings.
        assert!(prediction_losses(&a.data, &single, &g, &a.params, &a.gamma).is_ok());
    }
}
