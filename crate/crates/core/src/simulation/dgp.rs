use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Assignment, BlockSpec, ClusterConfig, PanelData, ParamSet};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    /// Gaussian AR(1) errors and AR(1) covariates.
    Ar1,
    /// AR(1) errors whose innovation scale grows with `|x_it|^2`.
    Hk,
    /// Serially independent errors and covariates.
    Indep,
}

impl ErrorKind {
    pub const NAMES: [&'static str; 3] = ["ar1", "hk", "indep"];

    /// Default `(rho_e, rho_x)`.
    pub fn default_rhos(self) -> (f64, f64) {
        match self {
            ErrorKind::Ar1 | ErrorKind::Hk => (0.3, 0.5),
            ErrorKind::Indep => (0.0, 0.0),
        }
    }
}

impl FromStr for ErrorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ar1" => Ok(ErrorKind::Ar1),
            "hk" => Ok(ErrorKind::Hk),
            "indep" => Ok(ErrorKind::Indep),
            other => Err(Error::Config(format!(
                "unknown error kind '{other}', expected one of {}",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Ar1 => "ar1",
            ErrorKind::Hk => "hk",
            ErrorKind::Indep => "indep",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n: usize,
    pub t: usize,
    pub theta: ParamSet,
    pub errors: ErrorKind,
    pub rho_e: f64,
    pub rho_x: f64,
    /// Multiplies the error process; 0 gives noiseless data.
    pub noise_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub data: PanelData,
    pub params: ParamSet,
    pub gamma: Assignment,
}

impl DgpSpec {
    pub fn new(n: usize, t: usize, theta: ParamSet, errors: ErrorKind) -> Self {
        let (rho_e, rho_x) = errors.default_rhos();
        Self { n, t, theta, errors, rho_e, rho_x, noise_scale: 1.0, seed: 0 }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn blocks(&self) -> &BlockSpec {
        self.theta.blocks()
    }

    pub fn clusters(&self) -> &ClusterConfig {
        self.theta.clusters()
    }

    pub fn p(&self) -> usize {
        self.blocks().total_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 {
            return Err(Error::Config("N and T must be positive".into()));
        }
        for (name, rho) in [("rho_e", self.rho_e), ("rho_x", self.rho_x)] {
            if rho.is_nan() || rho.abs() >= 1.0 {
                return Err(Error::Config(format!("{name} must lie in (-1, 1), got {rho}")));
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config("noise_scale must be nonnegative".into()));
        }
        Ok(())
    }

    /// Draws labels, covariates and errors from a single stream under `seed`.
    ///
    /// Covariates are independent stationary AR(1) columns with unit
    /// variance. Errors have unit marginal variance for every kind.
    pub fn generate(&self) -> Result<Generated> {
        self.validate()?;
        let (n, t, p) = (self.n, self.t, self.p());
        let clusters = self.clusters();
        let b = clusters.num_blocks();
        let mut rng = rng::stream(self.seed, 0);

        let labels: Vec<Vec<usize>> = (0..n)
            .map(|_| (0..b).map(|l| rng.random_range(0..clusters.count(l) as u32) as usize).collect())
            .collect();
        let gamma = Assignment::new(labels, clusters)?;

        let sx = (1.0 - self.rho_x * self.rho_x).sqrt();
        let se = (1.0 - self.rho_e * self.rho_e).sqrt();
        let mut x = vec![0.0; n * t * p];
        let mut y = vec![0.0; n * t];
        let mut prev_x = vec![0.0; p];
        for i in 0..n {
            let coef = self.theta.composite(gamma.label(i))?;
            let mut e = 0.0;
            for s in 0..t {
                let row = &mut x[(i * t + s) * p..(i * t + s + 1) * p];
                for (j, v) in row.iter_mut().enumerate() {
                    let u: f64 = rng.sample(StandardNormal);
                    *v = if s == 0 { u } else { self.rho_x * prev_x[j] + sx * u };
                    prev_x[j] = *v;
                }
                let v: f64 = rng.sample(StandardNormal);
                let scale = match self.errors {
                    ErrorKind::Hk => {
                        let sq: f64 = row.iter().map(|z| z * z).sum();
                        (0.5 + sq / (2.0 * p as f64)).sqrt()
                    }
                    ErrorKind::Ar1 | ErrorKind::Indep => 1.0,
                };
                e = if s == 0 { v * scale } else { self.rho_e * e + se * scale * v };
                let fit: f64 = row.iter().zip(&coef).map(|(a, c)| a * c).sum();
                y[i * t + s] = fit + self.noise_scale * e;
            }
        }
        Ok(Generated { data: PanelData::new(n, t, p, y, x)?, params: self.theta.clone(), gamma })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(errors: ErrorKind, n: usize, t: usize) -> DgpSpec {
        let theta = ParamSet::from_columns(&[vec![vec![0.0, 0.0]], vec![vec![0.0]]]).unwrap();
        DgpSpec::new(n, t, theta, errors).with_seed(5)
    }

    fn moments(v: &[f64]) -> (f64, f64) {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64)
    }

    #[test]
    fn deterministic_given_seed() {
        let a = spec(ErrorKind::Hk, 20, 5).generate().unwrap();
        let b = spec(ErrorKind::Hk, 20, 5).generate().unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.gamma, b.gamma);
        let c = spec(ErrorKind::Hk, 20, 5).with_seed(6).generate().unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn zero_parameters_expose_the_error_process() {
        // y = e when theta = 0.
        for kind in [ErrorKind::Ar1, ErrorKind::Hk, ErrorKind::Indep] {
            let g = spec(kind, 2000, 50).generate().unwrap();
            let (m, v) = moments(g.data.y());
            assert!(m.abs() < 0.01, "{kind}: mean {m}");
            assert!((v - 1.0).abs() < 0.02, "{kind}: var {v}");
        }
    }

    #[test]
    fn noise_scale_zero_gives_exact_fit() {
        let theta = ParamSet::from_columns(&[vec![vec![1.0], vec![-1.0]]]).unwrap();
        let mut s = DgpSpec::new(10, 4, theta, ErrorKind::Ar1);
        s.noise_scale = 0.0;
        let g = s.generate().unwrap();
        assert_eq!(crate::panel::sample_risk(&g.data, &g.params, &g.gamma).unwrap(), 0.0);
    }

    #[test]
    fn rejects_explosive_rho() {
        let mut s = spec(ErrorKind::Ar1, 2, 2);
        s.rho_e = 1.0;
        assert!(s.generate().is_err());
        assert!("garch".parse::<ErrorKind>().is_err());
        assert_eq!("HK".parse::<ErrorKind>().unwrap(), ErrorKind::Hk);
    }
}
