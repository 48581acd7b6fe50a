//! Random small instances shared by unit and integration tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::panel::{Assignment, BlockSpec, ClusterConfig, PanelData, ParamSet};
use crate::rng;

pub struct TestRng(ChaCha8Rng);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(rng::stream(seed, 0))
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n as u32) as usize
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }
}

pub struct Instance {
    pub data: PanelData,
    pub params: ParamSet,
    pub gamma: Assignment,
}

/// Gaussian covariates and parameters, uniform labels, noise with sd `noise`.
pub fn random_instance(
    rng: &mut TestRng,
    n: usize,
    t: usize,
    dims: &[usize],
    counts: &[usize],
    noise: f64,
) -> Instance {
    let blocks = BlockSpec::new(dims.to_vec()).unwrap();
    let clusters = ClusterConfig::new(counts.to_vec()).unwrap();
    let mut params = ParamSet::zeros(&blocks, &clusters).unwrap();
    for v in params.as_mut_vec() {
        *v = rng.normal();
    }
    let labels = (0..n)
        .map(|_| counts.iter().map(|&k| rng.below(k)).collect())
        .collect();
    let gamma = Assignment::new(labels, &clusters).unwrap();
    let p = blocks.total_dim();
    let x: Vec<f64> = (0..n * t * p).map(|_| rng.normal()).collect();
    let mut y = Vec::with_capacity(n * t);
    for i in 0..n {
        let coef = params.composite(gamma.label(i)).unwrap();
        for s in 0..t {
            let row = &x[(i * t + s) * p..(i * t + s + 1) * p];
            let fitted: f64 = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
            y.push(fitted + noise * rng.normal());
        }
    }
    Instance {
        data: PanelData::new(n, t, p, y, x).unwrap(),
        params,
        gamma,
    }
}
