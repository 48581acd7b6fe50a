//! Per-unit sufficient statistics. For a fixed composite coefficient `b`
//! the unit SSR is `yy_i - 2 b'xy_i + b' G_i b`, so assignment and parameter
//! updates never revisit the raw `T` observations.

use crate::panel::PanelData;

#[derive(Debug, Clone)]
pub struct UnitMoments {
    n: usize,
    p: usize,
    /// `G_i = sum_t x_it x_it'`, row-major `p x p` per unit.
    gram: Vec<f64>,
    /// `sum_t x_it y_it`.
    xy: Vec<f64>,
    /// `sum_t y_it^2`.
    yy: Vec<f64>,
}

impl UnitMoments {
    pub fn new(data: &PanelData) -> Self {
        let (n, p) = (data.n(), data.p());
        let mut gram = vec![0.0; n * p * p];
        let mut xy = vec![0.0; n * p];
        let mut yy = vec![0.0; n];
        for i in 0..n {
            let g = &mut gram[i * p * p..(i + 1) * p * p];
            let v = &mut xy[i * p..(i + 1) * p];
            for s in 0..data.t() {
                let x = data.covariates(i, s);
                let y = data.response(i, s);
                yy[i] += y * y;
                for j in 0..p {
                    v[j] += x[j] * y;
                    let row = &mut g[j * p..(j + 1) * p];
                    for (r, &xk) in row.iter_mut().zip(x) {
                        *r += x[j] * xk;
                    }
                }
            }
        }
        Self { n, p, gram, xy, yy }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn gram(&self, i: usize) -> &[f64] {
        let w = self.p * self.p;
        &self.gram[i * w..(i + 1) * w]
    }

    #[inline]
    pub fn xy(&self, i: usize) -> &[f64] {
        &self.xy[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn yy(&self, i: usize) -> f64 {
        self.yy[i]
    }
}
