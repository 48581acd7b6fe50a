use crate::error::Result;
use crate::moments::UnitMoments;
use crate::panel::{Assignment, PanelData, ParamSet};

/// Per-unit argmin of the SSR over the whole label space. Ties go to the
/// smallest label in row-major order.
pub fn assignment_step(data: &PanelData, params: &ParamSet) -> Result<Assignment> {
    params.check_compatible(data)?;
    Ok(assign_with_moments(&UnitMoments::new(data), params))
}

pub(crate) fn assign_with_moments(moments: &UnitMoments, params: &ParamSet) -> Assignment {
    let mut scorer = LabelScorer::new(params);
    let b = params.blocks().num_blocks();
    let mut labels = Vec::with_capacity(moments.n() * b);
    for i in 0..moments.n() {
        scorer.load_unit(moments, params, i);
        labels.extend_from_slice(&scorer.best_label());
    }
    Assignment::from_flat(b, labels)
}

/// Scores every label of one unit from its sufficient statistics:
/// `SSR(c) = yy + sum_l own[l][c_l] + sum_{l<s} cross[l,s][c_l, c_s]`.
struct LabelScorer {
    counts: Vec<usize>,
    /// `own[l][a] = theta_la' G_ll theta_la - 2 theta_la' xy_l`, flattened with offsets.
    own: Vec<f64>,
    own_offsets: Vec<usize>,
    /// `cross[(l,s)][a * k_s + b] = 2 theta_la' G_ls theta_sb` for l < s.
    cross: Vec<f64>,
    cross_offsets: Vec<usize>,
    yy: f64,
    scratch: Vec<f64>,
}

impl LabelScorer {
    fn new(params: &ParamSet) -> Self {
        let counts = params.clusters().counts().to_vec();
        let b = counts.len();
        let mut own_offsets = vec![0];
        for &k in &counts {
            own_offsets.push(own_offsets.last().unwrap() + k);
        }
        let mut cross_offsets = vec![0];
        for l in 0..b {
            for s in l + 1..b {
                cross_offsets.push(cross_offsets.last().unwrap() + counts[l] * counts[s]);
            }
        }
        let max_dim = params.blocks().dims().iter().copied().max().unwrap_or(0);
        Self {
            own: vec![0.0; *own_offsets.last().unwrap()],
            cross: vec![0.0; *cross_offsets.last().unwrap()],
            counts,
            own_offsets,
            cross_offsets,
            yy: 0.0,
            scratch: vec![0.0; max_dim],
        }
    }

    fn load_unit(&mut self, moments: &UnitMoments, params: &ParamSet, i: usize) {
        let p = moments.p();
        let g = moments.gram(i);
        let xy = moments.xy(i);
        let blocks = params.blocks();
        let b = self.counts.len();
        self.yy = moments.yy(i);

        for l in 0..b {
            let rl = blocks.range(l);
            for a in 0..self.counts[l] {
                let theta = params.column(l, a);
                let mut quad = 0.0;
                let mut lin = 0.0;
                for (u, j) in rl.clone().enumerate() {
                    let row = &g[j * p + rl.start..j * p + rl.end];
                    let gtheta: f64 = row.iter().zip(theta).map(|(x, y)| x * y).sum();
                    quad += theta[u] * gtheta;
                    lin += theta[u] * xy[j];
                }
                self.own[self.own_offsets[l] + a] = quad - 2.0 * lin;
            }
        }

        let mut pair = 0;
        for l in 0..b {
            let rl = blocks.range(l);
            for s in l + 1..b {
                let rs = blocks.range(s);
                let base = self.cross_offsets[pair];
                for bb in 0..self.counts[s] {
                    let theta_s = params.column(s, bb);
                    // h = G_ls theta_sb
                    for (u, j) in rl.clone().enumerate() {
                        let row = &g[j * p + rs.start..j * p + rs.end];
                        self.scratch[u] = row.iter().zip(theta_s).map(|(x, y)| x * y).sum();
                    }
                    for a in 0..self.counts[l] {
                        let theta_l = params.column(l, a);
                        let dot: f64 = theta_l.iter().zip(&self.scratch).map(|(x, y)| x * y).sum();
                        self.cross[base + a * self.counts[s] + bb] = 2.0 * dot;
                    }
                }
                pair += 1;
            }
        }
    }

    fn score(&self, label: &[usize]) -> f64 {
        let b = self.counts.len();
        let mut total = self.yy;
        for l in 0..b {
            total += self.own[self.own_offsets[l] + label[l]];
        }
        let mut pair = 0;
        for l in 0..b {
            for s in l + 1..b {
                total += self.cross[self.cross_offsets[pair] + label[l] * self.counts[s] + label[s]];
                pair += 1;
            }
        }
        total
    }

    fn best_label(&self) -> Vec<usize> {
        let b = self.counts.len();
        let mut label = vec![0; b];
        let mut best = label.clone();
        let mut best_score = f64::INFINITY;
        loop {
            let score = self.score(&label);
            if score < best_score {
                best_score = score;
                best.copy_from_slice(&label);
            }
            // Row-major odometer: last block varies fastest.
            let mut l = b;
            loop {
                if l == 0 {
                    return best;
                }
                l -= 1;
                label[l] += 1;
                if label[l] < self.counts[l] {
                    break;
                }
                label[l] = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{unit_ssr, ClusterConfig};
    use crate::testing::{random_instance, TestRng};

    #[test]
    fn recovers_true_labels_without_noise() {
        let mut rng = TestRng::new(1);
        let inst = random_instance(&mut rng, 40, 10, &[2, 2], &[2, 3], 0.0);
        let gamma = assignment_step(&inst.data, &inst.params).unwrap();
        assert_eq!(gamma, inst.gamma);
    }

    #[test]
    fn singleton_label_space() {
        let mut rng = TestRng::new(2);
        let inst = random_instance(&mut rng, 9, 3, &[1, 2, 1], &[1, 1, 1], 1.0);
        let gamma = assignment_step(&inst.data, &inst.params).unwrap();
        assert!(gamma.labels().all(|l| l == [0, 0, 0]));
    }

    #[test]
    fn matches_per_unit_enumeration() {
        let mut rng = TestRng::new(3);
        for _ in 0..100 {
            let inst = random_instance(&mut rng, 5, 4, &[1, 2], &[2, 2], 1.0);
            let gamma = assignment_step(&inst.data, &inst.params).unwrap();
            let cfg: &ClusterConfig = inst.params.clusters();
            for i in 0..5 {
                let mut best = None;
                let mut best_ssr = f64::INFINITY;
                for label in cfg.labels() {
                    let ssr = unit_ssr(&inst.data, i, &inst.params.composite(&label).unwrap());
                    if ssr < best_ssr {
                        best_ssr = ssr;
                        best = Some(label);
                    }
                }
                assert_eq!(gamma.label(i), best.unwrap().as_slice());
            }
        }
    }

    #[test]
    fn ties_go_to_smallest_label() {
        // Identical clusters in both blocks: every label ties.
        let params = ParamSet::from_columns(&[
            vec![vec![0.5], vec![0.5], vec![0.5]],
            vec![vec![-1.0], vec![-1.0]],
        ])
        .unwrap();
        let data = PanelData::new(2, 3, 2, vec![1.0, 2.0, 0.0, -1.0, 0.3, 0.2], vec![
            1.0, 2.0, 0.5, -1.0, 0.0, 1.0, 2.0, 2.0, -0.5, 1.0, 1.0, 0.0,
        ])
        .unwrap();
        let gamma = assignment_step(&data, &params).unwrap();
        assert!(gamma.labels().all(|l| l == [0, 0]));
    }
}
