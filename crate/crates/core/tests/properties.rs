use mbpc::estimator::Alignment;
use mbpc::oracle::exhaustive_fit;
use mbpc::selection::{cluster_grid, select_from_risks};
use mbpc::testing::{random_instance, TestRng};
use mbpc::transforms::{demean, fe_fit};
use mbpc::{canonical_labels, composite_theta, lloyd_fit, sample_risk, BlockSpec, ClusterConfig, LloydConfig};
use proptest::prelude::*;

fn small_config(seed: u64, starts: usize) -> LloydConfig {
    LloydConfig { n_starts: starts, seed, ..LloydConfig::default() }
}

fn shape() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    prop::collection::vec((1usize..=2, 1usize..=3), 1..=3).prop_map(|v| v.into_iter().unzip())
}

fn shuffled(rng: &mut TestRng, k: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        perm.swap(i, rng.below(i + 1));
    }
    perm
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn risk_is_nonnegative_and_label_invariant(seed in any::<u64>(), (dims, counts) in shape()) {
        let mut rng = TestRng::new(seed);
        let inst = random_instance(&mut rng, 12, 5, &dims, &counts, 0.5);
        let q = sample_risk(&inst.data, &inst.params, &inst.gamma).unwrap();
        prop_assert!(q >= 0.0);

        let perms: Vec<Vec<usize>> = counts.iter().map(|&k| shuffled(&mut rng, k)).collect();
        let alignment = Alignment {
            params: inst.params.permute(&perms).unwrap(),
            perms,
            collisions: vec![false; counts.len()],
        };
        let gamma = alignment.relabel(&inst.gamma).unwrap();
        let q_perm = sample_risk(&inst.data, &alignment.params, &gamma).unwrap();
        prop_assert!((q - q_perm).abs() <= 1e-12 * (1.0 + q));

        let (p_can, g_can) = canonical_labels(&inst.params, &inst.gamma).unwrap();
        let q_can = sample_risk(&inst.data, &p_can, &g_can).unwrap();
        prop_assert!((q - q_can).abs() <= 1e-12 * (1.0 + q));
    }

    #[test]
    fn risk_invariant_to_unit_order(seed in any::<u64>(), (dims, counts) in shape()) {
        let mut rng = TestRng::new(seed);
        let inst = random_instance(&mut rng, 10, 4, &dims, &counts, 1.0);
        let order = shuffled(&mut rng, 10);
        let data = inst.data.select_units(&order).unwrap();
        let gamma = inst.gamma.select_units(&order);
        let q = sample_risk(&inst.data, &inst.params, &inst.gamma).unwrap();
        let q_perm = sample_risk(&data, &inst.params, &gamma).unwrap();
        prop_assert!((q - q_perm).abs() <= 1e-12 * (1.0 + q));
    }

    #[test]
    fn composite_is_concatenation_of_block_columns(seed in any::<u64>(), (dims, counts) in shape()) {
        let mut rng = TestRng::new(seed);
        let inst = random_instance(&mut rng, 6, 2, &dims, &counts, 0.0);
        for i in 0..6 {
            let label = inst.gamma.label(i);
            let theta = composite_theta(&inst.params, label).unwrap();
            let blocks = inst.params.blocks();
            for (l, &c) in label.iter().enumerate() {
                prop_assert_eq!(&theta[blocks.range(l)], inst.params.column(l, c));
            }
        }
    }

    #[test]
    fn cp_table_decomposes(risks in prop::collection::vec(0.0f64..10.0, 12), weight in 0.0f64..2.0, seed in any::<u64>()) {
        let grid = cluster_grid(&[3, 4]);
        let (k_hat, table) = select_from_risks(&grid, &risks, weight, seed).unwrap();
        let best = table.iter().map(|r| r.cp).fold(f64::INFINITY, f64::min);
        for (row, k) in table.iter().zip(&grid) {
            prop_assert_eq!(row.cp, row.risk + row.penalty);
            prop_assert_eq!(row.penalty, weight * k.iter().sum::<usize>() as f64);
        }
        let chosen = table.iter().find(|r| r.k == k_hat).unwrap();
        prop_assert_eq!(chosen.cp, best);
    }

    #[test]
    fn heavier_penalty_never_adds_clusters(
        risks in prop::collection::vec(0.0f64..10.0, 9),
        w1 in 0.0f64..3.0,
        extra in 0.0f64..3.0,
    ) {
        let grid = cluster_grid(&[3, 3]);
        let (k1, _) = select_from_risks(&grid, &risks, w1, 0).unwrap();
        let (k2, _) = select_from_risks(&grid, &risks, w1 + extra, 0).unwrap();
        prop_assert!(k2.iter().sum::<usize>() <= k1.iter().sum::<usize>());
    }

    #[test]
    fn demeaning_is_idempotent_and_shift_invariant(seed in any::<u64>(), shift in -5.0f64..5.0) {
        let mut rng = TestRng::new(seed);
        let inst = random_instance(&mut rng, 8, 6, &[2], &[2], 1.0);
        let once = demean(&inst.data).unwrap().data;
        let twice = demean(&once).unwrap().data;
        for (a, b) in once.y().iter().zip(twice.y()).chain(once.x().iter().zip(twice.x())) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let t = inst.data.t();
        let y: Vec<f64> = inst.data.y().iter().enumerate().map(|(j, v)| v + shift * (j / t) as f64).collect();
        let shifted = demean(&inst.data.with_response(y).unwrap()).unwrap().data;
        for (a, b) in once.y().iter().zip(shifted.y()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn oracle_never_worse_than_lloyd(seed in any::<u64>()) {
        let mut rng = TestRng::new(seed);
        let inst = random_instance(&mut rng, 5, 3, &[1, 1], &[2, 2], 0.7);
        let blocks = inst.params.blocks().clone();
        let clusters = inst.params.clusters().clone();
        let oracle = exhaustive_fit(&inst.data, &blocks, &clusters, 1_000_000).unwrap();
        let fit = lloyd_fit(&inst.data, &blocks, &clusters, &small_config(seed, 8)).unwrap();
        prop_assert!(oracle.global_risk <= fit.risk + 1e-12);
    }

    #[test]
    fn oracle_risk_decreases_with_clusters(seed in any::<u64>()) {
        let mut rng = TestRng::new(seed);
        let inst = random_instance(&mut rng, 5, 3, &[1, 1], &[2, 2], 0.7);
        let blocks = inst.params.blocks().clone();
        let risk = |k: Vec<usize>| exhaustive_fit(&inst.data, &blocks, &ClusterConfig::new(k).unwrap(), 1_000_000).unwrap().global_risk;
        let (q11, q12, q21, q22) = (risk(vec![1, 1]), risk(vec![1, 2]), risk(vec![2, 1]), risk(vec![2, 2]));
        prop_assert!(q12 <= q11 + 1e-12);
        prop_assert!(q21 <= q11 + 1e-12);
        prop_assert!(q22 <= q12.min(q21) + 1e-12);
    }

    #[test]
    fn fixed_effects_fit_ignores_unit_shifts(seed in any::<u64>()) {
        let mut rng = TestRng::new(seed);
        let inst = random_instance(&mut rng, 15, 6, &[1, 1], &[2, 2], 0.3);
        let blocks = BlockSpec::new(vec![1, 1]).unwrap();
        let clusters = ClusterConfig::new(vec![2, 2]).unwrap();
        let t = inst.data.t();
        let shifts: Vec<f64> = (0..15).map(|_| 10.0 * rng.normal()).collect();
        let y: Vec<f64> = inst.data.y().iter().enumerate().map(|(j, v)| v + shifts[j / t]).collect();
        let shifted = inst.data.with_response(y).unwrap();
        let cfg = small_config(seed, 6);
        let a = fe_fit(&inst.data, &blocks, &clusters, &cfg).unwrap();
        let b = fe_fit(&shifted, &blocks, &clusters, &cfg).unwrap();
        prop_assert_eq!(&a.fit.gamma, &b.fit.gamma);
        prop_assert!((a.fit.risk - b.fit.risk).abs() < 1e-10);
        prop_assert!(a.fit.params.distance(&b.fit.params).unwrap() < 1e-10);
        for i in 0..15 {
            prop_assert!((b.fixed_effects[i] - a.fixed_effects[i] - shifts[i]).abs() < 1e-8);
        }
    }
}
