use approx::assert_abs_diff_eq;
use fedpne::objectives::{make_ensemble, GlobalObjective, NoiseKind, NoiseModel};
use fedpne::partition::{children, max_depth, NodeId, PartitionSpec, SplitPolicy};
use fedpne::protocol::{
    confidence_radius, eliminate, expand_until_ready, plan_phase, threshold_tau, ServerConfig,
};
use fedpne::streams::{stream, Purpose};
use proptest::prelude::*;

fn policy() -> impl Strategy<Value = SplitPolicy> {
    prop_oneof![
        Just(SplitPolicy::RoundRobin),
        any::<u64>().prop_map(|seed| SplitPolicy::SeededRandom { seed }),
    ]
}

fn node(arity: u32, max: u32) -> impl Strategy<Value = NodeId> {
    (0..=max).prop_flat_map(move |depth| {
        let width = (arity as u64).pow(depth);
        (1..=width).prop_map(move |index| NodeId { depth, index })
    })
}

fn tree() -> impl Strategy<Value = (u32, usize, SplitPolicy, NodeId)> {
    (2u32..=4, 1usize..=3, policy())
        .prop_flat_map(|(k, d, p)| (Just(k), Just(d), Just(p), node(k, 12)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn children_tile_parent((k, d, policy, parent) in tree()) {
        let spec = PartitionSpec::unit_cube(k, d, policy).unwrap();
        let cell = spec.cell_bounds(parent);
        let axis = spec.split_axis(parent.depth);
        let kids: Vec<_> = children(parent, k).iter().map(|&c| spec.cell_bounds(c)).collect();
        prop_assert_eq!(kids.len(), k as usize);
        assert_abs_diff_eq!(kids[0].lower[axis], cell.lower[axis], epsilon = 1e-12);
        assert_abs_diff_eq!(kids[k as usize - 1].upper[axis], cell.upper[axis], epsilon = 1e-12);
        for pair in kids.windows(2) {
            assert_abs_diff_eq!(pair[0].upper[axis], pair[1].lower[axis], epsilon = 1e-12);
        }
        for kid in &kids {
            for j in 0..d {
                if j != axis {
                    prop_assert_eq!(kid.lower[j], cell.lower[j]);
                    prop_assert_eq!(kid.upper[j], cell.upper[j]);
                }
            }
        }
    }

    #[test]
    fn parent_child_round_trip((k, _d, _p, n) in tree()) {
        for (j, c) in children(n, k).into_iter().enumerate() {
            prop_assert_eq!(c.parent(k), Some(n));
            prop_assert_eq!(c.index, k as u64 * n.index - (k as u64 - 1 - j as u64));
        }
    }

    #[test]
    fn locate_finds_the_cell_of_its_point((k, d, policy, n) in tree()) {
        let spec = PartitionSpec::unit_cube(k, d, policy).unwrap();
        let x = spec.representative_point(n);
        prop_assert_eq!(spec.locate(&x, n.depth), n);
        prop_assert!(spec.cell_bounds(n).contains(&x));
    }

    #[test]
    fn phase_pulls_cover_threshold(
        m in 1usize..200,
        h in 0u32..20,
        c in 0.05f64..3.0,
        nodes in 1usize..64,
        budget in 1u64..5000,
    ) {
        let cfg = ServerConfig { c, ..ServerConfig::experimental(2, m, 5000) };
        let tau = threshold_tau(h, &cfg).unwrap();
        let width = 2u64.pow(h.min(10));
        let active: Vec<NodeId> = (1..=nodes.min(width as usize) as u64)
            .map(|index| NodeId { depth: h.min(10), index })
            .collect();
        let plan = plan_phase(1, active.clone(), h.min(10), &cfg, budget).unwrap();
        let per_client: u64 = plan.schedule.iter().sum();
        prop_assert!(per_client <= budget);
        prop_assert_eq!(plan.pull_order().len() as u64, per_client);
        if !plan.truncated {
            let tau = threshold_tau(h.min(10), &cfg).unwrap();
            let total = plan.node_pulls(0) as f64;
            prop_assert!(total >= tau);
            prop_assert!(total - tau < m as f64);
            prop_assert_eq!(plan.phase_length, active.len() as u64 * plan.pulls_per_client);
        }
        prop_assert!(tau >= 1.0);
    }

    #[test]
    fn expansion_stops_at_first_failing_depth(m in 1usize..500, t in 10u64..100_000, c in 0.05f64..3.0) {
        let cfg = ServerConfig { c, ..ServerConfig::experimental(2, m, t) };
        let (active, h) = expand_until_ready(vec![NodeId::ROOT], 0, &cfg).unwrap();
        prop_assert!(h >= 1);
        prop_assert_eq!(active.len() as u64, 2u64.pow(h));
        let next = threshold_tau(h + 1, &cfg).unwrap();
        prop_assert!(active.len() as f64 * next > m as f64 && next > 1.0);
        if h > 1 {
            // the previous level passed the check, which is why it was split
            let here = threshold_tau(h, &cfg).unwrap();
            prop_assert!((active.len() / 2) as f64 * here <= m as f64 || here <= 1.0);
        }
    }

    #[test]
    fn best_node_always_survives(
        means in prop::collection::vec(0.0f64..1.0, 1..40),
        pulls in 1u64..10_000,
    ) {
        let cfg = ServerConfig::experimental(2, 10, 2000);
        let h = 6;
        let active: Vec<NodeId> = (1..=means.len() as u64).map(|index| NodeId { depth: h, index }).collect();
        let radii = vec![confidence_radius(pulls, &cfg); means.len()];
        let out = eliminate(&active, &means, &radii, h, &cfg).unwrap();
        let top = means.iter().cloned().fold(f64::MIN, f64::max);
        let first_top = means.iter().position(|&v| v == top).unwrap();
        prop_assert_eq!(out.best, active[first_top]);
        prop_assert!(out.survivors.contains(&out.best));
        prop_assert_eq!(out.survivors.len() + out.eliminated.len(), active.len());
        prop_assert_eq!(out.next_active.len(), 2 * out.survivors.len());
    }

    #[test]
    fn ensemble_averages_to_base(clients in 1usize..30, scale in 0.0f64..3.0, seed in any::<u64>(), x in 0.0f64..1.0) {
        let base = fedpne::objectives::normalize_objective(&GlobalObjective::garland(), 20_001).unwrap();
        let ens = make_ensemble(base.clone(), clients, scale, NoiseModel::NONE, seed).unwrap();
        prop_assert_eq!(ens.coefficients().len(), clients);
        prop_assert!(ens.coefficients().iter().sum::<f64>().abs() < 1e-12);
        let mean = (0..clients).map(|m| ens.local(m, &[x])).sum::<f64>() / clients as f64;
        assert_abs_diff_eq!(mean, base.evaluate(&[x]), epsilon = 1e-12);
        for m in 0..clients {
            let v = ens.local(m, &[x]);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn rewards_stay_in_unit_interval(seed in any::<u64>(), x in 0.0f64..1.0, scale in 0.0f64..1.0, gaussian in any::<bool>()) {
        let base = fedpne::objectives::normalize_objective(&GlobalObjective::garland(), 20_001).unwrap();
        let kind = if gaussian { NoiseKind::TruncatedGaussian } else { NoiseKind::BoundedUniform };
        let ens = make_ensemble(base, 4, 1.0, NoiseModel::new(kind, scale).unwrap(), seed).unwrap();
        let mut rng = stream(seed, Purpose::Reward, 0, 0);
        for m in 0..4 {
            let r = ens.sample_reward(m, &[x], &mut rng);
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}

#[test]
fn depth_caps() {
    assert_eq!(max_depth(2), 63);
    assert!(max_depth(3) >= 39);
    assert!(max_depth(4) == 31);
}
