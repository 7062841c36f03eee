use std::f64::consts::PI;

use proptest::prelude::*;
use rand::Rng as _;
use regagent_core::actions::{
    apply_action, normalize_rewards_per_group, oracle_reward_se3, residual, reward_groups,
    reward_vector_se3, AccumulatedTransform, ActionKind, ActionSet, ResidualState, RewardGrouping,
    RewardVector, N_ACTIONS,
};
use regagent_core::agent::{replay, run_registration, Oracle, PolicyKind, PolicySpec, Schedule};
use regagent_core::cloud::{
    crop_plane_with_normal, make_pair, retained_count, synth_shape, PerturbationConfig, PointCloud,
    ShapeKind,
};
use regagent_core::geom3::{rotation_distance, transform_distance};
use regagent_core::icp::{icp, kabsch, IcpConfig};
use regagent_core::metrics::{
    chamfer, clean_l2, modified_chamfer, modified_chamfer_with, ChamferMode,
};
use regagent_core::rotsample::{sample_rotation_haar, sample_unit_vector, TransformSampleConfig};
use regagent_core::{rng, RigidTransform, RotationMatrix, Vector3};

fn rotation(seed: u64) -> RotationMatrix {
    sample_rotation_haar(PI, &mut rng::seeded(seed)).unwrap()
}

fn transform(seed: u64) -> RigidTransform {
    let mut r = rng::seeded(seed);
    let rot = sample_rotation_haar(PI, &mut r).unwrap();
    RigidTransform::new(
        rot,
        Vector3::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        ),
    )
}

fn residual_state(seed: u64) -> ResidualState {
    ResidualState::from_transform(&transform(seed))
}

fn shape(seed: u64, n: usize) -> PointCloud {
    let kind = [ShapeKind::Box, ShapeKind::Helix, ShapeKind::Torus][(seed % 3) as usize];
    synth_shape(kind, n, &mut rng::seeded(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_distance_is_a_metric(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (ra, rb, rc) = (rotation(a), rotation(b), rotation(c));
        prop_assert!(rotation_distance(&ra, &ra).abs() < 1e-9);
        prop_assert!((rotation_distance(&ra, &rb) - rotation_distance(&rb, &ra)).abs() < 1e-9);
        prop_assert!(rotation_distance(&ra, &rc) <= rotation_distance(&ra, &rb) + rotation_distance(&rb, &rc) + 1e-9);
        let aa = ra.mul(&rb.transpose()).to_axis_angle();
        prop_assert!((rotation_distance(&ra, &rb) - aa.angle).abs() < 1e-9);
    }

    #[test]
    fn compose_is_associative(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (ta, tb, tc) = (transform(a), transform(b), transform(c));
        let left = ta.compose(&tb).compose(&tc);
        let right = ta.compose(&tb.compose(&tc));
        prop_assert!(transform_distance(&left, &right) < 1e-9);
    }

    #[test]
    fn rewards_are_decoupled(s in any::<u64>(), other in any::<u64>(), a in 0..N_ACTIONS) {
        let set = ActionSet::default();
        let action = set.get(a).unwrap();
        let state = residual_state(s);
        let o = residual_state(other);
        let moved = match action.kind {
            ActionKind::Rotation => ResidualState { translation: o.translation, ..state },
            ActionKind::Translation => ResidualState { rotation: o.rotation, ..state },
        };
        prop_assert_eq!(oracle_reward_se3(action, &state).to_bits(), oracle_reward_se3(action, &moved).to_bits());
    }

    #[test]
    fn rotation_actions_never_touch_translation(seq in proptest::collection::vec(0usize..12, 0..60), s in any::<u64>()) {
        let set = ActionSet::default();
        let start = AccumulatedTransform::from_transform(&transform(s));
        let mut acc = start;
        for i in seq {
            acc = apply_action(&acc, set.get(i).unwrap());
        }
        prop_assert_eq!(acc.translation, start.translation);
    }

    #[test]
    fn argmax_never_increases_distance(s in any::<u64>()) {
        let set = ActionSet::default();
        let mut r = rng::seeded(s);
        let gt = RigidTransform::new(
            sample_rotation_haar(PI / 2.0, &mut r).unwrap(),
            Vector3::new(r.random_range(-0.5..0.5), r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)),
        );
        let acc = AccumulatedTransform::identity();
        let state = residual(&gt, &acc);
        let v = reward_vector_se3(&set, &state);
        let best = (0..N_ACTIONS).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
        if v[best] > 0.0 {
            let next = residual(&gt, &apply_action(&acc, set.get(best).unwrap()));
            prop_assert!(next.distance_to_identity() <= state.distance_to_identity() + 1e-12);
        }
    }

    #[test]
    fn normalization_keeps_group_argmax_and_signs(values in proptest::collection::vec(-1.0f64..1.0, N_ACTIONS), by_class in any::<bool>()) {
        let grouping = if by_class { RewardGrouping::BySizeClass } else { RewardGrouping::ByMagnitude };
        let v = RewardVector::from_slice(&values).unwrap();
        let n = normalize_rewards_per_group(&v, grouping);
        let groups = reward_groups(&ActionSet::default(), grouping);
        for i in 0..N_ACTIONS {
            prop_assert_eq!(v[i].signum(), n[i].signum());
        }
        for g in 0..=*groups.iter().max().unwrap() {
            let idx: Vec<usize> = (0..N_ACTIONS).filter(|&i| groups[i] == g).collect();
            let arg = |x: &RewardVector| *idx.iter().max_by(|&&i, &&j| x[i].total_cmp(&x[j])).unwrap();
            prop_assert_eq!(arg(&v), arg(&n));
        }
    }

    #[test]
    fn replay_reproduces_estimate(seed in 0u64..1000, stochastic in any::<bool>()) {
        let pair = make_pair(&shape(seed, 256), &TransformSampleConfig::full_range(seed), &PerturbationConfig::clean(seed).with_points(64)).unwrap();
        let policy = if stochastic { PolicySpec::of_kind(PolicyKind::Stoch1, seed) } else { PolicySpec::greedy() };
        let (est, trace) = run_registration(&Oracle::se3(), &pair, &Schedule::default(), &policy).unwrap();
        prop_assert_eq!(replay(&trace.actions()).unwrap(), est);
        let (again, _) = run_registration(&Oracle::se3(), &pair, &Schedule::default(), &policy).unwrap();
        prop_assert_eq!(again, est);
    }

    #[test]
    fn crop_matches_brute_force_top_k(seed in any::<u64>(), frac in 0.1f64..1.0) {
        let cloud = shape(seed, 200);
        let normal = sample_unit_vector(&mut rng::seeded(seed ^ 1));
        let got = crop_plane_with_normal(&cloud, frac, &normal).unwrap();
        let mut scored: Vec<(f64, usize)> = cloud.iter().enumerate().map(|(i, p)| (p.dot(&normal), i)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let k = retained_count(cloud.len(), frac);
        let mut keep: Vec<usize> = scored[..k].iter().map(|s| s.1).collect();
        keep.sort_unstable();
        let expect: Vec<Vector3> = keep.iter().map(|&i| cloud.points()[i]).collect();
        let mut got_sorted = got.points().to_vec();
        let mut exp_sorted = expect;
        let key = |p: &Vector3| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits());
        got_sorted.sort_by_key(key);
        exp_sorted.sort_by_key(key);
        prop_assert_eq!(got_sorted, exp_sorted);
    }

    #[test]
    fn clean_pair_target_is_exact(seed in any::<u64>()) {
        let pair = make_pair(&shape(seed, 256), &TransformSampleConfig::full_range(seed), &PerturbationConfig::clean(seed).with_points(100)).unwrap();
        let moved: Vec<Vector3> = pair.source.iter().map(|p| pair.gt.apply(p)).collect();
        prop_assert_eq!(pair.target.points(), &moved[..]);
        let again = make_pair(&shape(seed, 256), &TransformSampleConfig::full_range(seed), &PerturbationConfig::clean(seed).with_points(100)).unwrap();
        prop_assert_eq!(again.source.points(), pair.source.points());
    }

    #[test]
    fn chamfer_and_clean_l2_properties(seed in any::<u64>(), e in any::<u64>()) {
        let s = shape(seed, 256);
        let tsc = TransformSampleConfig::full_range(seed);
        let clean = make_pair(&s, &tsc, &PerturbationConfig::clean(seed).with_points(64)).unwrap();
        let noisy = make_pair(&s, &tsc, &PerturbationConfig::noisy(seed).with_points(64)).unwrap();
        let est = transform(e);
        prop_assert!(modified_chamfer(&noisy, &est) >= 0.0);
        prop_assert_eq!(clean_l2(&clean, &est), clean_l2(&noisy, &est));
        let moved = regagent_core::cloud::apply_transform(&clean.source, &est);
        let plain = chamfer(&moved, &clean.target);
        prop_assert!((modified_chamfer(&clean, &est) - plain).abs() < 1e-12);
        prop_assert!((modified_chamfer_with(&clean, &est, ChamferMode::Plain) - plain).abs() < 1e-12);
    }

    #[test]
    fn kabsch_is_exact_on_correspondences(seed in any::<u64>()) {
        let src = shape(seed, 50);
        let t = transform(seed ^ 7);
        let dst: Vec<Vector3> = src.iter().map(|p| t.apply(p)).collect();
        let est = kabsch(src.points(), &dst, None).unwrap();
        let m = est.rotation.matrix();
        prop_assert!((m * m.transpose() - nalgebra::Matrix3::identity()).norm() < 1e-9);
        prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        prop_assert!(transform_distance(&est, &t) < 1e-9);
    }

    #[test]
    fn icp_objective_is_non_increasing(seed in any::<u64>()) {
        let pair = make_pair(&shape(seed, 512), &TransformSampleConfig::full_range(seed), &PerturbationConfig::noisy(seed).with_points(128)).unwrap();
        let res = icp(&pair.source, &pair.target, &IcpConfig::default(), &RigidTransform::identity()).unwrap();
        for w in res.mse_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", res.mse_history);
        }
    }
}
