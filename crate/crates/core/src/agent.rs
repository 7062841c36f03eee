//! Policies and the staged registration loop.
//!
//! Each iteration queries a [`RewardSource`] for the 24 rewards of the current
//! state, masks them to the size class allowed by the current schedule phase,
//! picks an action and applies it to the accumulated estimate. There is no
//! early stopping.

use std::io::Write;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::actions::{
    apply_action, normalize_rewards_per_group, residual, reward_vector, AccumulatedTransform,
    ActionSet, RewardGrouping, RewardOracle, RewardVector, SizeClass,
};
use crate::cloud::{apply_transform, CloudPair, PointCloud};
use crate::error::{Error, Result};
use crate::geom3::RigidTransform;
use crate::metrics::{modified_chamfer, rot_error_iso, trans_error};
use crate::rng::{self, Rng};

pub const DEFAULT_STOCH1_PROBS: [f64; 3] = [0.85, 0.15, 0.05];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Masked argmax, ties to the lowest index.
    #[default]
    Greedy,
    /// One of the three best masked actions with fixed probabilities.
    Stoch1,
    /// Uniform over masked actions with positive reward, else argmax.
    Stoch2,
    /// Uniform over the mask regardless of reward; a baseline.
    Uniform,
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(PolicyKind::Greedy),
            "stoch1" => Ok(PolicyKind::Stoch1),
            "stoch2" => Ok(PolicyKind::Stoch2),
            "uniform" | "random" => Ok(PolicyKind::Uniform),
            _ => Err(Error::validation(format!("unknown policy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Renormalized to sum to one by [`PolicySpec::new`].
    pub stoch1_probs: [f64; 3],
    pub seed: u64,
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self::greedy()
    }
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, stoch1_probs: [f64; 3], seed: u64) -> Result<Self> {
        if stoch1_probs.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::validation("stoch1 probabilities must be positive"));
        }
        let s: f64 = stoch1_probs.iter().sum();
        Ok(Self {
            kind,
            stoch1_probs: stoch1_probs.map(|p| p / s),
            seed,
        })
    }

    pub fn greedy() -> Self {
        Self::of_kind(PolicyKind::Greedy, 0)
    }

    pub fn of_kind(kind: PolicyKind, seed: u64) -> Self {
        Self::new(kind, DEFAULT_STOCH1_PROBS, seed).expect("default probabilities are valid")
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.kind, self.stoch1_probs, self.seed).map(|_| ())
    }
}

fn masked_order(rewards: &RewardVector, mask: &[usize]) -> Vec<usize> {
    let mut order = mask.to_vec();
    order.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]).then(a.cmp(&b)));
    order
}

/// Picks one action index from `mask`.
pub fn select_action(
    policy: &PolicySpec,
    rewards: &RewardVector,
    mask: &[usize],
    rng: &mut Rng,
) -> Result<usize> {
    if mask.is_empty() {
        return Err(Error::validation("action mask is empty"));
    }
    if let Some(&bad) = mask.iter().find(|&&i| i >= rewards.0.len()) {
        return Err(Error::validation(format!("mask index {bad} out of range")));
    }
    let argmax = || masked_order(rewards, mask)[0];
    Ok(match policy.kind {
        PolicyKind::Greedy => argmax(),
        PolicyKind::Stoch1 => {
            let order = masked_order(rewards, mask);
            let m = order.len().min(3);
            let probs = &policy.stoch1_probs[..m];
            let total: f64 = probs.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = order[m - 1];
            for (i, p) in probs.iter().enumerate() {
                if u < *p {
                    pick = order[i];
                    break;
                }
                u -= p;
            }
            pick
        }
        PolicyKind::Stoch2 => {
            let positive: Vec<usize> = mask.iter().copied().filter(|&i| rewards[i] > 0.0).collect();
            if positive.is_empty() {
                argmax()
            } else {
                positive[rng.random_range(0..positive.len())]
            }
        }
        PolicyKind::Uniform => mask[rng.random_range(0..mask.len())],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub iterations: usize,
    pub size_class: SizeClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub phases: Vec<Phase>,
}

impl Default for Schedule {
    /// 20 iterations of large actions, then 40 of small ones.
    fn default() -> Self {
        Self::two_stage(20, 40)
    }
}

impl Schedule {
    pub fn two_stage(large: usize, small: usize) -> Self {
        Self {
            phases: vec![
                Phase {
                    iterations: large,
                    size_class: SizeClass::Large,
                },
                Phase {
                    iterations: small,
                    size_class: SizeClass::Small,
                },
            ],
        }
    }

    pub fn total_iterations(&self) -> usize {
        self.phases.iter().map(|p| p.iterations).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_iterations() == 0 {
            return Err(Error::validation(
                "schedule must have at least one iteration",
            ));
        }
        Ok(())
    }

    /// Size class allowed at iteration `i`, or `None` past the end.
    pub fn class_at(&self, i: usize) -> Option<SizeClass> {
        let mut start = 0;
        for p in &self.phases {
            if i < start + p.iterations {
                return Some(p.size_class);
            }
            start += p.iterations;
        }
        None
    }
}

/// Supplies the reward vector for the state reached by `acc` on `pair`.
///
/// Oracles read the ground truth stored in the pair; a trained network only
/// looks at the observed clouds.
pub trait RewardSource: Sync {
    fn rewards(&self, pair: &CloudPair, acc: &AccumulatedTransform) -> Result<RewardVector>;
}

/// Exact rewards computed from the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Oracle {
    pub kind: RewardOracle,
    /// Group-normalize before returning; argmax within one size class is unaffected.
    pub normalize: Option<RewardGrouping>,
}

impl Oracle {
    pub fn se3() -> Self {
        Self {
            kind: RewardOracle::Se3,
            normalize: None,
        }
    }

    pub fn new(kind: RewardOracle) -> Self {
        Self {
            kind,
            normalize: None,
        }
    }
}

impl RewardSource for Oracle {
    fn rewards(&self, pair: &CloudPair, acc: &AccumulatedTransform) -> Result<RewardVector> {
        let v = reward_vector(self.kind, &ActionSet::default(), pair, acc);
        Ok(match self.normalize {
            Some(g) => normalize_rewards_per_group(&v, g),
            None => v,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub action: usize,
    pub rewards: RewardVector,
    /// Estimate after applying `action`.
    pub estimate: RigidTransform,
    pub rot_err_deg: f64,
    pub trans_err: f64,
    pub chamfer: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegistrationTrace {
    pub records: Vec<TraceRecord>,
}

impl RegistrationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.action).collect()
    }

    /// First iteration whose rotation error is at or below `deg`.
    pub fn first_below(&self, deg: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.rot_err_deg <= deg)
            .map(|r| r.iteration)
    }

    pub const CSV_HEADER: &'static str =
        "iter,action_index,action_name,rot_err_deg,trans_err,chamfer";

    /// Writes the header and one row per iteration.
    pub fn write_csv<W: Write>(&self, set: &ActionSet, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            let name = set.get(r.action).map(|a| a.name()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.iteration, r.action, name, r.rot_err_deg, r.trans_err, r.chamfer
            )?;
        }
        Ok(())
    }
}

/// Runs the loop from the identity estimate.
pub fn run_registration(
    source: &dyn RewardSource,
    pair: &CloudPair,
    schedule: &Schedule,
    policy: &PolicySpec,
) -> Result<(RigidTransform, RegistrationTrace)> {
    schedule.validate()?;
    policy.validate()?;
    let set = ActionSet::default();
    let mut rng = rng::seeded(policy.seed);
    let mut acc = AccumulatedTransform::identity();
    let mut trace = RegistrationTrace {
        records: Vec::with_capacity(schedule.total_iterations()),
    };
    let masks = [SizeClass::Large, SizeClass::Small].map(|c| set.indices_of_class(c));
    for iteration in 0..schedule.total_iterations() {
        let rewards = source
            .rewards(pair, &acc)
            .map_err(|e| Error::RewardSource {
                iteration,
                source: Box::new(e),
            })?;
        let mask = match schedule.class_at(iteration) {
            Some(SizeClass::Large) => &masks[0],
            _ => &masks[1],
        };
        let action = select_action(policy, &rewards, mask, &mut rng)?;
        acc = apply_action(&acc, set.get(action).expect("masked index is valid"));
        let estimate = acc.to_transform();
        trace.records.push(TraceRecord {
            iteration,
            action,
            rewards,
            estimate,
            rot_err_deg: rot_error_iso(&estimate.rotation, &pair.gt.rotation),
            trans_err: trans_error(&estimate.translation, &pair.gt.translation),
            chamfer: modified_chamfer(pair, &estimate),
        });
    }
    Ok((acc.to_transform(), trace))
}

/// Distance between the residual and the identity after every record.
pub fn residual_distances(pair: &CloudPair, trace: &RegistrationTrace) -> Vec<f64> {
    trace
        .records
        .iter()
        .map(|r| {
            residual(&pair.gt, &AccumulatedTransform::from_transform(&r.estimate))
                .distance_to_identity()
        })
        .collect()
}

/// Observed source moved by the estimate.
pub fn estimate_to_cloud(pair: &CloudPair, estimate: &RigidTransform) -> PointCloud {
    apply_transform(&pair.source, estimate)
}

/// Applies `actions` to a fresh accumulator.
pub fn replay(actions: &[usize]) -> Result<RigidTransform> {
    let set = ActionSet::default();
    let mut acc = AccumulatedTransform::identity();
    for &a in actions {
        let spec = set
            .get(a)
            .ok_or_else(|| Error::validation(format!("action index {a} out of range")))?;
        acc = apply_action(&acc, spec);
    }
    Ok(acc.to_transform())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::N_ACTIONS;
    use crate::cloud::{make_pair, synth_shape, PerturbationConfig, ShapeKind};
    use crate::geom3::{AxisAngle, Vector3};
    use crate::rotsample::{sample_unit_vector, TransformSampleConfig};

    fn rewards_from(f: impl Fn(usize) -> f64) -> RewardVector {
        RewardVector(std::array::from_fn(f))
    }

    fn all() -> Vec<usize> {
        (0..N_ACTIONS).collect()
    }

    #[test]
    fn greedy_picks_max_lowest_on_tie() {
        let mut rng = rng::seeded(0);
        let r = rewards_from(|i| if i == 3 { 1.0 } else { 0.0 });
        assert_eq!(
            select_action(&PolicySpec::greedy(), &r, &all(), &mut rng).unwrap(),
            3
        );
        let tie = rewards_from(|i| if i == 5 || i == 2 { 1.0 } else { 0.0 });
        assert_eq!(
            select_action(&PolicySpec::greedy(), &tie, &all(), &mut rng).unwrap(),
            2
        );
        assert_eq!(
            select_action(&PolicySpec::greedy(), &r, &[7, 9], &mut rng).unwrap(),
            7
        );
        assert!(select_action(&PolicySpec::greedy(), &r, &[], &mut rng).is_err());
    }

    #[test]
    fn stoch2_falls_back_to_argmax() {
        let mut rng = rng::seeded(0);
        let p = PolicySpec::of_kind(PolicyKind::Stoch2, 1);
        let r = rewards_from(|i| -1.0 - i as f64 + if i == 6 { 10.0 } else { 0.0 });
        assert_eq!(select_action(&p, &r, &all(), &mut rng).unwrap(), 6);
        let pos = rewards_from(|i| if i % 5 == 0 { 1.0 } else { -1.0 });
        for _ in 0..200 {
            assert_eq!(select_action(&p, &pos, &all(), &mut rng).unwrap() % 5, 0);
        }
    }

    #[test]
    fn stoch1_probabilities_renormalized() {
        let p = PolicySpec::of_kind(PolicyKind::Stoch1, 2);
        let s: f64 = p.stoch1_probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!((p.stoch1_probs[0] - 0.85 / 1.05).abs() < 1e-15);
        assert!(PolicySpec::new(PolicyKind::Stoch1, [1.0, 0.0, 1.0], 0).is_err());
    }

    #[test]
    fn stoch1_only_top_three() {
        let mut rng = rng::seeded(3);
        let p = PolicySpec::of_kind(PolicyKind::Stoch1, 2);
        let r = rewards_from(|i| i as f64);
        for _ in 0..1000 {
            assert!(select_action(&p, &r, &all(), &mut rng).unwrap() >= 21);
        }
        // top three after masking
        let mask = [0, 1, 2, 3];
        for _ in 0..1000 {
            assert!(select_action(&p, &r, &mask, &mut rng).unwrap() >= 1);
        }
        assert_eq!(select_action(&p, &r, &[4], &mut rng).unwrap(), 4);
    }

    #[test]
    fn schedule_phases() {
        let s = Schedule::default();
        assert_eq!(s.total_iterations(), 60);
        assert_eq!(s.class_at(0), Some(SizeClass::Large));
        assert_eq!(s.class_at(19), Some(SizeClass::Large));
        assert_eq!(s.class_at(20), Some(SizeClass::Small));
        assert_eq!(s.class_at(60), None);
        assert!(Schedule::two_stage(0, 0).validate().is_err());
    }

    fn pair(seed: u64) -> CloudPair {
        let shape = synth_shape(ShapeKind::Box, 256, &mut rng::seeded(seed)).unwrap();
        make_pair(
            &shape,
            &TransformSampleConfig::full_range(seed),
            &PerturbationConfig::clean(seed).with_points(128),
        )
        .unwrap()
    }

    #[test]
    fn oracle_loop_converges_on_large_rotation() {
        let mut p = pair(11);
        let axis = sample_unit_vector(&mut rng::seeded(12));
        p.gt = RigidTransform::new(
            AxisAngle::new(axis, 60f64.to_radians())
                .unwrap()
                .to_rotation(),
            Vector3::new(0.3, -0.2, 0.1),
        );
        p.target = apply_transform(&p.clean_source, &p.gt);
        let (est, trace) = run_registration(
            &Oracle::se3(),
            &p,
            &Schedule::default(),
            &PolicySpec::greedy(),
        )
        .unwrap();
        assert_eq!(trace.len(), 60);
        let set = ActionSet::default();
        assert!(trace.records[..20]
            .iter()
            .all(|r| set.get(r.action).unwrap().size_class == SizeClass::Large));
        assert!(rot_error_iso(&est.rotation, &p.gt.rotation) <= 2.0);
        assert!(trans_error(&est.translation, &p.gt.translation) <= 0.03);
        assert_eq!(replay(&trace.actions()).unwrap(), est);
    }

    #[test]
    fn identity_ground_truth_stays_within_one_step() {
        let mut p = pair(5);
        p.gt = RigidTransform::identity();
        p.target = p.clean_source.clone();
        let (est, _) = run_registration(
            &Oracle::se3(),
            &p,
            &Schedule::default(),
            &PolicySpec::greedy(),
        )
        .unwrap();
        assert!(rot_error_iso(&est.rotation, &p.gt.rotation) <= 0.5 + 1e-9);
    }

    #[test]
    fn stochastic_runs_are_reproducible() {
        let p = pair(8);
        let policy = PolicySpec::of_kind(PolicyKind::Stoch1, 99);
        let a = run_registration(&Oracle::se3(), &p, &Schedule::two_stage(5, 5), &policy).unwrap();
        let b = run_registration(&Oracle::se3(), &p, &Schedule::two_stage(5, 5), &policy).unwrap();
        assert_eq!(a.1.actions(), b.1.actions());
        assert_eq!(a.0, b.0);
    }

    struct Failing;

    impl RewardSource for Failing {
        fn rewards(&self, _: &CloudPair, acc: &AccumulatedTransform) -> Result<RewardVector> {
            if acc.translation.norm() > 0.15 {
                Err(Error::validation("boom"))
            } else {
                Ok(rewards_from(|i| if i == 13 { 1.0 } else { 0.0 }))
            }
        }
    }

    #[test]
    fn source_errors_carry_the_iteration() {
        let err = run_registration(
            &Failing,
            &pair(1),
            &Schedule::default(),
            &PolicySpec::greedy(),
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::RewardSource { iteration: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn estimate_to_cloud_examples() {
        let p = pair(2);
        assert_eq!(estimate_to_cloud(&p, &RigidTransform::identity()), p.source);
        let moved = estimate_to_cloud(&p, &p.gt);
        for (a, b) in moved.iter().zip(p.target.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn trace_csv_layout() {
        let p = pair(3);
        let (_, trace) = run_registration(
            &Oracle::se3(),
            &p,
            &Schedule::two_stage(2, 1),
            &PolicySpec::greedy(),
        )
        .unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&ActionSet::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], RegistrationTrace::CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split(',').count(), 6);
    }
}
