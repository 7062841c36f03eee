//! The discrete action set, decoupled action application and reward oracles.
//!
//! Actions are axis-aligned rotations of ±0.5° and ±10° and translations of
//! ±0.01 and ±0.1. Their canonical order is rotations first, then
//! translations; within each kind the index runs over axis (x, y, z), then
//! sign (+, −), then magnitude (small, large):
//!
//! ```text
//!  0 rx+0.5   1 rx+10   2 rx-0.5   3 rx-10    4 ry+0.5 ... 11 rz-10
//! 12 tx+0.01 13 tx+0.1 14 tx-0.01 15 tx-0.1  16 ty+0.01 ... 23 tz-0.1
//! ```
//!
//! Actions are accumulated in decoupled form: a rotation action
//! left-multiplies the accumulated rotation and leaves the accumulated
//! translation untouched, a translation action is added to the accumulated
//! translation. The estimate applied to a cloud is `R_acc·p + t_acc`.
//!
//! The SE(3) oracle reward of an action is the reduction of the distance
//! between the residual transform and the identity. The residual is
//! `(R_gt·R_accᵀ, t_gt − t_acc)`, which is the identity exactly when the
//! accumulated estimate reproduces the ground truth.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cloud::CloudPair;
use crate::error::{Error, Result};
use crate::geom3::{rotation_distance, RigidTransform, RotationMatrix, Vector3};
use crate::metrics::{clean_l2, modified_chamfer};

/// Number of actions in the canonical set.
pub const N_ACTIONS: usize = 24;
/// Rotation actions occupy indices `0..N_ROTATIONS`.
pub const N_ROTATIONS: usize = 12;

pub const SMALL_ROTATION_DEG: f64 = 0.5;
pub const LARGE_ROTATION_DEG: f64 = 10.0;
pub const SMALL_TRANSLATION: f64 = 0.01;
pub const LARGE_TRANSLATION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Rotation,
    Translation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn unit(&self) -> Vector3 {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }

    fn letter(&self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(&self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(&self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Large,
    Small,
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeClass::Large => "large",
            SizeClass::Small => "small",
        })
    }
}

/// One rotation or translation increment. Rotation magnitudes are radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub kind: ActionKind,
    pub axis: Axis,
    pub sign: Sign,
    pub magnitude: f64,
    pub size_class: SizeClass,
}

impl ActionSpec {
    /// Short name such as `rx+10` or `tz-0.01`.
    pub fn name(&self) -> String {
        let s = match self.sign {
            Sign::Plus => '+',
            Sign::Minus => '-',
        };
        match self.kind {
            ActionKind::Rotation => format!(
                "r{}{}{}",
                self.axis.letter(),
                s,
                self.magnitude.to_degrees().round_ties_even_to(1)
            ),
            ActionKind::Translation => format!("t{}{}{}", self.axis.letter(), s, self.magnitude),
        }
    }

    /// Signed angle (radians) or signed displacement along the axis.
    pub fn signed_magnitude(&self) -> f64 {
        self.sign.value() * self.magnitude
    }

    /// The action as a rotation matrix (identity for translations).
    pub fn rotation(&self) -> RotationMatrix {
        match self.kind {
            ActionKind::Translation => RotationMatrix::identity(),
            ActionKind::Rotation => {
                let a = self.signed_magnitude();
                match self.axis {
                    Axis::X => RotationMatrix::about_x(a),
                    Axis::Y => RotationMatrix::about_y(a),
                    Axis::Z => RotationMatrix::about_z(a),
                }
            }
        }
    }

    /// The action as a translation vector (zero for rotations).
    pub fn translation(&self) -> Vector3 {
        match self.kind {
            ActionKind::Rotation => Vector3::zeros(),
            ActionKind::Translation => self.axis.unit() * self.signed_magnitude(),
        }
    }

    pub fn negated(&self) -> ActionSpec {
        ActionSpec {
            sign: self.sign.flipped(),
            ..*self
        }
    }
}

trait RoundTo {
    fn round_ties_even_to(self, decimals: i32) -> f64;
}

impl RoundTo for f64 {
    fn round_ties_even_to(self, decimals: i32) -> f64 {
        let s = 10f64.powi(decimals);
        (self * s).round() / s
    }
}

/// Ordered list of the 24 actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSet {
    actions: Vec<ActionSpec>,
}

impl Default for ActionSet {
    fn default() -> Self {
        default_action_set()
    }
}

/// The canonical 24-action set.
pub fn default_action_set() -> ActionSet {
    let mut actions = Vec::with_capacity(N_ACTIONS);
    for (kind, small, large) in [
        (
            ActionKind::Rotation,
            SMALL_ROTATION_DEG.to_radians(),
            LARGE_ROTATION_DEG.to_radians(),
        ),
        (
            ActionKind::Translation,
            SMALL_TRANSLATION,
            LARGE_TRANSLATION,
        ),
    ] {
        for axis in Axis::ALL {
            for sign in [Sign::Plus, Sign::Minus] {
                for (magnitude, size_class) in
                    [(small, SizeClass::Small), (large, SizeClass::Large)]
                {
                    actions.push(ActionSpec {
                        kind,
                        axis,
                        sign,
                        magnitude,
                        size_class,
                    });
                }
            }
        }
    }
    ActionSet { actions }
}

impl ActionSet {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&ActionSpec> {
        self.actions.get(index)
    }

    pub fn actions(&self) -> &[ActionSpec] {
        &self.actions
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ActionSpec> {
        self.actions.iter()
    }

    /// Indices of all actions in `class`, ascending.
    pub fn indices_of_class(&self, class: SizeClass) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.actions[i].size_class == class)
            .collect()
    }

    /// Index of the sign-negated partner of action `index`.
    pub fn partner(&self, index: usize) -> Option<usize> {
        let neg = self.actions.get(index)?.negated();
        self.actions.iter().position(|a| *a == neg)
    }

    /// `[{"index": i, "name": ..., "spec": {...}}, ...]`, stored next to trained weights.
    pub fn describe(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.actions
                .iter()
                .enumerate()
                .map(|(i, a)| serde_json::json!({ "index": i, "name": a.name(), "spec": a }))
                .collect(),
        )
    }

    pub fn from_description(v: &serde_json::Value) -> Result<Self> {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::validation("action set description must be a list"))?;
        let actions = arr
            .iter()
            .map(|e| serde_json::from_value::<ActionSpec>(e["spec"].clone()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(ActionSet { actions })
    }
}

/// Accumulated estimate under decoupled application.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AccumulatedTransform {
    pub rotation: RotationMatrix,
    pub translation: Vector3,
}

impl AccumulatedTransform {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        Self {
            rotation: t.rotation,
            translation: t.translation,
        }
    }

    /// The estimate as `p ↦ R_acc·p + t_acc`.
    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::new(self.rotation, self.translation)
    }
}

/// Rotation actions left-multiply the rotation; translation actions add to the translation.
pub fn apply_action(acc: &AccumulatedTransform, a: &ActionSpec) -> AccumulatedTransform {
    match a.kind {
        ActionKind::Rotation => AccumulatedTransform {
            rotation: a.rotation().mul(&acc.rotation).renormalize_if_drifting(),
            translation: acc.translation,
        },
        ActionKind::Translation => AccumulatedTransform {
            rotation: acc.rotation,
            translation: acc.translation + a.translation(),
        },
    }
}

/// What remains to be applied to reach the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualState {
    pub rotation: RotationMatrix,
    pub translation: Vector3,
}

impl ResidualState {
    pub fn from_transform(t: &RigidTransform) -> Self {
        Self {
            rotation: t.rotation,
            translation: t.translation,
        }
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::new(self.rotation, self.translation)
    }

    /// `D(s, 𝟙) = ‖t‖ + angle(R)`.
    pub fn distance_to_identity(&self) -> f64 {
        self.translation.norm() + rotation_distance(&self.rotation, &RotationMatrix::identity())
    }

    /// The residual after taking action `a`.
    pub fn after(&self, a: &ActionSpec) -> ResidualState {
        match a.kind {
            ActionKind::Rotation => ResidualState {
                rotation: self.rotation.mul(&a.rotation().transpose()),
                translation: self.translation,
            },
            ActionKind::Translation => ResidualState {
                rotation: self.rotation,
                translation: self.translation - a.translation(),
            },
        }
    }
}

/// `(R_gt·R_accᵀ, t_gt − t_acc)`.
pub fn residual(gt: &RigidTransform, acc: &AccumulatedTransform) -> ResidualState {
    ResidualState {
        rotation: gt.rotation.mul(&acc.rotation.transpose()),
        translation: gt.translation - acc.translation,
    }
}

/// Reduction of the SE(3) distance to the identity when taking `a` in state `s`.
///
/// The distance is split into its translation and rotation terms and the two
/// differences are added, so the term an action does not touch contributes
/// exactly `0.0` and the reward is bit-invariant to it.
pub fn oracle_reward_se3(a: &ActionSpec, s: &ResidualState) -> f64 {
    let next = s.after(a);
    let identity = RotationMatrix::identity();
    let dt = s.translation.norm() - next.translation.norm();
    let dr =
        rotation_distance(&s.rotation, &identity) - rotation_distance(&next.rotation, &identity);
    dt + dr
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointDistance {
    /// Mean L2 distance on the clean complete clouds.
    L2Clean,
    /// Modified Chamfer distance.
    Mcd,
}

/// Estimate after taking `a` from `acc`, with rotations about `pivot`.
pub fn step_about_pivot(
    acc: &AccumulatedTransform,
    a: &ActionSpec,
    pivot: &Vector3,
) -> RigidTransform {
    match a.kind {
        ActionKind::Translation => apply_action(acc, a).to_transform(),
        ActionKind::Rotation => {
            // p ↦ R_a(R_acc p + t_acc − c) + c
            let ra = a.rotation();
            RigidTransform::new(
                ra.mul(&acc.rotation),
                ra.rotate(&(acc.translation - pivot)) + pivot,
            )
        }
    }
}

fn point_distance(pair: &CloudPair, est: &RigidTransform, kind: PointDistance) -> f64 {
    match kind {
        PointDistance::L2Clean => clean_l2(pair, est),
        PointDistance::Mcd => modified_chamfer(pair, est),
    }
}

/// Point-based reward `D(X, Y) − D(X'_a, Y)`.
///
/// `X` is the observed source under the current estimate and `X'_a` the same
/// after action `a`; rotation actions turn about the centroid of `X`.
pub fn oracle_reward_points(
    a: &ActionSpec,
    pair: &CloudPair,
    acc: &AccumulatedTransform,
    kind: PointDistance,
) -> f64 {
    let current = acc.to_transform();
    let before = point_distance(pair, &current, kind);
    let pivot = current.apply(&pair.source.centroid());
    let after = point_distance(pair, &step_about_pivot(acc, a, &pivot), kind);
    before - after
}

/// One reward per action, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardVector(pub [f64; N_ACTIONS]);

impl Default for RewardVector {
    fn default() -> Self {
        RewardVector([0.0; N_ACTIONS])
    }
}

impl RewardVector {
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; N_ACTIONS] = v.try_into().map_err(|_| {
            Error::validation(format!(
                "reward vector needs {N_ACTIONS} entries, got {}",
                v.len()
            ))
        })?;
        if arr.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("reward vector has non-finite entries"));
        }
        Ok(RewardVector(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }
}

impl std::ops::Index<usize> for RewardVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Which oracle fills a [`RewardVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardOracle {
    Se3,
    L2Clean,
    Mcd,
}

pub fn reward_vector_se3(set: &ActionSet, s: &ResidualState) -> RewardVector {
    let mut out = [0.0; N_ACTIONS];
    for (o, a) in out.iter_mut().zip(set.iter()) {
        *o = oracle_reward_se3(a, s);
    }
    RewardVector(out)
}

pub fn reward_vector_points(
    set: &ActionSet,
    pair: &CloudPair,
    acc: &AccumulatedTransform,
    kind: PointDistance,
) -> RewardVector {
    let mut out = [0.0; N_ACTIONS];
    for (o, a) in out.iter_mut().zip(set.iter()) {
        *o = oracle_reward_points(a, pair, acc, kind);
    }
    RewardVector(out)
}

/// Oracle rewards for the state reached by `acc` on `pair`.
pub fn reward_vector(
    oracle: RewardOracle,
    set: &ActionSet,
    pair: &CloudPair,
    acc: &AccumulatedTransform,
) -> RewardVector {
    match oracle {
        RewardOracle::Se3 => reward_vector_se3(set, &residual(&pair.gt, acc)),
        RewardOracle::L2Clean => reward_vector_points(set, pair, acc, PointDistance::L2Clean),
        RewardOracle::Mcd => reward_vector_points(set, pair, acc, PointDistance::Mcd),
    }
}

/// How rewards are grouped before unit-norm scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardGrouping {
    /// Four groups of six, one per step size (0.5°, 10°, 0.01, 0.1).
    #[default]
    ByMagnitude,
    /// Two groups of twelve, one per size class.
    BySizeClass,
}

/// Group index of every action under `grouping`.
pub fn reward_groups(set: &ActionSet, grouping: RewardGrouping) -> Vec<usize> {
    set.iter()
        .map(|a| match (grouping, a.kind, a.size_class) {
            (RewardGrouping::ByMagnitude, ActionKind::Rotation, SizeClass::Small) => 0,
            (RewardGrouping::ByMagnitude, ActionKind::Rotation, SizeClass::Large) => 1,
            (RewardGrouping::ByMagnitude, ActionKind::Translation, SizeClass::Small) => 2,
            (RewardGrouping::ByMagnitude, ActionKind::Translation, SizeClass::Large) => 3,
            (RewardGrouping::BySizeClass, _, SizeClass::Small) => 0,
            (RewardGrouping::BySizeClass, _, SizeClass::Large) => 1,
        })
        .collect()
}

/// Scales every group to unit L2 norm; all-zero groups pass through.
pub fn normalize_rewards_per_group(v: &RewardVector, grouping: RewardGrouping) -> RewardVector {
    let set = default_action_set();
    let groups = reward_groups(&set, grouping);
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    let mut norms = vec![0.0; n_groups];
    for (g, x) in groups.iter().zip(v.iter()) {
        norms[*g] += x * x;
    }
    let mut out = v.0;
    for (o, g) in out.iter_mut().zip(&groups) {
        let n = norms[*g].sqrt();
        if n > 0.0 {
            *o /= n;
        }
    }
    RewardVector(out)
}
