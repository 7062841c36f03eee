//! Evaluation metrics: isotropic rotation and translation errors, the mean
//! L2 distance on the clean complete clouds, and the modified Chamfer
//! distance.
//!
//! The modified Chamfer distance measures each observed cloud against the
//! clean complete counterpart of the other:
//!
//! ```text
//! (1/|X|) Σ_{x∈X} min_{y∈Ŷ} ‖x − y‖² + (1/|Y|) Σ_{y∈Y} min_{x∈X̂} ‖y − x‖²
//! ```
//!
//! with `X` the observed source moved by the estimate, `Y` the observed
//! target, `Ŷ` the clean source moved by the ground truth and `X̂` the clean
//! source moved by the estimate. [`ChamferMode::Plain`] drops the clean
//! references and compares the observed clouds directly.

use serde::{Deserialize, Serialize};

use crate::cloud::{apply_transform, CloudPair, PointCloud};
use crate::geom3::{
    rotation_distance, translation_distance, RigidTransform, RotationMatrix, Vector3,
};
use crate::icp::nearest_with_distances;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rot_err_deg: f64,
    pub trans_err: f64,
    pub clean_l2: f64,
    pub mcd: f64,
}

impl EvalReport {
    /// Component-wise mean.
    pub fn mean(reports: &[EvalReport]) -> EvalReport {
        let n = reports.len().max(1) as f64;
        let sum = reports
            .iter()
            .fold(EvalReport::default(), |a, r| EvalReport {
                rot_err_deg: a.rot_err_deg + r.rot_err_deg,
                trans_err: a.trans_err + r.trans_err,
                clean_l2: a.clean_l2 + r.clean_l2,
                mcd: a.mcd + r.mcd,
            });
        EvalReport {
            rot_err_deg: sum.rot_err_deg / n,
            trans_err: sum.trans_err / n,
            clean_l2: sum.clean_l2 / n,
            mcd: sum.mcd / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChamferMode {
    #[default]
    Modified,
    Plain,
}

/// Geodesic angle of `R_gtᵀ·R_est` in degrees.
pub fn rot_error_iso(r_est: &RotationMatrix, r_gt: &RotationMatrix) -> f64 {
    rotation_distance(r_est, r_gt).to_degrees()
}

pub fn trans_error(t_est: &Vector3, t_gt: &Vector3) -> f64 {
    translation_distance(t_est, t_gt)
}

/// Mean over the clean source of `‖est(p) − gt(p)‖`.
pub fn clean_l2(pair: &CloudPair, est: &RigidTransform) -> f64 {
    let pts = pair.clean_source.points();
    pts.iter()
        .map(|p| (est.apply(p) - pair.gt.apply(p)).norm())
        .sum::<f64>()
        / pts.len() as f64
}

/// Mean squared nearest-neighbour distance from `from` into `to`.
pub fn one_sided_chamfer(from: &PointCloud, to: &PointCloud) -> f64 {
    let d = nearest_with_distances(from.points(), to.points());
    d.iter().map(|(_, d2)| d2).sum::<f64>() / d.len() as f64
}

pub fn chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    one_sided_chamfer(a, b) + one_sided_chamfer(b, a)
}

pub fn modified_chamfer(pair: &CloudPair, est: &RigidTransform) -> f64 {
    modified_chamfer_with(pair, est, ChamferMode::Modified)
}

pub fn modified_chamfer_with(pair: &CloudPair, est: &RigidTransform, mode: ChamferMode) -> f64 {
    let x = apply_transform(&pair.source, est);
    match mode {
        ChamferMode::Plain => chamfer(&x, &pair.target),
        ChamferMode::Modified => {
            let y_clean = pair.clean_target();
            let x_clean = apply_transform(&pair.clean_source, est);
            one_sided_chamfer(&x, &y_clean) + one_sided_chamfer(&pair.target, &x_clean)
        }
    }
}

pub fn evaluate(pair: &CloudPair, est: &RigidTransform) -> EvalReport {
    evaluate_with(pair, est, ChamferMode::Modified)
}

pub fn evaluate_with(pair: &CloudPair, est: &RigidTransform, mode: ChamferMode) -> EvalReport {
    EvalReport {
        rot_err_deg: rot_error_iso(&est.rotation, &pair.gt.rotation),
        trans_err: trans_error(&est.translation, &pair.gt.translation),
        clean_l2: clean_l2(pair, est),
        mcd: modified_chamfer_with(pair, est, mode),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{make_pair, synth_shape, PerturbationConfig, ShapeKind};
    use crate::rng;
    use crate::rotsample::TransformSampleConfig;
    use rand::Rng as _;

    fn toy_pair(points: Vec<Vector3>, gt: RigidTransform) -> CloudPair {
        let source = PointCloud::new(points).unwrap();
        CloudPair {
            target: apply_transform(&source, &gt),
            clean_source: source.clone(),
            source,
            gt,
        }
    }

    #[test]
    fn rotation_error_examples() {
        let r = RotationMatrix::about_y(0.3);
        assert_eq!(rot_error_iso(&r, &r), 0.0);
        let e = rot_error_iso(
            &RotationMatrix::about_z(10f64.to_radians()),
            &RotationMatrix::identity(),
        );
        assert!((e - 10.0).abs() < 1e-9);
        let (a, b) = (RotationMatrix::about_x(0.2), RotationMatrix::about_z(-0.5));
        assert!((rot_error_iso(&a, &b) - rot_error_iso(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn translation_error_examples() {
        let v = Vector3::new(0.1, 0.0, 0.0);
        assert_eq!(trans_error(&v, &v), 0.0);
        assert!((trans_error(&v, &Vector3::zeros()) - 0.1).abs() < 1e-15);
        let mut rng = rng::seeded(5);
        for _ in 0..1000 {
            let mut r = || Vector3::new(rng.random(), rng.random(), rng.random());
            let (a, b, c) = (r(), r(), r());
            assert!(trans_error(&a, &c) <= trans_error(&a, &b) + trans_error(&b, &c) + 1e-15);
        }
    }

    #[test]
    fn clean_l2_examples() {
        let gt = RigidTransform::new(RotationMatrix::about_x(0.4), Vector3::new(0.1, 0.2, 0.3));
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ];
        let pair = toy_pair(pts.clone(), gt);
        assert_eq!(clean_l2(&pair, &gt), 0.0);
        let d = Vector3::new(0.03, -0.04, 0.0);
        let shifted = RigidTransform::new(gt.rotation, gt.translation + d);
        assert!((clean_l2(&pair, &shifted) - d.norm()).abs() < 1e-15);

        let est = RigidTransform::new(RotationMatrix::about_z(0.1), Vector3::new(0.0, 0.2, 0.0));
        let by_hand: f64 = pts
            .iter()
            .map(|p| {
                let a = est.rotation.matrix() * p + est.translation;
                let b = gt.rotation.matrix() * p + gt.translation;
                ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
            })
            .sum::<f64>()
            / 4.0;
        assert!((clean_l2(&pair, &est) - by_hand).abs() < 1e-15);
    }

    #[test]
    fn chamfer_examples() {
        let d = Vector3::new(0.1, 0.2, -0.3);
        let pair = toy_pair(vec![Vector3::zeros()], RigidTransform::from_translation(d));
        assert_eq!(modified_chamfer(&pair, &pair.gt), 0.0);
        let est = RigidTransform::identity();
        assert!((modified_chamfer(&pair, &est) - 2.0 * d.norm_squared()).abs() < 1e-15);
        assert!(
            (modified_chamfer_with(&pair, &est, ChamferMode::Plain) - 2.0 * d.norm_squared()).abs()
                < 1e-15
        );
    }

    #[test]
    fn chamfer_matches_exhaustive_minimum() {
        let a = PointCloud::new(vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
        ])
        .unwrap();
        let b = PointCloud::new(vec![
            Vector3::new(0.1, 0.0, 0.0),
            Vector3::new(0.0, 1.5, 0.5),
            Vector3::new(3.0, 0.0, 0.0),
        ])
        .unwrap();
        let side = |p: &PointCloud, q: &PointCloud| {
            p.iter()
                .map(|x| {
                    q.iter()
                        .map(|y| (x - y).norm_squared())
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / p.len() as f64
        };
        assert!((chamfer(&a, &b) - (side(&a, &b) + side(&b, &a))).abs() < 1e-15);
    }

    #[test]
    fn all_metrics_zero_at_ground_truth() {
        let shape = synth_shape(ShapeKind::Torus, 2048, &mut rng::seeded(1)).unwrap();
        let pair = make_pair(
            &shape,
            &TransformSampleConfig::full_range(3),
            &PerturbationConfig::clean(4),
        )
        .unwrap();
        let r = evaluate(&pair, &pair.gt);
        assert_eq!(r, EvalReport::default());
    }

    #[test]
    fn clean_l2_ignores_perturbations() {
        let shape = synth_shape(ShapeKind::Box, 4096, &mut rng::seeded(2)).unwrap();
        let tcfg = TransformSampleConfig::full_range(3);
        let clean = make_pair(&shape, &tcfg, &PerturbationConfig::clean(4)).unwrap();
        let partial = make_pair(&shape, &tcfg, &PerturbationConfig::partial(4)).unwrap();
        // same seeds draw the same transform and the same first sample
        assert_eq!(clean.gt, partial.gt);
        assert_eq!(clean.clean_source, partial.clean_source);
        let est = RigidTransform::from_translation(Vector3::new(0.01, 0.0, 0.0)).compose(&clean.gt);
        assert_eq!(clean_l2(&clean, &est), clean_l2(&partial, &est));
        assert!(modified_chamfer(&partial, &est) >= 0.0);
    }
}
