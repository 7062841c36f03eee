//! Point-to-point ICP with an SVD rigid solve.
//!
//! Used standalone as a classical baseline and as a refinement stage on top
//! of the agent's discrete estimate.

mod nn;

pub use nn::{nearest_brute, nearest_neighbor, nearest_with_distances, KdTree, BRUTE_FORCE_LIMIT};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::cloud::{apply_transform, CloudPair, PointCloud};
use crate::error::{Error, Result};
use crate::geom3::{RigidTransform, RotationMatrix, Vector3};

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]`.
///
/// The rotation is `V·diag(1, 1, d)·Uᵀ` from the SVD of the cross-covariance
/// with `d = sign(det(V·Uᵀ))`, so reflections are never returned.
pub fn kabsch(src: &[Vector3], dst: &[Vector3], weights: Option<&[f64]>) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::validation(format!(
            "correspondence count mismatch: {} vs {}",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!(
            "kabsch needs at least 3 correspondences, got {}",
            src.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != src.len() || w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::validation(
                "weights must be non-negative, one per correspondence",
            ));
        }
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..src.len()).map(w).sum();
    if total <= 0.0 {
        return Err(Error::Degenerate(
            "all correspondence weights are zero".into(),
        ));
    }
    let cs = (0..src.len()).map(|i| src[i] * w(i)).sum::<Vector3>() / total;
    let cd = (0..dst.len()).map(|i| dst[i] * w(i)).sum::<Vector3>() / total;
    let mut h = Matrix3::zeros();
    for i in 0..src.len() {
        h += (src[i] - cs) * (dst[i] - cd).transpose() * w(i);
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    if sv[0] <= f64::MIN_POSITIVE || sv[1] <= 1e-12 * sv[0] {
        return Err(Error::Degenerate(
            "cross-covariance has rank below 2".into(),
        ));
    }
    let u = svd
        .u
        .ok_or_else(|| Error::Degenerate("svd failed".into()))?;
    let v = svd
        .v_t
        .ok_or_else(|| Error::Degenerate("svd failed".into()))?
        .transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r =
        RotationMatrix::new(v * d * u.transpose()).map_err(|e| Error::Degenerate(e.to_string()))?;
    let t = cd - r.rotate(&cs);
    Ok(RigidTransform::new(r, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop when the mean squared correspondence distance changes by less than this.
    pub convergence_tol: f64,
    /// Correspondences farther apart than this are ignored.
    pub max_correspondence_distance: Option<f64>,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_tol: 1e-12,
            max_correspondence_distance: None,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.convergence_tol > 0.0) {
            return Err(Error::validation(
                "ICP needs a positive iteration count and tolerance",
            ));
        }
        if let Some(d) = self.max_correspondence_distance {
            if !(d > 0.0) {
                return Err(Error::validation("correspondence gate must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub iterations: usize,
    /// Mean squared nearest-neighbour distance at the start of each iteration
    /// plus one entry for the returned transform.
    pub mse_history: Vec<f64>,
    pub converged: bool,
    /// Set when a rigid solve failed; `transform` is then the best so far.
    pub degenerate: bool,
}

fn correspondences(
    moved: &[Vector3],
    target: &KdTree,
    gate: Option<f64>,
) -> (Vec<usize>, Vec<usize>, f64) {
    let gate2 = gate.map(|g| g * g);
    let mut src_idx = Vec::with_capacity(moved.len());
    let mut dst_idx = Vec::with_capacity(moved.len());
    let mut sum = 0.0;
    for (i, p) in moved.iter().enumerate() {
        let (j, d2) = if target.len() <= BRUTE_FORCE_LIMIT {
            nearest_brute(p, target.points())
        } else {
            target.nearest(p)
        };
        if gate2.is_none_or(|g| d2 <= g) {
            src_idx.push(i);
            dst_idx.push(j);
            sum += d2;
        }
    }
    let mse = if src_idx.is_empty() {
        f64::INFINITY
    } else {
        sum / src_idx.len() as f64
    };
    (src_idx, dst_idx, mse)
}

/// Alternates nearest-neighbour correspondences and [`kabsch`] starting at `init`.
pub fn icp(
    source: &PointCloud,
    target: &PointCloud,
    cfg: &IcpConfig,
    init: &RigidTransform,
) -> Result<IcpResult> {
    cfg.validate()?;
    let tree = KdTree::new(target.points());
    let mut current = *init;
    let mut history = Vec::new();
    let mut converged = false;
    let mut degenerate = false;
    let mut iterations = 0;
    let mut last_mse = f64::INFINITY;
    let mut last_pairs: Option<(Vec<usize>, Vec<usize>)> = None;
    while iterations < cfg.max_iterations {
        let moved = apply_transform(source, &current);
        let (si, di, mse) = correspondences(moved.points(), &tree, cfg.max_correspondence_distance);
        history.push(mse);
        // unchanged correspondences: the last solve is already their optimum
        let same = last_pairs
            .as_ref()
            .is_some_and(|(a, b)| *a == si && *b == di);
        if mse == 0.0 || same || (last_mse - mse).abs() < cfg.convergence_tol {
            converged = true;
            break;
        }
        last_mse = mse;
        let src: Vec<Vector3> = si.iter().map(|&i| moved.points()[i]).collect();
        let dst: Vec<Vector3> = di.iter().map(|&j| target.points()[j]).collect();
        match kabsch(&src, &dst, None) {
            Ok(step) => {
                last_pairs = Some((si, di));
                current = step.compose(&current);
                current.rotation = current.rotation.renormalize_if_drifting();
            }
            Err(Error::Degenerate(_)) => {
                degenerate = true;
                break;
            }
            Err(e) => return Err(e),
        }
        iterations += 1;
    }
    if !converged && !degenerate {
        let moved = apply_transform(source, &current);
        history.push(correspondences(moved.points(), &tree, cfg.max_correspondence_distance).2);
    }
    Ok(IcpResult {
        transform: current,
        iterations,
        mse_history: history,
        converged,
        degenerate,
    })
}

/// ICP initialized at the agent's estimate (the refined variant of the agent).
pub fn refine_with_icp(
    pair: &CloudPair,
    agent_estimate: &RigidTransform,
    cfg: &IcpConfig,
) -> Result<RigidTransform> {
    Ok(icp(&pair.source, &pair.target, cfg, agent_estimate)?.transform)
}
