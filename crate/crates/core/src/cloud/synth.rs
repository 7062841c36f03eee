//! Analytic shapes used in place of a mesh dataset at desk scale.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{normalize_unit_sphere, PointCloud};
use crate::error::{Error, Result};
use crate::geom3::Vector3;
use crate::rng::Rng;
use crate::rotsample::sample_unit_vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Sphere,
    Box,
    Helix,
    Torus,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::Sphere,
        ShapeKind::Box,
        ShapeKind::Helix,
        ShapeKind::Torus,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Helix => "helix",
            ShapeKind::Torus => "torus",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown shape kind `{s}`")))
    }
}

/// Shape family plus the parameters varied between synthetic categories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub kind: ShapeKind,
    /// Per-axis stretch (semi-axes for spheres, half extents for boxes).
    pub scale: [f64; 3],
    /// Helix turns.
    pub turns: f64,
    /// Torus tube radius relative to the ring radius.
    pub minor_ratio: f64,
}

impl ShapeParams {
    pub fn canonical(kind: ShapeKind) -> Self {
        Self {
            kind,
            scale: [1.0, 1.0, 1.0],
            turns: 3.0,
            minor_ratio: 0.3,
        }
    }

    /// Random variant of `kind`, used to fabricate distinct categories.
    pub fn jittered(kind: ShapeKind, rng: &mut Rng) -> Self {
        let mut s = || 0.45 + 0.55 * rng.random::<f64>();
        let scale = [s(), s(), s()];
        Self {
            kind,
            scale,
            turns: 1.5 + 3.0 * rng.random::<f64>(),
            minor_ratio: 0.15 + 0.3 * rng.random::<f64>(),
        }
    }
}

/// `n` surface samples of the canonical shape, normalized to the unit sphere.
pub fn synth_shape(kind: ShapeKind, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    Ok(normalize_unit_sphere(&synth_shape_raw(
        &ShapeParams::canonical(kind),
        n,
        rng,
    )?))
}

/// Surface samples before normalization.
///
/// Helix samples are emitted in increasing curve parameter, so their `z`
/// coordinate is non-decreasing.
pub fn synth_shape_raw(params: &ShapeParams, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::validation("shape sample count must be positive"));
    }
    if params.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::validation("shape scale must be positive"));
    }
    let [sx, sy, sz] = params.scale;
    let stretch = |p: Vector3| Vector3::new(p.x * sx, p.y * sy, p.z * sz);
    let points: Vec<Vector3> = match params.kind {
        ShapeKind::Sphere => (0..n).map(|_| stretch(sample_unit_vector(rng))).collect(),
        ShapeKind::Box => {
            // face pairs normal to x, y, z have areas ∝ sy·sz, sx·sz, sx·sy
            let areas = [sy * sz, sx * sz, sx * sy];
            let total: f64 = areas.iter().sum();
            (0..n)
                .map(|_| {
                    let pick = rng.random::<f64>() * total;
                    let axis = if pick < areas[0] {
                        0
                    } else if pick < areas[0] + areas[1] {
                        1
                    } else {
                        2
                    };
                    let mut p = Vector3::new(
                        2.0 * rng.random::<f64>() - 1.0,
                        2.0 * rng.random::<f64>() - 1.0,
                        2.0 * rng.random::<f64>() - 1.0,
                    );
                    p[axis] = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    stretch(p)
                })
                .collect()
        }
        ShapeKind::Helix => {
            let mut ts: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            ts.sort_by(f64::total_cmp);
            ts.into_iter()
                .map(|t| {
                    let a = TAU * params.turns * t;
                    stretch(Vector3::new(a.cos(), a.sin(), 2.0 * t - 1.0))
                })
                .collect()
        }
        ShapeKind::Torus => {
            let r = params.minor_ratio;
            let mut pts = Vec::with_capacity(n);
            while pts.len() < n {
                let phi = TAU * rng.random::<f64>();
                // area element ∝ 1 + r cos φ
                if rng.random::<f64>() * (1.0 + r) > 1.0 + r * phi.cos() {
                    continue;
                }
                let theta = TAU * rng.random::<f64>();
                let ring = 1.0 + r * phi.cos();
                pts.push(stretch(Vector3::new(
                    ring * theta.cos(),
                    ring * theta.sin(),
                    r * phi.sin(),
                )));
            }
            pts
        }
    };
    PointCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn sphere_is_on_unit_sphere() {
        let c = synth_shape(ShapeKind::Sphere, 2000, &mut rng::seeded(1)).unwrap();
        // normalization recenters on the sample centroid, so check the raw shape too
        assert!((c.max_norm() - 1.0).abs() < 1e-12);
        let raw = synth_shape_raw(
            &ShapeParams::canonical(ShapeKind::Sphere),
            2000,
            &mut rng::seeded(1),
        )
        .unwrap();
        assert!(raw.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn box_points_are_on_the_surface() {
        let raw = synth_shape_raw(
            &ShapeParams::canonical(ShapeKind::Box),
            3000,
            &mut rng::seeded(2),
        )
        .unwrap();
        assert!(raw.iter().all(|p| p.amax() == 1.0));
        let params = ShapeParams {
            scale: [1.0, 0.5, 0.25],
            ..ShapeParams::canonical(ShapeKind::Box)
        };
        let raw = synth_shape_raw(&params, 3000, &mut rng::seeded(2)).unwrap();
        assert!(raw
            .iter()
            .all(|p| (p.x.abs().max(2.0 * p.y.abs()).max(4.0 * p.z.abs()) - 1.0).abs() < 1e-12));
    }

    #[test]
    fn helix_parameter_is_monotone() {
        let c = synth_shape(ShapeKind::Helix, 500, &mut rng::seeded(3)).unwrap();
        assert!(c.points().windows(2).all(|w| w[0].z <= w[1].z));
    }

    #[test]
    fn torus_normalized() {
        let c = synth_shape(ShapeKind::Torus, 1000, &mut rng::seeded(4)).unwrap();
        assert_eq!(c.len(), 1000);
        assert!(c.centroid().norm() < 1e-12);
        assert!((c.max_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!("cone".parse::<ShapeKind>().is_err());
        assert_eq!("torus".parse::<ShapeKind>().unwrap(), ShapeKind::Torus);
    }
}
