//! Transform samplers.
//!
//! [`SamplingMethod::Haar`] draws rotations from the Haar measure of SO(3)
//! restricted to a maximum angle: the axis is uniform on the sphere and the
//! angle has density proportional to `1 − cos θ` on `[0, Θ]`. Its CDF
//! `F(θ) = (θ − sin θ) / (Θ − sin Θ)` has no closed-form inverse and is
//! inverted by bisection.
//!
//! [`SamplingMethod::NaiveEuler`] draws three Euler angles uniformly in
//! `[−m, m]` and composes them as `R = Rz(γ)·Ry(β)·Rx(α)` (ZYX). This is the
//! common but biased approach; it is kept for the sampling ablation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom3::{rodrigues, RigidTransform, RotationMatrix, Vector3};
use crate::rng::{self, Rng};

const BISECTION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMethod {
    Haar,
    NaiveEuler,
}

impl fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMethod::Haar => "haar",
            SamplingMethod::NaiveEuler => "naive_euler",
        })
    }
}

impl FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" | "isotropic" => Ok(SamplingMethod::Haar),
            "naive_euler" | "naive" => Ok(SamplingMethod::NaiveEuler),
            other => Err(Error::validation(format!(
                "unknown sampling method `{other}`"
            ))),
        }
    }
}

/// How a random rigid transform is drawn.
///
/// `max_angle` caps the axis-angle for Haar sampling and each Euler angle
/// for naive sampling. A zero cap yields the identity rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSampleConfig {
    pub method: SamplingMethod,
    pub max_angle: f64,
    pub max_translation: f64,
    pub seed: u64,
}

impl TransformSampleConfig {
    /// Haar rotations up to 60° and translations in `[−0.5, 0.5]` per axis.
    pub fn full_range(seed: u64) -> Self {
        Self {
            method: SamplingMethod::Haar,
            max_angle: 60f64.to_radians(),
            max_translation: 0.5,
            seed,
        }
    }

    /// Curriculum warm-up range: rotations up to 10°, translations up to 0.5/7.
    pub fn small_range(seed: u64) -> Self {
        Self {
            method: SamplingMethod::Haar,
            max_angle: 10f64.to_radians(),
            max_translation: 0.5 / 7.0,
            seed,
        }
    }

    /// Naive Euler test set with a 32° cap per axis.
    pub fn naive_test(seed: u64) -> Self {
        Self {
            method: SamplingMethod::NaiveEuler,
            max_angle: 32f64.to_radians(),
            max_translation: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_angle_cap(self.max_angle)?;
        check_translation_cap(self.max_translation)
    }
}

fn check_angle_cap(max_angle: f64) -> Result<()> {
    if !(0.0..=PI).contains(&max_angle) {
        return Err(Error::validation(format!(
            "rotation cap must lie in (0, π], got {max_angle}"
        )));
    }
    Ok(())
}

fn check_translation_cap(max: f64) -> Result<()> {
    if !(max >= 0.0 && max.is_finite()) {
        return Err(Error::validation(format!(
            "translation cap must be finite and non-negative, got {max}"
        )));
    }
    Ok(())
}

/// `x − sin x`, accurate for small `x` where the subtraction cancels.
pub fn x_minus_sin(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // x³/3! − x⁵/5! + x⁷/7! − x⁹/9!
        let x2 = x * x;
        x * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
    } else {
        x - x.sin()
    }
}

/// CDF of the Haar angle marginal truncated to `[0, cap]`.
pub fn haar_angle_cdf(theta: f64, cap: f64) -> f64 {
    if cap <= 0.0 {
        return 1.0;
    }
    let theta = theta.clamp(0.0, cap);
    x_minus_sin(theta) / x_minus_sin(cap)
}

/// Inverts [`haar_angle_cdf`] by bisection.
pub fn haar_angle_quantile(u: f64, cap: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, cap);
    let target = u * x_minus_sin(cap);
    while hi - lo > BISECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if x_minus_sin(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Uniform direction on the unit sphere from a normalized Gaussian draw.
pub fn sample_unit_vector(rng: &mut Rng) -> Vector3 {
    loop {
        let v = Vector3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

pub fn sample_rotation_haar(max_angle: f64, rng: &mut Rng) -> Result<RotationMatrix> {
    check_angle_cap(max_angle)?;
    let axis = sample_unit_vector(rng);
    let u: f64 = rng.random();
    let angle = haar_angle_quantile(u, max_angle);
    Ok(rodrigues(&axis, angle))
}

pub fn sample_rotation_naive(max_euler: f64, rng: &mut Rng) -> Result<RotationMatrix> {
    check_angle_cap(max_euler)?;
    let mut draw = || (2.0 * rng.random::<f64>() - 1.0) * max_euler;
    let (alpha, beta, gamma) = (draw(), draw(), draw());
    Ok(euler_zyx(alpha, beta, gamma))
}

/// `Rz(gamma)·Ry(beta)·Rx(alpha)`.
pub fn euler_zyx(alpha: f64, beta: f64, gamma: f64) -> RotationMatrix {
    RotationMatrix::about_z(gamma)
        .mul(&RotationMatrix::about_y(beta))
        .mul(&RotationMatrix::about_x(alpha))
}

pub fn sample_translation(max_component: f64, rng: &mut Rng) -> Result<Vector3> {
    check_translation_cap(max_component)?;
    let mut draw = || (2.0 * rng.random::<f64>() - 1.0) * max_component;
    Ok(Vector3::new(draw(), draw(), draw()))
}

/// Draws one transform from `rng`; the config seed is not consulted here.
pub fn sample_transform_with(cfg: &TransformSampleConfig, rng: &mut Rng) -> Result<RigidTransform> {
    cfg.validate()?;
    let rotation = match cfg.method {
        SamplingMethod::Haar => sample_rotation_haar(cfg.max_angle, rng)?,
        SamplingMethod::NaiveEuler => sample_rotation_naive(cfg.max_angle, rng)?,
    };
    let translation = sample_translation(cfg.max_translation, rng)?;
    Ok(RigidTransform::new(rotation, translation))
}

/// Draws one transform from a generator seeded with `cfg.seed`.
pub fn sample_transform(cfg: &TransformSampleConfig) -> Result<RigidTransform> {
    sample_transform_with(cfg, &mut rng::seeded(cfg.seed))
}

/// Stateful sampler producing a reproducible stream of transforms.
pub struct TransformSampler {
    cfg: TransformSampleConfig,
    rng: Rng,
}

impl TransformSampler {
    pub fn new(cfg: TransformSampleConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            rng: rng::seeded(cfg.seed),
            cfg,
        })
    }

    pub fn config(&self) -> &TransformSampleConfig {
        &self.cfg
    }
}

impl Iterator for TransformSampler {
    type Item = RigidTransform;

    fn next(&mut self) -> Option<RigidTransform> {
        // config was validated at construction
        sample_transform_with(&self.cfg, &mut self.rng).ok()
    }
}
