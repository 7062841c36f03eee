//! Point clouds, preprocessing and the pair-generation protocols.
//!
//! A [`CloudPair`] is built from a dense shape by [`make_pair`]:
//!
//! 1. the shape is centered and scaled into the unit sphere;
//! 2. the source side is subsampled; this noiseless sample is kept as
//!    `clean_source` for the metrics;
//! 3. the target side reuses that sample, or draws its own when
//!    `independent_resample` is set;
//! 4. each side is optionally cropped by a random plane, downsampled to the
//!    partial point count, and perturbed by clipped Gaussian noise;
//! 5. the ground-truth transform is applied to the target side.
//!
//! Noise therefore enters after normalization and before the target is
//! transformed.

mod io;
mod synth;

pub use io::{read_cloud, write_cloud, CloudFormat, ReadOptions, TriangleMesh};
pub use synth::{synth_shape, synth_shape_raw, ShapeKind, ShapeParams};

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom3::{RigidTransform, Vector3};
use crate::rng::{self, Rng};
use crate::rotsample::{sample_transform_with, sample_unit_vector, TransformSampleConfig};

/// Point count of the partial protocol after cropping.
pub const PARTIAL_POINTS: usize = 717;
/// Fraction of points kept by the plane crop in the partial protocol.
pub const PARTIAL_RETAIN_FRACTION: f64 = 0.70;
/// Standard deviation of the per-axis noise in the noisy protocols.
pub const NOISE_SIGMA: f64 = 0.01;
/// Per-axis clip of the noise perturbation.
pub const NOISE_CLIP: f64 = 0.05;
/// Points per cloud in all protocols before cropping.
pub const DEFAULT_POINTS: usize = 1024;

/// Non-empty ordered list of finite points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation(
                "point cloud must contain at least one point",
            ));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::validation(format!(
                "point {i} has non-finite coordinates"
            )));
        }
        Ok(Self { points })
    }

    /// For internal producers whose output is finite and non-empty by construction.
    pub(crate) fn from_vec_unchecked(points: Vec<Vector3>) -> Self {
        debug_assert!(!points.is_empty());
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vector3> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Vector3> {
        self.points
    }

    pub fn centroid(&self) -> Vector3 {
        self.points.iter().sum::<Vector3>() / self.points.len() as f64
    }

    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl FnMut(&Vector3) -> Vector3) -> PointCloud {
        PointCloud::from_vec_unchecked(self.points.iter().map(f).collect())
    }
}

/// Centers at the origin and scales so the farthest point has norm 1.
///
/// A cloud whose points all coincide is centered but not scaled.
pub fn normalize_unit_sphere(c: &PointCloud) -> PointCloud {
    let centroid = c.centroid();
    let centered: Vec<Vector3> = c.points.iter().map(|p| p - centroid).collect();
    let scale = centered.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if scale <= f64::MIN_POSITIVE {
        return PointCloud::from_vec_unchecked(centered);
    }
    PointCloud::from_vec_unchecked(centered.into_iter().map(|p| p / scale).collect())
}

/// `n` points drawn uniformly without replacement, in random order.
pub fn subsample(c: &PointCloud, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    if n > c.len() {
        return Err(Error::validation(format!(
            "cannot subsample {n} points from a cloud of {}",
            c.len()
        )));
    }
    if n == 0 {
        return Err(Error::validation("subsample size must be at least 1"));
    }
    let picked = index::sample(rng, c.len(), n);
    Ok(PointCloud::from_vec_unchecked(
        picked.iter().map(|i| c.points[i]).collect(),
    ))
}

/// Adds per-coordinate Gaussian noise of standard deviation `sigma`, each
/// perturbation clamped to `[−clip, clip]`.
pub fn add_noise(c: &PointCloud, sigma: f64, clip: f64, rng: &mut Rng) -> Result<PointCloud> {
    if !(sigma >= 0.0 && clip >= 0.0) {
        return Err(Error::validation(
            "noise sigma and clip must be non-negative",
        ));
    }
    if sigma == 0.0 {
        return Ok(c.clone());
    }
    Ok(c.map(|p| {
        let mut q = *p;
        for v in q.iter_mut() {
            let e: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
            *v += e.clamp(-clip, clip);
        }
        q
    }))
}

/// Number of points kept when retaining `fraction` of `count`.
pub fn retained_count(count: usize, fraction: f64) -> usize {
    // the epsilon keeps e.g. 0.7 · 1000 at 700 despite representation error
    ((fraction * count as f64 - 1e-9).ceil() as usize).clamp(1, count)
}

/// Keeps the `⌈fraction·count⌉` points farthest along `normal`, preserving order.
///
/// Equivalent to sliding a plane along its normal until the kept half-space
/// holds exactly that many points. Ties in the dot product go to the lower index.
pub fn crop_plane_with_normal(
    c: &PointCloud,
    retain_fraction: f64,
    normal: &Vector3,
) -> Result<PointCloud> {
    if !(retain_fraction > 0.0 && retain_fraction <= 1.0) {
        return Err(Error::validation(format!(
            "retain fraction must lie in (0, 1], got {retain_fraction}"
        )));
    }
    let k = retained_count(c.len(), retain_fraction);
    if k == c.len() {
        return Ok(c.clone());
    }
    let mut order: Vec<usize> = (0..c.len()).collect();
    let dots: Vec<f64> = c.points.iter().map(|p| p.dot(normal)).collect();
    order.sort_by(|&a, &b| dots[b].total_cmp(&dots[a]).then(a.cmp(&b)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(PointCloud::from_vec_unchecked(
        keep.into_iter().map(|i| c.points[i]).collect(),
    ))
}

/// Plane crop with a normal drawn uniformly on the sphere.
pub fn crop_plane(c: &PointCloud, retain_fraction: f64, rng: &mut Rng) -> Result<PointCloud> {
    let normal = sample_unit_vector(rng);
    crop_plane_with_normal(c, retain_fraction, &normal)
}

/// Maps every point to `R·p + t`, order preserved.
pub fn apply_transform(c: &PointCloud, t: &RigidTransform) -> PointCloud {
    c.map(|p| t.apply(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropOrder {
    /// Crop the full sample, then downsample to the partial count.
    CropThenDownsample,
    /// Downsample first, then crop.
    DownsampleThenCrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub n_points: usize,
    pub noise_sigma: f64,
    pub noise_clip: f64,
    pub independent_resample: bool,
    pub crop_fraction: f64,
    /// Cap on the per-side point count after cropping; `None` keeps all survivors.
    pub partial_points: Option<usize>,
    pub crop_order: CropOrder,
    pub seed: u64,
}

impl PerturbationConfig {
    /// Same sample on both sides, no noise, no crop.
    pub fn clean(seed: u64) -> Self {
        Self {
            n_points: DEFAULT_POINTS,
            noise_sigma: 0.0,
            noise_clip: 0.0,
            independent_resample: false,
            crop_fraction: 1.0,
            partial_points: None,
            crop_order: CropOrder::CropThenDownsample,
            seed,
        }
    }

    /// Independent resampling plus clipped Gaussian noise.
    pub fn noisy(seed: u64) -> Self {
        Self {
            noise_sigma: NOISE_SIGMA,
            noise_clip: NOISE_CLIP,
            independent_resample: true,
            ..Self::clean(seed)
        }
    }

    /// Noisy protocol plus a 70% plane crop downsampled to 717 points.
    pub fn partial(seed: u64) -> Self {
        Self {
            crop_fraction: PARTIAL_RETAIN_FRACTION,
            partial_points: Some(PARTIAL_POINTS),
            ..Self::noisy(seed)
        }
    }

    pub fn with_points(self, n_points: usize) -> Self {
        Self { n_points, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::validation("n_points must be positive"));
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(Error::validation(format!(
                "crop_fraction must lie in (0, 1], got {}",
                self.crop_fraction
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_clip >= 0.0) {
            return Err(Error::validation(
                "noise sigma and clip must be non-negative",
            ));
        }
        if self.partial_points == Some(0) {
            return Err(Error::validation("partial_points must be positive"));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.noise_sigma == 0.0 && !self.independent_resample && self.crop_fraction >= 1.0
    }
}

/// Observed source/target clouds plus the clean references and ground truth.
#[derive(Debug, Clone)]
pub struct CloudPair {
    /// Observed source (possibly noisy or cropped), in the canonical frame.
    pub source: PointCloud,
    /// Observed target, already moved by `gt`.
    pub target: PointCloud,
    /// Complete noiseless source sample in the canonical frame.
    pub clean_source: PointCloud,
    pub gt: RigidTransform,
}

impl CloudPair {
    /// Complete noiseless target, `gt` applied to `clean_source`.
    pub fn clean_target(&self) -> PointCloud {
        apply_transform(&self.clean_source, &self.gt)
    }
}

fn observe_side(
    sample: &PointCloud,
    pcfg: &PerturbationConfig,
    rng: &mut Rng,
) -> Result<PointCloud> {
    let mut c = sample.clone();
    if pcfg.crop_fraction < 1.0 || pcfg.partial_points.is_some() {
        let cap = |c: PointCloud, rng: &mut Rng| -> Result<PointCloud> {
            match pcfg.partial_points {
                Some(n) if n < c.len() => subsample(&c, n, rng),
                _ => Ok(c),
            }
        };
        c = match pcfg.crop_order {
            CropOrder::CropThenDownsample => {
                let cropped = crop_plane(&c, pcfg.crop_fraction, rng)?;
                cap(cropped, rng)?
            }
            CropOrder::DownsampleThenCrop => {
                let n = pcfg.partial_points.unwrap_or(c.len()).min(c.len());
                let down = subsample(&c, n, rng)?;
                crop_plane(&down, pcfg.crop_fraction, rng)?
            }
        };
    }
    add_noise(&c, pcfg.noise_sigma, pcfg.noise_clip, rng)
}

/// Builds a pair with an explicit generator (ignores the config seeds).
pub fn make_pair_with(
    shape: &PointCloud,
    tcfg: &TransformSampleConfig,
    pcfg: &PerturbationConfig,
    rng: &mut Rng,
) -> Result<CloudPair> {
    pcfg.validate()?;
    if shape.len() < pcfg.n_points {
        return Err(Error::validation(format!(
            "shape has {} points, protocol needs {}",
            shape.len(),
            pcfg.n_points
        )));
    }
    let gt = sample_transform_with(tcfg, rng)?;
    let shape = normalize_unit_sphere(shape);
    let source_sample = subsample(&shape, pcfg.n_points, rng)?;
    let target_sample = if pcfg.independent_resample {
        subsample(&shape, pcfg.n_points, rng)?
    } else {
        source_sample.clone()
    };
    let source = observe_side(&source_sample, pcfg, rng)?;
    let target_obs = observe_side(&target_sample, pcfg, rng)?;
    Ok(CloudPair {
        source,
        target: apply_transform(&target_obs, &gt),
        clean_source: source_sample,
        gt,
    })
}

/// Builds a pair from the seeds in the configs (`tcfg.seed` mixed with `pcfg.seed`).
pub fn make_pair(
    shape: &PointCloud,
    tcfg: &TransformSampleConfig,
    pcfg: &PerturbationConfig,
) -> Result<CloudPair> {
    let mut rng = rng::stream(tcfg.seed, pcfg.seed);
    make_pair_with(shape, tcfg, pcfg, &mut rng)
}

/// Set of bit patterns, for permutation checks in tests.
pub fn point_set(c: &PointCloud) -> HashSet<[u64; 3]> {
    c.iter()
        .map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom3::RotationMatrix;
    use crate::rotsample::SamplingMethod;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = rng::seeded(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.random::<f64>() * 4.0 - 1.0,
                        rng.random::<f64>() - 3.0,
                        rng.random::<f64>() * 2.0,
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![Vector3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let c = PointCloud::new(vec![
            Vector3::new(2.0, 0.0, 0.0),
            Vector3::new(-2.0, 0.0, 0.0),
        ])
        .unwrap();
        let n = normalize_unit_sphere(&c);
        assert_eq!(
            n.points(),
            &[Vector3::new(1.0, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0)]
        );

        let r = random_cloud(500, 4);
        let n = normalize_unit_sphere(&r);
        assert!(n.centroid().norm() < 1e-12);
        assert!((n.max_norm() - 1.0).abs() < 1e-12);
        let again = normalize_unit_sphere(&n);
        for (a, b) in again.iter().zip(n.iter()) {
            assert!((a - b).norm() < 1e-12);
        }

        let same = PointCloud::new(vec![Vector3::new(1.0, 2.0, 3.0); 4]).unwrap();
        let n = normalize_unit_sphere(&same);
        assert!(n.iter().all(|p| p.norm() == 0.0));
    }

    #[test]
    fn subsample_examples() {
        let c = random_cloud(50, 1);
        let mut rng = rng::seeded(2);
        let all = subsample(&c, 50, &mut rng).unwrap();
        assert_eq!(point_set(&all), point_set(&c));
        let one = subsample(&c, 1, &mut rng).unwrap();
        assert!(point_set(&c).is_superset(&point_set(&one)));
        assert!(subsample(&c, 51, &mut rng).is_err());
    }

    #[test]
    fn subsample_frequencies_are_uniform() {
        // each index is kept with probability n / count
        let c =
            PointCloud::new((0..20).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
        let (n, trials) = (5usize, 20_000usize);
        let mut counts = [0usize; 20];
        let mut rng = rng::seeded(11);
        for _ in 0..trials {
            for p in subsample(&c, n, &mut rng).unwrap().iter() {
                counts[p.x as usize] += 1;
            }
        }
        let p = n as f64 / 20.0;
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for &k in &counts {
            assert!((k as f64 - mean).abs() < 3.5 * sd, "{k} vs {mean}±{sd}");
        }
    }

    #[test]
    fn noise_examples() {
        let c = random_cloud(100, 5);
        let mut rng = rng::seeded(6);
        assert_eq!(add_noise(&c, 0.0, 0.05, &mut rng).unwrap(), c);

        let zeros = PointCloud::new(vec![Vector3::zeros(); 40_000]).unwrap();
        let noisy = add_noise(&zeros, NOISE_SIGMA, NOISE_CLIP, &mut rng).unwrap();
        let vals: Vec<f64> = noisy.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        assert!(vals.iter().all(|v| v.abs() <= NOISE_CLIP));
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!((sd - 0.01).abs() < 0.05 * 0.01, "sd {sd}");

        // a tight clip is enforced
        let clipped = add_noise(&zeros, 1.0, 0.05, &mut rng).unwrap();
        assert!(clipped.iter().all(|p| p.amax() <= 0.05));
    }

    #[test]
    fn crop_examples() {
        let c = random_cloud(1000, 7);
        let mut rng = rng::seeded(8);
        assert_eq!(crop_plane(&c, 1.0, &mut rng).unwrap(), c);
        assert_eq!(crop_plane(&c, 0.7, &mut rng).unwrap().len(), 700);
        assert_eq!(retained_count(1024, 0.7), 717);
        assert!(crop_plane(&c, 0.0, &mut rng).is_err());
        assert!(crop_plane(&c, 1.5, &mut rng).is_err());
    }

    #[test]
    fn crop_matches_brute_force_top_k() {
        let c = random_cloud(300, 9);
        let normal = Vector3::new(0.3, -0.8, 0.2).normalize();
        let kept = crop_plane_with_normal(&c, 0.7, &normal).unwrap();
        // brute force: a point is kept iff fewer than k points beat it
        let k = retained_count(300, 0.7);
        let dots: Vec<f64> = c.iter().map(|p| p.dot(&normal)).collect();
        let expected: Vec<Vector3> = (0..300)
            .filter(|&i| {
                let better = (0..300)
                    .filter(|&j| dots[j] > dots[i] || (dots[j] == dots[i] && j < i))
                    .count();
                better < k
            })
            .map(|i| c.points()[i])
            .collect();
        assert_eq!(kept.points(), expected.as_slice());
    }

    #[test]
    fn transform_examples() {
        let c = random_cloud(30, 10);
        assert_eq!(apply_transform(&c, &RigidTransform::identity()), c);
        let single = PointCloud::new(vec![Vector3::zeros()]).unwrap();
        let moved = apply_transform(&single, &RigidTransform::from_translation(Vector3::x()));
        assert_eq!(moved.points(), &[Vector3::x()]);
        let t = RigidTransform::new(RotationMatrix::about_y(0.8), Vector3::new(0.1, 2.0, -1.0));
        let back = apply_transform(&apply_transform(&c, &t), &t.inverse());
        for (a, b) in back.iter().zip(c.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn pair_protocols() {
        let shape = random_cloud(3000, 12);
        let tcfg = TransformSampleConfig::full_range(1234);

        let pair = make_pair(&shape, &tcfg, &PerturbationConfig::clean(1)).unwrap();
        assert_eq!(pair.target, apply_transform(&pair.source, &pair.gt));
        assert_eq!(pair.source, pair.clean_source);

        let partial = make_pair(&shape, &tcfg, &PerturbationConfig::partial(1)).unwrap();
        assert_eq!(partial.source.len(), PARTIAL_POINTS);
        assert_eq!(partial.target.len(), PARTIAL_POINTS);
        assert_eq!(partial.clean_source.len(), DEFAULT_POINTS);

        let other_order = PerturbationConfig {
            crop_order: CropOrder::DownsampleThenCrop,
            ..PerturbationConfig::partial(1)
        };
        let p2 = make_pair(&shape, &tcfg, &other_order).unwrap();
        assert_eq!(p2.source.len(), retained_count(PARTIAL_POINTS, 0.7));

        let a = make_pair(&shape, &tcfg, &PerturbationConfig::noisy(3)).unwrap();
        let b = make_pair(&shape, &tcfg, &PerturbationConfig::noisy(3)).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.target, b.target);
        assert_eq!(a.gt, b.gt);

        let naive = TransformSampleConfig {
            method: SamplingMethod::NaiveEuler,
            ..tcfg
        };
        assert!(make_pair(&shape, &naive, &PerturbationConfig::clean(1)).is_ok());
        let small = random_cloud(100, 1);
        assert!(make_pair(&small, &tcfg, &PerturbationConfig::clean(1)).is_err());
    }
}
