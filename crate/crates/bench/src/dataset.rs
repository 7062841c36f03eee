//! Shape collections and the category split.
//!
//! A dataset is an ordered list of entries, each tagged with a category. The
//! first half of the categories (in order of first appearance) is used for
//! training and validation, the second half only for testing, so test shapes
//! always come from categories the network has never seen.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use regagent_core::cloud::{
    normalize_unit_sphere, read_cloud, synth_shape_raw, CloudFormat, PointCloud, ReadOptions,
    ShapeKind, ShapeParams,
};
use regagent_core::rng;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetSpec {
    /// Jittered analytic shapes; category `c` uses family `c mod 4`.
    Synthetic {
        categories: usize,
        instances_per_category: usize,
        points: usize,
    },
    /// CSV with `category,path` rows; relative paths resolve against the manifest.
    Manifest { path: PathBuf },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            categories: 8,
            instances_per_category: 10,
            points: 1024,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::Synthetic {
                categories,
                instances_per_category,
                points,
            } => {
                if *categories < 2 || *instances_per_category == 0 || *points == 0 {
                    return Err(BenchError::Usage(
                        "synthetic dataset needs at least 2 categories, 1 instance and 1 point"
                            .into(),
                    ));
                }
                Ok(())
            }
            DatasetSpec::Manifest { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ShapeSource {
    Synthetic {
        params: ShapeParams,
        points: usize,
        seed: u64,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub category: String,
    pub source: ShapeSource,
}

impl ShapeEntry {
    /// Loads the shape normalized to the unit sphere; meshes get `points` surface samples.
    pub fn load(&self, points: usize) -> Result<PointCloud> {
        match &self.source {
            ShapeSource::Synthetic {
                params,
                points,
                seed,
            } => Ok(normalize_unit_sphere(&synth_shape_raw(
                params,
                *points,
                &mut rng::seeded(*seed),
            )?)),
            ShapeSource::File(path) => {
                let format = CloudFormat::from_path(path)?;
                let opts = ReadOptions {
                    mesh_samples: points,
                    ..ReadOptions::default()
                };
                let cloud =
                    read_cloud(path, format, &opts).map_err(|e| BenchError::Data(e.to_string()))?;
                Ok(normalize_unit_sphere(&cloud))
            }
        }
    }
}

/// Fabricates the synthetic categories.
pub fn synthetic_entries(
    categories: usize,
    instances: usize,
    points: usize,
    seed: u64,
) -> Vec<ShapeEntry> {
    let mut out = Vec::with_capacity(categories * instances);
    for c in 0..categories {
        let kind = ShapeKind::ALL[c % ShapeKind::ALL.len()];
        let params = ShapeParams::jittered(kind, &mut rng::stream(seed, c as u64));
        for i in 0..instances {
            out.push(ShapeEntry {
                category: format!("{kind}_{c:02}"),
                source: ShapeSource::Synthetic {
                    params,
                    points,
                    seed: seed ^ (((c as u64) << 32) | i as u64),
                },
            });
        }
    }
    out
}

pub fn read_manifest(path: &Path) -> Result<Vec<ShapeEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| BenchError::Data(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BenchError::Data(format!("{}: missing `{name}` column", path.display())))
    };
    let (ci, pi) = (col("category")?, col("path")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let category = rec.get(ci).unwrap_or_default().to_string();
        if category.is_empty() {
            return Err(BenchError::Data(format!(
                "{}: empty category",
                path.display()
            )));
        }
        let p = PathBuf::from(rec.get(pi).unwrap_or_default());
        let p = if p.is_absolute() { p } else { base.join(p) };
        out.push(ShapeEntry {
            category,
            source: ShapeSource::File(p),
        });
    }
    Ok(out)
}

pub fn resolve_entries(spec: &DatasetSpec, seed: u64) -> Result<Vec<ShapeEntry>> {
    match spec {
        DatasetSpec::Synthetic {
            categories,
            instances_per_category,
            points,
        } => Ok(synthetic_entries(
            *categories,
            *instances_per_category,
            *points,
            seed,
        )),
        DatasetSpec::Manifest { path } => read_manifest(path),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub train: Vec<ShapeEntry>,
    pub val: Vec<ShapeEntry>,
    pub test: Vec<ShapeEntry>,
}

impl Split {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// How train-category instances are divided between training and validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRule {
    /// Every `val_every`-th instance of a training category goes to validation.
    pub val_every: usize,
}

impl Default for SplitRule {
    fn default() -> Self {
        Self { val_every: 10 }
    }
}

/// Splits by category order: first half train/val, second half test.
pub fn split_manifest(entries: &[ShapeEntry], rule: SplitRule) -> Result<Split> {
    let mut order: Vec<&str> = Vec::new();
    for e in entries {
        if !order.contains(&e.category.as_str()) {
            order.push(&e.category);
        }
    }
    if order.len() < 2 {
        return Err(BenchError::Data(format!(
            "need at least 2 categories to split, found {}",
            order.len()
        )));
    }
    if rule.val_every == 0 {
        return Err(BenchError::Usage("val_every must be positive".into()));
    }
    let n_train = order.len() / 2;
    let train_cats = &order[..n_train];
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut split = Split::default();
    for e in entries {
        if train_cats.contains(&e.category.as_str()) {
            let k = seen.entry(&e.category).or_default();
            if *k % rule.val_every == rule.val_every - 1 {
                split.val.push(e.clone());
            } else {
                split.train.push(e.clone());
            }
            *k += 1;
        } else {
            split.test.push(e.clone());
        }
    }
    Ok(split)
}

/// Loads every entry in parallel, keeping the input order.
pub fn load_all(entries: &[ShapeEntry], points: usize) -> Result<Vec<PointCloud>> {
    use rayon::prelude::*;
    entries.par_iter().map(|e| e.load(points)).collect()
}
