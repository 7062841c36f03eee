//! Test-pair construction and the per-pair runners behind `eval`, `trace`,
//! `register`, `time` and `train`.

use std::time::Instant;

use rayon::prelude::*;
use regagent_core::actions::{ActionSet, RewardOracle};
use regagent_core::agent::{run_registration, Oracle, PolicySpec, RegistrationTrace, RewardSource};
use regagent_core::cloud::{make_pair, CloudPair, PerturbationConfig, PointCloud};
use regagent_core::icp::refine_with_icp;
use regagent_core::metrics::{evaluate, EvalReport};
use regagent_core::rewardnet::{
    load_weights, train_with_progress, EpochRecord, NetworkRewardSource, RewardNet, TrainHistory,
};
use regagent_core::rotsample::{sample_transform_with, SamplingMethod, TransformSampleConfig};
use regagent_core::{rng, RigidTransform};

use crate::config::{ExperimentConfig, RewardSpec};
use crate::dataset::{load_all, resolve_entries, split_manifest, Split, SplitRule};
use crate::error::{BenchError, Result};
use crate::report::{fmt_f64, CsvDoc};

#[derive(Debug, Clone)]
pub struct TestPair {
    pub index: usize,
    pub category: String,
    pub pair: CloudPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub index: usize,
    pub category: String,
    pub report: EvalReport,
    /// Wall-clock time of the registration call (and ICP refinement, when enabled).
    pub seconds: f64,
    pub estimate: RigidTransform,
}

pub fn dataset_split(cfg: &ExperimentConfig) -> Result<Split> {
    split_manifest(
        &resolve_entries(&cfg.dataset, cfg.seed)?,
        SplitRule::default(),
    )
}

fn load_points(cfg: &ExperimentConfig) -> usize {
    cfg.perturbation
        .n_points
        .max(regagent_core::cloud::DEFAULT_POINTS)
}

/// Test pairs drawn round-robin over the test-split shapes.
pub fn test_pairs(cfg: &ExperimentConfig) -> Result<Vec<TestPair>> {
    let split = dataset_split(cfg)?;
    let shapes = load_all(&split.test, load_points(cfg))?;
    let cats: Vec<String> = split.test.iter().map(|e| e.category.clone()).collect();
    pairs_from_shapes(cfg, &cats, &shapes, &cfg.transform)
}

pub fn pairs_from_shapes(
    cfg: &ExperimentConfig,
    categories: &[String],
    shapes: &[PointCloud],
    transform: &TransformSampleConfig,
) -> Result<Vec<TestPair>> {
    if shapes.is_empty() {
        return Err(BenchError::Data("test split is empty".into()));
    }
    let tsc = TransformSampleConfig {
        seed: cfg.seed,
        ..*transform
    };
    (0..cfg.n_pairs)
        .into_par_iter()
        .map(|i| {
            let j = i % shapes.len();
            let pcfg = PerturbationConfig {
                seed: i as u64,
                ..cfg.perturbation
            };
            Ok(TestPair {
                index: i,
                category: categories[j].clone(),
                pair: make_pair(&shapes[j], &tsc, &pcfg)?,
            })
        })
        .collect()
}

pub fn reward_source(spec: &RewardSpec) -> Result<Box<dyn RewardSource>> {
    Ok(match spec {
        RewardSpec::OracleSe3 => Box::new(Oracle::new(RewardOracle::Se3)),
        RewardSpec::OracleL2 => Box::new(Oracle::new(RewardOracle::L2Clean)),
        RewardSpec::OracleMcd => Box::new(Oracle::new(RewardOracle::Mcd)),
        RewardSpec::Network { path } => {
            let w = load_weights(path)
                .map_err(|e| BenchError::Data(format!("{}: {e}", path.display())))?;
            Box::new(NetworkRewardSource { net: w.net })
        }
    })
}

fn policy_for(cfg: &ExperimentConfig, index: usize) -> PolicySpec {
    PolicySpec {
        seed: cfg.policy.seed.wrapping_add(index as u64),
        ..cfg.policy
    }
}

/// Registers one pair; returns the estimate, its trace and the elapsed seconds.
pub fn register_one(
    cfg: &ExperimentConfig,
    source: &dyn RewardSource,
    tp: &TestPair,
) -> Result<(RigidTransform, RegistrationTrace, f64)> {
    let t0 = Instant::now();
    let (mut est, trace) =
        run_registration(source, &tp.pair, &cfg.schedule, &policy_for(cfg, tp.index))?;
    if cfg.refine_icp {
        est = refine_with_icp(&tp.pair, &est, &cfg.icp)?;
    }
    Ok((est, trace, t0.elapsed().as_secs_f64()))
}

/// Evaluates every pair in parallel; rows come back in input order.
pub fn evaluate_pairs(
    cfg: &ExperimentConfig,
    source: &dyn RewardSource,
    pairs: &[TestPair],
) -> Result<Vec<EvalRow>> {
    pairs
        .par_iter()
        .map(|tp| {
            let (est, _, seconds) = register_one(cfg, source, tp)?;
            Ok(EvalRow {
                index: tp.index,
                category: tp.category.clone(),
                report: evaluate(&tp.pair, &est),
                seconds,
                estimate: est,
            })
        })
        .collect()
}

pub const EVAL_HEADER: [&str; 7] = [
    "pair",
    "category",
    "rot_err_deg",
    "trans_err",
    "clean_l2",
    "mcd",
    "seconds",
];

/// Per-pair rows followed by a `mean` summary row.
pub fn eval_csv(cfg: &ExperimentConfig, rows: &[EvalRow]) -> Result<CsvDoc> {
    let mut doc = CsvDoc::new("eval", cfg.seed, &cfg.to_json(), &EVAL_HEADER)?;
    for r in rows {
        let m = r.report;
        doc.row([
            r.index.to_string(),
            r.category.clone(),
            fmt_f64(m.rot_err_deg),
            fmt_f64(m.trans_err),
            fmt_f64(m.clean_l2),
            fmt_f64(m.mcd),
            fmt_f64(r.seconds),
        ])?;
    }
    let reports: Vec<EvalReport> = rows.iter().map(|r| r.report).collect();
    let m = EvalReport::mean(&reports);
    let secs = rows.iter().map(|r| r.seconds).sum::<f64>() / rows.len().max(1) as f64;
    doc.row([
        "mean".to_string(),
        String::new(),
        fmt_f64(m.rot_err_deg),
        fmt_f64(m.trans_err),
        fmt_f64(m.clean_l2),
        fmt_f64(m.mcd),
        fmt_f64(secs),
    ])?;
    Ok(doc)
}

pub fn run_eval(cfg: &ExperimentConfig) -> Result<Vec<EvalRow>> {
    cfg.validate()?;
    let source = reward_source(&cfg.reward)?;
    let pairs = test_pairs(cfg)?;
    evaluate_pairs(cfg, source.as_ref(), &pairs)
}

fn pair_at(cfg: &ExperimentConfig, index: usize) -> Result<TestPair> {
    if index >= cfg.n_pairs {
        return Err(BenchError::Usage(format!(
            "pair {index} out of range (n_pairs = {})",
            cfg.n_pairs
        )));
    }
    let narrowed = ExperimentConfig {
        n_pairs: index + 1,
        ..cfg.clone()
    };
    Ok(test_pairs(&narrowed)?.pop().expect("index < n_pairs"))
}

/// Per-iteration CSV for one pair; one data row per schedule iteration.
pub fn run_trace(cfg: &ExperimentConfig, index: usize) -> Result<String> {
    cfg.validate()?;
    let source = reward_source(&cfg.reward)?;
    let tp = pair_at(cfg, index)?;
    let (_, trace, _) = register_one(
        &ExperimentConfig {
            refine_icp: false,
            ..cfg.clone()
        },
        source.as_ref(),
        &tp,
    )?;
    let mut body = Vec::new();
    trace.write_csv(&ActionSet::default(), &mut body)?;
    Ok(CsvDoc::with_comments(
        "trace",
        cfg.seed,
        &cfg.to_json(),
        &String::from_utf8(body).expect("csv output is utf-8"),
    ))
}

pub fn run_register(cfg: &ExperimentConfig, index: usize) -> Result<EvalRow> {
    cfg.validate()?;
    let source = reward_source(&cfg.reward)?;
    let tp = pair_at(cfg, index)?;
    Ok(evaluate_pairs(cfg, source.as_ref(), std::slice::from_ref(&tp))?.remove(0))
}

/// Sequential wall-clock timing, so pairs do not compete for cores.
pub fn run_time(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let source = reward_source(&cfg.reward)?;
    let pairs = test_pairs(cfg)?;
    let mut doc = CsvDoc::new("time", cfg.seed, &cfg.to_json(), &["pair", "seconds"])?;
    let mut total = 0.0;
    for tp in &pairs {
        let (_, _, s) = register_one(cfg, source.as_ref(), tp)?;
        total += s;
        doc.row([tp.index.to_string(), fmt_f64(s)])?;
    }
    doc.row(["mean".to_string(), fmt_f64(total / pairs.len() as f64)])?;
    doc.finish()
}

pub const SAMPLE_ROT_HEADER: [&str; 5] = ["method", "angle_rad", "axis_x", "axis_y", "axis_z"];

/// Raw sampler output for angle and axis histograms.
pub fn run_sample_rot(
    methods: &[SamplingMethod],
    n: usize,
    max_angle: f64,
    seed: u64,
) -> Result<String> {
    let json =
        serde_json::json!({ "methods": methods, "n": n, "max_angle": max_angle, "seed": seed })
            .to_string();
    let mut doc = CsvDoc::new("sample-rot", seed, &json, &SAMPLE_ROT_HEADER)?;
    for &method in methods {
        let tsc = TransformSampleConfig {
            method,
            max_angle,
            max_translation: 0.0,
            seed,
        };
        tsc.validate()?;
        let mut rng = rng::seeded(seed);
        for _ in 0..n {
            let aa = sample_transform_with(&tsc, &mut rng)?
                .rotation
                .to_axis_angle();
            doc.row([
                method.to_string(),
                fmt_f64(aa.angle),
                fmt_f64(aa.axis.x),
                fmt_f64(aa.axis.y),
                fmt_f64(aa.axis.z),
            ])?;
        }
    }
    doc.finish()
}

/// Trains on the train split and validates on the validation split.
pub fn run_train(
    cfg: &ExperimentConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(RewardNet, TrainHistory)> {
    let split = dataset_split(cfg)?;
    let points = cfg
        .train
        .perturbation
        .n_points
        .max(regagent_core::cloud::DEFAULT_POINTS);
    let train = load_all(&split.train, points)?;
    let val = load_all(&split.val, points)?;
    Ok(train_with_progress(
        &train, &val, &cfg.train, &cfg.net, progress,
    )?)
}

pub fn history_csv(cfg: &ExperimentConfig, history: &TrainHistory) -> Result<String> {
    let mut doc = CsvDoc::new(
        "train",
        cfg.train.seed,
        &cfg.to_json(),
        &["epoch", "lr", "train_loss", "val_loss"],
    )?;
    for e in &history.epochs {
        doc.row([
            e.epoch.to_string(),
            fmt_f64(e.lr),
            fmt_f64(e.train_loss),
            fmt_f64(e.val_loss),
        ])?;
    }
    doc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetSpec;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset = DatasetSpec::Synthetic {
            categories: 4,
            instances_per_category: 2,
            points: 256,
        };
        cfg.perturbation = cfg.perturbation.with_points(128);
        cfg.n_pairs = 6;
        cfg
    }

    #[test]
    fn pairs_are_deterministic_and_from_test_categories() {
        let cfg = small();
        let a = test_pairs(&cfg).unwrap();
        let b = test_pairs(&cfg).unwrap();
        assert_eq!(a.len(), 6);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.pair.gt, y.pair.gt);
            assert_eq!(x.pair.source.points(), y.pair.source.points());
        }
        let split = dataset_split(&cfg).unwrap();
        for tp in &a {
            assert!(split.test.iter().any(|e| e.category == tp.category));
            assert!(!split.train.iter().any(|e| e.category == tp.category));
        }
        assert_ne!(a[0].pair.gt, a[1].pair.gt);
    }

    #[test]
    fn trace_has_one_row_per_iteration() {
        let cfg = small();
        let text = run_trace(&cfg, 2).unwrap();
        let data: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data[0], RegistrationTrace::CSV_HEADER);
        assert_eq!(data.len() - 1, cfg.schedule.total_iterations());
        assert!(run_trace(&cfg, 6).is_err());
    }

    #[test]
    fn register_matches_eval_row() {
        let cfg = small();
        let rows = run_eval(&cfg).unwrap();
        let one = run_register(&cfg, 3).unwrap();
        assert_eq!(one.report, rows[3].report);
    }

    #[test]
    fn sample_rot_respects_cap() {
        let text = run_sample_rot(
            &[SamplingMethod::Haar, SamplingMethod::NaiveEuler],
            50,
            0.5,
            3,
        )
        .unwrap();
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let rows: Vec<_> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 100);
        for row in rows.iter().filter(|r| &r[0] == "haar") {
            assert!(row[1].parse::<f64>().unwrap() <= 0.5 + 1e-12);
        }
        assert!(rows.iter().any(|r| &r[0] == "naive_euler"));
    }
}
