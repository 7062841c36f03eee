//! Ablation grids. Reward and policy arms run on oracle rewards; sampling and
//! curriculum arms each train a network with `cfg.train` and evaluate it.

use std::fmt;
use std::str::FromStr;

use regagent_core::actions::RewardOracle;
use regagent_core::agent::{Oracle, PolicyKind, PolicySpec, RewardSource};
use regagent_core::metrics::EvalReport;
use regagent_core::rewardnet::{train, CurriculumMode, NetworkRewardSource, TrainConfig};
use regagent_core::rotsample::{SamplingMethod, TransformSampleConfig};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset::load_all;
use crate::error::{BenchError, Result};
use crate::experiment::{
    dataset_split, evaluate_pairs, pairs_from_shapes, reward_source, test_pairs, TestPair,
};
use crate::report::{fmt_f64, CsvDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    Reward,
    Sampling,
    Curriculum,
    Policy,
}

impl AblationKind {
    pub fn name(self) -> &'static str {
        match self {
            AblationKind::Reward => "reward",
            AblationKind::Sampling => "sampling",
            AblationKind::Curriculum => "curriculum",
            AblationKind::Policy => "policy",
        }
    }

    pub fn arms(self) -> &'static [&'static str] {
        match self {
            AblationKind::Reward => &["se3", "l2", "mcd"],
            AblationKind::Sampling => &["isotropic", "naive"],
            AblationKind::Curriculum => &["curriculum", "uniform", "mixed"],
            AblationKind::Policy => &["deterministic", "stoch1", "stoch2"],
        }
    }
}

impl fmt::Display for AblationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        [
            AblationKind::Reward,
            AblationKind::Sampling,
            AblationKind::Curriculum,
            AblationKind::Policy,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| BenchError::Usage(format!("unknown ablation `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub arm: String,
    /// Mean metrics, or the error that stopped this arm.
    pub outcome: std::result::Result<EvalReport, String>,
}

fn mean_report(
    cfg: &ExperimentConfig,
    source: &dyn RewardSource,
    pairs: &[TestPair],
) -> Result<EvalReport> {
    let rows = evaluate_pairs(cfg, source, pairs)?;
    Ok(EvalReport::mean(
        &rows.iter().map(|r| r.report).collect::<Vec<_>>(),
    ))
}

fn trained_arm(
    cfg: &ExperimentConfig,
    tcfg: &TrainConfig,
    pairs: &[TestPair],
) -> Result<EvalReport> {
    let split = dataset_split(cfg)?;
    let points = tcfg
        .perturbation
        .n_points
        .max(regagent_core::cloud::DEFAULT_POINTS);
    let shapes = load_all(&split.train, points)?;
    let val = load_all(&split.val, points)?;
    let (net, _) = train(&shapes, &val, tcfg, &cfg.net)?;
    mean_report(cfg, &NetworkRewardSource { net }, pairs)
}

/// Test pairs for the sampling ablation: the naive 32° Euler set, shared by both arms.
pub fn sampling_test_pairs(cfg: &ExperimentConfig) -> Result<Vec<TestPair>> {
    let split = dataset_split(cfg)?;
    let shapes = load_all(
        &split.test,
        cfg.perturbation
            .n_points
            .max(regagent_core::cloud::DEFAULT_POINTS),
    )?;
    let cats: Vec<String> = split.test.iter().map(|e| e.category.clone()).collect();
    pairs_from_shapes(
        cfg,
        &cats,
        &shapes,
        &TransformSampleConfig::naive_test(cfg.seed),
    )
}

/// One row per arm; a failing arm is reported and the others still run.
pub fn run_ablation(kind: AblationKind, cfg: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    let pairs = match kind {
        AblationKind::Sampling => sampling_test_pairs(cfg)?,
        _ => test_pairs(cfg)?,
    };
    let rows = kind
        .arms()
        .iter()
        .map(|&arm| {
            let outcome = match kind {
                AblationKind::Reward => {
                    let oracle = match arm {
                        "se3" => RewardOracle::Se3,
                        "l2" => RewardOracle::L2Clean,
                        _ => RewardOracle::Mcd,
                    };
                    mean_report(cfg, &Oracle::new(oracle), &pairs)
                }
                AblationKind::Policy => {
                    let policy_kind = match arm {
                        "deterministic" => PolicyKind::Greedy,
                        "stoch1" => PolicyKind::Stoch1,
                        _ => PolicyKind::Stoch2,
                    };
                    let arm_cfg = ExperimentConfig {
                        policy: PolicySpec {
                            kind: policy_kind,
                            ..cfg.policy
                        },
                        ..cfg.clone()
                    };
                    reward_source(&cfg.reward)
                        .and_then(|s| mean_report(&arm_cfg, s.as_ref(), &pairs))
                }
                AblationKind::Sampling => {
                    let sampling = if arm == "naive" {
                        SamplingMethod::NaiveEuler
                    } else {
                        SamplingMethod::Haar
                    };
                    trained_arm(
                        cfg,
                        &TrainConfig {
                            sampling,
                            ..cfg.train.clone()
                        },
                        &pairs,
                    )
                }
                AblationKind::Curriculum => {
                    let curriculum = match arm {
                        "curriculum" => CurriculumMode::Staged,
                        "uniform" => CurriculumMode::Uniform,
                        _ => CurriculumMode::Mixed,
                    };
                    trained_arm(
                        cfg,
                        &TrainConfig {
                            curriculum,
                            ..cfg.train.clone()
                        },
                        &pairs,
                    )
                }
            };
            AblationRow {
                arm: arm.to_string(),
                outcome: outcome.map_err(|e| e.to_string()),
            }
        })
        .collect();
    Ok(rows)
}

pub const ABLATION_HEADER: [&str; 6] = [
    "arm",
    "rot_err_deg",
    "trans_err",
    "clean_l2",
    "mcd",
    "error",
];

pub fn ablation_csv(
    kind: AblationKind,
    cfg: &ExperimentConfig,
    rows: &[AblationRow],
) -> Result<CsvDoc> {
    let mut doc = CsvDoc::new(
        &format!("ablate {kind}"),
        cfg.seed,
        &cfg.to_json(),
        &ABLATION_HEADER,
    )?;
    for r in rows {
        match &r.outcome {
            Ok(m) => doc.row([
                r.arm.clone(),
                fmt_f64(m.rot_err_deg),
                fmt_f64(m.trans_err),
                fmt_f64(m.clean_l2),
                fmt_f64(m.mcd),
                String::new(),
            ])?,
            Err(e) => doc.row([
                r.arm.clone(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ])?,
        }
    }
    Ok(doc)
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
            points: 128,
        };
        cfg.perturbation = cfg.perturbation.with_points(64);
        cfg.n_pairs = 4;
        cfg
    }

    #[test]
    fn reward_arms_run_on_oracles() {
        let rows = run_ablation(AblationKind::Reward, &small()).unwrap();
        let arms: Vec<_> = rows.iter().map(|r| r.arm.as_str()).collect();
        assert_eq!(arms, ["se3", "l2", "mcd"]);
        assert!(rows.iter().all(|r| r.outcome.is_ok()));
    }

    #[test]
    fn failing_arm_does_not_stop_the_others() {
        let mut cfg = small();
        cfg.reward = crate::config::RewardSpec::Network {
            path: "/nonexistent/weights".into(),
        };
        let rows = run_ablation(AblationKind::Policy, &cfg).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.outcome.is_err()));
        let text = ablation_csv(AblationKind::Policy, &cfg, &rows)
            .unwrap()
            .finish()
            .unwrap();
        assert!(text.lines().last().unwrap().starts_with("stoch2,,,,,"));
    }

    #[test]
    fn sampling_arms_share_the_naive_test_set() {
        let cfg = small();
        let a = sampling_test_pairs(&cfg).unwrap();
        let b = sampling_test_pairs(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.pair.gt, y.pair.gt);
        }
        let naive = TransformSampleConfig::naive_test(0).max_angle;
        for tp in &a {
            let m = tp.pair.gt.rotation.matrix();
            let beta = (-m[(2, 0)]).asin();
            assert!(beta.abs() <= naive + 1e-9);
        }
    }
}
