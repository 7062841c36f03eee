use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use regagent_core::agent::PolicyKind;
use regagent_core::cloud::{write_cloud, CloudFormat};
use regagent_core::rewardnet::save_weights;
use regagent_core::rotsample::SamplingMethod;

use crate::ablation::{ablation_csv, run_ablation, AblationKind};
use crate::config::{ExperimentConfig, Protocol, RewardSpec};
use crate::dataset::{read_manifest, split_manifest, synthetic_entries, DatasetSpec, SplitRule};
use crate::error::{BenchError, Result};
use crate::experiment::{
    eval_csv, history_csv, run_eval, run_register, run_sample_rot, run_time, run_trace, run_train,
};
use crate::report::{write_file, CsvDoc};

#[derive(Parser, Debug)]
#[command(
    name = "regagent",
    version,
    about = "Point-cloud registration agent: data, training, evaluation and ablations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON experiment configuration; flags below override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub protocol: Option<Protocol>,
    /// Number of test pairs.
    #[arg(long, global = true)]
    pub pairs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Oracle reward: se3, l2 or mcd.
    #[arg(long, global = true)]
    pub reward: Option<String>,
    /// Use a trained network as the reward source.
    #[arg(long, global = true, conflicts_with = "reward")]
    pub weights: Option<PathBuf>,
    /// greedy, stoch1, stoch2 or uniform.
    #[arg(long, global = true)]
    pub policy: Option<String>,
    #[arg(long, global = true)]
    pub refine_icp: bool,
    /// Points per observed cloud.
    #[arg(long, global = true)]
    pub points: Option<usize>,
    #[arg(long, global = true, env = "REGAGENT_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// Output file; defaults to a per-command name inside the output directory.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write synthetic shapes and a manifest, or split an existing manifest.
    GenData {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        categories: usize,
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 1024)]
        shape_points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train the reward network on the train split.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Register one test pair and print its metrics as JSON.
    Register {
        #[arg(long, default_value_t = 0)]
        pair: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate every test pair and write one CSV row per pair plus a summary row.
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// Write raw sampler output (angle and axis per sample).
    SampleRot {
        /// haar, naive or both.
        #[arg(long, default_value = "both")]
        method: String,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 180.0)]
        max_angle_deg: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Per-iteration errors for one pair.
    Trace {
        #[arg(long, default_value_t = 0)]
        pair: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run one ablation grid.
    Ablate {
        #[arg(value_enum)]
        kind: AblationKind,
        #[command(flatten)]
        common: Common,
    },
    /// Wall-clock time per registration.
    Time {
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = self.protocol {
            cfg = cfg.with_protocol(p);
        }
        if let Some(n) = self.pairs {
            cfg.n_pairs = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = &self.reward {
            cfg.reward = match r.as_str() {
                "se3" => RewardSpec::OracleSe3,
                "l2" => RewardSpec::OracleL2,
                "mcd" => RewardSpec::OracleMcd,
                other => {
                    return Err(BenchError::Usage(format!(
                        "unknown reward `{other}` (expected se3, l2 or mcd)"
                    )))
                }
            };
        }
        if let Some(w) = &self.weights {
            cfg.reward = RewardSpec::Network { path: w.clone() };
        }
        if let Some(p) = &self.policy {
            cfg.policy.kind = p
                .parse::<PolicyKind>()
                .map_err(|e| BenchError::Usage(e.to_string()))?;
        }
        if self.refine_icp {
            cfg.refine_icp = true;
        }
        if let Some(n) = self.points {
            cfg.perturbation = cfg.perturbation.with_points(n);
        }
        if let Some(o) = &self.output {
            cfg.output = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn output_path(&self, cfg: &ExperimentConfig, default_name: &str) -> PathBuf {
        match &cfg.output {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => self.out_dir.join(p),
            None => self.out_dir.join(default_name),
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn report_written(path: &Path) {
    eprintln!("wrote {}", path.display());
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData {
            manifest,
            categories,
            instances,
            shape_points,
            common,
        } => gen_data(
            manifest.as_deref(),
            categories,
            instances,
            shape_points,
            &common,
        ),
        Command::Train { epochs, common } => {
            let mut cfg = common.resolve()?;
            if let Some(e) = epochs {
                cfg.train.total_epochs = e;
                cfg.train.curriculum_boundary_epoch =
                    cfg.train.curriculum_boundary_epoch.min(e.saturating_sub(1));
            }
            let (net, history) = run_train(&cfg, &mut |r| {
                eprintln!(
                    "epoch {:4} lr {:.6} train {:.5} val {:.5}",
                    r.epoch, r.lr, r.train_loss, r.val_loss
                )
            })?;
            let weights = common.output_path(&cfg, "regagent.weights");
            if let Some(d) = weights.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(d)?;
            }
            save_weights(&weights, &net, Some(&cfg.train))?;
            report_written(&weights);
            let hist = weights.with_extension("history.csv");
            write_file(&hist, &history_csv(&cfg, &history)?)?;
            report_written(&hist);
            Ok(())
        }
        Command::Register { pair, common } => {
            let cfg = common.resolve()?;
            let row = run_register(&cfg, pair)?;
            let out = serde_json::json!({
                "pair": row.index,
                "category": row.category,
                "report": row.report,
                "seconds": row.seconds,
                "estimate": row.estimate,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
        Command::Eval { common } => {
            let cfg = common.resolve()?;
            let rows = run_eval(&cfg)?;
            let path = common.output_path(&cfg, "eval.csv");
            eval_csv(&cfg, &rows)?.write_to(&path)?;
            report_written(&path);
            Ok(())
        }
        Command::SampleRot {
            method,
            n,
            max_angle_deg,
            common,
        } => {
            let cfg = common.resolve()?;
            let methods = match method.as_str() {
                "both" => vec![SamplingMethod::Haar, SamplingMethod::NaiveEuler],
                m => vec![m
                    .parse::<SamplingMethod>()
                    .map_err(|e| BenchError::Usage(e.to_string()))?],
            };
            let text = run_sample_rot(&methods, n, max_angle_deg.to_radians(), cfg.seed)?;
            let path = common.output_path(&cfg, "sample_rot.csv");
            write_file(&path, &text)?;
            report_written(&path);
            Ok(())
        }
        Command::Trace { pair, common } => {
            let cfg = common.resolve()?;
            let text = run_trace(&cfg, pair)?;
            let path = common.output_path(&cfg, "trace.csv");
            write_file(&path, &text)?;
            report_written(&path);
            Ok(())
        }
        Command::Ablate { kind, common } => {
            let cfg = common.resolve()?;
            let rows = run_ablation(kind, &cfg)?;
            let path = common.output_path(&cfg, &format!("ablate_{kind}.csv"));
            ablation_csv(kind, &cfg, &rows)?.write_to(&path)?;
            report_written(&path);
            Ok(())
        }
        Command::Time { common } => {
            let cfg = common.resolve()?;
            let text = run_time(&cfg)?;
            let path = common.output_path(&cfg, "time.csv");
            write_file(&path, &text)?;
            report_written(&path);
            Ok(())
        }
    }
}

fn gen_data(
    manifest: Option<&Path>,
    categories: usize,
    instances: usize,
    shape_points: usize,
    common: &Common,
) -> Result<()> {
    let cfg = common.resolve()?;
    let (entries, root) = match manifest {
        Some(m) => (read_manifest(m)?, None),
        None => {
            let spec = DatasetSpec::Synthetic {
                categories,
                instances_per_category: instances,
                points: shape_points,
            };
            spec.validate()?;
            (
                synthetic_entries(categories, instances, shape_points, cfg.seed),
                Some(common.out_dir.join("data")),
            )
        }
    };
    let split = split_manifest(&entries, SplitRule::default())?;
    let json = cfg.to_json();
    let mut split_doc = CsvDoc::new("gen-data", cfg.seed, &json, &["split", "category", "path"])?;
    let mut manifest_doc = CsvDoc::new("gen-data", cfg.seed, &json, &["category", "path"])?;
    let mut files = Vec::new();
    for (name, part) in [
        ("train", &split.train),
        ("val", &split.val),
        ("test", &split.test),
    ] {
        for (i, e) in part.iter().enumerate() {
            let path = match (&e.source, &root) {
                (crate::dataset::ShapeSource::File(p), _) => p.clone(),
                (_, Some(root)) => {
                    let p = root.join(&e.category).join(format!("{name}_{i:04}.xyz"));
                    files.push((p.clone(), e.clone()));
                    p
                }
                (_, None) => unreachable!("synthetic entries always have an output root"),
            };
            let shown = path.display().to_string();
            split_doc.row([name, e.category.as_str(), shown.as_str()])?;
            manifest_doc.row([e.category.as_str(), shown.as_str()])?;
        }
    }
    for (p, e) in &files {
        if let Some(d) = p.parent() {
            std::fs::create_dir_all(d)?;
        }
        write_cloud(p, &e.load(shape_points)?, CloudFormat::Xyz)?;
    }
    if root.is_some() {
        let mp = common.out_dir.join("manifest.csv");
        manifest_doc.write_to(&mp)?;
        report_written(&mp);
    }
    let sp = common.out_dir.join("split.csv");
    split_doc.write_to(&sp)?;
    report_written(&sp);
    let (a, b, c) = split.counts();
    println!("train {a} val {b} test {c}");
    Ok(())
}
