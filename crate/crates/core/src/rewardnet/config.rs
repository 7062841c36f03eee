use serde::{Deserialize, Serialize};

use crate::actions::{RewardGrouping, N_ACTIONS};
use crate::cloud::PerturbationConfig;
use crate::error::{Error, Result};
use crate::rotsample::SamplingMethod;

/// How the two pooled embeddings are combined before the shared MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// `[g_src, g_tgt]`, width `2·embed_dim`.
    #[default]
    Concat,
    /// `g_src − g_tgt`, width `embed_dim`.
    Difference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub knn_k: usize,
    pub edgeconv_widths: Vec<usize>,
    pub embed_dim: usize,
    pub attn_heads: usize,
    pub shared_mlp_widths: Vec<usize>,
    /// Hidden widths of each of the two heads.
    pub head_mlp_widths: Vec<usize>,
    pub n_actions: usize,
    #[serde(default)]
    pub fusion: Fusion,
    pub init_seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl NetConfig {
    /// Small enough to train on a laptop in minutes and to finite-difference.
    pub fn desk() -> Self {
        Self {
            knn_k: 8,
            edgeconv_widths: vec![16, 16, 32],
            embed_dim: 32,
            attn_heads: 2,
            shared_mlp_widths: vec![64],
            head_mlp_widths: vec![32],
            n_actions: N_ACTIONS,
            fusion: Fusion::Concat,
            init_seed: 1234,
        }
    }

    pub fn paper() -> Self {
        Self {
            knn_k: 20,
            edgeconv_widths: vec![64, 64, 128, 256, 1024],
            embed_dim: 1024,
            attn_heads: 4,
            shared_mlp_widths: vec![512, 256],
            head_mlp_widths: vec![128],
            n_actions: N_ACTIONS,
            fusion: Fusion::Concat,
            init_seed: 1234,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_actions != N_ACTIONS {
            return Err(Error::validation(format!("n_actions must be {N_ACTIONS}")));
        }
        if self.knn_k == 0 {
            return Err(Error::validation("knn_k must be positive"));
        }
        if self.edgeconv_widths.is_empty() {
            return Err(Error::validation(
                "at least one edge convolution is required",
            ));
        }
        if self.edgeconv_widths.last() != Some(&self.embed_dim) {
            return Err(Error::validation(
                "last edge convolution width must equal embed_dim",
            ));
        }
        if self.attn_heads == 0 || !self.embed_dim.is_multiple_of(self.attn_heads) {
            return Err(Error::validation(
                "embed_dim must be divisible by attn_heads",
            ));
        }
        let widths = self
            .edgeconv_widths
            .iter()
            .chain(&self.shared_mlp_widths)
            .chain(&self.head_mlp_widths);
        if widths.copied().any(|w| w == 0) {
            return Err(Error::validation("layer widths must be positive"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.attn_heads
    }

    pub fn fused_dim(&self) -> usize {
        match self.fusion {
            Fusion::Concat => 2 * self.embed_dim,
            Fusion::Difference => self.embed_dim,
        }
    }

    /// Smallest cloud the network accepts.
    pub fn min_points(&self) -> usize {
        self.knn_k + 1
    }
}

/// Transform range used for one curriculum stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSpec {
    /// Radians.
    pub max_angle: f64,
    pub max_translation: f64,
}

impl RangeSpec {
    pub fn small() -> Self {
        Self {
            max_angle: 10f64.to_radians(),
            max_translation: 0.5 / 7.0,
        }
    }

    pub fn full() -> Self {
        Self {
            max_angle: 60f64.to_radians(),
            max_translation: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurriculumMode {
    /// Small range before the boundary epoch, full range after.
    #[default]
    Staged,
    /// Full range throughout.
    Uniform,
    /// Every sample draws from the small or the full range with probability 1/2.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_initial: f64,
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub weight_decay: f64,
    pub total_epochs: usize,
    pub curriculum_boundary_epoch: usize,
    #[serde(default)]
    pub curriculum: CurriculumMode,
    pub small_range: RangeSpec,
    pub full_range: RangeSpec,
    /// How training rotations are drawn within each range.
    #[serde(default = "default_sampling")]
    pub sampling: SamplingMethod,
    pub batch_size: usize,
    pub samples_per_epoch: usize,
    pub val_samples: usize,
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub reward_grouping: RewardGrouping,
    /// Also start samples from a random estimate within the current range
    /// instead of always from the identity.
    #[serde(default)]
    pub random_start: bool,
    pub seed: u64,
}

fn default_sampling() -> SamplingMethod {
    SamplingMethod::Haar
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            lr_initial: 0.1,
            lr_decay_epochs: vec![300, 700, 1000],
            lr_decay_factor: 0.1,
            weight_decay: 1e-4,
            total_epochs: 1300,
            curriculum_boundary_epoch: 70,
            curriculum: CurriculumMode::Staged,
            small_range: RangeSpec::small(),
            full_range: RangeSpec::full(),
            sampling: SamplingMethod::Haar,
            batch_size: 32,
            samples_per_epoch: 4608,
            val_samples: 512,
            perturbation: PerturbationConfig::clean(0),
            reward_grouping: RewardGrouping::ByMagnitude,
            random_start: false,
            seed: 1234,
        }
    }

    pub fn desk() -> Self {
        Self {
            lr_initial: 0.2,
            lr_decay_epochs: vec![120, 170],
            lr_decay_factor: 0.1,
            weight_decay: 1e-4,
            total_epochs: 200,
            curriculum_boundary_epoch: 30,
            batch_size: 8,
            samples_per_epoch: 512,
            val_samples: 64,
            perturbation: PerturbationConfig::clean(0).with_points(64),
            random_start: true,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_initial > 0.0) || !(self.lr_decay_factor > 0.0) || !(self.weight_decay >= 0.0)
        {
            return Err(Error::validation(
                "learning rate and decay factor must be positive",
            ));
        }
        if self.total_epochs == 0 || self.curriculum_boundary_epoch >= self.total_epochs {
            return Err(Error::validation(
                "curriculum boundary must lie before the last epoch",
            ));
        }
        if self.batch_size == 0 || self.samples_per_epoch == 0 {
            return Err(Error::validation(
                "batch size and samples per epoch must be positive",
            ));
        }
        for r in [self.small_range, self.full_range] {
            if !(0.0..=std::f64::consts::PI).contains(&r.max_angle) || !(r.max_translation >= 0.0) {
                return Err(Error::validation("invalid transform range"));
            }
        }
        self.perturbation.validate()
    }

    /// `lr_initial · factor^(number of decay epochs ≤ epoch)`.
    pub fn lr(&self, epoch: usize) -> f64 {
        let passed = self.lr_decay_epochs.iter().filter(|&&e| e <= epoch).count();
        // dividing by 10ⁿ keeps 0.1 → 0.01 → 0.001 exact where 0.1ⁿ would not
        self.lr_initial / (1.0 / self.lr_decay_factor).powi(passed as i32)
    }
}
