use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::NetConfig;
use crate::error::{Error, Result};
use crate::rng;

/// One named matrix (or row vector when `rows == 1`) inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    /// `U(−1/√n, 1/√n)`.
    FanIn(usize),
    /// `U(−√(6/n), √(6/n))`, for layers followed by ReLU.
    FanInRelu(usize),
    Zero,
    One,
}

impl Block {
    fn init(&self) -> Init {
        if self.name.ends_with(".b") || self.name.ends_with(".beta") {
            Init::Zero
        } else if self.name.ends_with(".gamma") {
            Init::One
        } else if self.name.starts_with("edgeconv") {
            // each output sees x_i and x_j
            Init::FanInRelu(2 * self.cols)
        } else if self.name.starts_with("attn.ff1")
            || self.name.ends_with(".w")
                && !self.name.contains("out")
                && !self.name.starts_with("attn")
        {
            Init::FanInRelu(self.cols)
        } else {
            Init::FanIn(self.cols)
        }
    }
}

/// Layout of every parameter block, stored row-major one after another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub blocks: Vec<Block>,
}

impl Layout {
    pub fn new(cfg: &NetConfig) -> Self {
        let mut l = Layout { blocks: Vec::new() };
        let k = cfg.embed_dim;
        let mut din = 3;
        for (i, &w) in cfg.edgeconv_widths.iter().enumerate() {
            l.push(&format!("edgeconv{i}.w"), w, din);
            l.push(&format!("edgeconv{i}.v"), w, din);
            din = w;
        }
        for name in ["attn.wq", "attn.wk", "attn.wv", "attn.wo"] {
            l.push(name, k, k);
        }
        l.push("attn.ln.gamma", 1, k);
        l.push("attn.ln.beta", 1, k);
        l.push("attn.ff1.w", 2 * k, k);
        l.push("attn.ff1.b", 1, 2 * k);
        l.push("attn.ff2.w", k, 2 * k);
        l.push("attn.ff2.b", 1, k);
        let mut din = cfg.fused_dim();
        for (i, &w) in cfg.shared_mlp_widths.iter().enumerate() {
            l.push(&format!("shared{i}.w"), w, din);
            l.push(&format!("shared{i}.b"), 1, w);
            din = w;
        }
        for head in ["rot", "trans"] {
            let mut d = din;
            for (i, &w) in cfg.head_mlp_widths.iter().enumerate() {
                l.push(&format!("{head}{i}.w"), w, d);
                l.push(&format!("{head}{i}.b"), 1, w);
                d = w;
            }
            let n = cfg.n_actions / 2;
            l.push(&format!("{head}.out.w"), n, d);
            l.push(&format!("{head}.out.b"), 1, n);
        }
        l
    }

    fn push(&mut self, name: &str, rows: usize, cols: usize) {
        let offset = self.total();
        self.blocks.push(Block {
            name: name.to_string(),
            offset,
            rows,
            cols,
        });
    }

    pub fn total(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn block(&self, name: &str) -> &Block {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .unwrap_or_else(|| panic!("no parameter block `{name}`"))
    }

    /// Block holding flat index `i`.
    pub fn block_of(&self, i: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.range().contains(&i))
    }
}

/// Flat parameter vector plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl NetworkParameters {
    /// Fan-in scaled uniform weights, zero biases, unit LayerNorm scale.
    pub fn init(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        let mut rng = rng::seeded(cfg.init_seed);
        let mut values = vec![0.0; layout.total()];
        for b in &layout.blocks {
            let init = b.init();
            for v in &mut values[b.range()] {
                *v = match init {
                    Init::Zero => 0.0,
                    Init::One => 1.0,
                    Init::FanIn(n) => {
                        let s = 1.0 / (n as f64).sqrt();
                        rng.random_range(-s..s)
                    }
                    Init::FanInRelu(n) => {
                        let s = (6.0 / n as f64).sqrt();
                        rng.random_range(-s..s)
                    }
                };
            }
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        let values = vec![0.0; layout.total()];
        Ok(Self { layout, values })
    }

    pub fn from_flat(cfg: &NetConfig, values: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        if values.len() != layout.total() {
            return Err(Error::validation(format!(
                "parameter count {} does not match the configuration ({})",
                values.len(),
                layout.total()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    pub fn mat(&self, name: &str) -> DMatrix<f64> {
        let b = self.layout.block(name);
        DMatrix::from_row_slice(b.rows, b.cols, &self.values[b.range()])
    }

    pub fn vec(&self, name: &str) -> DVector<f64> {
        let b = self.layout.block(name);
        DVector::from_column_slice(&self.values[b.range()])
    }

    pub fn block_mut(&mut self, name: &str) -> &mut [f64] {
        let r = self.layout.block(name).range();
        &mut self.values[r]
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Gradient with the same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(layout: &Layout) -> Self {
        Self {
            values: vec![0.0; layout.total()],
        }
    }

    pub(crate) fn add_mat(&mut self, layout: &Layout, name: &str, m: &DMatrix<f64>) {
        let b = layout.block(name);
        debug_assert_eq!((b.rows, b.cols), m.shape(), "{name}");
        let dst = &mut self.values[b.range()];
        for r in 0..b.rows {
            for c in 0..b.cols {
                dst[r * b.cols + c] += m[(r, c)];
            }
        }
    }

    pub(crate) fn add_vec(&mut self, layout: &Layout, name: &str, v: &DVector<f64>) {
        let b = layout.block(name);
        for (d, s) in self.values[b.range()].iter_mut().zip(v.iter()) {
            *d += s;
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn block<'a>(&'a self, layout: &Layout, name: &str) -> &'a [f64] {
        &self.values[layout.block(name).range()]
    }

    /// Fails naming the first block that holds a NaN or infinity.
    pub fn check_finite(&self, layout: &Layout) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFiniteGradient {
                block: layout
                    .block_of(i)
                    .map_or_else(|| "?".into(), |b| b.name.clone()),
            }),
        }
    }
}
