use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{Fusion, NetConfig};
use super::layers::{
    cross_attention, cross_attention_backward, edgeconv_backward, edgeconv_forward, knn_graph,
    AttentionCache, AttentionWeights, EdgeConvCache,
};
use super::params::{Gradients, NetworkParameters};
use crate::actions::{RewardVector, N_ACTIONS};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Configuration plus parameters; immutable at inference and shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardNet {
    pub config: NetConfig,
    pub params: NetworkParameters,
}

/// One training example: two observed clouds and the target reward vector.
#[derive(Debug, Clone)]
pub struct Sample {
    pub source: PointCloud,
    pub target: PointCloud,
    pub rewards: RewardVector,
}

fn cloud_matrix(c: &PointCloud) -> DMatrix<f64> {
    DMatrix::from_fn(c.len(), 3, |i, j| c.points()[i][j])
}

struct BranchCache {
    layers: Vec<EdgeConvCache>,
}

struct Dense {
    input: DVector<f64>,
    pre: DVector<f64>,
}

struct Cache {
    src: BranchCache,
    tgt: BranchCache,
    att_src: AttentionCache,
    att_tgt: AttentionCache,
    pool_src: Vec<usize>,
    pool_tgt: Vec<usize>,
    n_src: usize,
    n_tgt: usize,
    shared: Vec<Dense>,
    heads: [Vec<Dense>; 2],
}

const HEADS: [&str; 2] = ["rot", "trans"];

impl RewardNet {
    pub fn new(config: NetConfig) -> Result<Self> {
        let params = NetworkParameters::init(&config)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: NetConfig, params: NetworkParameters) -> Result<Self> {
        config.validate()?;
        let expect = super::params::Layout::new(&config);
        if params.layout != expect {
            return Err(Error::validation(
                "parameter layout does not match the configuration",
            ));
        }
        Ok(Self { config, params })
    }

    pub(crate) fn attention_weights(&self) -> AttentionWeights {
        let p = &self.params;
        AttentionWeights {
            wq: p.mat("attn.wq"),
            wk: p.mat("attn.wk"),
            wv: p.mat("attn.wv"),
            wo: p.mat("attn.wo"),
            gamma: p.vec("attn.ln.gamma"),
            beta: p.vec("attn.ln.beta"),
            ff1_w: p.mat("attn.ff1.w"),
            ff1_b: p.vec("attn.ff1.b"),
            ff2_w: p.mat("attn.ff2.w"),
            ff2_b: p.vec("attn.ff2.b"),
            heads: self.config.attn_heads,
        }
    }

    fn check_cloud(&self, c: &PointCloud) -> Result<()> {
        if c.len() < self.config.min_points() {
            return Err(Error::validation(format!(
                "cloud has {} points, the network needs at least {}",
                c.len(),
                self.config.min_points()
            )));
        }
        Ok(())
    }

    fn branch(&self, cloud: &PointCloud) -> Result<(DMatrix<f64>, BranchCache)> {
        let mut x = cloud_matrix(cloud);
        let mut layers = Vec::with_capacity(self.config.edgeconv_widths.len());
        for i in 0..self.config.edgeconv_widths.len() {
            let nb = knn_graph(&x, self.config.knn_k)?;
            let w = self.params.mat(&format!("edgeconv{i}.w"));
            let v = self.params.mat(&format!("edgeconv{i}.v"));
            let (y, c) = edgeconv_forward(&x, &nb, &w, &v)?;
            layers.push(c);
            x = y;
        }
        Ok((x, BranchCache { layers }))
    }

    fn dense_stack(
        &self,
        prefix: &str,
        widths: usize,
        mut x: DVector<f64>,
        caches: &mut Vec<Dense>,
    ) -> DVector<f64> {
        for i in 0..widths {
            let w = self.params.mat(&format!("{prefix}{i}.w"));
            let b = self.params.vec(&format!("{prefix}{i}.b"));
            let pre = &w * &x + b;
            let y = pre.map(|z| z.max(0.0));
            caches.push(Dense { input: x, pre });
            x = y;
        }
        x
    }

    fn forward_cached(
        &self,
        source: &PointCloud,
        target: &PointCloud,
    ) -> Result<(RewardVector, Cache)> {
        self.check_cloud(source)?;
        self.check_cloud(target)?;
        let (fs, src) = self.branch(source)?;
        let (ft, tgt) = self.branch(target)?;
        let att = self.attention_weights();
        let (ps, pt, att_src, att_tgt) = cross_attention(&fs, &ft, &att)?;
        let (gs, pool_src) = maxpool(&ps);
        let (gt, pool_tgt) = maxpool(&pt);
        let fused = match self.config.fusion {
            Fusion::Concat => {
                DVector::from_iterator(gs.len() + gt.len(), gs.iter().chain(gt.iter()).copied())
            }
            Fusion::Difference => &gs - &gt,
        };
        let mut shared = Vec::new();
        let s = self.dense_stack(
            "shared",
            self.config.shared_mlp_widths.len(),
            fused,
            &mut shared,
        );
        let mut heads: [Vec<Dense>; 2] = [Vec::new(), Vec::new()];
        let mut out = [0.0; N_ACTIONS];
        let half = N_ACTIONS / 2;
        for (h, name) in HEADS.iter().enumerate() {
            let hidden = self.dense_stack(
                name,
                self.config.head_mlp_widths.len(),
                s.clone(),
                &mut heads[h],
            );
            let w = self.params.mat(&format!("{name}.out.w"));
            let b = self.params.vec(&format!("{name}.out.b"));
            let y = &w * &hidden + b;
            heads[h].push(Dense {
                input: hidden,
                pre: y.clone(),
            });
            out[h * half..(h + 1) * half].copy_from_slice(y.as_slice());
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("network output is not finite"));
        }
        let cache = Cache {
            src,
            tgt,
            att_src,
            att_tgt,
            pool_src,
            pool_tgt,
            n_src: source.len(),
            n_tgt: target.len(),
            shared,
            heads,
        };
        Ok((RewardVector(out), cache))
    }

    /// Predicted rewards for registering `source` onto `target`.
    pub fn forward(&self, source: &PointCloud, target: &PointCloud) -> Result<RewardVector> {
        Ok(self.forward_cached(source, target)?.0)
    }

    /// Gradient of `Σ dh ⊙ h` with respect to every parameter.
    fn backward_one(&self, cache: &Cache, dh: &[f64; N_ACTIONS]) -> Gradients {
        let layout = &self.params.layout;
        let mut g = Gradients::zeros(layout);
        let half = N_ACTIONS / 2;
        let mut ds = DVector::zeros(
            cache
                .shared
                .last()
                .map_or(self.config.fused_dim(), |d| d.pre.len()),
        );
        for (h, name) in HEADS.iter().enumerate() {
            let mut dy = DVector::from_column_slice(&dh[h * half..(h + 1) * half]);
            let layers = &cache.heads[h];
            let n_hidden = layers.len() - 1;
            for (i, d) in layers.iter().enumerate().rev() {
                let prefix = if i == n_hidden {
                    format!("{name}.out")
                } else {
                    format!("{name}{i}")
                };
                if i != n_hidden {
                    dy.zip_apply(&d.pre, |g, z| {
                        if z <= 0.0 {
                            *g = 0.0
                        }
                    });
                }
                let w = self.params.mat(&format!("{prefix}.w"));
                g.add_mat(layout, &format!("{prefix}.w"), &(&dy * d.input.transpose()));
                g.add_vec(layout, &format!("{prefix}.b"), &dy);
                dy = w.transpose() * dy;
            }
            ds += dy;
        }
        let mut dz = ds;
        for (i, d) in cache.shared.iter().enumerate().rev() {
            dz.zip_apply(&d.pre, |g, z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            let w = self.params.mat(&format!("shared{i}.w"));
            g.add_mat(
                layout,
                &format!("shared{i}.w"),
                &(&dz * d.input.transpose()),
            );
            g.add_vec(layout, &format!("shared{i}.b"), &dz);
            dz = w.transpose() * dz;
        }
        let k = self.config.embed_dim;
        let (dgs, dgt): (DVector<f64>, DVector<f64>) = match self.config.fusion {
            Fusion::Concat => (dz.rows(0, k).into_owned(), dz.rows(k, k).into_owned()),
            Fusion::Difference => (dz.clone(), -dz),
        };
        let d_ps = unpool(&dgs, &cache.pool_src, cache.n_src);
        let d_pt = unpool(&dgt, &cache.pool_tgt, cache.n_tgt);
        let att = self.attention_weights();
        let (d_fs, d_ft, ag) =
            cross_attention_backward(&cache.att_src, &cache.att_tgt, &att, &d_ps, &d_pt);
        for (name, m) in [
            ("attn.wq", &ag.wq),
            ("attn.wk", &ag.wk),
            ("attn.wv", &ag.wv),
            ("attn.wo", &ag.wo),
        ] {
            g.add_mat(layout, name, m);
        }
        g.add_mat(layout, "attn.ff1.w", &ag.ff1_w);
        g.add_mat(layout, "attn.ff2.w", &ag.ff2_w);
        g.add_vec(layout, "attn.ff1.b", &ag.ff1_b);
        g.add_vec(layout, "attn.ff2.b", &ag.ff2_b);
        g.add_vec(layout, "attn.ln.gamma", &ag.gamma);
        g.add_vec(layout, "attn.ln.beta", &ag.beta);
        for (branch, d) in [(&cache.src, d_fs), (&cache.tgt, d_ft)] {
            let mut dx = d;
            for (i, c) in branch.layers.iter().enumerate().rev() {
                let w = self.params.mat(&format!("edgeconv{i}.w"));
                let v = self.params.mat(&format!("edgeconv{i}.v"));
                let (dxi, dw, dv) = edgeconv_backward(c, &w, &v, &dx);
                g.add_mat(layout, &format!("edgeconv{i}.w"), &dw);
                g.add_mat(layout, &format!("edgeconv{i}.v"), &dv);
                dx = dxi;
            }
        }
        g
    }
}

/// Column-wise max over points with the arg-max row per column (first on ties).
fn maxpool(m: &DMatrix<f64>) -> (DVector<f64>, Vec<usize>) {
    let mut idx = Vec::with_capacity(m.ncols());
    let v = DVector::from_iterator(
        m.ncols(),
        m.column_iter().map(|c| {
            let mut best = 0;
            for i in 1..c.len() {
                if c[i] > c[best] {
                    best = i;
                }
            }
            idx.push(best);
            c[best]
        }),
    );
    (v, idx)
}

fn unpool(g: &DVector<f64>, idx: &[usize], n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, g.len());
    for (c, &i) in idx.iter().enumerate() {
        d[(i, c)] = g[c];
    }
    d
}

/// `(1/|A|)‖g − h‖²`.
pub fn data_loss(h: &RewardVector, g: &RewardVector) -> f64 {
    h.iter()
        .zip(g.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / N_ACTIONS as f64
}

/// `(1/|A|)‖g − h‖² + λ‖Θ‖²`.
pub fn loss(h: &RewardVector, g: &RewardVector, params: &NetworkParameters, lambda: f64) -> f64 {
    data_loss(h, g) + lambda * params.squared_norm()
}

/// Mean data loss over `batch` plus `λ‖Θ‖²`.
pub fn batch_loss(net: &RewardNet, batch: &[Sample], lambda: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    let losses = batch
        .par_iter()
        .map(|s| Ok(data_loss(&net.forward(&s.source, &s.target)?, &s.rewards)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / batch.len() as f64 + lambda * net.params.squared_norm())
}

/// Gradient of [`batch_loss`] and its value.
///
/// Samples run in parallel; their gradients are summed in batch order, so the
/// result does not depend on thread scheduling.
pub fn backward(net: &RewardNet, batch: &[Sample], lambda: f64) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    let scale = 2.0 / (N_ACTIONS as f64 * batch.len() as f64);
    let parts = batch
        .par_iter()
        .map(|s| {
            let (h, cache) = net.forward_cached(&s.source, &s.target)?;
            let dh: [f64; N_ACTIONS] = std::array::from_fn(|i| scale * (h[i] - s.rewards[i]));
            Ok((data_loss(&h, &s.rewards), net.backward_one(&cache, &dh)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Gradients::zeros(&net.params.layout);
    let mut data = 0.0;
    for (l, g) in &parts {
        data += l;
        total.add_assign(g);
    }
    for (t, p) in total.values.iter_mut().zip(&net.params.values) {
        *t += 2.0 * lambda * p;
    }
    total.check_finite(&net.params.layout)?;
    Ok((
        data / batch.len() as f64 + lambda * net.params.squared_norm(),
        total,
    ))
}
