//! Dual feature extractors and linear classifiers with manual backprop.
//!
//! The class branch (`g_v` + `f_v`) and the domain branch (`g_s` + `f_s`)
//! share an architecture shape but never share parameters; each branch's
//! gradient flows only through its own encoder, so cross-branch gradients are
//! structurally zero. Embeddings are L2-normalized before they reach either
//! the contrastive losses or the classifiers.
//!
//! All math is `f64` and single-threaded; forward passes are deterministic
//! functions of parameters and inputs.

use ndarray::{Array1, Array2, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::core::{AugmentedBatch, DualEmbeddings, LabelSpace};
use crate::seeding::derive_seed;
use crate::{Error, Result};

/// Encoder family. The small CNN is the default; the MLP trades accuracy for
/// speed on tiny images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[default]
    SmallCnn,
    Mlp,
}

/// Shape of one encoder branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSpec {
    pub architecture: Architecture,
    /// Output embedding dimension D.
    pub embedding_dim: usize,
    /// Conv block widths (small_cnn) or hidden widths (mlp).
    pub widths: Vec<usize>,
    /// Input image shape (H, W, C).
    pub input_shape: (usize, usize, usize),
    /// Default parameter seed; `init_bundle` takes the authoritative seed.
    pub seed: u64,
    /// Append a two-layer projection head before normalization.
    pub projection_head: bool,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            architecture: Architecture::SmallCnn,
            embedding_dim: 128,
            widths: vec![32, 64, 128],
            input_shape: (32, 32, 3),
            seed: 0,
            projection_head: false,
        }
    }
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim < 2 {
            return Err(Error::Config(format!(
                "embedding_dim must be at least 2, got {}",
                self.embedding_dim
            )));
        }
        if self.widths.is_empty() || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "encoder widths must be nonempty and positive, got {:?}",
                self.widths
            )));
        }
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Config(format!(
                "input shape must be nonzero, got {:?}",
                self.input_shape
            )));
        }
        if self.architecture == Architecture::SmallCnn {
            // Each block halves the spatial size.
            let min_side = 1usize << self.widths.len();
            if h < min_side || w < min_side {
                return Err(Error::Config(format!(
                    "input {h}x{w} too small for {} pooling stages",
                    self.widths.len()
                )));
            }
        }
        Ok(())
    }
}

fn he_normal(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("valid normal");
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Callback over `(name, shape, values)` for read-only parameter walks.
pub(crate) trait ValueVisitor {
    fn visit(&mut self, name: &str, shape: &[usize], values: &[f64]);
}

/// Callback over `(name, param, grad)` flat slices for optimizer updates.
pub(crate) trait PairVisitor {
    fn visit(&mut self, name: &str, param: &mut [f64], grad: &[f64]);
}

// ── Layers ─────────────────────────────────────────────────────────────────

/// Fully connected layer `y = x W + b` with gradient buffers.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    gw: Array2<f64>,
    gb: Array1<f64>,
}

impl Linear {
    fn new(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        let w = Array2::from_shape_vec((fan_in, fan_out), he_normal(rng, fan_in, fan_in * fan_out))
            .expect("shape matches");
        Self {
            w,
            b: Array1::zeros(fan_out),
            gw: Array2::zeros((fan_in, fan_out)),
            gb: Array1::zeros(fan_out),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulate parameter gradients and return dL/dx.
    pub(crate) fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.gw += &x.t().dot(dy);
        self.gb += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }

    fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    fn visit_values(&self, prefix: &str, v: &mut impl ValueVisitor) {
        v.visit(
            &format!("{prefix}.w"),
            &[self.w.nrows(), self.w.ncols()],
            self.w.as_slice().expect("standard layout"),
        );
        v.visit(
            &format!("{prefix}.b"),
            &[self.b.len()],
            self.b.as_slice().expect("standard layout"),
        );
    }

    fn visit_pairs(&mut self, prefix: &str, v: &mut impl PairVisitor) {
        v.visit(
            &format!("{prefix}.w"),
            self.w.as_slice_mut().expect("standard layout"),
            self.gw.as_slice().expect("standard layout"),
        );
        v.visit(
            &format!("{prefix}.b"),
            self.b.as_slice_mut().expect("standard layout"),
            self.gb.as_slice().expect("standard layout"),
        );
    }

    fn load(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let target: &mut [f64] = if name.ends_with(".w") {
            self.w.as_slice_mut().expect("standard layout")
        } else {
            self.b.as_slice_mut().expect("standard layout")
        };
        if target.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "parameter {name} has {} values, expected {}",
                values.len(),
                target.len()
            )));
        }
        target.copy_from_slice(values);
        Ok(())
    }
}

/// 3x3 same-padding convolution stored in im2col form: weights are
/// `[9*C_in, C_out]` with row index `(ky*3 + kx)*C_in + c`.
#[derive(Debug, Clone)]
struct Conv3x3 {
    w: Array2<f64>,
    b: Array1<f64>,
    gw: Array2<f64>,
    gb: Array1<f64>,
    cin: usize,
    cout: usize,
}

impl Conv3x3 {
    fn new(rng: &mut ChaCha8Rng, cin: usize, cout: usize) -> Self {
        let fan_in = 9 * cin;
        let w = Array2::from_shape_vec((fan_in, cout), he_normal(rng, fan_in, fan_in * cout))
            .expect("shape matches");
        Self {
            w,
            b: Array1::zeros(cout),
            gw: Array2::zeros((fan_in, cout)),
            gb: Array1::zeros(cout),
            cin,
            cout,
        }
    }

    fn im2col(&self, x: &Array4<f64>) -> Array2<f64> {
        let (b, h, w, c) = x.dim();
        debug_assert_eq!(c, self.cin);
        let mut col = Array2::zeros((b * h * w, 9 * c));
        for bi in 0..b {
            for y in 0..h {
                for xx in 0..w {
                    let row = (bi * h + y) * w + xx;
                    for ky in 0..3usize {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..3usize {
                            let sx = xx as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let base = (ky * 3 + kx) * c;
                            for ch in 0..c {
                                col[[row, base + ch]] = x[[bi, sy as usize, sx as usize, ch]];
                            }
                        }
                    }
                }
            }
        }
        col
    }

    /// Returns `(output, im2col_cache)`.
    fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, Array2<f64>) {
        let (b, h, w, _) = x.dim();
        let col = self.im2col(x);
        let flat = col.dot(&self.w) + &self.b;
        let out = flat
            .into_shape_with_order((b, h, w, self.cout))
            .expect("row count matches");
        (out, col)
    }

    /// Accumulate gradients and return dL/dx.
    fn backward(&mut self, col: &Array2<f64>, shape: (usize, usize, usize), dy: &Array4<f64>) -> Array4<f64> {
        let (b, h, w) = shape;
        let dy_flat = dy
            .to_shape((b * h * w, self.cout))
            .expect("standard layout");
        self.gw += &col.t().dot(&dy_flat);
        self.gb += &dy_flat.sum_axis(Axis(0));

        let dcol = dy_flat.dot(&self.w.t());
        let mut dx = Array4::zeros((b, h, w, self.cin));
        for bi in 0..b {
            for y in 0..h {
                for xx in 0..w {
                    let row = (bi * h + y) * w + xx;
                    for ky in 0..3usize {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..3usize {
                            let sx = xx as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let base = (ky * 3 + kx) * self.cin;
                            for ch in 0..self.cin {
                                dx[[bi, sy as usize, sx as usize, ch]] += dcol[[row, base + ch]];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    fn visit_values(&self, prefix: &str, v: &mut impl ValueVisitor) {
        v.visit(
            &format!("{prefix}.w"),
            &[self.w.nrows(), self.w.ncols()],
            self.w.as_slice().expect("standard layout"),
        );
        v.visit(
            &format!("{prefix}.b"),
            &[self.b.len()],
            self.b.as_slice().expect("standard layout"),
        );
    }

    fn visit_pairs(&mut self, prefix: &str, v: &mut impl PairVisitor) {
        v.visit(
            &format!("{prefix}.w"),
            self.w.as_slice_mut().expect("standard layout"),
            self.gw.as_slice().expect("standard layout"),
        );
        v.visit(
            &format!("{prefix}.b"),
            self.b.as_slice_mut().expect("standard layout"),
            self.gb.as_slice().expect("standard layout"),
        );
    }

    fn load(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let target: &mut [f64] = if name.ends_with(".w") {
            self.w.as_slice_mut().expect("standard layout")
        } else {
            self.b.as_slice_mut().expect("standard layout")
        };
        if target.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "parameter {name} has {} values, expected {}",
                values.len(),
                target.len()
            )));
        }
        target.copy_from_slice(values);
        Ok(())
    }
}

fn relu_forward(x: &mut Array4<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// 2x2 max pool, stride 2; odd trailing rows/columns are dropped.
fn maxpool_forward(x: &Array4<f64>) -> (Array4<f64>, Array4<usize>) {
    let (b, h, w, c) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array4::zeros((b, oh, ow, c));
    let mut arg = Array4::zeros((b, oh, ow, c));
    for bi in 0..b {
        for y in 0..oh {
            for xx in 0..ow {
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let (sy, sx) = (2 * y + dy, 2 * xx + dx);
                            let v = x[[bi, sy, sx, ch]];
                            if v > best {
                                best = v;
                                best_idx = sy * w + sx;
                            }
                        }
                    }
                    out[[bi, y, xx, ch]] = best;
                    arg[[bi, y, xx, ch]] = best_idx;
                }
            }
        }
    }
    (out, arg)
}

fn maxpool_backward(
    dy: &Array4<f64>,
    arg: &Array4<usize>,
    input_shape: (usize, usize, usize, usize),
) -> Array4<f64> {
    let (b, h, w, c) = input_shape;
    let (_, oh, ow, _) = dy.dim();
    let mut dx = Array4::zeros((b, h, w, c));
    for bi in 0..b {
        for y in 0..oh {
            for xx in 0..ow {
                for ch in 0..c {
                    let idx = arg[[bi, y, xx, ch]];
                    dx[[bi, idx / w, idx % w, ch]] += dy[[bi, y, xx, ch]];
                }
            }
        }
    }
    dx
}

/// L2-normalize rows; zero rows fall back to a tiny norm floor.
pub fn normalize_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt().max(1e-12);
        row.mapv_inplace(|v| v / norm);
    }
    out
}

/// Backward of row normalization: `du = (dz - z * (z . dz)) / |u|`.
fn normalize_backward(pre: &Array2<f64>, z: &Array2<f64>, dz: &Array2<f64>) -> Array2<f64> {
    let mut du = Array2::zeros(pre.raw_dim());
    for i in 0..pre.nrows() {
        let u = pre.row(i);
        let norm = u.dot(&u).sqrt().max(1e-12);
        let zi = z.row(i);
        let proj = zi.dot(&dz.row(i));
        for j in 0..pre.ncols() {
            du[[i, j]] = (dz[[i, j]] - zi[j] * proj) / norm;
        }
    }
    du
}

// ── Encoder ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
struct ConvBlock {
    conv: Conv3x3,
}

struct ConvBlockCache {
    col: Array2<f64>,
    /// Post-ReLU activation (pre-pool); also provides the ReLU mask.
    act: Array4<f64>,
    pool_arg: Array4<usize>,
}

impl ConvBlock {
    fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, ConvBlockCache) {
        let (mut a, col) = self.conv.forward(x);
        relu_forward(&mut a);
        let (pooled, pool_arg) = maxpool_forward(&a);
        (
            pooled,
            ConvBlockCache {
                col,
                act: a,
                pool_arg,
            },
        )
    }

    fn backward(&mut self, cache: &ConvBlockCache, dy: &Array4<f64>) -> Array4<f64> {
        let act_shape = cache.act.dim();
        let mut da = maxpool_backward(dy, &cache.pool_arg, act_shape);
        ndarray::Zip::from(&mut da).and(&cache.act).for_each(|g, &a| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
        let (b, h, w, _) = act_shape;
        self.conv.backward(&cache.col, (b, h, w), &da)
    }
}

/// One encoder branch: feature body, embedding projection, optional head,
/// row normalization.
#[derive(Debug, Clone)]
pub struct Encoder {
    spec: EncoderSpec,
    blocks: Vec<ConvBlock>,
    hidden: Vec<Linear>,
    project: Linear,
    head: Option<(Linear, Linear)>,
}

/// Intermediate activations kept for the backward pass.
pub struct EncoderCache {
    block_caches: Vec<ConvBlockCache>,
    /// GAP input spatial size (small_cnn) for gradient spreading.
    gap_spatial: (usize, usize),
    /// Flattened input (mlp) or pooled features (small_cnn), `[B, F]`.
    features: Array2<f64>,
    hidden_acts: Vec<Array2<f64>>,
    /// Projection output and post-ReLU hidden, present when a head is used.
    head_acts: Option<(Array2<f64>, Array2<f64>)>,
    /// Pre-normalization embedding.
    pre_norm: Array2<f64>,
    /// Normalized embedding (the encoder output).
    embedding: Array2<f64>,
}

impl Encoder {
    fn new(spec: &EncoderSpec, rng: &mut ChaCha8Rng) -> Self {
        let (h, w, c) = spec.input_shape;
        let mut blocks = Vec::new();
        let mut hidden = Vec::new();
        let feature_dim;
        match spec.architecture {
            Architecture::SmallCnn => {
                let mut cin = c;
                for &width in &spec.widths {
                    blocks.push(ConvBlock {
                        conv: Conv3x3::new(rng, cin, width),
                    });
                    cin = width;
                }
                feature_dim = cin;
            }
            Architecture::Mlp => {
                let mut fan_in = h * w * c;
                for &width in &spec.widths {
                    hidden.push(Linear::new(rng, fan_in, width));
                    fan_in = width;
                }
                feature_dim = fan_in;
            }
        }
        let project = Linear::new(rng, feature_dim, spec.embedding_dim);
        let head = spec.projection_head.then(|| {
            (
                Linear::new(rng, spec.embedding_dim, spec.embedding_dim),
                Linear::new(rng, spec.embedding_dim, spec.embedding_dim),
            )
        });
        Self {
            spec: spec.clone(),
            blocks,
            hidden,
            project,
            head,
        }
    }

    fn check_input(&self, x: &Array4<f64>) -> Result<()> {
        let (_, h, w, c) = x.dim();
        if (h, w, c) != self.spec.input_shape {
            return Err(Error::Shape(format!(
                "input layout ({h}, {w}, {c}) does not match encoder input {:?}",
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    /// Forward pass producing unit-norm embeddings plus the cache needed by
    /// [`backward`](Self::backward).
    pub fn forward(&self, x: &Array4<f64>) -> Result<(Array2<f64>, EncoderCache)> {
        self.check_input(x)?;
        let (b, _, _, _) = x.dim();

        let mut block_caches = Vec::new();
        let mut gap_spatial = (0, 0);
        let mut hidden_acts = Vec::new();
        let features: Array2<f64>;
        match self.spec.architecture {
            Architecture::SmallCnn => {
                let mut a = x.clone();
                for block in &self.blocks {
                    let (next, cache) = block.forward(&a);
                    block_caches.push(cache);
                    a = next;
                }
                let (_, h, w, c) = a.dim();
                gap_spatial = (h, w);
                let mut pooled = Array2::zeros((b, c));
                for bi in 0..b {
                    for ch in 0..c {
                        let mut acc = 0.0;
                        for y in 0..h {
                            for xx in 0..w {
                                acc += a[[bi, y, xx, ch]];
                            }
                        }
                        pooled[[bi, ch]] = acc / (h * w) as f64;
                    }
                }
                features = pooled;
            }
            Architecture::Mlp => {
                let n = x.len() / b;
                let flat = x.to_shape((b, n)).expect("standard layout").to_owned();
                let mut a = flat;
                for layer in &self.hidden {
                    let mut h = layer.forward(&a);
                    h.mapv_inplace(|v| v.max(0.0));
                    hidden_acts.push(a);
                    a = h;
                }
                features = a;
            }
        }

        let projected = self.project.forward(&features);
        let (head_acts, pre_norm) = match &self.head {
            Some((h1, h2)) => {
                let mut a1 = h1.forward(&projected);
                a1.mapv_inplace(|v| v.max(0.0));
                let out = h2.forward(&a1);
                (Some((projected, a1)), out)
            }
            None => (None, projected),
        };
        let embedding = normalize_rows(&pre_norm);
        let cache = EncoderCache {
            block_caches,
            gap_spatial,
            features,
            hidden_acts,
            head_acts,
            pre_norm,
            embedding: embedding.clone(),
        };
        Ok((embedding, cache))
    }

    /// Accumulate parameter gradients from dL/d(embedding).
    pub fn backward(&mut self, cache: &EncoderCache, d_embedding: &Array2<f64>) {
        let du = normalize_backward(&cache.pre_norm, &cache.embedding, d_embedding);

        let d_projected = match (&mut self.head, &cache.head_acts) {
            (Some((h1, h2)), Some((proj_in, a1))) => {
                let mut da1 = h2.backward(a1, &du);
                ndarray::Zip::from(&mut da1).and(a1).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                h1.backward(proj_in, &da1)
            }
            _ => du,
        };

        let d_features = self.project.backward(&cache.features, &d_projected);

        match self.spec.architecture {
            Architecture::SmallCnn => {
                let (h, w) = cache.gap_spatial;
                let (b, c) = d_features.dim();
                let mut da = Array4::zeros((b, h, w, c));
                let inv = 1.0 / (h * w) as f64;
                for bi in 0..b {
                    for ch in 0..c {
                        let g = d_features[[bi, ch]] * inv;
                        for y in 0..h {
                            for xx in 0..w {
                                da[[bi, y, xx, ch]] = g;
                            }
                        }
                    }
                }
                for (block, cache) in self.blocks.iter_mut().zip(&cache.block_caches).rev() {
                    da = block.backward(cache, &da);
                }
            }
            Architecture::Mlp => {
                // hidden_acts[i] is the input to layer i; the ReLU mask comes
                // from the layer's own output, which is the next layer's
                // input or `features` for the last layer.
                let n = self.hidden.len();
                let mut grad = d_features;
                for i in (0..n).rev() {
                    let output = if i + 1 < n {
                        &cache.hidden_acts[i + 1]
                    } else {
                        &cache.features
                    };
                    let mut masked = grad.clone();
                    ndarray::Zip::from(&mut masked).and(output).for_each(|g, &a| {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    });
                    grad = self.hidden[i].backward(&cache.hidden_acts[i], &masked);
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for block in &mut self.blocks {
            block.conv.zero_grad();
        }
        for layer in &mut self.hidden {
            layer.zero_grad();
        }
        self.project.zero_grad();
        if let Some((h1, h2)) = &mut self.head {
            h1.zero_grad();
            h2.zero_grad();
        }
    }

    fn visit_values(&self, prefix: &str, v: &mut impl ValueVisitor) {
        for (i, block) in self.blocks.iter().enumerate() {
            block.conv.visit_values(&format!("{prefix}.block{i}"), v);
        }
        for (i, layer) in self.hidden.iter().enumerate() {
            layer.visit_values(&format!("{prefix}.hidden{i}"), v);
        }
        self.project.visit_values(&format!("{prefix}.project"), v);
        if let Some((h1, h2)) = &self.head {
            h1.visit_values(&format!("{prefix}.head0"), v);
            h2.visit_values(&format!("{prefix}.head1"), v);
        }
    }

    fn visit_pairs(&mut self, prefix: &str, v: &mut impl PairVisitor) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.conv.visit_pairs(&format!("{prefix}.block{i}"), v);
        }
        for (i, layer) in self.hidden.iter_mut().enumerate() {
            layer.visit_pairs(&format!("{prefix}.hidden{i}"), v);
        }
        self.project.visit_pairs(&format!("{prefix}.project"), v);
        if let Some((h1, h2)) = &mut self.head {
            h1.visit_pairs(&format!("{prefix}.head0"), v);
            h2.visit_pairs(&format!("{prefix}.head1"), v);
        }
    }

    fn load(&mut self, name: &str, rest: &str, values: &[f64]) -> Result<()> {
        if let Some(idx_rest) = rest.strip_prefix("block") {
            let (idx, _) = idx_rest.split_once('.').ok_or_else(|| bad_param(name))?;
            let i: usize = idx.parse().map_err(|_| bad_param(name))?;
            return self
                .blocks
                .get_mut(i)
                .ok_or_else(|| bad_param(name))?
                .conv
                .load(name, values);
        }
        if let Some(idx_rest) = rest.strip_prefix("hidden") {
            let (idx, _) = idx_rest.split_once('.').ok_or_else(|| bad_param(name))?;
            let i: usize = idx.parse().map_err(|_| bad_param(name))?;
            return self
                .hidden
                .get_mut(i)
                .ok_or_else(|| bad_param(name))?
                .load(name, values);
        }
        if rest.starts_with("project") {
            return self.project.load(name, values);
        }
        if let Some((h1, h2)) = &mut self.head {
            if rest.starts_with("head0") {
                return h1.load(name, values);
            }
            if rest.starts_with("head1") {
                return h2.load(name, values);
            }
        }
        Err(bad_param(name))
    }
}

fn bad_param(name: &str) -> Error {
    Error::Checkpoint(format!("unknown parameter {name}"))
}

// ── Bundle ─────────────────────────────────────────────────────────────────

/// The four networks: class encoder, domain encoder, class head, domain head.
#[derive(Clone)]
pub struct ModelBundle {
    pub spec: EncoderSpec,
    pub space: LabelSpace,
    pub class_encoder: Encoder,
    pub domain_encoder: Encoder,
    pub class_head: Linear,
    pub domain_head: Linear,
}

/// Caches from a training-mode forward pass through both branches.
pub struct BundleForward {
    pub z_class: Array2<f64>,
    pub z_domain: Array2<f64>,
    pub class_cache: EncoderCache,
    pub domain_cache: EncoderCache,
}

/// Deterministically initialize a bundle; identical `(spec, seed)` produce
/// bit-identical parameters.
pub fn init_bundle(spec: &EncoderSpec, space: &LabelSpace, seed: u64) -> Result<ModelBundle> {
    spec.validate()?;
    let mut rng_v = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let mut rng_s = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]));
    let mut rng_heads = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3]));
    let class_encoder = Encoder::new(spec, &mut rng_v);
    let domain_encoder = Encoder::new(spec, &mut rng_s);
    let class_head = Linear::new(&mut rng_heads, spec.embedding_dim, space.num_classes());
    let domain_head = Linear::new(&mut rng_heads, spec.embedding_dim, space.num_domains());
    Ok(ModelBundle {
        spec: spec.clone(),
        space: *space,
        class_encoder,
        domain_encoder,
        class_head,
        domain_head,
    })
}

impl ModelBundle {
    /// Inference-mode encode: both branches, unit rows, no caches.
    pub fn encode_images(&self, images: &Array4<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let (zv, _) = self.class_encoder.forward(images)?;
        let (zs, _) = self.domain_encoder.forward(images)?;
        Ok((zv, zs))
    }

    /// Encode an augmented batch into labeled dual embeddings.
    pub fn encode(&self, batch: &AugmentedBatch) -> Result<DualEmbeddings> {
        let (zv, zs) = self.encode_images(&batch.images)?;
        DualEmbeddings::new(
            zv,
            zs,
            batch.class_labels.clone(),
            batch.domain_labels.clone(),
        )
    }

    /// Training-mode forward keeping the caches for [`Encoder::backward`].
    pub fn forward_training(&self, images: &Array4<f64>) -> Result<BundleForward> {
        let (z_class, class_cache) = self.class_encoder.forward(images)?;
        let (z_domain, domain_cache) = self.domain_encoder.forward(images)?;
        Ok(BundleForward {
            z_class,
            z_domain,
            class_cache,
            domain_cache,
        })
    }

    /// Class and domain logits; each head consumes only its own branch.
    pub fn classify(&self, d: &DualEmbeddings) -> Result<(Array2<f64>, Array2<f64>)> {
        if d.dim() != self.spec.embedding_dim {
            return Err(Error::Shape(format!(
                "embedding dim {} does not match bundle dim {}",
                d.dim(),
                self.spec.embedding_dim
            )));
        }
        Ok((
            self.class_head.forward(&d.z_class),
            self.domain_head.forward(&d.z_domain),
        ))
    }

    pub fn zero_grad(&mut self) {
        self.class_encoder.zero_grad();
        self.domain_encoder.zero_grad();
        self.class_head.zero_grad();
        self.domain_head.zero_grad();
    }

    pub(crate) fn visit_values(&self, v: &mut impl ValueVisitor) {
        self.class_encoder.visit_values("g_v", v);
        self.domain_encoder.visit_values("g_s", v);
        self.class_head.visit_values("f_v", v);
        self.domain_head.visit_values("f_s", v);
    }

    pub(crate) fn visit_pairs(&mut self, v: &mut impl PairVisitor) {
        self.class_encoder.visit_pairs("g_v", v);
        self.domain_encoder.visit_pairs("g_s", v);
        self.class_head.visit_pairs("f_v", v);
        self.domain_head.visit_pairs("f_s", v);
    }

    pub(crate) fn load_param(&mut self, name: &str, values: &[f64]) -> Result<()> {
        if let Some(rest) = name.strip_prefix("g_v.") {
            self.class_encoder.load(name, rest, values)
        } else if let Some(rest) = name.strip_prefix("g_s.") {
            self.domain_encoder.load(name, rest, values)
        } else if name.starts_with("f_v.") {
            self.class_head.load(name, values)
        } else if name.starts_with("f_s.") {
            self.domain_head.load(name, values)
        } else {
            Err(bad_param(name))
        }
    }

    /// SHA-256 over all parameter values in traversal order.
    pub fn param_fingerprint(&self) -> String {
        struct Hasher(Sha256);
        impl ValueVisitor for Hasher {
            fn visit(&mut self, name: &str, shape: &[usize], values: &[f64]) {
                self.0.update(name.as_bytes());
                for &s in shape {
                    self.0.update(s.to_le_bytes());
                }
                for &v in values {
                    self.0.update(v.to_le_bytes());
                }
            }
        }
        let mut h = Hasher(Sha256::new());
        self.visit_values(&mut h);
        hex_string(&h.0.finalize())
    }

    /// Total parameter count across all four networks.
    pub fn param_count(&self) -> usize {
        struct Counter(usize);
        impl ValueVisitor for Counter {
            fn visit(&mut self, _: &str, _: &[usize], values: &[f64]) {
                self.0 += values.len();
            }
        }
        let mut c = Counter(0);
        self.visit_values(&mut c);
        c.0
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{s, Array3};
    use rand::Rng;

    fn tiny_spec() -> EncoderSpec {
        EncoderSpec {
            architecture: Architecture::SmallCnn,
            embedding_dim: 8,
            widths: vec![4, 6],
            input_shape: (8, 8, 3),
            seed: 0,
            projection_head: false,
        }
    }

    fn random_images(rng: &mut ChaCha8Rng, b: usize, shape: (usize, usize, usize)) -> Array4<f64> {
        let (h, w, c) = shape;
        let mut x = Array4::zeros((b, h, w, c));
        x.mapv_inplace(|_| rng.gen_range(0.0..1.0));
        x
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let spec = tiny_spec();
        let space = LabelSpace::new(5, 4).unwrap();
        let a = init_bundle(&spec, &space, 7).unwrap();
        let b = init_bundle(&spec, &space, 7).unwrap();
        let c = init_bundle(&spec, &space, 8).unwrap();
        assert_eq!(a.param_fingerprint(), b.param_fingerprint());
        assert_ne!(a.param_fingerprint(), c.param_fingerprint());
    }

    #[test]
    fn head_shapes_follow_label_space() {
        let spec = EncoderSpec {
            embedding_dim: 128,
            widths: vec![8],
            input_shape: (8, 8, 3),
            ..tiny_spec()
        };
        let space = LabelSpace::new(7, 4).unwrap();
        let bundle = init_bundle(&spec, &space, 0).unwrap();
        assert_eq!(bundle.class_head.w.dim(), (128, 7));
        assert_eq!(bundle.domain_head.w.dim(), (128, 4));
    }

    #[test]
    fn encode_shapes_and_unit_norms() {
        let spec = tiny_spec();
        let space = LabelSpace::new(3, 2).unwrap();
        let bundle = init_bundle(&spec, &space, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_images(&mut rng, 8, spec.input_shape);
        let (zv, zs) = bundle.encode_images(&x).unwrap();
        assert_eq!(zv.dim(), (8, 8));
        assert_eq!(zs.dim(), (8, 8));
        for z in [&zv, &zs] {
            for row in z.axis_iter(Axis(0)) {
                assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn identical_inputs_give_identical_rows() {
        let spec = tiny_spec();
        let space = LabelSpace::new(3, 2).unwrap();
        let bundle = init_bundle(&spec, &space, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let one = random_images(&mut rng, 1, spec.input_shape);
        let mut x = Array4::zeros((2, 8, 8, 3));
        x.slice_mut(s![0, .., .., ..]).assign(&one.index_axis(Axis(0), 0));
        x.slice_mut(s![1, .., .., ..]).assign(&one.index_axis(Axis(0), 0));
        let (zv, _) = bundle.encode_images(&x).unwrap();
        assert_eq!(zv.row(0), zv.row(1));
    }

    #[test]
    fn zero_weight_heads_give_uniform_ce() {
        let spec = tiny_spec();
        let space = LabelSpace::new(7, 4).unwrap();
        let mut bundle = init_bundle(&spec, &space, 3).unwrap();
        bundle.class_head.w.fill(0.0);
        bundle.class_head.b.fill(0.0);
        bundle.domain_head.w.fill(0.0);
        bundle.domain_head.b.fill(0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_images(&mut rng, 6, spec.input_shape);
        let (zv, zs) = bundle.encode_images(&x).unwrap();
        let d = DualEmbeddings::new(zv, zs, vec![0; 6], vec![0; 6]).unwrap();
        let (cl, dl) = bundle.classify(&d).unwrap();
        assert!(cl.iter().all(|&v| v == 0.0));
        assert!(dl.iter().all(|&v| v == 0.0));
        let ce = crate::losses::ce_dis(&cl, &dl, &d.class_labels, &d.domain_labels).unwrap();
        let expected = (7.0f64).ln() + (4.0f64).ln();
        assert!((ce - expected).abs() < 1e-9);
    }

    #[test]
    fn perturbing_domain_branch_leaves_class_logits_unchanged() {
        let spec = tiny_spec();
        let space = LabelSpace::new(3, 2).unwrap();
        let mut bundle = init_bundle(&spec, &space, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_images(&mut rng, 4, spec.input_shape);

        let d = bundle
            .encode(&AugmentedBatch::new(x.clone(), vec![0, 1, 0, 1], vec![0, 0, 0, 0]).unwrap())
            .unwrap();
        let (before, _) = bundle.classify(&d).unwrap();

        struct Perturb;
        impl PairVisitor for Perturb {
            fn visit(&mut self, name: &str, param: &mut [f64], _: &[f64]) {
                if name.starts_with("g_s") || name.starts_with("f_s") {
                    for v in param.iter_mut() {
                        *v += 0.37;
                    }
                }
            }
        }
        bundle.visit_pairs(&mut Perturb);

        let d2 = bundle
            .encode(&AugmentedBatch::new(x, vec![0, 1, 0, 1], vec![0, 0, 0, 0]).unwrap())
            .unwrap();
        let (after, _) = bundle.classify(&d2).unwrap();
        assert_eq!(before, after);
        // The domain embeddings themselves did change.
        assert_ne!(d.z_domain, d2.z_domain);
    }

    #[test]
    fn cross_branch_gradients_are_exactly_zero() {
        let spec = tiny_spec();
        let space = LabelSpace::new(3, 2).unwrap();
        let mut bundle = init_bundle(&spec, &space, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_images(&mut rng, 4, spec.input_shape);
        let fwd = bundle.forward_training(&x).unwrap();

        bundle.zero_grad();
        let mut d_class = Array2::zeros(fwd.z_class.raw_dim());
        d_class.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        bundle.class_encoder.backward(&fwd.class_cache, &d_class);

        struct CheckZero {
            class_nonzero: bool,
            domain_nonzero: bool,
        }
        impl PairVisitor for CheckZero {
            fn visit(&mut self, name: &str, _: &mut [f64], grad: &[f64]) {
                let nonzero = grad.iter().any(|&g| g != 0.0);
                if name.starts_with("g_v") {
                    self.class_nonzero |= nonzero;
                }
                if name.starts_with("g_s") {
                    self.domain_nonzero |= nonzero;
                }
            }
        }
        let mut check = CheckZero {
            class_nonzero: false,
            domain_nonzero: false,
        };
        bundle.visit_pairs(&mut check);
        assert!(check.class_nonzero, "class branch should receive gradient");
        assert!(!check.domain_nonzero, "domain branch must stay untouched");
    }

    #[test]
    fn normalize_rows_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = Array2::zeros((5, 7));
        x.mapv_inplace(|_| rng.gen_range(-2.0..2.0));
        let once = normalize_rows(&x);
        let twice = normalize_rows(&once);
        for (a, b) in once.iter().zip(twice.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    /// Finite-difference check of the full encoder backward on a scalar
    /// objective `L = sum(C * z)` with fixed random `C`.
    fn encoder_fd_check(spec: &EncoderSpec) {
        let space = LabelSpace::new(3, 2).unwrap();
        let mut bundle = init_bundle(spec, &space, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = random_images(&mut rng, 3, spec.input_shape);
        let mut coeff = Array2::zeros((3, spec.embedding_dim));
        coeff.mapv_inplace(|_| rng.gen_range(-1.0..1.0));

        let fwd = bundle.forward_training(&x).unwrap();
        bundle.zero_grad();
        bundle.class_encoder.backward(&fwd.class_cache, &coeff);

        struct Collect(Vec<(String, Vec<f64>)>);
        impl PairVisitor for Collect {
            fn visit(&mut self, name: &str, _: &mut [f64], grad: &[f64]) {
                if name.starts_with("g_v") {
                    self.0.push((name.to_string(), grad.to_vec()));
                }
            }
        }
        let mut grads = Collect(Vec::new());
        bundle.visit_pairs(&mut grads);

        // Probe a few parameters per tensor with central differences.
        let step = 1e-6;
        for (name, analytic) in &grads.0 {
            let probes: Vec<usize> = (0..analytic.len()).step_by(analytic.len().div_ceil(5).max(1)).collect();
            for &idx in &probes {
                let mut eval_at = |delta: f64| -> f64 {
                    struct Nudge<'a> {
                        name: &'a str,
                        idx: usize,
                        delta: f64,
                    }
                    impl PairVisitor for Nudge<'_> {
                        fn visit(&mut self, name: &str, param: &mut [f64], _: &[f64]) {
                            if name == self.name {
                                param[self.idx] += self.delta;
                            }
                        }
                    }
                    bundle.visit_pairs(&mut Nudge { name, idx, delta });
                    let fwd = bundle.forward_training(&x).unwrap();
                    let val = (&fwd.z_class * &coeff).sum();
                    bundle.visit_pairs(&mut Nudge {
                        name,
                        idx,
                        delta: -delta,
                    });
                    val
                };
                let plus = eval_at(step);
                let minus = eval_at(-step);
                let numeric = (plus - minus) / (2.0 * step);
                let a = analytic[idx];
                let denom = numeric.abs().max(a.abs()).max(1e-6);
                assert!(
                    ((numeric - a) / denom).abs() < 1e-4,
                    "{name}[{idx}]: numeric {numeric:.8} vs analytic {a:.8}"
                );
            }
        }
    }

    #[test]
    fn cnn_encoder_backward_matches_finite_differences() {
        encoder_fd_check(&tiny_spec());
    }

    #[test]
    fn mlp_encoder_backward_matches_finite_differences() {
        encoder_fd_check(&EncoderSpec {
            architecture: Architecture::Mlp,
            embedding_dim: 6,
            widths: vec![10, 8],
            input_shape: (4, 4, 3),
            seed: 0,
            projection_head: false,
        });
    }

    #[test]
    fn projection_head_backward_matches_finite_differences() {
        encoder_fd_check(&EncoderSpec {
            projection_head: true,
            ..tiny_spec()
        });
    }

    #[test]
    fn images_check_layout() {
        let spec = tiny_spec();
        let space = LabelSpace::new(3, 2).unwrap();
        let bundle = init_bundle(&spec, &space, 0).unwrap();
        let bad = Array4::zeros((2, 6, 8, 3));
        assert!(matches!(bundle.encode_images(&bad), Err(Error::Shape(_))));
        let _ = Array3::<f64>::zeros((2, 2, 2));
    }
}
