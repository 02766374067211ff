//! The shared teacher/student classifier: a stack of (2+1)D blocks, global
//! average pooling and an affine head.
//!
//! Each block is a `1 x k x k` spatial convolution with spatial stride 2,
//! ReLU, a `kt x 1 x 1` temporal convolution, ReLU. Padding keeps the
//! convolved extents ("same") apart from the stride.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::error::{bail, Result};
use crate::graph::{Graph, Var};
use crate::real::Real;
use crate::rng::{fnv1a, stream};
use crate::tensor::Tensor;
use crate::data::VideoClip;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub num_classes: usize,
    /// `[C, T, H, W]`
    pub input_dims: [usize; 4],
    pub widths: Vec<usize>,
    pub spatial_kernel: usize,
    pub temporal_kernel: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(num_classes: usize, input_dims: [usize; 4], widths: &[usize], seed: u64) -> Self {
        ModelConfig {
            num_classes,
            input_dims,
            widths: widths.to_vec(),
            spatial_kernel: 3,
            temporal_kernel: 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            bail!(Config, "need at least 2 classes, got {}", self.num_classes);
        }
        if self.input_dims.contains(&0) {
            bail!(Config, "input dims {:?} contain a zero extent", self.input_dims);
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            bail!(Config, "block widths {:?} must be non-empty and positive", self.widths);
        }
        for (name, k) in [("spatial", self.spatial_kernel), ("temporal", self.temporal_kernel)] {
            if k % 2 == 0 {
                bail!(Config, "{} kernel size must be odd, got {}", name, k);
            }
        }
        if self.temporal_kernel > self.input_dims[1] {
            bail!(
                Config,
                "temporal kernel {} exceeds clip length {}",
                self.temporal_kernel,
                self.input_dims[1]
            );
        }
        for (i, dims) in self.block_input_dims().iter().enumerate() {
            if self.spatial_kernel > dims[2] || self.spatial_kernel > dims[3] {
                bail!(
                    Config,
                    "spatial kernel {} exceeds block {} input extent {}x{}",
                    self.spatial_kernel,
                    i,
                    dims[2],
                    dims[3]
                );
            }
        }
        Ok(())
    }

    fn spatial_out(&self, n: usize, stride: usize) -> usize {
        let pad = self.spatial_kernel / 2;
        (n + 2 * pad).saturating_sub(self.spatial_kernel) / stride + 1
    }

    /// Input `[C, T, H, W]` seen by each block.
    pub fn block_input_dims(&self) -> Vec<[usize; 4]> {
        let mut dims = self.input_dims;
        let mut out = Vec::with_capacity(self.widths.len());
        for &w in &self.widths {
            out.push(dims);
            dims = [w, dims[1], self.spatial_out(dims[2], 2), self.spatial_out(dims[3], 2)];
        }
        out
    }

    /// Names and shapes of all parameters, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (ks, kt) = (self.spatial_kernel, self.temporal_kernel);
        let mut out = Vec::new();
        let mut c_in = self.input_dims[0];
        for (i, &w) in self.widths.iter().enumerate() {
            out.push((format!("block{i}.spatial.weight"), vec![w, c_in, 1, ks, ks]));
            out.push((format!("block{i}.spatial.bias"), vec![w]));
            out.push((format!("block{i}.temporal.weight"), vec![w, w, kt, 1, 1]));
            out.push((format!("block{i}.temporal.bias"), vec![w]));
            c_in = w;
        }
        out.push((String::from("head.weight"), vec![self.num_classes, c_in]));
        out.push((String::from("head.bias"), vec![self.num_classes]));
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<R> {
    pub name: String,
    pub tensor: Tensor<R>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<R> {
    config: ModelConfig,
    params: Vec<NamedTensor<R>>,
}

/// Parameters of one (2+1)D block as graph variables.
#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub spatial_weight: Var,
    pub spatial_bias: Var,
    pub temporal_weight: Var,
    pub temporal_bias: Var,
}

/// A model's parameters attached to a graph.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub blocks: Vec<BlockVars>,
    pub head_weight: Var,
    pub head_bias: Var,
    pub params: Vec<Var>,
}

/// Uniform init bound for a weight tensor: variance 2/fan_in for
/// convolutions (each feeds a ReLU), 1/fan_in for the linear head.
pub fn init_bound(name: &str, fan_in: usize) -> f64 {
    let scale = if name.starts_with("head") { 3.0 } else { 6.0 };
    Float::sqrt(scale / fan_in as f64)
}

/// Builds a classifier with seeded fan-in uniform weights and zero biases.
pub fn build_classifier<R: Real>(config: &ModelConfig) -> Result<Model<R>> {
    config.validate()?;
    let params = config
        .param_shapes()
        .into_iter()
        .enumerate()
        .map(|(i, (name, shape))| {
            let tensor = if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                let bound = init_bound(&name, shape[1..].iter().product());
                let mut rng = stream(config.seed, i as u64);
                Tensor::from_fn(&shape, |_| R::of(rng.random_range(-bound..bound)))
            };
            NamedTensor { name, tensor }
        })
        .collect();
    Ok(Model { config: config.clone(), params })
}

impl<R: Real> Model<R> {
    /// Assembles a model from stored parameters, checking names and shapes.
    pub fn from_parts(config: ModelConfig, params: Vec<NamedTensor<R>>) -> Result<Self> {
        config.validate()?;
        let want = config.param_shapes();
        if want.len() != params.len() {
            bail!(Shape, "config needs {} parameters, got {}", want.len(), params.len());
        }
        for ((name, shape), p) in want.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.tensor.shape() {
                bail!(
                    Shape,
                    "expected parameter {} {:?}, got {} {:?}",
                    name,
                    shape,
                    p.name,
                    p.tensor.shape()
                );
            }
            if !p.tensor.is_finite() {
                bail!(Input, "parameter {} has non-finite values", p.name);
            }
        }
        Ok(Model { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[NamedTensor<R>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [NamedTensor<R>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<R>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn cast<S: Real>(&self) -> Model<S> {
        Model {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| NamedTensor { name: p.name.clone(), tensor: p.tensor.cast() })
                .collect(),
        }
    }

    /// FNV-1a over the configuration and the f32 bit patterns of every
    /// parameter; identifies a checkpoint.
    pub fn fingerprint(&self) -> u64 {
        let c = &self.config;
        let mut bytes = Vec::new();
        for v in [c.num_classes, c.spatial_kernel, c.temporal_kernel, c.widths.len()]
            .into_iter()
            .chain(c.input_dims)
            .chain(c.widths.iter().copied())
        {
            bytes.extend_from_slice(&(v as u64).to_le_bytes());
        }
        bytes.extend_from_slice(&c.seed.to_le_bytes());
        for p in &self.params {
            bytes.extend_from_slice(p.name.as_bytes());
            for &v in p.tensor.data() {
                bytes.extend_from_slice(&(v.as_f64() as f32).to_bits().to_le_bytes());
            }
        }
        fnv1a(&bytes)
    }

    /// Adds every parameter to `g` as a differentiable leaf (or a constant
    /// when `trainable` is false).
    pub fn bind(&self, g: &mut Graph<R>, trainable: bool) -> BoundModel {
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    g.param(p.tensor.clone())
                } else {
                    g.constant(p.tensor.clone())
                }
            })
            .collect();
        let blocks = vars[..vars.len() - 2]
            .chunks_exact(4)
            .map(|c| BlockVars {
                spatial_weight: c[0],
                spatial_bias: c[1],
                temporal_weight: c[2],
                temporal_bias: c[3],
            })
            .collect();
        BoundModel {
            blocks,
            head_weight: vars[vars.len() - 2],
            head_bias: vars[vars.len() - 1],
            params: vars,
        }
    }

    /// Logits for one clip already placed in `g`.
    pub fn forward_graph(&self, g: &mut Graph<R>, bound: &BoundModel, input: Var) -> Result<Var> {
        let got = g.value(input).shape();
        if got != self.config.input_dims {
            bail!(
                Shape,
                "model expects input {:?}, received {:?}",
                self.config.input_dims,
                got
            );
        }
        let mut x = input;
        for block in &bound.blocks {
            x = r2plus1d_block(g, x, block, 2)?;
        }
        let pooled = g.avg_pool_global(x)?;
        g.affine(pooled, bound.head_weight, bound.head_bias)
    }
}

/// Clip values as a `[C, T, H, W]` tensor.
pub fn clip_tensor<R: Real>(clip: &VideoClip) -> Tensor<R> {
    Tensor::new(&clip.dims(), clip.data().iter().map(|&v| R::of(v as f64)).collect())
        .expect("clip dims match data")
}

/// Spatial conv (stride `spatial_stride`), ReLU, temporal conv, ReLU.
pub fn r2plus1d_block<R: Real>(
    g: &mut Graph<R>,
    x: Var,
    p: &BlockVars,
    spatial_stride: usize,
) -> Result<Var> {
    let ks = g.value(p.spatial_weight).shape();
    if ks.len() != 5 || ks[2] != 1 || ks[3] % 2 == 0 || ks[4] % 2 == 0 {
        bail!(Shape, "spatial kernel must be [C_out, C_in, 1, k, k] with odd k, got {:?}", ks);
    }
    let (ph, pw) = (ks[3] / 2, ks[4] / 2);
    let kt = g.value(p.temporal_weight).shape();
    if kt.len() != 5 || kt[3] != 1 || kt[4] != 1 || kt[2] % 2 == 0 {
        bail!(Shape, "temporal kernel must be [C_out, C_out, kt, 1, 1] with odd kt, got {:?}", kt);
    }
    let pt = kt[2] / 2;
    let s = g.conv3d(
        x,
        p.spatial_weight,
        p.spatial_bias,
        [1, spatial_stride, spatial_stride],
        [0, ph, pw],
    )?;
    let s = g.relu(s);
    let t = g.conv3d(s, p.temporal_weight, p.temporal_bias, [1, 1, 1], [pt, 0, 0])?;
    Ok(g.relu(t))
}

/// Evaluation-mode forward pass: logits for one clip, no gradients.
pub fn forward<R: Real>(model: &Model<R>, clip: &VideoClip) -> Result<Vec<R>> {
    if clip.dims() != model.config.input_dims {
        bail!(
            Shape,
            "model expects clips {:?}, clip {} is {:?}",
            model.config.input_dims,
            clip.id(),
            clip.dims()
        );
    }
    let mut g = Graph::new();
    let bound = model.bind(&mut g, false);
    let x = g.constant(clip_tensor(clip));
    let logits = model.forward_graph(&mut g, &bound, x)?;
    Ok(g.value(logits).data().to_vec())
}
