//! Tape-style compute graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so a node's inputs always have
//! smaller ids than the node itself and the reverse id order is a valid
//! topological order for the backward sweep.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::ConvGeometry;
use crate::error::{bail, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<R> {
    Leaf,
    Conv3d {
        input: usize,
        kernel: usize,
        bias: usize,
        geom: ConvGeometry,
    },
    Relu(usize),
    AvgPoolGlobal(usize),
    Affine {
        x: usize,
        weight: usize,
        bias: usize,
    },
    Softmax {
        x: usize,
        temperature: R,
    },
    LogSoftmax {
        x: usize,
        temperature: R,
    },
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, R),
    Sum(usize),
    Pick(usize, usize),
    KlToTarget {
        student: usize,
        target: Vec<R>,
        temperature: R,
    },
}

impl<R> Op<R> {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv3d { .. } => "conv3d",
            Op::Relu(_) => "relu",
            Op::AvgPoolGlobal(_) => "avg_pool_global",
            Op::Affine { .. } => "affine",
            Op::Softmax { .. } => "softmax",
            Op::LogSoftmax { .. } => "log_softmax",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::Pick(..) => "pick",
            Op::KlToTarget { .. } => "kl_to_target",
        }
    }

    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Conv3d {
                input,
                kernel,
                bias,
                ..
            } => vec![*input, *kernel, *bias],
            Op::Affine { x, weight, bias } => vec![*x, *weight, *bias],
            Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Relu(x)
            | Op::AvgPoolGlobal(x)
            | Op::Softmax { x, .. }
            | Op::LogSoftmax { x, .. }
            | Op::Scale(x, _)
            | Op::Sum(x)
            | Op::Pick(x, _) => vec![*x],
            Op::KlToTarget { student, .. } => vec![*student],
        }
    }
}

#[derive(Debug, Clone)]
struct Node<R> {
    op: Op<R>,
    value: Tensor<R>,
}

/// Read-only view of one recorded node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRecord {
    pub id: usize,
    pub op: &'static str,
    pub inputs: Vec<usize>,
    pub shape: Vec<usize>,
}

/// Records operations as they are evaluated and differentiates them.
#[derive(Debug, Clone, Default)]
pub struct Graph<R> {
    nodes: Vec<Node<R>>,
}

impl<R: Real> Graph<R> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a tensor as a leaf; it is differentiated iff `requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor<R>) -> Var {
        self.push(Op::Leaf, tensor)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, tensor: Tensor<R>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor<R>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<R> {
        &self.nodes[v.0].value
    }

    /// Gradient stored by the last [`Graph::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&[R]> {
        self.nodes[v.0].value.grad()
    }

    pub fn records(&self) -> Vec<NodeRecord> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(id, n)| NodeRecord {
                id,
                op: n.op.tag(),
                inputs: n.op.inputs(),
                shape: n.value.shape().to_vec(),
            })
            .collect()
    }

    fn push(&mut self, op: Op<R>, value: Tensor<R>) -> Var {
        let requires = value.requires_grad()
            || op.inputs().iter().any(|&i| self.nodes[i].value.requires_grad());
        let value = value.with_requires_grad(requires);
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<&Tensor<R>> {
        match self.nodes.get(v.0) {
            Some(n) => Ok(&n.value),
            None => bail!(Usage, "variable {} does not belong to this graph", v.0),
        }
    }

    pub fn conv3d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Var> {
        let x = self.check(input)?;
        let k = self.check(kernel)?;
        let b = self.check(bias)?;
        let geom = ConvGeometry::new(x.shape(), k.shape(), stride, padding)?;
        if b.shape() != [geom.out_channels] {
            bail!(
                Shape,
                "conv3d bias {:?} does not match {} output channels",
                b.shape(),
                geom.out_channels
            );
        }
        let mut out = Tensor::zeros(&geom.output_shape());
        geom.forward(x.data(), k.data(), b.data(), out.data_mut());
        Ok(self.push(
            Op::Conv3d {
                input: input.0,
                kernel: kernel.0,
                bias: bias.0,
                geom,
            },
            out,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let out = Tensor::new(
            t.shape(),
            t.data().iter().map(|&v| if v > R::zero() { v } else { R::zero() }).collect(),
        )
        .expect("same shape");
        self.push(Op::Relu(x.0), out)
    }

    /// Mean over (T, H, W) of a `[C, T, H, W]` tensor.
    pub fn avg_pool_global(&mut self, x: Var) -> Result<Var> {
        let t = self.check(x)?;
        if t.shape().len() != 4 {
            bail!(Shape, "avg_pool_global expects [C,T,H,W], got {:?}", t.shape());
        }
        let c = t.shape()[0];
        let vol = t.numel() / c;
        let inv = R::one() / R::of(vol as f64);
        let means: Vec<R> = t
            .data()
            .chunks_exact(vol)
            .map(|ch| ch.iter().copied().sum::<R>() * inv)
            .collect();
        let out = Tensor::new(&[c], means)?;
        Ok(self.push(Op::AvgPoolGlobal(x.0), out))
    }

    /// `weight · x + bias` for `x: [N_in]`, `weight: [N_out, N_in]`.
    pub fn affine(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xv = self.check(x)?;
        let w = self.check(weight)?;
        let b = self.check(bias)?;
        let n_in = xv.numel();
        if xv.shape().len() != 1 || w.shape().len() != 2 || w.shape()[1] != n_in {
            bail!(
                Shape,
                "affine needs x [N_in] and weight [N_out, N_in], got {:?} and {:?}",
                xv.shape(),
                w.shape()
            );
        }
        let n_out = w.shape()[0];
        if b.shape() != [n_out] {
            bail!(Shape, "affine bias {:?} does not match N_out = {}", b.shape(), n_out);
        }
        let out: Vec<R> = w
            .data()
            .chunks_exact(n_in)
            .zip(b.data())
            .map(|(row, &bi)| row.iter().zip(xv.data()).map(|(&a, &v)| a * v).sum::<R>() + bi)
            .collect();
        let out = Tensor::new(&[n_out], out)?;
        Ok(self.push(
            Op::Affine {
                x: x.0,
                weight: weight.0,
                bias: bias.0,
            },
            out,
        ))
    }

    pub fn softmax(&mut self, x: Var, temperature: R) -> Result<Var> {
        let t = self.check(x)?;
        let out = Tensor::new(t.shape(), softmax(t.data(), temperature)?)?;
        Ok(self.push(Op::Softmax { x: x.0, temperature }, out))
    }

    pub fn log_softmax(&mut self, x: Var, temperature: R) -> Result<Var> {
        let t = self.check(x)?;
        let out = Tensor::new(t.shape(), log_softmax(t.data(), temperature)?)?;
        Ok(self.push(Op::LogSoftmax { x: x.0, temperature }, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a.0, b.0), out))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a.0, b.0), out))
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(R, R) -> R) -> Result<Tensor<R>> {
        let ta = self.check(a)?;
        let tb = self.check(b)?;
        if ta.shape() != tb.shape() {
            bail!(Shape, "elementwise op on {:?} and {:?}", ta.shape(), tb.shape());
        }
        Tensor::new(
            ta.shape(),
            ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect(),
        )
    }

    pub fn scale(&mut self, x: Var, factor: R) -> Var {
        let t = &self.nodes[x.0].value;
        let out = Tensor::new(t.shape(), t.data().iter().map(|&v| v * factor).collect())
            .expect("same shape");
        self.push(Op::Scale(x.0, factor), out)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: R = self.nodes[x.0].value.data().iter().copied().sum();
        self.push(Op::Sum(x.0), Tensor::scalar(s))
    }

    /// Selects one element of a vector as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.check(x)?;
        if index >= t.numel() {
            bail!(Input, "index {} out of range for {} elements", index, t.numel());
        }
        let v = t.data()[index];
        Ok(self.push(Op::Pick(x.0, index), Tensor::scalar(v)))
    }

    /// `KL(p || softmax(student / T))` for a fixed target distribution `p`.
    /// No gradient is produced for whatever `p` was derived from.
    pub fn kl_to_target(&mut self, student: Var, target: &[R], temperature: R) -> Result<Var> {
        let s = self.check(student)?;
        if s.numel() != target.len() {
            bail!(
                Shape,
                "target distribution has {} classes, student logits {:?}",
                target.len(),
                s.shape()
            );
        }
        let log_q = log_softmax(s.data(), temperature)?;
        let mut kl = R::zero();
        for (&p, &lq) in target.iter().zip(&log_q) {
            if p > R::zero() {
                kl += p * (p.natural_log() - lq);
            }
        }
        // Gibbs' inequality holds exactly; only rounding can push it below zero.
        let kl = kl.max(R::zero());
        Ok(self.push(
            Op::KlToTarget {
                student: student.0,
                target: target.to_vec(),
                temperature,
            },
            Tensor::scalar(kl),
        ))
    }

    /// Reverse sweep from a scalar `loss`. Afterwards every node that
    /// requires a gradient holds `d loss / d node` in its grad slot, zero when
    /// it does not influence `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let l = self.check(loss)?;
        if l.numel() != 1 {
            bail!(Usage, "backward needs a scalar loss, got shape {:?}", l.shape());
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<R>>> = vec![None; n];
        grads[loss.0] = Some(vec![R::one()]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].value.requires_grad() {
                continue;
            }
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if node.value.requires_grad() {
                let g = g.unwrap_or_else(|| vec![R::zero(); node.value.numel()]);
                node.value.set_grad(g)?;
            } else {
                node.value.clear_grad();
            }
        }
        Ok(())
    }

    fn wants(&self, id: usize) -> bool {
        self.nodes[id].value.requires_grad()
    }

    fn propagate(&self, id: usize, g: &[R], grads: &mut [Option<Vec<R>>]) {
        let nodes = &self.nodes;
        let len = |i: usize| nodes[i].value.numel();
        let mut acc = |i: usize, f: &mut dyn FnMut(&mut [R])| {
            if nodes[i].value.requires_grad() {
                let slot = grads[i].get_or_insert_with(|| vec![R::zero(); len(i)]);
                f(slot);
            }
        };
        let out = &nodes[id].value;
        match &nodes[id].op {
            Op::Leaf => {}
            Op::Conv3d {
                input,
                kernel,
                bias,
                geom,
            } => {
                let (x, k) = (&nodes[*input].value, &nodes[*kernel].value);
                // Take the three buffers out so the kernel can borrow them together.
                let mut gi = self.wants(*input).then(|| take(grads, *input, len(*input)));
                let mut gk = self.wants(*kernel).then(|| take(grads, *kernel, len(*kernel)));
                let mut gb = self.wants(*bias).then(|| take(grads, *bias, len(*bias)));
                geom.backward(
                    x.data(),
                    k.data(),
                    g,
                    gi.as_deref_mut(),
                    gk.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                for (i, buf) in [(*input, gi), (*kernel, gk), (*bias, gb)] {
                    if let Some(buf) = buf {
                        grads[i] = Some(buf);
                    }
                }
            }
            Op::Relu(x) => acc(*x, &mut |dst| {
                for ((d, &o), &gi) in dst.iter_mut().zip(out.data()).zip(g) {
                    if o > R::zero() {
                        *d += gi;
                    }
                }
            }),
            Op::AvgPoolGlobal(x) => {
                let c = out.numel();
                let vol = len(*x) / c;
                let inv = R::one() / R::of(vol as f64);
                acc(*x, &mut |dst| {
                    for (ch, &gi) in dst.chunks_exact_mut(vol).zip(g) {
                        let v = gi * inv;
                        ch.iter_mut().for_each(|d| *d += v);
                    }
                })
            }
            Op::Affine { x, weight, bias } => {
                let xv = nodes[*x].value.data();
                let w = nodes[*weight].value.data();
                let n_in = xv.len();
                acc(*x, &mut |dst| {
                    for (row, &gi) in w.chunks_exact(n_in).zip(g) {
                        for (d, &a) in dst.iter_mut().zip(row) {
                            *d += a * gi;
                        }
                    }
                });
                acc(*weight, &mut |dst| {
                    for (row, &gi) in dst.chunks_exact_mut(n_in).zip(g) {
                        for (d, &v) in row.iter_mut().zip(xv) {
                            *d += gi * v;
                        }
                    }
                });
                acc(*bias, &mut |dst| {
                    for (d, &gi) in dst.iter_mut().zip(g) {
                        *d += gi;
                    }
                });
            }
            Op::Softmax { x, temperature } => {
                let s = out.data();
                let dot: R = s.iter().zip(g).map(|(&a, &b)| a * b).sum();
                let inv_t = R::one() / *temperature;
                acc(*x, &mut |dst| {
                    for ((d, &si), &gi) in dst.iter_mut().zip(s).zip(g) {
                        *d += si * (gi - dot) * inv_t;
                    }
                })
            }
            Op::LogSoftmax { x, temperature } => {
                let total: R = g.iter().copied().sum();
                let inv_t = R::one() / *temperature;
                acc(*x, &mut |dst| {
                    for ((d, &lo), &gi) in dst.iter_mut().zip(out.data()).zip(g) {
                        *d += (gi - lo.natural_exp() * total) * inv_t;
                    }
                })
            }
            Op::Add(a, b) => {
                for i in [*a, *b] {
                    acc(i, &mut |dst| dst.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi));
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[*a].value.data(), nodes[*b].value.data());
                acc(*a, &mut |dst| {
                    for ((d, &y), &gi) in dst.iter_mut().zip(vb).zip(g) {
                        *d += gi * y;
                    }
                });
                acc(*b, &mut |dst| {
                    for ((d, &y), &gi) in dst.iter_mut().zip(va).zip(g) {
                        *d += gi * y;
                    }
                });
            }
            Op::Scale(x, factor) => acc(*x, &mut |dst| {
                dst.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi * *factor)
            }),
            Op::Sum(x) => acc(*x, &mut |dst| dst.iter_mut().for_each(|d| *d += g[0])),
            Op::Pick(x, index) => acc(*x, &mut |dst| dst[*index] += g[0]),
            Op::KlToTarget {
                student,
                target,
                temperature,
            } => {
                let q = softmax(nodes[*student].value.data(), *temperature).expect("checked");
                let scale = g[0] / *temperature;
                acc(*student, &mut |dst| {
                    for ((d, &qi), &pi) in dst.iter_mut().zip(&q).zip(target) {
                        *d += (qi - pi) * scale;
                    }
                })
            }
        }
    }
}

fn take<R: Real>(grads: &mut [Option<Vec<R>>], i: usize, n: usize) -> Vec<R> {
    grads[i].take().unwrap_or_else(|| vec![R::zero(); n])
}

fn check_temperature<R: Real>(logits: &[R], temperature: R) -> Result<()> {
    if !(temperature > R::zero()) || !temperature.is_finite() {
        bail!(Parameter, "temperature must be positive, got {:?}", temperature);
    }
    if logits.is_empty() {
        bail!(Shape, "softmax over zero classes");
    }
    Ok(())
}

/// Temperature softmax with max subtraction.
pub fn softmax<R: Real>(logits: &[R], temperature: R) -> Result<Vec<R>> {
    check_temperature(logits, temperature)?;
    let max = logits.iter().copied().fold(R::neg_infinity(), R::max);
    let mut out: Vec<R> = logits
        .iter()
        .map(|&l| ((l - max) / temperature).natural_exp())
        .collect();
    let z: R = out.iter().copied().sum();
    out.iter_mut().for_each(|v| *v = *v / z);
    Ok(out)
}

/// Temperature log-softmax via log-sum-exp.
pub fn log_softmax<R: Real>(logits: &[R], temperature: R) -> Result<Vec<R>> {
    check_temperature(logits, temperature)?;
    let max = logits.iter().copied().fold(R::neg_infinity(), R::max);
    let shifted: Vec<R> = logits.iter().map(|&l| (l - max) / temperature).collect();
    let lse = shifted.iter().map(|&s| s.natural_exp()).sum::<R>().natural_log();
    Ok(shifted.into_iter().map(|s| s - lse).collect())
}

impl<R: Real> Graph<R> {
    /// Debug summary, one line per node.
    pub fn describe(&self) -> Vec<alloc::string::String> {
        self.records()
            .into_iter()
            .map(|r| format!("#{} {} {:?} <- {:?}", r.id, r.op, r.shape, r.inputs))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(&[3.0, -1.0, 2.5]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_sum_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(&[1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn unreachable_param_gets_zero_grad_and_constants_none() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(&[1.0, 2.0]));
        let y = g.param(Tensor::vector(&[5.0]));
        let c = g.constant(Tensor::vector(&[1.0, 1.0]));
        let p = g.mul(x, c).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        assert_eq!(g.grad(y).unwrap(), &[0.0]);
        assert!(g.grad(c).is_none());
    }

    #[test]
    fn non_scalar_loss_is_usage_error() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(&[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(crate::Error::Usage(_))));
    }

    #[test]
    fn records_are_topologically_ordered() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(&[1.0, -2.0]));
        let r = g.relu(x);
        let s = g.sum(r);
        let _ = g.scale(s, 2.0);
        for rec in g.records() {
            assert!(rec.inputs.iter().all(|&i| i < rec.id));
        }
        assert_eq!(g.records()[1].op, "relu");
    }

    #[test]
    fn relu_values() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::vector(&[-1.0, 0.0, 2.0]));
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_reference_values() {
        assert_eq!(softmax(&[0.0f64, 0.0], 1.0).unwrap(), [0.5, 0.5]);
        let s = softmax(&[1.0f64, 0.0], 1.0).unwrap();
        assert!((s[0] - 0.73106).abs() < 1e-4 && (s[1] - 0.26894).abs() < 1e-4);
        assert!(matches!(softmax(&[1.0f64], 0.0), Err(crate::Error::Parameter(_))));
        assert!(matches!(log_softmax(&[1.0f64], -1.0), Err(crate::Error::Parameter(_))));
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let s = softmax(&[1000.0f32, 0.0, -1000.0], 1.0).unwrap();
        assert!(s.iter().all(|v| v.is_finite()));
        assert!((s[0] - 1.0).abs() < 1e-6);
        let l = log_softmax(&[1000.0f32, 0.0], 0.5).unwrap();
        assert!(l.iter().all(|v| v.is_finite()));
    }
}
