//! Finite-difference checks of every differentiable operation and of a full
//! classifier under the student loss.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::{finite_diff_grad, max_relative_error, CheckOutcome, DEFAULT_EPS, DEFAULT_TOLERANCE};
use crate::graph::{Graph, Var};
use crate::losses::{batch_mean, cross_entropy, kl_to_teacher, student_total_loss, LossWeights};
use crate::model::{build_classifier, r2plus1d_block, BlockVars, ModelConfig};
use crate::rng::stream;
use crate::tensor::Tensor;

type Builder = fn(&mut Graph<f64>, &[Var], &Probe) -> Result<Var>;

/// Fixed random data shared by the analytic and numeric evaluations.
struct Probe {
    weights: Vec<f64>,
    label: usize,
    teacher: Vec<f64>,
    temperature: f64,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Values bounded away from zero so ReLU kinks are not straddled.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.1..1.0);
        if rng.random::<bool>() { m } else { -m }
    })
}

/// Weighted sum with fixed random weights so every output coordinate matters.
fn weighted_sum(g: &mut Graph<f64>, x: Var, probe: &Probe) -> Result<Var> {
    let n = g.value(x).numel();
    let shape = g.value(x).shape().to_vec();
    let w = g.constant(Tensor::new(&shape, probe.weights[..n].to_vec())?);
    let p = g.mul(x, w)?;
    Ok(g.sum(p))
}

/// Compares backward against central differences for every input of `build`.
fn check_op(name: &str, seed: u64, inputs: Vec<Tensor<f64>>, probe_k: usize, build: Builder) -> Result<CheckOutcome> {
    let mut rng = stream(seed, 0xfeed);
    let probe = Probe {
        weights: (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect(),
        label: rng.random_range(0..probe_k.max(1)),
        teacher: (0..probe_k.max(1)).map(|_| rng.random_range(-2.0..2.0)).collect(),
        temperature: rng.random_range(0.5..2.0),
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars, &probe)?;
    g.backward(loss)?;

    let mut worst = 0.0f64;
    for (i, x) in inputs.iter().enumerate() {
        let analytic = g.grad(vars[i]).expect("param").to_vec();
        let numeric = finite_diff_grad(
            |probe_x| {
                let mut h = Graph::new();
                let vs: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| h.constant(if j == i { probe_x.clone() } else { t.clone() }))
                    .collect();
                let l = build(&mut h, &vs, &probe)?;
                Ok(h.value(l).data()[0])
            },
            x,
            DEFAULT_EPS,
        )?;
        worst = worst.max(max_relative_error(&analytic, numeric.data()));
    }
    Ok(CheckOutcome {
        name: name.to_string(),
        seed,
        max_relative_error: worst,
        passed: worst <= DEFAULT_TOLERANCE,
    })
}

fn block_vars(v: &[Var]) -> BlockVars {
    BlockVars { spatial_weight: v[1], spatial_bias: v[2], temporal_weight: v[3], temporal_bias: v[4] }
}

/// All per-operation checks for one seed.
pub fn op_checks(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = stream(seed, 1);
    let r = &mut rng;
    let mut out = Vec::new();

    out.push(check_op(
        "conv3d",
        seed,
        vec![uniform(r, &[3, 2, 4, 4], -1.0, 1.0), uniform(r, &[2, 3, 2, 3, 3], -1.0, 1.0), uniform(r, &[2], -1.0, 1.0)],
        0,
        |g, v, p| {
            let y = g.conv3d(v[0], v[1], v[2], [1, 1, 1], [0, 1, 1])?;
            weighted_sum(g, y, p)
        },
    )?);
    out.push(check_op(
        "conv3d_strided_padded",
        seed,
        vec![uniform(r, &[2, 5, 6, 7], -1.0, 1.0), uniform(r, &[3, 2, 3, 3, 2], -1.0, 1.0), uniform(r, &[3], -1.0, 1.0)],
        0,
        |g, v, p| {
            let y = g.conv3d(v[0], v[1], v[2], [2, 2, 3], [1, 1, 1])?;
            weighted_sum(g, y, p)
        },
    )?);
    out.push(check_op("relu", seed, vec![away_from_zero(r, &[4, 5])], 0, |g, v, p| {
        let y = g.relu(v[0]);
        weighted_sum(g, y, p)
    })?);
    out.push(check_op("avg_pool_global", seed, vec![uniform(r, &[3, 2, 3, 4], -1.0, 1.0)], 0, |g, v, p| {
        let y = g.avg_pool_global(v[0])?;
        weighted_sum(g, y, p)
    })?);
    out.push(check_op(
        "affine",
        seed,
        vec![uniform(r, &[5], -1.0, 1.0), uniform(r, &[4, 5], -1.0, 1.0), uniform(r, &[4], -1.0, 1.0)],
        0,
        |g, v, p| {
            let y = g.affine(v[0], v[1], v[2])?;
            weighted_sum(g, y, p)
        },
    )?);
    out.push(check_op("softmax", seed, vec![uniform(r, &[6], -3.0, 3.0)], 0, |g, v, p| {
        let y = g.softmax(v[0], p.temperature)?;
        weighted_sum(g, y, p)
    })?);
    out.push(check_op("log_softmax", seed, vec![uniform(r, &[6], -3.0, 3.0)], 0, |g, v, p| {
        let y = g.log_softmax(v[0], p.temperature)?;
        weighted_sum(g, y, p)
    })?);
    out.push(check_op("add_mul_scale", seed, vec![uniform(r, &[7], -2.0, 2.0), uniform(r, &[7], -2.0, 2.0)], 0, |g, v, p| {
        let m = g.mul(v[0], v[1])?;
        let a = g.add(m, v[0])?;
        let s = g.scale(a, 1.7);
        weighted_sum(g, s, p)
    })?);
    out.push(check_op("cross_entropy", seed, vec![uniform(r, &[5], -3.0, 3.0)], 5, |g, v, p| {
        cross_entropy(g, v[0], p.label)
    })?);
    out.push(check_op("kl_soft_targets", seed, vec![uniform(r, &[5], -3.0, 3.0)], 5, |g, v, p| {
        kl_to_teacher(g, &p.teacher, v[0], p.temperature)
    })?);
    out.push(check_op("student_total_loss", seed, vec![uniform(r, &[5], -3.0, 3.0)], 5, |g, v, p| {
        let ce = cross_entropy(g, v[0], p.label)?;
        let kd = kl_to_teacher(g, &p.teacher, v[0], p.temperature)?;
        let w = LossWeights { alpha: 0.7, beta: 1.3, temperature: p.temperature };
        student_total_loss(g, ce, kd, &w)
    })?);
    out.push(check_op("batch_mean", seed, vec![uniform(r, &[3], -3.0, 3.0), uniform(r, &[3], -3.0, 3.0)], 3, |g, v, p| {
        let a = cross_entropy(g, v[0], p.label)?;
        let b = cross_entropy(g, v[1], (p.label + 1) % 3)?;
        batch_mean(g, &[a, b])
    })?);
    out.push(check_op(
        "r2plus1d_block",
        seed,
        vec![
            uniform(r, &[2, 4, 6, 6], 0.0, 1.0),
            uniform(r, &[3, 2, 1, 3, 3], -1.0, 1.0),
            uniform(r, &[3], -0.5, 0.5),
            uniform(r, &[3, 3, 3, 1, 1], -1.0, 1.0),
            uniform(r, &[3], -0.5, 0.5),
        ],
        0,
        |g, v, p| {
            let y = r2plus1d_block(g, v[0], &block_vars(v), 2)?;
            weighted_sum(g, y, p)
        },
    )?);
    Ok(out)
}

/// Two-block classifier followed by the student loss; checks every parameter.
pub fn model_check(seed: u64) -> Result<CheckOutcome> {
    let config = ModelConfig::new(4, [2, 4, 8, 8], &[3, 4], seed);
    let mut model = build_classifier::<f64>(&config)?;
    let mut rng = stream(seed, 2);
    // Non-zero biases exercise the bias paths.
    for p in model.params_mut() {
        if p.name.ends_with("bias") {
            p.tensor.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
        }
    }
    let clip = uniform(&mut rng, &[2, 4, 8, 8], 0.0, 1.0);
    let label = rng.random_range(0..4);
    let teacher: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
    let weights = LossWeights::default();

    let loss_of = |params: &[Tensor<f64>], trainable: bool, g: &mut Graph<f64>| -> Result<(Var, Vec<Var>)> {
        let mut m = model.clone();
        for (dst, src) in m.params_mut().iter_mut().zip(params) {
            dst.tensor = src.clone();
        }
        let bound = m.bind(g, trainable);
        let x = g.constant(clip.clone());
        let logits = m.forward_graph(g, &bound, x)?;
        let ce = cross_entropy(g, logits, label)?;
        let kd = kl_to_teacher(g, &teacher, logits, 1.0)?;
        Ok((student_total_loss(g, ce, kd, &weights)?, bound.params))
    };

    let params: Vec<Tensor<f64>> = model.params().iter().map(|p| p.tensor.clone()).collect();
    let mut g = Graph::new();
    let (loss, vars) = loss_of(&params, true, &mut g)?;
    g.backward(loss)?;

    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let analytic = g.grad(vars[i]).expect("param").to_vec();
        let numeric = finite_diff_grad(
            |probe| {
                let mut ps = params.clone();
                ps[i] = probe.clone();
                let mut h = Graph::new();
                let (l, _) = loss_of(&ps, false, &mut h)?;
                Ok(h.value(l).data()[0])
            },
            &params[i],
            DEFAULT_EPS,
        )?;
        worst = worst.max(max_relative_error(&analytic, numeric.data()));
    }
    Ok(CheckOutcome {
        name: String::from("classifier+student_loss"),
        seed,
        max_relative_error: worst,
        passed: worst <= DEFAULT_TOLERANCE,
    })
}

/// Every check over `seeds` consecutive seeds starting at `first_seed`.
pub fn run_suite(first_seed: u64, seeds: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for s in first_seed..first_seed + seeds {
        out.extend(op_checks(s)?);
        out.push(model_check(s)?);
    }
    Ok(out)
}
