//! Student and teacher objectives.
//!
//! * cross-entropy against the ground-truth label (teacher and student),
//! * `KL(p_teacher || q_student)` over temperature-softened distributions,
//!   with the teacher side treated as a constant,
//! * the weighted student total `alpha * CE + beta * KL`.
//!
//! The temperature defaults to 1 and the KL term is never rescaled by `T^2`.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::graph::{log_softmax, softmax, Graph, Var};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub temperature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, beta: 1.0, temperature: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || !(self.alpha + self.beta > 0.0) {
            bail!(
                Parameter,
                "loss weights need alpha, beta >= 0 and alpha + beta > 0, got {} and {}",
                self.alpha,
                self.beta
            );
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            bail!(Parameter, "temperature must be positive, got {}", self.temperature);
        }
        Ok(())
    }
}

fn check_label(k: usize, label: usize) -> Result<()> {
    if label >= k {
        bail!(Input, "label {} out of range for {} classes", label, k);
    }
    Ok(())
}

/// `-log_softmax(logits)[label]` as a graph node.
pub fn cross_entropy<R: Real>(g: &mut Graph<R>, logits: Var, label: usize) -> Result<Var> {
    check_label(g.value(logits).numel(), label)?;
    let ls = g.log_softmax(logits, R::one())?;
    let picked = g.pick(ls, label)?;
    Ok(g.scale(picked, -R::one()))
}

pub fn cross_entropy_value<R: Real>(logits: &[R], label: usize) -> Result<R> {
    check_label(logits.len(), label)?;
    Ok(-log_softmax(logits, R::one())?[label])
}

/// Distillation term against teacher logits held in the graph. The teacher
/// node is read but never differentiated.
pub fn kl_soft_targets<R: Real>(
    g: &mut Graph<R>,
    teacher_logits: Var,
    student_logits: Var,
    temperature: R,
) -> Result<Var> {
    let teacher: Vec<R> = g.value(teacher_logits).data().to_vec();
    kl_to_teacher(g, &teacher, student_logits, temperature)
}

/// Distillation term against stored (cached) teacher logits.
pub fn kl_to_teacher<R: Real>(
    g: &mut Graph<R>,
    teacher_logits: &[R],
    student_logits: Var,
    temperature: R,
) -> Result<Var> {
    let k = g.value(student_logits).numel();
    if teacher_logits.len() != k {
        bail!(
            Shape,
            "teacher has {} logits, student {}",
            teacher_logits.len(),
            k
        );
    }
    let p = softmax(teacher_logits, temperature)?;
    g.kl_to_target(student_logits, &p, temperature)
}

pub fn kl_value<R: Real>(teacher_logits: &[R], student_logits: &[R], temperature: R) -> Result<R> {
    if teacher_logits.len() != student_logits.len() {
        bail!(
            Shape,
            "teacher has {} logits, student {}",
            teacher_logits.len(),
            student_logits.len()
        );
    }
    let log_p = log_softmax(teacher_logits, temperature)?;
    let log_q = log_softmax(student_logits, temperature)?;
    let kl: R = log_p
        .iter()
        .zip(&log_q)
        .map(|(&lp, &lq)| lp.natural_exp() * (lp - lq))
        .sum();
    Ok(kl.max(R::zero()))
}

/// `alpha * l_ar + beta * l_kd`. A zero-weighted term is left out of the
/// graph entirely.
pub fn student_total_loss<R: Real>(
    g: &mut Graph<R>,
    l_ar: Var,
    l_kd: Var,
    weights: &LossWeights,
) -> Result<Var> {
    weights.validate()?;
    Ok(match (weights.alpha == 0.0, weights.beta == 0.0) {
        (false, false) => {
            let a = g.scale(l_ar, R::of(weights.alpha));
            let b = g.scale(l_kd, R::of(weights.beta));
            g.add(a, b)?
        }
        (false, true) => g.scale(l_ar, R::of(weights.alpha)),
        (true, _) => g.scale(l_kd, R::of(weights.beta)),
    })
}

pub fn student_total_value(l_ar: f64, l_kd: f64, weights: &LossWeights) -> f64 {
    weights.alpha * l_ar + weights.beta * l_kd
}

/// Arithmetic mean of scalar losses, summed in the given order.
pub fn batch_mean<R: Real>(g: &mut Graph<R>, losses: &[Var]) -> Result<Var> {
    let Some((&first, rest)) = losses.split_first() else {
        bail!(Usage, "mean over an empty batch");
    };
    let mut acc = first;
    for &l in rest {
        acc = g.add(acc, l)?;
    }
    Ok(g.scale(acc, R::one() / R::of(losses.len() as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn ce_hand_values() {
        let v = cross_entropy_value(&[0.0f64; 4], 2).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-12);
        let v = cross_entropy_value(&[1.0f64, 0.0], 0).unwrap();
        assert!((v - 0.31326).abs() < 1e-4);
        let v = cross_entropy_value(&[0.0f64, 30.0, 0.0], 1).unwrap();
        assert!(v < 1e-9);
        assert!(matches!(cross_entropy_value(&[0.0f64; 3], 3), Err(crate::Error::Input(_))));
    }

    #[test]
    fn kl_hand_values() {
        let v = kl_value(&[0.0f64, 0.0], &[3f64.ln(), 0.0], 1.0).unwrap();
        assert!((v - 0.14384).abs() < 1e-4);
        assert_eq!(kl_value(&[0.3f64, -1.0, 2.0], &[0.3, -1.0, 2.0], 2.0).unwrap(), 0.0);
        assert!(matches!(kl_value(&[0.0f64; 2], &[0.0; 3], 1.0), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn graph_and_value_paths_agree() {
        let mut g = Graph::<f64>::new();
        let t = g.constant(Tensor::vector(&[0.2, 1.5, -0.7]));
        let s = g.param(Tensor::vector(&[-0.4, 0.9, 0.1]));
        let kl = kl_soft_targets(&mut g, t, s, 1.5).unwrap();
        let ce = cross_entropy(&mut g, s, 1).unwrap();
        let kv = kl_value(&[0.2, 1.5, -0.7], &[-0.4, 0.9, 0.1], 1.5).unwrap();
        let cv = cross_entropy_value(&[-0.4, 0.9, 0.1], 1).unwrap();
        assert!((g.value(kl).data()[0] - kv).abs() < 1e-14);
        assert!((g.value(ce).data()[0] - cv).abs() < 1e-14);
    }

    #[test]
    fn total_loss_weights() {
        let w = LossWeights::default();
        assert_eq!(student_total_value(0.5, 0.25, &w), 0.75);
        let mut g = Graph::<f64>::new();
        let a = g.param(Tensor::scalar(0.5));
        let b = g.param(Tensor::scalar(0.25));
        let t = student_total_loss(&mut g, a, b, &w).unwrap();
        assert_eq!(g.value(t).data(), &[0.75]);
        let only_ar = LossWeights { beta: 0.0, ..w };
        let t = student_total_loss(&mut g, a, b, &only_ar).unwrap();
        assert_eq!(g.value(t).data(), &[0.5]);
        let only_kd = LossWeights { alpha: 0.0, beta: 2.0, ..w };
        let t = student_total_loss(&mut g, a, b, &only_kd).unwrap();
        assert_eq!(g.value(t).data(), &[0.5]);
        assert!(LossWeights { alpha: 0.0, beta: 0.0, temperature: 1.0 }.validate().is_err());
        assert!(LossWeights { temperature: 0.0, ..w }.validate().is_err());
    }

    #[test]
    fn teacher_gets_no_gradient() {
        let mut g = Graph::<f64>::new();
        let t = g.param(Tensor::vector(&[0.2, 1.5, -0.7]));
        let s = g.param(Tensor::vector(&[-0.4, 0.9, 0.1]));
        let kl = kl_soft_targets(&mut g, t, s, 1.0).unwrap();
        g.backward(kl).unwrap();
        assert!(g.grad(t).unwrap().iter().all(|&v| v == 0.0));
        assert!(g.grad(s).unwrap().iter().any(|&v| v != 0.0));
    }
}
