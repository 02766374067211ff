//! AdamW with decoupled weight decay.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps >= 0.0
            && self.weight_decay >= 0.0
            && self.eps.is_finite()
            && self.weight_decay.is_finite();
        if !ok {
            bail!(Parameter, "invalid AdamW hyperparameters {:?}", self);
        }
        Ok(())
    }
}

/// Moment buffers and step counter for a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState<R> {
    pub config: AdamWConfig,
    first: Vec<Vec<R>>,
    second: Vec<Vec<R>>,
    step: u64,
}

impl<R: Real> AdamWState<R> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<R>>, config: AdamWConfig) -> Self {
        let sizes: Vec<usize> = params.into_iter().map(|p| p.numel()).collect();
        AdamWState {
            config,
            first: sizes.iter().map(|&n| vec![R::zero(); n]).collect(),
            second: sizes.iter().map(|&n| vec![R::zero(); n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<R>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<R>] {
        &self.second
    }

    /// One update: `w -= lr*λ*w`, then the bias-corrected Adam step.
    pub fn step(&mut self, params: &mut [&mut Tensor<R>], grads: &[&[R]], lr: f64) -> Result<()> {
        if !(lr > 0.0) || !lr.is_finite() {
            bail!(Parameter, "learning rate must be positive, got {}", lr);
        }
        if params.len() != self.first.len() || grads.len() != params.len() {
            bail!(
                Shape,
                "optimizer tracks {} parameters, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            );
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != self.first[i].len() || g.len() != p.numel() {
                bail!(
                    Shape,
                    "parameter {} has shape {:?}, moments hold {} values, gradient {}",
                    i,
                    p.shape(),
                    self.first[i].len(),
                    g.len()
                );
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let b1 = R::of(c.beta1);
        let b2 = R::of(c.beta2);
        let one = R::one();
        let bc1 = R::of(1.0 - libm::pow(c.beta1, t));
        let bc2 = R::of(1.0 - libm::pow(c.beta2, t));
        let lr_r = R::of(lr);
        let decay = R::of(lr * c.weight_decay);
        let eps = R::of(c.eps);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(*g).zip(m).zip(v) {
                *w = *w - decay * *w;
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w = *w - lr_r * m_hat / (Float::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}
