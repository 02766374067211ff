//! Light enhancement applied in front of the teacher classifier.
//!
//! Two fixed per-pixel maps are available: gamma intensity correction
//! `x^(1/gamma)` and the zero-reference quadratic curve
//! `x + alpha * x * (1 - x)` iterated a fixed number of times.
//!
//! Every public entry point bumps a process-wide call counter so callers can
//! prove that a code path never touched enhancement.

use core::sync::atomic::{AtomicU64, Ordering};

use crate::data::VideoClip;
use crate::error::{bail, Result};

static CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of clips enhanced so far in this process.
pub fn enhancement_calls() -> u64 {
    CALLS.load(Ordering::SeqCst)
}

fn count() {
    CALLS.fetch_add(1, Ordering::SeqCst);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnhanceMethod {
    Gamma,
    Curve,
    Identity,
}

impl EnhanceMethod {
    pub fn name(self) -> &'static str {
        match self {
            EnhanceMethod::Gamma => "gamma",
            EnhanceMethod::Curve => "curve",
            EnhanceMethod::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gamma" => Some(EnhanceMethod::Gamma),
            "curve" => Some(EnhanceMethod::Curve),
            "identity" => Some(EnhanceMethod::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceParams {
    pub method: EnhanceMethod,
    pub gamma: f64,
    pub alpha: f64,
    pub iterations: u32,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        EnhanceParams {
            method: EnhanceMethod::Curve,
            gamma: 2.2,
            alpha: 0.6,
            iterations: 4,
        }
    }
}

impl EnhanceParams {
    pub fn gamma(gamma: f64) -> Self {
        EnhanceParams { method: EnhanceMethod::Gamma, gamma, ..Default::default() }
    }

    pub fn curve(alpha: f64, iterations: u32) -> Self {
        EnhanceParams { method: EnhanceMethod::Curve, alpha, iterations, ..Default::default() }
    }

    pub fn identity() -> Self {
        EnhanceParams { method: EnhanceMethod::Identity, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        check_alpha(self.alpha)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        bail!(Parameter, "gamma must be positive, got {}", gamma);
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&alpha) {
        bail!(Parameter, "curve alpha must lie in [-1, 1], got {}", alpha);
    }
    Ok(())
}

fn check_range(clip: &VideoClip) -> Result<()> {
    if let Some((i, v)) = clip
        .data()
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        bail!(
            Input,
            "clip {} value {} at index {} is outside [0, 1]",
            clip.id(),
            v,
            i
        );
    }
    Ok(())
}

/// `x -> x^(1/gamma)`.
#[inline]
pub fn gamma_map(x: f64, gamma: f64) -> f64 {
    libm::pow(x, 1.0 / gamma)
}

/// One application of `LE(x) = x + alpha * x * (1 - x)`.
#[inline]
pub fn curve_map(x: f64, alpha: f64) -> f64 {
    x + alpha * x * (1.0 - x)
}

fn map_clip(clip: &VideoClip, f: impl Fn(f64) -> f64) -> VideoClip {
    let mut out = clip.clone();
    for v in out.data_mut() {
        *v = f(*v as f64).clamp(0.0, 1.0) as f32;
    }
    out
}

pub fn gic_enhance(clip: &VideoClip, gamma: f64) -> Result<VideoClip> {
    count();
    check_gamma(gamma)?;
    check_range(clip)?;
    Ok(gic_unchecked(clip, gamma))
}

fn gic_unchecked(clip: &VideoClip, gamma: f64) -> VideoClip {
    if gamma == 1.0 {
        return clip.clone();
    }
    map_clip(clip, |x| gamma_map(x, gamma))
}

pub fn dce_curve_enhance(clip: &VideoClip, alpha: f64, iterations: u32) -> Result<VideoClip> {
    count();
    check_alpha(alpha)?;
    check_range(clip)?;
    Ok(curve_unchecked(clip, alpha, iterations))
}

fn curve_unchecked(clip: &VideoClip, alpha: f64, iterations: u32) -> VideoClip {
    if alpha == 0.0 || iterations == 0 {
        return clip.clone();
    }
    map_clip(clip, |x| (0..iterations).fold(x, |v, _| curve_map(v, alpha)))
}

/// Applies the enhancement selected by `params`. Counts as one call.
pub fn enhance(clip: &VideoClip, params: &EnhanceParams) -> Result<VideoClip> {
    count();
    params.validate()?;
    check_range(clip)?;
    Ok(match params.method {
        EnhanceMethod::Gamma => gic_unchecked(clip, params.gamma),
        EnhanceMethod::Curve => curve_unchecked(clip, params.alpha, params.iterations),
        EnhanceMethod::Identity => clip.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn clip(values: &[f32]) -> VideoClip {
        VideoClip::new([1, 1, 1, values.len()], values.to_vec(), 3, "t").unwrap()
    }

    #[test]
    fn gamma_hand_values() {
        assert_eq!(gamma_map(0.25, 2.0), 0.5);
        let out = gic_enhance(&clip(&[0.0, 0.25, 1.0]), 2.0).unwrap();
        assert_eq!(out.data(), &[0.0, 0.5, 1.0]);
        assert_eq!(out.label(), 3);
    }

    #[test]
    fn gamma_one_is_identity() {
        let c = clip(&[0.1, 0.37, 0.999]);
        assert_eq!(gic_enhance(&c, 1.0).unwrap(), c);
    }

    #[test]
    fn curve_hand_values() {
        assert_eq!(curve_map(0.5, 1.0), 0.75);
        let once = dce_curve_enhance(&clip(&[0.5]), 1.0, 1).unwrap();
        let twice = dce_curve_enhance(&clip(&[0.5]), 1.0, 2).unwrap();
        assert_eq!(once.data(), &[0.75]);
        assert_eq!(twice.data(), &[0.9375]);
    }

    #[test]
    fn parameter_errors() {
        let c = clip(&[0.5]);
        assert!(matches!(gic_enhance(&c, 0.0), Err(crate::Error::Parameter(_))));
        assert!(matches!(gic_enhance(&c, -1.0), Err(crate::Error::Parameter(_))));
        assert!(matches!(dce_curve_enhance(&c, 1.5, 1), Err(crate::Error::Parameter(_))));
    }

    #[test]
    fn out_of_range_input_names_index() {
        let mut c = clip(&[0.5, 0.5, 0.5]);
        c.data_mut()[2] = 1.5;
        match gic_enhance(&c, 2.0) {
            Err(crate::Error::Input(msg)) => assert!(msg.contains("index 2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dispatch() {
        let c = VideoClip::new([1, 1, 2, 2], vec![0.25; 4], 0, "a").unwrap();
        assert_eq!(enhance(&c, &EnhanceParams::identity()).unwrap(), c);
        assert_eq!(enhance(&c, &EnhanceParams::gamma(2.0)).unwrap().data(), &[0.5; 4]);
        let half = VideoClip::new([1, 1, 2, 2], vec![0.5; 4], 0, "b").unwrap();
        assert_eq!(enhance(&half, &EnhanceParams::curve(1.0, 1)).unwrap().data(), &[0.75; 4]);
    }
}
