//! Synthetic dark-video action dataset.
//!
//! Clips show a bright elongated blob on a static textured background. Each
//! class is one motion pattern of the blob. A separate darkening transform
//! maps the bright rendering into the low-light domain.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{bail, Result};
use crate::rng::{fnv1a, mix64, seeded, stream};

/// Motion patterns, in label order.
pub const MOTION_CLASSES: [&str; 8] = [
    "translate-left",
    "translate-right",
    "translate-up",
    "translate-down",
    "rotate-cw",
    "rotate-ccw",
    "expand",
    "contract",
];

pub const MIN_DIMS: [usize; 4] = [1, 4, 8, 8];

const BACKGROUND_LEVEL: f64 = 0.2;
const BACKGROUND_TEXTURE: f64 = 0.06;
const BACKGROUND_GRAIN: f64 = 0.03;

/// One sample: `C x T x H x W` values in `[0, 1]` plus its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    dims: [usize; 4],
    data: Vec<f32>,
    label: usize,
    id: String,
}

impl VideoClip {
    pub fn new(dims: [usize; 4], data: Vec<f32>, label: usize, id: impl Into<String>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.contains(&0) || n != data.len() {
            bail!(
                Shape,
                "clip dims {:?} need {} values, got {}",
                dims,
                n,
                data.len()
            );
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            bail!(Input, "non-finite clip value at index {}", i);
        }
        Ok(VideoClip { dims, data, label, id: id.into() })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Darkening applied after rendering: `clip01(scale * x^gamma_dark + noise)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkenParams {
    pub gamma_dark: f64,
    pub scale: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl DarkenParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_dark >= 1.0) || !self.gamma_dark.is_finite() {
            bail!(Config, "gamma_dark must be >= 1, got {}", self.gamma_dark);
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            bail!(Config, "brightness scale must lie in (0, 1], got {}", self.scale);
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            bail!(Config, "noise sigma must be >= 0, got {}", self.sigma);
        }
        Ok(())
    }
}

/// Everything needed to regenerate a dataset bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub classes: usize,
    pub per_class: usize,
    pub dims: [usize; 4],
    pub seed: u64,
    pub darken: Option<DarkenParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    clips: Vec<VideoClip>,
    class_names: Vec<String>,
    provenance: Provenance,
}

impl Dataset {
    /// Checks that labels are in range, every class is present, ids are
    /// unique and all clips share one shape.
    pub fn new(clips: Vec<VideoClip>, class_names: Vec<String>, provenance: Provenance) -> Result<Self> {
        let k = class_names.len();
        if clips.is_empty() {
            bail!(Config, "dataset has no clips");
        }
        let dims = clips[0].dims();
        let mut seen = BTreeSet::new();
        let mut counts = alloc::vec![0usize; k];
        for c in &clips {
            if c.label() >= k {
                bail!(Input, "clip {} has label {} but only {} classes", c.id(), c.label(), k);
            }
            if c.dims() != dims {
                bail!(Shape, "clip {} has dims {:?}, expected {:?}", c.id(), c.dims(), dims);
            }
            if !seen.insert(c.id()) {
                bail!(Consistency, "duplicate clip id {}", c.id());
            }
            counts[c.label()] += 1;
        }
        if let Some(missing) = counts.iter().position(|&n| n == 0) {
            bail!(Consistency, "class {} ({}) has no clips", missing, class_names[missing]);
        }
        Ok(Dataset { clips, class_names, provenance })
    }

    pub fn clips(&self) -> &[VideoClip] {
        &self.clips
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn dims(&self) -> [usize; 4] {
        self.clips[0].dims()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.num_classes()];
        for c in &self.clips {
            counts[c.label()] += 1;
        }
        counts
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.clips.iter().map(|c| c.id())
    }

    /// Darkens every clip; the result records the darkening parameters.
    pub fn darkened(&self, params: &DarkenParams) -> Result<Dataset> {
        params.validate()?;
        let clips = self.clips.iter().map(|c| darken(c, params)).collect::<Result<Vec<_>>>()?;
        let mut provenance = self.provenance.clone();
        provenance.darken = Some(*params);
        Ok(Dataset { clips, class_names: self.class_names.clone(), provenance })
    }

    fn subset(&self, mut indices: Vec<usize>) -> Dataset {
        indices.sort_unstable();
        Dataset {
            clips: indices.into_iter().map(|i| self.clips[i].clone()).collect(),
            class_names: self.class_names.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Renders `clips_per_class` bright clips for each of the first
/// `num_classes` motion patterns.
pub fn generate_dataset(
    num_classes: usize,
    clips_per_class: usize,
    dims: [usize; 4],
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 || num_classes > MOTION_CLASSES.len() {
        bail!(
            Config,
            "{} classes requested, between 2 and {} are implemented",
            num_classes,
            MOTION_CLASSES.len()
        );
    }
    if clips_per_class == 0 {
        bail!(Config, "clips per class must be >= 1");
    }
    if dims.iter().zip(MIN_DIMS).any(|(&d, m)| d < m) {
        bail!(Config, "clip dims {:?} are below the minimum {:?}", dims, MIN_DIMS);
    }
    let mut clips = Vec::with_capacity(num_classes * clips_per_class);
    for label in 0..num_classes {
        for j in 0..clips_per_class {
            let index = label * clips_per_class + j;
            let id = format!("{}-{:04}", MOTION_CLASSES[label], j);
            let data = render_clip(label, dims, &mut stream(seed, index as u64));
            clips.push(VideoClip::new(dims, data, label, id)?);
        }
    }
    let names = MOTION_CLASSES[..num_classes].iter().map(|s| s.to_string()).collect();
    Dataset::new(
        clips,
        names,
        Provenance {
            classes: num_classes,
            per_class: clips_per_class,
            dims,
            seed,
            darken: None,
        },
    )
}

/// Blob pose for one frame.
#[derive(Debug, Clone, Copy)]
struct Pose {
    cx: f64,
    cy: f64,
    angle: f64,
    scale: f64,
}

fn render_clip(label: usize, dims: [usize; 4], rng: &mut impl Rng) -> Vec<f32> {
    let [c, t, h, w] = dims;
    let (hf, wf) = (h as f64, w as f64);
    let min_dim = hf.min(wf);

    // Dim background with a few random plane waves shared by all channels,
    // plus per-pixel grain.
    let waves: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            [
                rng.random_range(0.5..1.0) * BACKGROUND_TEXTURE,
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
                rng.random_range(0.0..2.0 * PI),
            ]
        })
        .collect();
    let mut background = alloc::vec![0.0f64; c * h * w];
    for plane in background.chunks_exact_mut(h * w) {
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                let tex: f64 = waves.iter().map(|[a, kx, ky, ph]| a * libm::sin(kx * xf + ky * yf + ph)).sum();
                let grain = rng.random_range(-BACKGROUND_GRAIN..BACKGROUND_GRAIN);
                plane[y * w + x] = (BACKGROUND_LEVEL + tex + grain).clamp(0.0, 1.0);
            }
        }
    }

    // A large, nearly white ellipse.
    let semi_major = rng.random_range(0.36..0.42) * min_dim;
    let semi_minor = semi_major * rng.random_range(0.55..0.65);
    let angle0 = rng.random_range(0.0..PI);
    let level = rng.random_range(0.95..1.0);
    let color: Vec<f64> = alloc::vec![level; c];

    let margin = semi_major + 1.0;
    let poses: Vec<Pose> = match label {
        0..=3 => {
            let horizontal = label < 2;
            let (along, across) = if horizontal { (wf, hf) } else { (hf, wf) };
            let travel = rng.random_range(0.4..0.5) * along;
            let (lo, hi) = (margin.min(along - margin - travel), margin.max(along - margin - travel));
            let start = rng.random_range(lo..hi + 1e-9);
            let other = rng.random_range(margin..(across - margin).max(margin + 1e-9));
            // Left and up run towards smaller coordinates.
            let forward = label == 1 || label == 3;
            (0..t)
                .map(|f| {
                    let s = f as f64 / (t - 1) as f64;
                    let pos = if forward { start + travel * s } else { start + travel * (1.0 - s) };
                    let (cx, cy) = if horizontal { (pos, other) } else { (other, pos) };
                    Pose { cx, cy, angle: angle0, scale: 1.0 }
                })
                .collect()
        }
        4 | 5 => {
            let cx = rng.random_range(margin..(wf - margin).max(margin + 1e-9));
            let cy = rng.random_range(margin..(hf - margin).max(margin + 1e-9));
            let sweep = rng.random_range(0.5..0.8) * PI;
            // Image y points down, so a growing angle turns clockwise on screen.
            let dir = if label == 4 { 1.0 } else { -1.0 };
            (0..t)
                .map(|f| {
                    let s = f as f64 / (t - 1) as f64;
                    Pose { cx, cy, angle: angle0 + dir * sweep * s, scale: 1.0 }
                })
                .collect()
        }
        _ => {
            let (small, large) = (0.6, 1.25);
            let margin = semi_major * large + 1.0;
            let cx = rng.random_range(margin.min(wf / 2.0)..(wf - margin).max(wf / 2.0 + 1e-9));
            let cy = rng.random_range(margin.min(hf / 2.0)..(hf - margin).max(hf / 2.0 + 1e-9));
            (0..t)
                .map(|f| {
                    let s = f as f64 / (t - 1) as f64;
                    let scale = if label == 6 {
                        small + (large - small) * s
                    } else {
                        large + (small - large) * s
                    };
                    Pose { cx, cy, angle: angle0, scale }
                })
                .collect()
        }
    };

    let mut out = alloc::vec![0.0f32; c * t * h * w];
    for (f, pose) in poses.iter().enumerate() {
        let (sin, cos) = libm::sincos(pose.angle);
        let a = semi_major * pose.scale;
        let b = semi_minor * pose.scale;
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 + 0.5 - pose.cx;
                let dy = y as f64 + 0.5 - pose.cy;
                let u = dx * cos + dy * sin;
                let v = -dx * sin + dy * cos;
                let r = Float::sqrt((u / a) * (u / a) + (v / b) * (v / b));
                // About one pixel of antialiasing across the minor axis.
                let m = ((1.0 - r) * b + 0.5).clamp(0.0, 1.0);
                for ch in 0..c {
                    let bg = background[(ch * h + y) * w + x];
                    let val = bg * (1.0 - m) + color[ch] * m;
                    out[((ch * t + f) * h + y) * w + x] = val as f32;
                }
            }
        }
    }
    out
}

/// Maps a bright clip into the low-light domain. Noise is keyed on
/// `(params.seed, clip id)`, so clips can be darkened in any order.
pub fn darken(clip: &VideoClip, params: &DarkenParams) -> Result<VideoClip> {
    params.validate()?;
    let mut rng = seeded(mix64(params.seed ^ fnv1a(clip.id().as_bytes())));
    let noise = Normal::new(0.0, params.sigma).map_err(|e| {
        crate::Error::Config(format!("noise sigma {}: {:?}", params.sigma, e))
    })?;
    let mut out = clip.clone();
    for v in out.data_mut() {
        let x = *v as f64;
        let mut y = params.scale * libm::pow(x, params.gamma_dark);
        if params.sigma > 0.0 {
            y += noise.sample(&mut rng);
        }
        *v = y.clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}

/// Stratified seeded split. Each class contributes
/// `round(train_fraction * count)` clips to the training side, kept within
/// `[1, count - 1]` so both sides see every class.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        bail!(Config, "train fraction must lie in (0, 1), got {}", train_fraction);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in 0..dataset.num_classes() {
        let mut members: Vec<usize> = dataset
            .clips
            .iter()
            .enumerate()
            .filter(|(_, c)| c.label() == label)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 2 {
            bail!(
                Config,
                "class {} ({}) has {} clip(s), a split needs at least 2",
                label,
                dataset.class_names[label],
                members.len()
            );
        }
        members.shuffle(&mut stream(seed, label as u64));
        let n = members.len();
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    Ok((dataset.subset(train), dataset.subset(test)))
}

/// The pinned benchmark `dlkd-bench-v1`.
pub mod bench {
    use super::*;

    pub const NAME: &str = "dlkd-bench-v1";
    pub const CLASSES: usize = 8;
    pub const PER_CLASS: usize = 40;
    pub const DIMS: [usize; 4] = [3, 8, 32, 32];
    pub const SEED: u64 = 0x646c_6b64_0001;
    pub const GAMMA_DARK: f64 = 2.2;
    pub const SCALE: f64 = 0.3;
    pub const SIGMA: f64 = 0.02;
    pub const TRAIN_FRACTION: f64 = 0.8;

    pub fn darken_params() -> DarkenParams {
        DarkenParams { gamma_dark: GAMMA_DARK, scale: SCALE, sigma: SIGMA, seed: SEED }
    }

    /// The dark benchmark dataset, before splitting.
    pub fn dataset() -> Result<Dataset> {
        generate_dataset(CLASSES, PER_CLASS, DIMS, SEED)?.darkened(&darken_params())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_too_many_classes() {
        assert!(matches!(generate_dataset(9, 2, [1, 4, 8, 8], 0), Err(crate::Error::Config(_))));
        assert!(matches!(generate_dataset(1, 2, [1, 4, 8, 8], 0), Err(crate::Error::Config(_))));
        assert!(generate_dataset(2, 2, [1, 3, 8, 8], 0).is_err());
    }

    #[test]
    fn darken_hand_value() {
        let c = VideoClip::new([1, 1, 1, 1], alloc::vec![0.5], 0, "x").unwrap();
        let p = DarkenParams { gamma_dark: 2.0, scale: 0.5, sigma: 0.0, seed: 1 };
        assert_eq!(darken(&c, &p).unwrap().data(), &[0.125]);
        let id = DarkenParams { gamma_dark: 1.0, scale: 1.0, sigma: 0.0, seed: 1 };
        assert_eq!(darken(&c, &id).unwrap(), c);
    }

    #[test]
    fn split_small_class_rejected() {
        let ds = generate_dataset(2, 1, [1, 4, 8, 8], 3).unwrap();
        assert!(matches!(split(&ds, 0.8, 0), Err(crate::Error::Config(_))));
        let ds = generate_dataset(2, 4, [1, 4, 8, 8], 3).unwrap();
        assert!(split(&ds, 1.0, 0).is_err());
    }

    #[test]
    fn dataset_rejects_duplicate_ids() {
        let c = VideoClip::new([1, 1, 1, 1], alloc::vec![0.5], 0, "dup").unwrap();
        let p = Provenance { classes: 1, per_class: 2, dims: [1, 1, 1, 1], seed: 0, darken: None };
        let r = Dataset::new(alloc::vec![c.clone(), c], alloc::vec!["a".into()], p);
        assert!(matches!(r, Err(crate::Error::Consistency(_))));
    }
}
