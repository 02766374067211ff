use std::collections::BTreeSet;

use dlkd_core::data::{bench, darken, generate_dataset, split, DarkenParams, Dataset, VideoClip, MOTION_CLASSES};

fn small() -> Dataset {
    generate_dataset(8, 20, [3, 8, 32, 32], 17).unwrap()
}

/// Per-frame x centroid of pixels brighter than `threshold`, averaged over
/// channels.
fn centroid_x(clip: &VideoClip, threshold: f32) -> Vec<f64> {
    let [c, t, h, w] = clip.dims();
    (0..t)
        .map(|f| {
            let (mut mass, mut moment) = (0.0f64, 0.0f64);
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let v = clip.data()[((ch * t + f) * h + y) * w + x];
                        if v > threshold {
                            let m = (v - threshold) as f64;
                            mass += m;
                            moment += m * (x as f64 + 0.5);
                        }
                    }
                }
            }
            assert!(mass > 0.0, "no blob found in frame {f} of {}", clip.id());
            moment / mass
        })
        .collect()
}

#[test]
fn generation_is_deterministic() {
    assert_eq!(small(), small());
    assert_ne!(small(), generate_dataset(8, 20, [3, 8, 32, 32], 18).unwrap());
}

#[test]
fn counts_and_labels() {
    let ds = small();
    assert_eq!(ds.len(), 160);
    assert_eq!(ds.class_counts(), vec![20; 8]);
    assert_eq!(ds.class_names(), &MOTION_CLASSES);
    let ids: BTreeSet<&str> = ds.ids().collect();
    assert_eq!(ids.len(), 160);
}

#[test]
fn bright_domain_values() {
    let ds = small();
    let mean = ds.clips().iter().map(|c| c.mean()).sum::<f64>() / ds.len() as f64;
    assert!(mean >= 0.4, "bright mean {mean}");
    assert!(ds.clips().iter().all(|c| c.in_unit_range()));
}

#[test]
fn translate_right_centroid_moves_right() {
    let ds = small();
    let right = MOTION_CLASSES.iter().position(|&n| n == "translate-right").unwrap();
    for clip in ds.clips().iter().filter(|c| c.label() == right) {
        let xs = centroid_x(clip, 0.8);
        assert!(xs.windows(2).all(|p| p[1] > p[0]), "{}: {xs:?}", clip.id());
    }
}

#[test]
fn darkening_hand_value_and_identity() {
    let c = VideoClip::new([1, 1, 1, 2], vec![0.5, 1.0], 0, "x").unwrap();
    let p = DarkenParams { gamma_dark: 2.0, scale: 0.5, sigma: 0.0, seed: 9 };
    assert_eq!(darken(&c, &p).unwrap().data(), &[0.125, 0.5]);
    let id = DarkenParams { gamma_dark: 1.0, scale: 1.0, sigma: 0.0, seed: 9 };
    assert_eq!(darken(&c, &id).unwrap(), c);
}

#[test]
fn darkening_dims_the_generated_clips() {
    let ds = small();
    let p = DarkenParams { gamma_dark: 2.0, scale: 0.3, sigma: 0.02, seed: 4 };
    let dark = ds.darkened(&p).unwrap();
    let before: f64 = ds.clips().iter().map(|c| c.mean()).sum();
    let after: f64 = dark.clips().iter().map(|c| c.mean()).sum();
    assert!(after < before);
    for (a, b) in ds.clips().iter().zip(dark.clips()) {
        assert!(b.in_unit_range());
        assert_eq!((a.label(), a.id(), a.dims()), (b.label(), b.id(), b.dims()));
    }
    assert_eq!(dark, ds.darkened(&p).unwrap());
}

#[test]
fn darkening_noise_depends_only_on_the_clip_id() {
    let ds = small();
    let p = bench::darken_params();
    let whole = ds.darkened(&p).unwrap();
    for i in [0, 37, 159] {
        assert_eq!(&darken(&ds.clips()[i], &p).unwrap(), &whole.clips()[i]);
    }
}

#[test]
fn split_counts_and_partition() {
    let ds = small();
    let (train, test) = split(&ds, 0.8, 5).unwrap();
    assert_eq!((train.len(), test.len()), (128, 32));
    assert_eq!(train.class_counts(), vec![16; 8]);
    assert_eq!(test.class_counts(), vec![4; 8]);
    let a: BTreeSet<&str> = train.ids().collect();
    let b: BTreeSet<&str> = test.ids().collect();
    assert!(a.is_disjoint(&b));
    let all: BTreeSet<&str> = ds.ids().collect();
    assert_eq!(a.union(&b).copied().collect::<BTreeSet<_>>(), all);
    assert_eq!(split(&ds, 0.8, 5).unwrap(), (train, test));
}

#[test]
fn benchmark_split_is_32_to_8_per_class() {
    let ds = bench::dataset().unwrap();
    assert_eq!(ds.len(), 320);
    assert_eq!(ds.dims(), [3, 8, 32, 32]);
    let (train, test) = split(&ds, bench::TRAIN_FRACTION, bench::SEED).unwrap();
    assert_eq!(train.class_counts(), vec![32; 8]);
    assert_eq!(test.class_counts(), vec![8; 8]);
}

#[test]
fn invalid_requests() {
    assert!(matches!(generate_dataset(9, 1, [1, 4, 8, 8], 0), Err(dlkd_core::Error::Config(_))));
    assert!(generate_dataset(2, 1, [1, 4, 8, 7], 0).is_err());
    let one = generate_dataset(2, 1, [1, 4, 8, 8], 0).unwrap();
    assert!(matches!(split(&one, 0.8, 0), Err(dlkd_core::Error::Config(_))));
    assert!(split(&small(), 1.0, 0).is_err());
}
