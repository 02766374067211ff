use dlkd_core::data::VideoClip;
use dlkd_core::enhance::{curve_map, dce_curve_enhance, enhance, gamma_map, gic_enhance, EnhanceParams};
use proptest::prelude::*;

fn clip(values: Vec<f32>) -> VideoClip {
    let n = values.len();
    VideoClip::new([1, 1, 1, n], values, 3, "c").unwrap()
}

#[test]
fn hand_values() {
    assert!((gamma_map(0.25, 2.0) - 0.5).abs() < 1e-9);
    assert!((curve_map(0.5, 1.0) - 0.75).abs() < 1e-9);
    assert!((curve_map(curve_map(0.5, 1.0), 1.0) - 0.9375).abs() < 1e-9);
    let all = clip(vec![0.25; 6]);
    assert_eq!(enhance(&all, &EnhanceParams::gamma(2.0)).unwrap().data(), &[0.5; 6]);
    let half = clip(vec![0.5; 6]);
    assert_eq!(enhance(&half, &EnhanceParams::curve(1.0, 1)).unwrap().data(), &[0.75; 6]);
    assert_eq!(enhance(&half, &EnhanceParams::curve(1.0, 2)).unwrap().data(), &[0.9375; 6]);
}

#[test]
fn identities_and_fixed_points() {
    let c = clip(vec![0.0, 0.1, 0.37, 0.5, 0.93, 1.0]);
    assert_eq!(gic_enhance(&c, 1.0).unwrap(), c);
    assert_eq!(dce_curve_enhance(&c, 0.0, 7).unwrap(), c);
    assert_eq!(enhance(&c, &EnhanceParams::identity()).unwrap(), c);
    for gamma in [0.3, 2.2, 9.0] {
        assert_eq!(gamma_map(0.0, gamma), 0.0);
        assert_eq!(gamma_map(1.0, gamma), 1.0);
    }
}

#[test]
fn label_id_and_shape_are_kept() {
    let c = clip(vec![0.2; 4]);
    for p in [EnhanceParams::gamma(2.2), EnhanceParams::default(), EnhanceParams::identity()] {
        let e = enhance(&c, &p).unwrap();
        assert_eq!((e.label(), e.id(), e.dims()), (c.label(), c.id(), c.dims()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gamma_stays_in_range(x in 0.0f64..=1.0, gamma in 0.05f64..20.0) {
        let y = gamma_map(x, gamma);
        prop_assert!((0.0..=1.0).contains(&y));
    }

    #[test]
    fn curve_stays_in_range(x in 0.0f64..=1.0, alpha in -1.0f64..=1.0) {
        let y = curve_map(x, alpha);
        prop_assert!((0.0..=1.0).contains(&y));
    }

    #[test]
    fn gamma_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, gamma in 0.05f64..20.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(gamma_map(lo, gamma) <= gamma_map(hi, gamma));
    }

    #[test]
    fn curve_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, alpha in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(curve_map(lo, alpha) <= curve_map(hi, alpha));
    }

    #[test]
    fn gamma_above_one_brightens(x in 0.0f64..=1.0, gamma in 1.0f64..20.0) {
        prop_assert!(gamma_map(x, gamma) >= x);
    }

    #[test]
    fn positive_alpha_brightens(x in 0.0f64..=1.0, alpha in 0.0f64..=1.0) {
        prop_assert!(curve_map(x, alpha) >= x);
    }

    #[test]
    fn neutral_parameters_are_identity(x in 0.0f64..=1.0) {
        prop_assert_eq!(gamma_map(x, 1.0), x);
        prop_assert_eq!(curve_map(x, 0.0), x);
    }

    #[test]
    fn clip_enhancement_stays_in_range(values in prop::collection::vec(0.0f32..=1.0, 1..32), alpha in -1.0f64..=1.0, iters in 0u32..6, gamma in 0.1f64..10.0) {
        let c = clip(values);
        prop_assert!(dce_curve_enhance(&c, alpha, iters).unwrap().in_unit_range());
        prop_assert!(gic_enhance(&c, gamma).unwrap().in_unit_range());
    }
}
