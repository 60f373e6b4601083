//! Randomized invariants of the projector, the PMF distance and the
//! Gumbel-softmax relaxation.

use ndarray::Array2;
use proptest::prelude::*;
use uvtomo::angledist::{gumbel_softmax_with, tv_distance};
use uvtomo::projector::{project, Projector};
use uvtomo::{Image, Pmf};

fn pmf(n: usize) -> impl Strategy<Value = Pmf> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("all-zero weights", |w| Pmf::from_weights(&w).ok())
}

fn image(d: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0f64..1.0, d * d).prop_map(move |px| {
        let mut img = Image::from_pixels(d, px).unwrap();
        img.apply_support_mask();
        img
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tv_distance_is_a_metric(p in pmf(12), q in pmf(12), r in pmf(12)) {
        let pq = tv_distance(&p, &q).unwrap();
        prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() < 1e-15);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
        prop_assert!(tv_distance(&p, &p).unwrap() < 1e-15);
        let pr = tv_distance(&p, &r).unwrap();
        let rq = tv_distance(&r, &q).unwrap();
        prop_assert!(pq <= pr + rq + 1e-12);
    }

    #[test]
    fn projection_is_linear(a in image(12), b in image(12), s in -2.0f64..2.0, theta in 0.0f64..std::f64::consts::PI) {
        let combo = Image::from_pixels(12, a.pixels().iter().zip(b.pixels()).map(|(x, y)| x + s * y).collect()).unwrap();
        let lhs = project(&combo, theta);
        let pa = project(&a, theta);
        let pb = project(&b, theta);
        for k in 0..12 {
            prop_assert!((lhs[k] - (pa[k] + s * pb[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn axis_aligned_projection_preserves_mass(img in image(16), vertical in any::<bool>()) {
        // Rays through pixel centers: interpolation weights are 0 or 1.
        let theta = if vertical { 0.0 } else { std::f64::consts::FRAC_PI_2 };
        let total: f64 = project(&img, theta).iter().sum();
        let expected = img.pixel_size() * img.sum();
        prop_assert!((total - expected).abs() <= 1e-10 * expected.max(1.0));
    }

    #[test]
    fn oblique_projection_nearly_preserves_mass(img in image(32), theta in 0.0f64..std::f64::consts::PI) {
        // Linear interpolation conserves mass only on average over pixel
        // offsets; for a dense image the per-angle error stays around 1%.
        let total: f64 = project(&img, theta).iter().sum();
        let expected = img.pixel_size() * img.sum();
        prop_assert!((total - expected).abs() <= 0.02 * expected, "total {total} expected {expected} theta {theta}");
    }

    #[test]
    fn weighted_normal_matches_explicit_sum(img in image(10), w in prop::collection::vec(0.0f64..1.0, 5)) {
        let angles: Vec<f64> = (0..5).map(|i| (i as f64 + 0.5) * std::f64::consts::PI / 5.0).collect();
        let proj = Projector::new(10, &angles);
        let fast = proj.weighted_normal(img.pixels(), &w);
        let mut sino: Array2<f64> = proj.project(img.pixels());
        for (mut row, wi) in sino.rows_mut().into_iter().zip(&w) {
            row *= *wi;
        }
        let slow = proj.backproject(sino.view());
        for (x, y) in fast.iter().zip(&slow) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn gumbel_rows_are_distributions(p in pmf(6), g in prop::collection::vec(-5.0f64..5.0, 18), tau in 0.05f64..5.0) {
        let g = Array2::from_shape_vec((3, 6), g).unwrap();
        let w = gumbel_softmax_with(&p, g.view(), tau).unwrap();
        for row in w.weights.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }
}
