//! Property tests of β numbers, Jones profiles and Carleson sums on random
//! explicit sets.

use jonesbeta::beta::beta2_explicit;
use jonesbeta::geom::{Point2, Segment, SegmentSet, Similarity};
use jonesbeta::multiscale::{carleson_sum, jones_profile, CarlesonGrid};
use jonesbeta::tree::DEFAULT_NODE_BUDGET;
use proptest::prelude::*;

fn segments() -> impl Strategy<Value = SegmentSet> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..6).prop_filter_map(
        "degenerate",
        |v| {
            let segs: Option<Vec<Segment>> = v
                .into_iter()
                .map(|(a, b, c, d)| Segment::new(Point2::new(a, b), Point2::new(c, d)).ok())
                .collect();
            segs.filter(|s| s.iter().all(|s| s.length() > 1e-3)).map(SegmentSet::new)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_is_scale_invariant(set in segments(), t in 0.1..10.0f64, zx in -5.0..5.0f64, zy in -5.0..5.0f64, r in 0.1..2.0f64) {
        let sim = Similarity::new(t, Point2::new(zx, zy)).unwrap();
        let a = beta2_explicit(&set, Point2::ORIGIN, r).unwrap();
        let b = beta2_explicit(&set.transform(&sim), sim.apply(Point2::ORIGIN), t * r).unwrap();
        let scale = a.mass_in_ball / r;
        prop_assert!((a.beta_sq - b.beta_sq).abs() <= 1e-12 * (a.beta_sq + scale));
    }

    #[test]
    fn doubling_with_constant_27(set in segments(), r in 0.05..0.7f64, dist in 0.0..1.0f64, ang in 0.0..6.28f64) {
        let y = Point2::new(ang.cos(), ang.sin()) * (2.0 * r * dist);
        let small = beta2_explicit(&set, y, r).unwrap();
        let big = beta2_explicit(&set, Point2::ORIGIN, 3.0 * r).unwrap();
        prop_assert!(small.beta_sq <= 27.0 * big.beta_sq + 1e-12 * big.mass_in_ball * 9.0 / r);
    }

    #[test]
    fn beta_is_bounded_by_mass(set in segments(), r in 0.05..2.0f64) {
        // every point of the ball is within r of the line through the center
        let b = beta2_explicit(&set, Point2::ORIGIN, r).unwrap();
        prop_assert!(b.beta_sq >= 0.0);
        prop_assert!(b.beta_sq <= b.mass_in_ball / r * (1.0 + 1e-12));
    }

    #[test]
    fn partial_sums_monotone(set in segments(), m in 2u32..12) {
        let src = set.into();
        let short = jones_profile(&src, Point2::ORIGIN, 1.0, 2.0, m - 1, 1e-9).unwrap();
        let long = jones_profile(&src, Point2::ORIGIN, 1.0, 2.0, m, 1e-9).unwrap();
        prop_assert!(long.partial_sum >= short.partial_sum);
        prop_assert_eq!(&long.samples[..m as usize], &short.samples[..]);
    }

    #[test]
    fn carleson_is_nonnegative_and_deterministic(set in segments()) {
        let src = set.into();
        let g = CarlesonGrid { outer_gap: 0.1, ratio: 2.0, m_max: 6, rel_tol: 1e-9, node_budget: DEFAULT_NODE_BUDGET };
        let a = carleson_sum(&src, Point2::ORIGIN, 1.0, &g).unwrap();
        let b = carleson_sum(&src, Point2::ORIGIN, 1.0, &g).unwrap();
        prop_assert!(a.value >= 0.0);
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
