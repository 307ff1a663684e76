mod common;

use common::{arb_box, arb_feasible_instance, vertex_bbox_2d};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uos_transfer::geometry::{bounding_box, contains, intersect, intersect_many, Orthotope, StripSet};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn intersect_is_commutative(a in arb_box(3), b in arb_box(3)) {
        prop_assert_eq!(intersect(&a, &b).unwrap(), intersect(&b, &a).unwrap());
    }

    #[test]
    fn intersect_is_associative(a in arb_box(2), b in arb_box(2), c in arb_box(2)) {
        let left = intersect(&a, &b).unwrap().and_then(|ab| intersect(&ab, &c).unwrap());
        let right = intersect(&b, &c).unwrap().and_then(|bc| intersect(&a, &bc).unwrap());
        prop_assert_eq!(&left, &right);
        prop_assert_eq!(left, intersect_many([&a, &b, &c]).unwrap());
    }

    #[test]
    fn intersect_is_idempotent(a in arb_box(4)) {
        prop_assert_eq!(intersect(&a, &a).unwrap(), Some(a));
    }

    #[test]
    fn intersection_is_inside_both(a in arb_box(3), b in arb_box(3)) {
        if let Some(i) = intersect(&a, &b).unwrap() {
            prop_assert!(i.is_subset_of(&a) && i.is_subset_of(&b));
        }
    }

    #[test]
    fn bounding_box_matches_vertex_enumeration((prior, strips) in arb_feasible_instance(2, 4)) {
        let bb = bounding_box(&prior, &strips).unwrap().expect("instance is feasible");
        let (lo, hi) = vertex_bbox_2d(&prior, &strips, 1e-12).expect("oracle finds the point");
        for k in 0..2 {
            prop_assert!((bb.lower()[k] - lo[k]).abs() <= 1e-9, "lower {} vs {}", bb.lower()[k], lo[k]);
            prop_assert!((bb.upper()[k] - hi[k]).abs() <= 1e-9, "upper {} vs {}", bb.upper()[k], hi[k]);
        }
    }

    #[test]
    fn bounding_box_contains_sampled_feasible_points((prior, strips) in arb_feasible_instance(3, 3), seed in any::<u64>()) {
        let bb = bounding_box(&prior, &strips).unwrap().expect("instance is feasible");
        prop_assert!(bb.is_subset_of(&prior));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = strips.coefficients();
        for _ in 0..200 {
            let x = DVector::from_iterator(3, (0..3).map(|k| rng.random_range(prior.lower()[k]..=prior.upper()[k])));
            let cx = c * &x;
            let inside = (0..strips.len()).all(|j| strips.lower()[j] <= cx[j] && cx[j] <= strips.upper()[j]);
            if inside {
                let grown = Orthotope::new(bb.lower().add_scalar(-1e-9), bb.upper().add_scalar(1e-9)).unwrap();
                prop_assert!(contains(&grown, &x).unwrap());
            }
        }
    }

    #[test]
    fn disjoint_strip_gives_empty(prior in arb_box(2), gap in 0.01f64..3.0) {
        // x_1 + x_2 above the largest value attainable on the box.
        let top = prior.upper()[0] + prior.upper()[1];
        let strips = StripSet::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, top + gap),
            DVector::from_element(1, top + gap + 1.0),
        ).unwrap();
        prop_assert_eq!(bounding_box(&prior, &strips).unwrap(), None);
    }
}
