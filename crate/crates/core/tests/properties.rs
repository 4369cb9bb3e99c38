use proptest::prelude::*;
use textcomp_core::ctc::{brute_force_prob, collapse, ctc_loss, greedy_decode, Codec, LogitsMatrix};
use textcomp_core::geometry::{Homography, Point, Quad};
use textcomp_core::synthesis::{perturb_quad, PerturbationParams};

fn quad_strategy() -> impl Strategy<Value = Quad> {
    (40.0..200.0f64, 10.0..40.0f64, 120.0..300.0f64, 20.0..40.0f64, prop::array::uniform8(-4.0..4.0f64))
        .prop_map(|(x, y, w, h, d)| {
            let r = Quad::rect(x, y, w, h).unwrap().to_array();
            let mut v = [0.0; 8];
            for i in 0..8 {
                v[i] = r[i] + d[i];
            }
            Quad::from_array(v).unwrap()
        })
}

proptest! {
    #[test]
    fn codec_round_trips(word in "[adehmnorst]{1,12}") {
        let codec = Codec::new("adehmnorst").unwrap();
        let label = codec.encode(&word).unwrap();
        prop_assert_eq!(codec.decode(label.as_slice()), word);
    }

    #[test]
    fn ctc_loss_is_the_negative_log_of_the_path_sum(
        scores in prop::collection::vec(-3.0..3.0f64, 15),
        label in prop::collection::vec(1usize..3, 1..3),
    ) {
        let logp = LogitsMatrix::from_scores(5, 3, &scores).unwrap();
        let codec_label = textcomp_core::LabelSeq::new(label.clone(), 3).unwrap();
        let loss = ctc_loss(&logp, &codec_label).unwrap().loss;
        let p = brute_force_prob(&logp, &label).unwrap();
        prop_assert!((loss + p.ln()).abs() < 1e-9, "{} vs {}", loss, -p.ln());
    }

    #[test]
    fn greedy_decode_collapses_the_argmax_path(scores in prop::collection::vec(-3.0..3.0f64, 40)) {
        let logp = LogitsMatrix::from_scores(8, 5, &scores).unwrap();
        let path: Vec<usize> = logp
            .data()
            .chunks(5)
            .map(|row| (0..5).fold(0, |best, k| if row[k] > row[best] { k } else { best }))
            .collect();
        prop_assert_eq!(greedy_decode(&logp), collapse(&path));
    }

    #[test]
    fn quad_homography_maps_domain_corners_and_inverts(quad in quad_strategy()) {
        let h = quad.to_domain().unwrap();
        let back = h.invert().unwrap();
        let id = back.compose(&h).unwrap();
        for p in [Point::new(3.0, 4.0), Point::new(100.0, 20.0), Point::new(250.0, 30.0)] {
            let q = id.apply(p).unwrap();
            prop_assert!(p.distance(q) < 1e-8);
        }
        for (d, s) in textcomp_core::geometry::DOMAIN_CORNERS.iter().zip(quad.corners()) {
            prop_assert!(h.apply(*d).unwrap().distance(*s) < 1e-8);
        }
        prop_assert!(Homography::identity().compose(&h).unwrap().apply(Point::new(1.0, 1.0)).unwrap()
            .distance(h.apply(Point::new(1.0, 1.0)).unwrap()) < 1e-12);
    }

    #[test]
    fn zero_perturbation_is_the_identity(quad in quad_strategy(), seed in any::<u64>()) {
        let out = perturb_quad(&quad, PerturbationParams::new(0.0, 0.0), seed).unwrap();
        prop_assert_eq!(out, quad);
    }
}
