use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::{quad_to_domain, warp_image, Homography, Point, DOMAIN_HEIGHT, DOMAIN_WIDTH};
use crate::geometry::Quad;
use crate::imaging::{gap_runs, read_pgm, Mask};
use crate::templates::render_skeleton;

fn skeleton_image(word: &str) -> (GrayImage, Vec<std::ops::Range<usize>>) {
    let s = render_skeleton(word).unwrap();
    (GrayImage::from_mask(&s.mask), s.gaps())
}

#[test]
fn zero_kerning_is_identity() {
    let (img, gaps) = skeleton_image("kern");
    assert_eq!(apply_kerning(&img, &gaps, &vec![0.0; gaps.len()]).unwrap(), img);
}

#[test]
fn kerning_widens_exactly_one_gap_and_keeps_characters() {
    let word = "wave";
    let s = render_skeleton(word).unwrap();
    let img = GrayImage::from_mask(&s.mask);
    let gaps = s.gaps();
    let before = gap_runs(&s.mask);
    assert_eq!(before, gaps);
    let out = apply_kerning(&img, &gaps, &[0.0, 4.0, 0.0]).unwrap();
    assert_eq!(out.width(), 260);
    let after = gap_runs(&out.threshold(0.5));
    assert_eq!(after.len(), 3);
    assert_eq!(after[1].len(), before[1].len() + 4);
    assert_eq!(after[0], before[0]);
    assert_eq!(after[2].len(), before[2].len());
    // every character's columns are copied verbatim, shifted by the
    // offsets to their left
    let mut shift = 0;
    for (k, cols) in s.columns.iter().enumerate() {
        for x in cols.clone() {
            for y in 0..DOMAIN_HEIGHT {
                assert_eq!(out.get(y, x + shift), img.get(y, x));
            }
        }
        if k == 1 {
            shift += 4;
        }
    }
}

#[test]
fn kerning_count_and_overflow_errors() {
    let (img, gaps) = skeleton_image("abc");
    assert!(matches!(apply_kerning(&img, &gaps, &[1.0]), Err(SynthesisError::KerningCount { .. })));
    assert!(matches!(
        apply_kerning(&img, &gaps, &[200.0, 200.0]),
        Err(SynthesisError::WidthOverflow { .. })
    ));
}

proptest! {
    #[test]
    fn kerning_is_monotone_per_gap(a in -2.0f64..6.0, b in -2.0f64..6.0, extra in 0.0f64..4.0) {
        let (img, gaps) = skeleton_image("tom");
        let narrow = apply_kerning(&img, &gaps, &[a, b]).unwrap();
        let wide = apply_kerning(&img, &gaps, &[a + extra, b]).unwrap();
        let g0 = gap_runs(&narrow.threshold(0.5))[0].len();
        let g1 = gap_runs(&wide.threshold(0.5))[0].len();
        prop_assert!(g1 >= g0);
    }

    #[test]
    fn font_is_monotone_in_radius(r1 in 0.5f64..2.5, dr in 0.0f64..1.0) {
        let (img, _) = skeleton_image("Rx");
        let thin = apply_font(&img, r1).unwrap().threshold(0.5);
        let thick = apply_font(&img, r1 + dr).unwrap().threshold(0.5);
        prop_assert_eq!(thin.union(&thick), thick);
    }
}

#[test]
fn font_radius_examples() {
    let (img, _) = skeleton_image("Ag");
    assert_eq!(apply_font(&img, 0.5).unwrap(), img);
    let mut dot = GrayImage::filled(11, 11, 0.0);
    dot.set(5, 5, 1.0);
    let disk = apply_font(&dot, 2.5).unwrap();
    assert_eq!(disk.threshold(0.5).count(), 13);
    let lattice = (-5i32..=5)
        .flat_map(|y| (-5i32..=5).map(move |x| (y, x)))
        .filter(|&(y, x)| ((x * x + y * y) as f64).sqrt() <= 2.0)
        .count();
    assert_eq!(lattice, 13);
}

#[test]
fn neutral_word_is_clean_and_at_the_origin() {
    let word = "clean";
    let gaps = render_skeleton(word).unwrap().gaps().len();
    let params = SynthesisParams::neutral(gaps);
    let sample = synthesize(word, &params, 0).unwrap();
    assert_eq!(sample.quad, crate::geometry::Quad::rect(0.0, 0.0, 256.0, 32.0).unwrap());
    let (img, _) = skeleton_image(word);
    let dilated = apply_font(&img, params.stroke_radius).unwrap();
    for y in 0..CANVAS_HEIGHT {
        for x in 0..CANVAS_WIDTH {
            let expected = if y < DOMAIN_HEIGHT && x < DOMAIN_WIDTH { 1.0 - dilated.get(y, x) } else { 1.0 };
            assert_eq!(sample.scene.get(y, x), expected, "({y},{x})");
        }
    }
    // binarized sample equals the dilated skeleton
    let mut ink = Mask::new(DOMAIN_HEIGHT, DOMAIN_WIDTH);
    for y in 0..DOMAIN_HEIGHT {
        for x in 0..DOMAIN_WIDTH {
            ink.set(y, x, sample.scene.get(y, x) < 0.5);
        }
    }
    assert_eq!(ink, dilated.threshold(0.5));
}

#[test]
fn translation_moves_the_quad() {
    let word = "shift";
    let mut params = SynthesisParams::neutral(4);
    params.homography = Homography::translation(-100.0, -10.0);
    let sample = synthesize(word, &params, 0).unwrap();
    assert_eq!(sample.quad, crate::geometry::Quad::rect(100.0, 10.0, 256.0, 32.0).unwrap());
    let base = synthesize(word, &SynthesisParams::neutral(4), 0).unwrap();
    for y in 0..DOMAIN_HEIGHT {
        for x in 0..DOMAIN_WIDTH {
            assert_eq!(sample.scene.get(y + 10, x + 100), base.scene.get(y, x));
        }
    }
}

#[test]
fn quad_off_canvas_is_rejected() {
    let mut params = SynthesisParams::neutral(2);
    params.homography = Homography::translation(-300.0, 0.0);
    assert!(matches!(
        synthesize("abc", &params, 0),
        Err(SynthesisError::Geometry(crate::geometry::GeometryError::Clipped { .. }))
    ));
}

#[test]
fn rectifying_the_scene_recovers_the_flat_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let ranges = ParamRanges {
        corner_jitter: 0.05,
        scale: (0.8, 1.2),
        ..ParamRanges::default()
    };
    for _ in 0..5 {
        let mut params = ranges.draw(4, &mut rng).unwrap();
        params.kerning = vec![0.0; 4];
        // strongest contrast of the default ranges, smoothed by the largest blur
        params.appearance = AppearanceParams {
            background: 0.9,
            contrast: 0.6,
            blur_sigma: 1.5,
            ..AppearanceParams::NEUTRAL
        };
        let skeleton = GrayImage::from_mask(&render_skeleton("round").unwrap().mask);
        let flat = apply_appearance(&apply_font(&skeleton, 2.0).unwrap(), &params.appearance, 3).unwrap();
        let (scene, quad) = apply_geometry(&flat, &params.homography, CANVAS_HEIGHT, CANVAS_WIDTH).unwrap();
        let rectified = warp_image(&scene, &quad_to_domain(&quad).unwrap(), DOMAIN_HEIGHT, DOMAIN_WIDTH, 0.9);
        let mut worst: f64 = 0.0;
        for y in 2..DOMAIN_HEIGHT - 2 {
            for x in 2..DOMAIN_WIDTH - 2 {
                let truth = flat.image.get(y + flat.margin_y, x + flat.margin_x);
                worst = worst.max((rectified.get(y, x) - truth).abs());
            }
        }
        assert!(worst <= 0.05, "round-trip error {worst}");
    }
}

#[test]
fn stages_compose_to_synthesize() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let word = "Stage42";
    let s = render_skeleton(word).unwrap();
    let params = ParamRanges::default().draw(s.gaps().len(), &mut rng).unwrap();
    let kerned = apply_kerning(&GrayImage::from_mask(&s.mask), &s.gaps(), &params.kerning).unwrap();
    let inked = apply_font(&kerned, params.stroke_radius).unwrap();
    let flat = apply_appearance(&inked, &params.appearance, 99).unwrap();
    let (scene, quad) = apply_geometry(&flat, &params.homography, CANVAS_HEIGHT, CANVAS_WIDTH).unwrap();
    let sample = synthesize(word, &params, 99).unwrap();
    assert_eq!(sample.scene, scene);
    assert_eq!(sample.quad, quad);
}

#[test]
fn generation_is_seed_deterministic() {
    let ranges = ParamRanges::default();
    let a = generate("seeded", &ranges, 5).unwrap();
    assert_eq!(a, generate("seeded", &ranges, 5).unwrap());
    assert_ne!(a.scene, generate("seeded", &ranges, 6).unwrap().scene);
    assert!(a.quad.inside(CANVAS_HEIGHT, CANVAS_WIDTH));
}

#[test]
fn templates_always_match_transcripts() {
    let words = ["a", "word", "Mixed9", "lengthyTranscr16"];
    let ranges = ParamRanges::default();
    let cache: Vec<_> = words.iter().map(|w| crate::templates::render_template(w).unwrap()).collect();
    for i in 0..1000u64 {
        let k = i as usize % words.len();
        let s = generate(words[k], &ranges, i).unwrap();
        assert_eq!(s.template, cache[k]);
        assert_eq!(s.transcript, words[k]);
        assert!(s.quad.inside(CANVAS_HEIGHT, CANVAS_WIDTH));
    }
}

#[test]
fn invalid_ranges_are_rejected() {
    let bad = ParamRanges {
        scale: (1.0, 3.0),
        ..ParamRanges::default()
    };
    assert!(matches!(bad.validate(), Err(SynthesisError::OutOfRange { .. })));
    let bad = ParamRanges {
        stroke_radius: (0.1, 1.0),
        ..ParamRanges::default()
    };
    assert!(bad.validate().is_err());
}

fn test_quad() -> Quad {
    Quad::from_array([120.0, 20.0, 380.0, 14.0, 390.0, 50.0, 125.0, 44.0]).unwrap()
}

#[test]
fn zero_noise_leaves_quad_unchanged() {
    let q = test_quad();
    assert_eq!(perturb_quad(&q, PerturbationParams::new(0.0, 0.0), 1).unwrap(), q);
    assert!(perturb_quad(&q, PerturbationParams::new(-0.1, 0.0), 1).is_err());
}

#[test]
fn perturbation_std_matches_model() {
    let q = test_quad();
    let (_, _, w, h) = q.bounding_box();
    let pp = PerturbationParams::new(0.03, 0.04);
    let n = 100_000;
    let (mut sx, mut sx2, mut sy2) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = perturb_quad(&q, pp, i).unwrap();
        let (dx, dy) = (p.corners()[0].x - q.corners()[0].x, p.corners()[0].y - q.corners()[0].y);
        sx += dx;
        sx2 += dx * dx;
        sy2 += dy * dy;
    }
    let nf = n as f64;
    let std_x = (sx2 / nf - (sx / nf).powi(2)).sqrt();
    let expected = (pp.sigma_p.powi(2) + pp.sigma_t.powi(2)).sqrt();
    assert!((std_x / (expected * w) - 1.0).abs() <= 0.02, "{std_x}");
    assert!(((sy2 / nf).sqrt() / (expected * h) - 1.0).abs() <= 0.02);
}

#[test]
fn translation_is_shared_by_all_corners() {
    let q = test_quad();
    for seed in 0..20 {
        let p = perturb_quad(&q, PerturbationParams::new(0.0, 0.1), seed).unwrap();
        let d: Vec<Point> = (0..4)
            .map(|i| Point::new(p.corners()[i].x - q.corners()[i].x, p.corners()[i].y - q.corners()[i].y))
            .collect();
        for i in 1..4 {
            assert!((d[i].x - d[0].x).abs() < 1e-9 && (d[i].y - d[0].y).abs() < 1e-9);
        }
    }
}

#[test]
fn centroid_moves_by_the_mean_corner_noise() {
    let q = test_quad();
    let (_, _, w, _) = q.bounding_box();
    let sigma = 0.05;
    let n = 20_000;
    let c0 = q.centroid();
    let var: f64 = (0..n)
        .map(|i| (perturb_quad(&q, PerturbationParams::new(sigma, 0.0), i).unwrap().centroid().x - c0.x).powi(2))
        .sum::<f64>()
        / n as f64;
    // mean of 4 i.i.d. offsets with std σw has std σw/2
    assert!((var.sqrt() / (sigma * w / 2.0) - 1.0).abs() < 0.03, "{}", var.sqrt());
}

#[test]
fn heavy_noise_redraws_degenerate_quads() {
    let q = test_quad();
    let mut ok = 0;
    for seed in 0..200 {
        match perturb_quad(&q, PerturbationParams::new(0.4, 0.0), seed) {
            Ok(p) => {
                Quad::from_array(p.to_array()).unwrap();
                ok += 1;
            }
            Err(SynthesisError::PersistentDegeneracy(10)) => {}
            Err(e) => panic!("{e}"),
        }
    }
    assert!(ok > 100);
}

#[test]
fn dataset_round_robin_and_regeneration() {
    let dir = tempfile::tempdir().unwrap();
    let lexicon: Vec<String> = ["one", "two", "three", "four", "five"].iter().map(|s| s.to_string()).collect();
    let manifest = gen_dataset(&lexicon, 10, &ParamRanges::default(), 77, dir.path()).unwrap();
    for word in &lexicon {
        assert_eq!(manifest.entries.iter().filter(|e| &e.transcript == word).count(), 2);
    }
    let reread = Manifest::read(dir.path().join("manifest.json")).unwrap();
    assert_eq!(reread, manifest);
    assert_eq!(manifest.codec, "efhinortuvw");
    for entry in &manifest.entries {
        let (scene, template, quad) = load_entry(dir.path(), entry).unwrap();
        let again = regenerate(&manifest, entry).unwrap();
        assert_eq!(scene, again.scene.quantized());
        assert_eq!(template, again.template.image.quantized());
        assert_eq!(quad, again.quad);
        assert_eq!(read_pgm(dir.path().join(&entry.file)).unwrap(), scene);
    }
}
