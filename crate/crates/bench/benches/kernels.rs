use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textcomp_core::ctc::{beam_decode, ctc_loss, greedy_decode, Codec, LogitsMatrix};
use textcomp_core::geometry::warp_image;
use textcomp_core::imaging::{distance_transform, skeletonize};
use textcomp_core::synthesis::{generate, ParamRanges};
use textcomp_core::templates::render_template;

fn random_logits(frames: usize, classes: usize, seed: u64) -> LogitsMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores: Vec<f64> = (0..frames * classes).map(|_| rng.random_range(-3.0..3.0)).collect();
    LogitsMatrix::from_scores(frames, classes, &scores).unwrap()
}

fn ctc(c: &mut Criterion) {
    let codec = Codec::new("adehmnorst").unwrap();
    let logp = random_logits(64, codec.classes(), 1);
    let label = codec.encode("mothers").unwrap();
    c.bench_function("ctc_loss T=64 L=7", |b| b.iter(|| ctc_loss(black_box(&logp), black_box(&label)).unwrap()));
    c.bench_function("greedy_decode T=64", |b| b.iter(|| greedy_decode(black_box(&logp))));
    c.bench_function("beam_decode T=64 width=8", |b| b.iter(|| beam_decode(black_box(&logp), 8)));
}

fn imaging(c: &mut Criterion) {
    let t = render_template("hamster").unwrap();
    let mask = t.skeleton.mask.clone();
    c.bench_function("distance_transform 32x256", |b| b.iter(|| distance_transform(black_box(&mask)).unwrap()));
    c.bench_function("skeletonize 32x256", |b| b.iter(|| skeletonize(black_box(&mask))));
    c.bench_function("render_template", |b| b.iter(|| render_template(black_box("hamster")).unwrap()));
}

fn synthesis(c: &mut Criterion) {
    let ranges = ParamRanges::default();
    let sample = generate("monster", &ranges, 3).unwrap();
    let h = sample.quad.to_domain().unwrap();
    c.bench_function("generate 64x512", |b| b.iter(|| generate(black_box("monster"), &ranges, 3).unwrap()));
    c.bench_function("warp_image to 32x256", |b| {
        b.iter(|| warp_image(black_box(&sample.scene), &h, 32, 256, 0.5))
    });
}

criterion_group!(benches, ctc, imaging, synthesis);
criterion_main!(benches);
