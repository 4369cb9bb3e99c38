use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::layers::{
    bilstm, conv, init_bilstm, init_conv, init_linear, init_residual, linear, residual,
};
use super::ModelError;
use crate::ctc::{ctc_loss_node, LabelSeq};
use crate::diffcore::{Bound, Params, Real, Tape, Tensor, Var};
use crate::geometry::{corners_to_homography, projective_grid, Mesh, Quad, DOMAIN_CORNERS, DOMAIN_HEIGHT, DOMAIN_WIDTH};
use crate::imaging::GrayImage;

/// Lattice the rectifier's regressor looks through: the domain plus a
/// quarter-width margin left and right and a quarter-height margin above and
/// below, at half resolution.
pub const STN_CONTEXT: Mesh = Mesh {
    height: 24,
    width: 192,
    x0: -64.0,
    y0: -8.0,
    sx: 2.0,
    sy: 2.0,
};

/// Spatial size of the regressor's last feature map on [`STN_CONTEXT`].
const STN_FEATURE_CELLS: usize = 3 * 24;

/// Floor on the scene standard deviation used for input normalization.
const MIN_INPUT_STD: f64 = 0.05;

/// A scene prepared for the network: zero-mean, unit-variance pixels, so
/// out-of-scene samples (which read zero) look like average background.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub scene: Tensor<f64>,
    pub quad: Quad,
}

impl ModelInput {
    pub fn new(scene: &GrayImage, quad: Quad) -> Self {
        let data = scene.data();
        let n = data.len().max(1) as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let scale = 1.0 / var.sqrt().max(MIN_INPUT_STD);
        let normalized = data.iter().map(|v| (v - mean) * scale).collect();
        ModelInput {
            scene: Tensor::new(&[1, scene.height(), scene.width()], normalized).expect("scene extents"),
            quad,
        }
    }
}

/// Tape handles of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Outputs {
    /// Raw `32 × classes` scores; log-softmax is applied by the loss and
    /// by [`LogitsMatrix::from_scores`](crate::ctc::LogitsMatrix::from_scores).
    pub scores: Var,
    /// Predicted template `1×32×256`, when reconstruction is active.
    pub template: Option<Var>,
    pub rectified: Var,
    /// Total domain-to-scene homography `3×3`.
    pub homography: Var,
}

/// Registers every tensor `config` needs, drawn from a stream fixed by `seed`.
pub fn init_params(config: &ModelConfig, classes: usize, seed: u64) -> Params<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Params::new();
    let r = &mut rng;
    if config.use_stn {
        let [a, b, c] = config.stn_channels;
        init_conv(&mut p, r, "stn.c1", 1, a, 3);
        init_conv(&mut p, r, "stn.c2", a, b, 3);
        init_conv(&mut p, r, "stn.c3", b, c, 3);
        init_linear(&mut p, r, "stn.fc1", c * STN_FEATURE_CELLS, config.stn_hidden, false);
        // Zero final layer: every iteration starts as the identity update.
        init_linear(&mut p, r, "stn.fc2", config.stn_hidden, 8, true);
    }
    let [e1, e2, e3] = config.encoder_channels;
    init_residual(&mut p, r, "enc.s1", 1, e1);
    init_residual(&mut p, r, "enc.s2", e1, e2);
    init_residual(&mut p, r, "enc.s3", e2, e3);
    if config.use_klstm {
        init_bilstm(&mut p, r, "klstm", 2 * 4 * e3, config.klstm_hidden);
    }
    let f = config.feature_channels();
    init_residual(&mut p, r, "head.res", f, f);
    init_linear(&mut p, r, "head.collapse", 4 * f, config.head_width, false);
    init_bilstm(&mut p, r, "head.lstm", config.head_width, config.head_hidden);
    init_linear(&mut p, r, "head.out", 2 * config.head_hidden, classes, false);
    if config.recon_active() {
        let mut cin = f;
        for (i, &c) in config.decoder_channels.iter().enumerate() {
            init_residual(&mut p, r, &format!("dec.b{}", i + 1), cin, c);
            cin = c;
        }
        init_conv(&mut p, r, "dec.out", cin, 1, 1);
    }
    p
}

fn homography_tensor<T: Real>(quad: &Quad) -> Result<Tensor<T>, ModelError> {
    let h = quad.to_domain()?.to_row_array();
    Ok(Tensor::new(&[3, 3], h.iter().map(|&v| T::of(v)).collect())?)
}

fn stn_regressor<T: Real>(tape: &mut Tape<T>, p: &Bound, crop: Var) -> Result<Var, ModelError> {
    let mut x = crop;
    for name in ["stn.c1", "stn.c2", "stn.c3"] {
        x = conv(tape, p, name, x, 2)?;
        x = tape.relu(x)?;
    }
    let len = tape.value(x).len();
    let flat = tape.reshape(x, &[1, len])?;
    let hidden = linear(tape, p, "stn.fc1", flat)?;
    let hidden = tape.relu(hidden)?;
    Ok(linear(tape, p, "stn.fc2", hidden)?)
}

/// Domain crop of `scene` through the domain-to-scene homography `h`.
fn crop<T: Real>(tape: &mut Tape<T>, scene: Var, h: Var) -> Result<Var, ModelError> {
    let grid = projective_grid(tape, h, Mesh::domain())?;
    Ok(tape.bilinear_sample(scene, grid)?)
}

/// Iterative inverse-compositional rectification of `scene` (`1×H×W`).
///
/// Starts from the homography of `quad`; each of the `stn_iters` steps looks
/// at a context crop through the current homography, predicts offsets of
/// the four domain corners and composes the induced homography on the
/// domain side. Returns the final `1×32×256` crop and the total homography.
pub fn icstn_rectify<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    config: &ModelConfig,
    scene: Var,
    quad: &Quad,
) -> Result<(Var, Var), ModelError> {
    let mut h = tape.constant(homography_tensor(quad)?);
    let extents = [DOMAIN_WIDTH as f64, DOMAIN_HEIGHT as f64];
    let scale = Tensor::from_fn(&[1, 8], |i| T::of(config.stn_max_shift * (extents[i % 2] - 1.0)));
    let base = Tensor::from_fn(&[8], |i| {
        let c = DOMAIN_CORNERS[i / 2];
        T::of(if i % 2 == 0 { c.x } else { c.y })
    });
    for _ in 0..config.stn_iters {
        let grid = projective_grid(tape, h, STN_CONTEXT)?;
        let context = tape.bilinear_sample(scene, grid)?;
        let raw = stn_regressor(tape, p, context)?;
        let squashed = tape.tanh(raw)?;
        let limit = tape.constant(scale.clone());
        let offsets = tape.mul(squashed, limit)?;
        let offsets = tape.reshape(offsets, &[8])?;
        let rest = tape.constant(base.clone());
        let moved = tape.add(rest, offsets)?;
        match corners_to_homography(tape, DOMAIN_CORNERS, moved) {
            Ok(delta) => h = tape.matmul(h, delta)?,
            Err(e) => log::warn!("rectifier update skipped: {e}"),
        }
    }
    Ok((crop(tape, scene, h)?, h))
}

/// Three residual stages with stride 2: `1×32×256 → C×4×32`.
pub fn encoder_forward<T: Real>(tape: &mut Tape<T>, p: &Bound, image: Var) -> Result<Var, ModelError> {
    match *tape.shape(image) {
        [1, DOMAIN_HEIGHT, DOMAIN_WIDTH] => {}
        ref s => {
            return Err(ModelError::InputExtents {
                height: s.get(1).copied().unwrap_or(0),
                width: s.get(2).copied().unwrap_or(0),
                expected_height: DOMAIN_HEIGHT,
                expected_width: DOMAIN_WIDTH,
            })
        }
    }
    let x = residual(tape, p, "enc.s1", image, 2)?;
    let x = residual(tape, p, "enc.s2", x, 2)?;
    Ok(residual(tape, p, "enc.s3", x, 2)?)
}

/// Rows of the column sequence of a `C×4×W` map: `W × 4C`.
fn columns<T: Real>(tape: &mut Tape<T>, features: Var) -> Result<Var, ModelError> {
    let (c, h, w) = match *tape.shape(features) {
        [c, h, w] => (c, h, w),
        _ => unreachable!("feature maps are rank 3"),
    };
    let cols = tape.permute(features, &[2, 0, 1])?;
    Ok(tape.reshape(cols, &[w, c * h])?)
}

/// Bidirectional LSTM over width-2, stride-1 column windows: `(W−1) × 2H`.
pub fn klstm_sequence<T: Real>(tape: &mut Tape<T>, p: &Bound, features: Var) -> Result<Var, ModelError> {
    let cols = columns(tape, features)?;
    let w = tape.shape(cols)[0];
    let left = tape.slice(cols, 0, 0, w - 1)?;
    let right = tape.slice(cols, 0, 1, w - 1)?;
    let windows = tape.concat(&[left, right], 1)?;
    Ok(bilstm(tape, p, "klstm", windows)?)
}

/// Kerning LSTM: `C×4×W → (2H/4)×4×W`. The first window's output is
/// repeated on the left to restore `W` columns.
pub fn klstm_forward<T: Real>(tape: &mut Tape<T>, p: &Bound, features: Var) -> Result<Var, ModelError> {
    let (rows, w) = (tape.shape(features)[1], tape.shape(features)[2]);
    let seq = klstm_sequence(tape, p, features)?;
    let width = tape.shape(seq)[1];
    let first = tape.slice(seq, 0, 0, 1)?;
    let padded = tape.concat(&[first, seq], 0)?;
    let map = tape.reshape(padded, &[w, width / rows, rows])?;
    Ok(tape.permute(map, &[1, 2, 0])?)
}

/// Three upsample + residual blocks and a 1×1 sigmoid head: `C×4×32 → 1×32×256`.
pub fn decoder_forward<T: Real>(tape: &mut Tape<T>, p: &Bound, features: Var) -> Result<Var, ModelError> {
    let mut x = features;
    for i in 1..=3 {
        let up = tape.upsample2x(x)?;
        x = residual(tape, p, &format!("dec.b{i}"), up, 1)?;
    }
    let out = conv(tape, p, "dec.out", x, 1)?;
    Ok(tape.sigmoid(out)?)
}

/// Residual block, full-height collapse of the 4 rows, bidirectional LSTM
/// and a per-frame projection: `C×4×32 → 32 × classes` raw scores.
pub fn recognition_forward<T: Real>(tape: &mut Tape<T>, p: &Bound, features: Var) -> Result<Var, ModelError> {
    let x = residual(tape, p, "head.res", features, 1)?;
    let cols = columns(tape, x)?;
    let collapsed = linear(tape, p, "head.collapse", cols)?;
    let collapsed = tape.relu(collapsed)?;
    let seq = bilstm(tape, p, "head.lstm", collapsed)?;
    Ok(linear(tape, p, "head.out", seq)?)
}

/// Full forward pass for one input, honoring every ablation switch.
pub fn forward<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    config: &ModelConfig,
    input: &ModelInput,
) -> Result<Outputs, ModelError> {
    let scene = tape.constant(input.scene.cast());
    let (rectified, homography) = if config.use_stn {
        icstn_rectify(tape, p, config, scene, &input.quad)?
    } else {
        let h = tape.constant(homography_tensor(&input.quad)?);
        (crop(tape, scene, h)?, h)
    };
    let mut features = encoder_forward(tape, p, rectified)?;
    if config.use_klstm {
        features = klstm_forward(tape, p, features)?;
    }
    let scores = recognition_forward(tape, p, features)?;
    let template = if config.recon_active() {
        Some(decoder_forward(tape, p, features)?)
    } else {
        None
    };
    Ok(Outputs {
        scores,
        template,
        rectified,
        homography,
    })
}

/// `‖s − t‖² / |s|`.
pub fn mse_loss<T: Real>(tape: &mut Tape<T>, s: Var, t: Var) -> Result<Var, ModelError> {
    let n = tape.value(s).len();
    let diff = tape.sub(s, t)?;
    let ss = tape.sum_squares(diff)?;
    Ok(tape.scale(ss, T::of(1.0 / n as f64))?)
}

/// Loss node and its two terms as plain numbers.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub ctc: f64,
    /// Zero when reconstruction is off.
    pub mse: f64,
}

/// `L_ctc + λ·L_mse`. The reconstruction term is skipped entirely when it
/// is inactive, so `template` may be `None` then.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    config: &ModelConfig,
    input: &ModelInput,
    label: &LabelSeq,
    template: Option<&Tensor<f64>>,
) -> Result<LossParts, ModelError> {
    let out = forward(tape, p, config, input)?;
    let ctc = ctc_loss_node(tape, out.scores, label)?;
    let ctc_value = tape.value(ctc).data()[0].to_f64();
    let (Some(s), Some(target)) = (out.template, template) else {
        if config.recon_active() {
            return Err(ModelError::Config("reconstruction is active but no template was given".into()));
        }
        return Ok(LossParts {
            total: ctc,
            ctc: ctc_value,
            mse: 0.0,
        });
    };
    let t = tape.constant(target.cast());
    let mse = mse_loss(tape, s, t)?;
    let mse_value = tape.value(mse).data()[0].to_f64();
    let weighted = tape.scale(mse, T::of(config.lambda))?;
    let total = tape.add(ctc, weighted)?;
    Ok(LossParts {
        total,
        ctc: ctc_value,
        mse: mse_value,
    })
}
