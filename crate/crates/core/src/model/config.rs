use serde::{Deserialize, Serialize};

use super::ModelError;

/// Layer sizes and ablation switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub use_stn: bool,
    pub use_klstm: bool,
    /// The decoder exists and trains only when this is set and `lambda > 0`.
    pub use_recon: bool,
    pub lambda: f64,
    pub stn_iters: usize,
    pub stn_channels: [usize; 3],
    pub stn_hidden: usize,
    /// Largest corner correction per iteration, as a fraction of the domain
    /// extents.
    pub stn_max_shift: f64,
    pub encoder_channels: [usize; 3],
    pub klstm_hidden: usize,
    pub decoder_channels: [usize; 3],
    pub head_width: usize,
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            use_stn: true,
            use_klstm: true,
            use_recon: true,
            lambda: 1.0,
            stn_iters: 2,
            stn_channels: [8, 16, 32],
            stn_hidden: 64,
            stn_max_shift: 0.25,
            encoder_channels: [16, 32, 64],
            klstm_hidden: 64,
            decoder_channels: [16, 8, 4],
            head_width: 128,
            head_hidden: 64,
        }
    }
}

impl ModelConfig {
    /// Small widths for 64-bit gradient checks; full input extents.
    pub fn tiny() -> Self {
        ModelConfig {
            stn_channels: [2, 2, 2],
            stn_hidden: 4,
            encoder_channels: [4, 4, 4],
            klstm_hidden: 8,
            decoder_channels: [2, 2, 2],
            head_width: 8,
            head_hidden: 8,
            ..ModelConfig::default()
        }
    }

    pub fn variant(self, variant: Variant) -> Self {
        let mut c = self;
        match variant {
            Variant::Full => {}
            Variant::Baseline => {
                c.use_stn = false;
                c.use_klstm = false;
                c.use_recon = false;
                c.lambda = 0.0;
            }
            Variant::NoRecon => {
                c.use_recon = false;
                c.lambda = 0.0;
            }
            Variant::NoStn => c.use_stn = false,
            Variant::NoKlstm => c.use_klstm = false,
        }
        c
    }

    pub fn recon_active(&self) -> bool {
        self.use_recon && self.lambda > 0.0
    }

    /// Channels of the feature map the decoder and head consume.
    pub fn feature_channels(&self) -> usize {
        if self.use_klstm {
            2 * self.klstm_hidden / 4
        } else {
            self.encoder_channels[2]
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::Config(msg.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if self.use_stn && self.stn_iters == 0 {
            return bad("stn_iters must be at least 1 when the rectifier is on");
        }
        if !(self.stn_max_shift > 0.0 && self.stn_max_shift.is_finite()) {
            return bad("stn_max_shift must be positive");
        }
        let sizes = [
            &self.stn_channels[..],
            &self.encoder_channels[..],
            &self.decoder_channels[..],
            &[self.stn_hidden, self.klstm_hidden, self.head_width, self.head_hidden][..],
        ];
        if sizes.iter().any(|s| s.contains(&0)) {
            return bad("layer widths must be positive");
        }
        if self.use_klstm && !(2 * self.klstm_hidden).is_multiple_of(4) {
            return bad("2·klstm_hidden must be divisible by the 4 feature rows");
        }
        Ok(())
    }
}

/// Ablation rows: the full model and the models with one part removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "full-recon")]
    NoRecon,
    #[serde(rename = "full-stn")]
    NoStn,
    #[serde(rename = "full-klstm")]
    NoKlstm,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::Full,
        Variant::NoRecon,
        Variant::NoStn,
        Variant::NoKlstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Full => "full",
            Variant::NoRecon => "full-recon",
            Variant::NoStn => "full-stn",
            Variant::NoKlstm => "full-klstm",
        }
    }

    pub fn from_name(name: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == name)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
