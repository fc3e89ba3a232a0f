use crate::error::{Error, Result};

/// Number of encoder stages; the decoder emits one more label map than this.
pub const ENCODER_STAGES: usize = 5;
/// Number of label maps (and losses) produced by the decoder.
pub const NUM_STAGES: usize = ENCODER_STAGES + 1;
/// Total downsampling factor of the encoder.
pub const INPUT_MULTIPLE: usize = 1 << ENCODER_STAGES;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub num_classes: usize,
    pub input_h: usize,
    pub input_w: usize,
    pub encoder_channels: [usize; ENCODER_STAGES],
    pub convs_per_stage: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_classes: 5,
            input_h: 64,
            input_w: 64,
            encoder_channels: [16, 32, 64, 64, 64],
            convs_per_stage: 2,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > 255 {
            return Err(Error::Config(format!(
                "num_classes must be in 2..=255, got {}",
                self.num_classes
            )));
        }
        for (name, v) in [("height", self.input_h), ("width", self.input_w)] {
            if v == 0 || v % INPUT_MULTIPLE != 0 {
                return Err(Error::Config(format!(
                    "input {name} {v} must be a positive multiple of {INPUT_MULTIPLE}"
                )));
            }
        }
        if self.encoder_channels.contains(&0) {
            return Err(Error::Config("encoder channel counts must be >= 1".into()));
        }
        if self.convs_per_stage == 0 {
            return Err(Error::Config("convs_per_stage must be >= 1".into()));
        }
        if !(self.bn_eps > 0.0) {
            return Err(Error::Config("bn_eps must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("bn_momentum must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Spatial dims `(h, w)` of label map `s_k`, `k` in `1..=6`.
    pub fn stage_dims(&self, k: usize) -> (usize, usize) {
        let f = 1 << (NUM_STAGES - k);
        (self.input_h / f, self.input_w / f)
    }

    /// Spatial dims of encoder skip feature `f_k`, `k` in `1..=5`.
    pub fn skip_dims(&self, k: usize) -> (usize, usize) {
        let f = 1 << (k - 1);
        (self.input_h / f, self.input_w / f)
    }
}
