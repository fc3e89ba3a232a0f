//! Plain-text `key=value` run configuration shared by the CLI and the
//! checkpoint header.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ENCODER_STAGES};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Keys in the order [`RunConfig::to_text`] writes them.
pub const KEYS: [&str; 17] = [
    "num_classes",
    "input_size",
    "encoder_channels",
    "convs_per_stage",
    "bn_eps",
    "bn_momentum",
    "batch_size",
    "base_lr",
    "momentum",
    "weight_decay",
    "lr_step",
    "lr_gamma",
    "max_iters",
    "seed",
    "class_balance",
    "log_every",
    "checkpoint_every",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

impl RunConfig {
    /// Desk-scale run: default optimizer settings with a short schedule and a
    /// higher base learning rate.
    pub fn desk() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::desk(),
        }
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "num_classes" => m.num_classes = parse_num(key, v)?,
            "input_size" => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                match parts.as_slice() {
                    [s] => {
                        m.input_h = parse_num(key, s)?;
                        m.input_w = m.input_h;
                    }
                    [h, w] => {
                        m.input_h = parse_num(key, h)?;
                        m.input_w = parse_num(key, w)?;
                    }
                    _ => return Err(Error::Config(format!("input_size: expected H or H,W, got {v:?}"))),
                }
            }
            "encoder_channels" => {
                let parts = v
                    .split(',')
                    .map(|p| parse_num::<usize>(key, p.trim()))
                    .collect::<Result<Vec<_>>>()?;
                m.encoder_channels = parts.try_into().map_err(|_| {
                    Error::Config(format!("encoder_channels: expected {ENCODER_STAGES} counts"))
                })?;
            }
            "convs_per_stage" => m.convs_per_stage = parse_num(key, v)?,
            "bn_eps" => m.bn_eps = parse_num(key, v)?,
            "bn_momentum" => m.bn_momentum = parse_num(key, v)?,
            "batch_size" => t.batch_size = parse_num(key, v)?,
            "base_lr" => t.base_lr = parse_num(key, v)?,
            "momentum" => t.momentum = parse_num(key, v)?,
            "weight_decay" => t.weight_decay = parse_num(key, v)?,
            "lr_step" => t.lr_step = parse_num(key, v)?,
            "lr_gamma" => t.lr_gamma = parse_num(key, v)?,
            "max_iters" => t.max_iters = parse_num(key, v)?,
            "seed" => t.seed = parse_num(key, v)?,
            "class_balance" => {
                t.class_balance = match v {
                    "on" => true,
                    "off" => false,
                    _ => return Err(Error::Config(format!("class_balance: expected on|off, got {v:?}"))),
                }
            }
            "log_every" => t.log_every = parse_num(key, v)?,
            "checkpoint_every" => t.checkpoint_every = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines over `self`; `#` starts a comment. Keys not
    /// mentioned keep their current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", lineno + 1)));
            }
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults and validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let mut s = String::new();
        let ch: Vec<String> = m.encoder_channels.iter().map(ToString::to_string).collect();
        let size = if m.input_h == m.input_w {
            m.input_h.to_string()
        } else {
            format!("{},{}", m.input_h, m.input_w)
        };
        let values = [
            m.num_classes.to_string(),
            size,
            ch.join(","),
            m.convs_per_stage.to_string(),
            m.bn_eps.to_string(),
            m.bn_momentum.to_string(),
            t.batch_size.to_string(),
            t.base_lr.to_string(),
            t.momentum.to_string(),
            t.weight_decay.to_string(),
            t.lr_step.to_string(),
            t.lr_gamma.to_string(),
            t.max_iters.to_string(),
            t.seed.to_string(),
            if t.class_balance { "on" } else { "off" }.to_string(),
            t.log_every.to_string(),
            t.checkpoint_every.to_string(),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let mut c = RunConfig::desk();
        c.model.input_w = 96;
        c.model.encoder_channels = [8, 8, 16, 16, 32];
        c.train.base_lr = 0.0123;
        c.train.class_balance = true;
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn defaults_and_comments() {
        let c = RunConfig::parse("# desk run\nnum_classes = 3 # three\n\ninput_size=32\n").unwrap();
        assert_eq!(c.model.num_classes, 3);
        assert_eq!((c.model.input_h, c.model.input_w), (32, 32));
        assert_eq!(c.train, TrainConfig::default());
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        assert!(RunConfig::parse("learning_rate=0.1\n").is_err());
        assert!(RunConfig::parse("seed=1\nseed=2\n").is_err());
        assert!(RunConfig::parse("input_size=50\n").is_err());
        assert!(RunConfig::parse("class_balance=yes\n").is_err());
        assert!(RunConfig::parse("encoder_channels=1,2,3\n").is_err());
        assert!(RunConfig::parse("no equals sign\n").is_err());
    }
}
