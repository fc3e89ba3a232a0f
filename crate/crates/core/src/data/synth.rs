//! Procedural scenes: coloured rectangles, circles and triangles over a
//! textured background, with exact per-pixel labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::model::INPUT_MULTIPLE;
use crate::tensor::{Dims, Tensor4};

/// Per-pixel noise standard deviation, as a fraction of the `[0, 1]` range.
pub const NOISE_SIGMA: f32 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenConfig {
    pub size: usize,
    /// Background plus shape classes.
    pub num_classes: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            size: 64,
            num_classes: 5,
            min_shapes: 1,
            max_shapes: 4,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || !self.size.is_multiple_of(INPUT_MULTIPLE) {
            return Err(Error::Config(format!(
                "image size {} must be a positive multiple of {INPUT_MULTIPLE}",
                self.size
            )));
        }
        if self.num_classes < 2 || self.num_classes > 255 {
            return Err(Error::Config(format!(
                "num_classes must be in 2..=255, got {}",
                self.num_classes
            )));
        }
        if self.min_shapes > self.max_shapes {
            return Err(Error::Config("min_shapes exceeds max_shapes".into()));
        }
        Ok(())
    }
}

const BASE_COLORS: [[f32; 3]; 8] = [
    [0.90, 0.15, 0.15],
    [0.15, 0.80, 0.20],
    [0.20, 0.30, 0.95],
    [0.95, 0.85, 0.10],
    [0.85, 0.20, 0.85],
    [0.10, 0.85, 0.90],
    [1.00, 0.55, 0.00],
    [0.55, 0.25, 0.05],
];

/// Base colour of a shape class (`class >= 1`).
pub fn class_color(class: usize) -> [f32; 3] {
    assert!(class >= 1, "class 0 is the textured background");
    if let Some(c) = BASE_COLORS.get(class - 1) {
        return *c;
    }
    let mut h = (class as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut ch = || {
        h ^= h >> 29;
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        0.1 + 0.8 * ((h >> 40) as f32 / (1u64 << 24) as f32)
    };
    [ch(), ch(), ch()]
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect { y0: f32, x0: f32, y1: f32, x1: f32 },
    Circle { cy: f32, cx: f32, r: f32 },
    Triangle { p: [(f32, f32); 3] },
}

impl Shape {
    fn contains(&self, y: f32, x: f32) -> bool {
        match *self {
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Shape::Circle { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
            Shape::Triangle { p } => {
                let edge = |a: (f32, f32), b: (f32, f32)| {
                    (b.1 - a.1) * (y - a.0) - (b.0 - a.0) * (x - a.1)
                };
                let d = [edge(p[0], p[1]), edge(p[1], p[2]), edge(p[2], p[0])];
                d.iter().all(|&v| v >= 0.0) || d.iter().all(|&v| v <= 0.0)
            }
        }
    }

    fn random<R: Rng>(rng: &mut R, size: f32) -> Self {
        let extent = rng.random_range(size / 8.0..size / 2.5);
        let cy = rng.random_range(0.0..size);
        let cx = rng.random_range(0.0..size);
        match rng.random_range(0..3) {
            0 => {
                let hh = extent * rng.random_range(0.5..1.0) / 2.0;
                let hw = extent * rng.random_range(0.5..1.0) / 2.0;
                Shape::Rect {
                    y0: cy - hh,
                    x0: cx - hw,
                    y1: cy + hh,
                    x1: cx + hw,
                }
            }
            1 => Shape::Circle {
                cy,
                cx,
                r: extent / 2.0,
            },
            _ => {
                let mut vertex = || {
                    (
                        cy + rng.random_range(-extent..extent) * 0.6,
                        cx + rng.random_range(-extent..extent) * 0.6,
                    )
                };
                Shape::Triangle {
                    p: [vertex(), vertex(), vertex()],
                }
            }
        }
    }
}

/// Draws one `(1, 3, size, size)` image and its label map.
pub fn generate_sample<R: Rng>(rng: &mut R, cfg: &GenConfig) -> Result<(Tensor4<f32>, LabelMap)> {
    cfg.validate()?;
    let s = cfg.size;
    let count = rng.random_range(cfg.min_shapes..=cfg.max_shapes);
    let shapes: Vec<(Shape, usize)> = (0..count)
        .map(|_| {
            let class = rng.random_range(1..cfg.num_classes);
            (Shape::random(rng, s as f32), class)
        })
        .collect();

    // background texture: low-contrast gray waves with a random phase
    let phase: [f32; 2] = [rng.random_range(0.0..std::f32::consts::TAU), rng.random_range(0.0..std::f32::consts::TAU)];
    let freq: f32 = rng.random_range(0.15..0.4);

    let noise = Normal::new(0.0f32, NOISE_SIGMA).expect("positive sigma");
    let mut labels = LabelMap::filled(s, s, 0);
    let mut img = Tensor4::zeros(Dims::new(1, 3, s, s));
    for y in 0..s {
        for x in 0..s {
            let (py, px) = (y as f32 + 0.5, x as f32 + 0.5);
            let top = shapes.iter().rev().find(|(sh, _)| sh.contains(py, px));
            let base = match top {
                Some(&(_, class)) => {
                    labels.set(y, x, class as u8);
                    class_color(class)
                }
                None => {
                    let t = 0.45
                        + 0.08 * (freq * py + phase[0]).sin()
                        + 0.05 * (0.7 * freq * px + phase[1]).cos();
                    [t, t, t + 0.03]
                }
            };
            for (c, &b) in base.iter().enumerate() {
                let v = (b + noise.sample(rng)).clamp(0.0, 1.0);
                img.set(0, c, y, x, v);
            }
        }
    }
    Ok((img, labels))
}

/// Sample `index` of the dataset identified by `cfg.seed`; each sample has
/// its own stream so datasets can be generated in any order.
pub fn generate_indexed(cfg: &GenConfig, index: u64) -> Result<(Tensor4<f32>, LabelMap)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    generate_sample(&mut rng, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let cfg = GenConfig::default();
        assert_eq!(generate_indexed(&cfg, 3).unwrap(), generate_indexed(&cfg, 3).unwrap());
        assert_ne!(generate_indexed(&cfg, 3).unwrap(), generate_indexed(&cfg, 4).unwrap());
    }

    #[test]
    fn no_shapes_means_all_background() {
        let cfg = GenConfig {
            min_shapes: 0,
            max_shapes: 0,
            ..GenConfig::default()
        };
        let (_, labels) = generate_indexed(&cfg, 0).unwrap();
        assert!(labels.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn shape_pixels_near_base_color() {
        let cfg = GenConfig::default();
        let (mut total, mut near) = (0usize, 0usize);
        for i in 0..20 {
            let (img, labels) = generate_indexed(&cfg, i).unwrap();
            for y in 0..cfg.size {
                for x in 0..cfg.size {
                    let class = labels.get(y, x) as usize;
                    if class == 0 {
                        continue;
                    }
                    let base = class_color(class);
                    total += 1;
                    if (0..3).all(|c| (img.at(0, c, y, x) - base[c]).abs() <= 3.0 * NOISE_SIGMA) {
                        near += 1;
                    }
                }
            }
        }
        assert!(total > 1000, "too few shape pixels: {total}");
        assert!(near as f64 >= 0.99 * total as f64, "{near}/{total}");
    }

    #[test]
    fn labels_within_class_range() {
        let cfg = GenConfig {
            num_classes: 3,
            max_shapes: 6,
            ..GenConfig::default()
        };
        for i in 0..5 {
            let (_, labels) = generate_indexed(&cfg, i).unwrap();
            labels.validate(3).unwrap();
        }
    }

    #[test]
    fn size_must_be_multiple_of_32() {
        let cfg = GenConfig {
            size: 50,
            ..GenConfig::default()
        };
        assert!(generate_indexed(&cfg, 0).is_err());
    }
}
