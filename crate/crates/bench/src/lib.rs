//! Fixtures shared by the criterion benches.

use lrnet_core::config::RunConfig;
use lrnet_core::data::{generate_indexed, Dataset, GenConfig};
use lrnet_core::{Dims, Tensor4};

/// Deterministic pseudo-random tensor without pulling an RNG into benches.
pub fn filled(dims: Dims, salt: u32) -> Tensor4<f32> {
    Tensor4::from_fn(dims, |n, c, y, x| {
        let h = (n as u32 * 7919 + c as u32 * 104_729 + y as u32 * 31 + x as u32)
            .wrapping_mul(2_654_435_761)
            .wrapping_add(salt);
        (h >> 8) as f32 / (1u32 << 24) as f32 - 0.5
    })
}

/// Desk-scale synthetic dataset of `count` samples.
pub fn desk_dataset(count: u64) -> Dataset {
    let gen = GenConfig::default();
    let (images, labels) = (0..count)
        .map(|i| generate_indexed(&gen, i).expect("valid generator config"))
        .unzip();
    Dataset { num_classes: gen.num_classes, images, labels }
}

pub fn desk_config() -> RunConfig {
    RunConfig::desk()
}
