use super::config::{ModelConfig, NUM_STAGES};
use crate::error::{Error, Result};
use crate::labels::LabelMap;

/// Nearest-neighbour resize of a label map; destination pixel `d` reads
/// source `floor((d + 0.5) · src / dst)` on each axis. Ignore labels are
/// carried like any other value.
pub fn resize_nearest(labels: &LabelMap, h: usize, w: usize) -> LabelMap {
    let (sh, sw) = (labels.height(), labels.width());
    let ys: Vec<usize> = (0..h).map(|y| ((2 * y + 1) * sh) / (2 * h)).collect();
    let xs: Vec<usize> = (0..w).map(|x| ((2 * x + 1) * sw) / (2 * w)).collect();
    let mut out = LabelMap::filled(h, w, 0);
    for (y, &sy) in ys.iter().enumerate() {
        for (x, &sx) in xs.iter().enumerate() {
            out.set(y, x, labels.get(sy, sx));
        }
    }
    out
}

/// Ground truth resized to each stage's resolution; entry `k-1` matches
/// label map `s_k`, and the last entry is the input itself.
pub fn downsampled_targets(gt: &[LabelMap], config: &ModelConfig) -> Result<Vec<Vec<LabelMap>>> {
    for (i, g) in gt.iter().enumerate() {
        if g.height() != config.input_h || g.width() != config.input_w {
            return Err(Error::dim(format!(
                "label map {i} is {}x{}, expected {}x{}",
                g.height(),
                g.width(),
                config.input_h,
                config.input_w
            )));
        }
    }
    Ok((1..=NUM_STAGES)
        .map(|k| {
            let (h, w) = config.stage_dims(k);
            if k == NUM_STAGES {
                gt.to_vec()
            } else {
                gt.iter().map(|g| resize_nearest(g, h, w)).collect()
            }
        })
        .collect())
}
