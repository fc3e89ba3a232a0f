use super::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE};

/// Pixel share of each class among non-ignored pixels.
pub fn frequencies_of(labels: &[LabelMap], num_classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0u64; num_classes];
    for m in labels {
        m.validate(num_classes)?;
        for &v in m.data() {
            if v != IGNORE {
                counts[usize::from(v)] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::data("no labelled pixels to count"));
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Class frequencies over every label file of a dataset.
pub fn class_frequencies(manifest: &DatasetManifest) -> Result<Vec<f64>> {
    if manifest.is_empty() {
        return Err(Error::data("dataset is empty"));
    }
    let labels = (0..manifest.len())
        .map(|i| manifest.read_labels(i))
        .collect::<Result<Vec<_>>>()?;
    frequencies_of(&labels, manifest.num_classes)
}

/// Median-frequency balancing: `w[c] = median(freq) / freq[c]` where the
/// median runs over classes that occur; absent classes get weight 0.
pub fn median_freq_weights(freq: &[f64]) -> Result<Vec<f64>> {
    let mut present: Vec<f64> = freq.iter().copied().filter(|&f| f > 0.0).collect();
    if present.is_empty() {
        return Err(Error::data("all class frequencies are zero"));
    }
    present.sort_by(f64::total_cmp);
    let k = present.len();
    let median = if k % 2 == 1 {
        present[k / 2]
    } else {
        (present[k / 2 - 1] + present[k / 2]) / 2.0
    };
    Ok(freq
        .iter()
        .map(|&f| if f > 0.0 { median / f } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_and_half() {
        let m = LabelMap::from_vec(2, 2, vec![0, 0, 1, 1]).unwrap();
        assert_eq!(frequencies_of(&[m], 2).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn ignored_pixels_excluded() {
        let m = LabelMap::from_vec(2, 3, vec![0, IGNORE, 1, IGNORE, 1, 1]).unwrap();
        assert_eq!(frequencies_of(&[m], 2).unwrap(), vec![0.25, 0.75]);
        let all = LabelMap::filled(2, 2, IGNORE);
        assert!(frequencies_of(&[all], 2).is_err());
    }

    #[test]
    fn two_maps_counting() {
        let mut a = LabelMap::filled(4, 4, 0);
        for x in 0..4 {
            a.set(3, x, 1);
        }
        let b = LabelMap::filled(4, 4, 0);
        assert_eq!(frequencies_of(&[a, b], 2).unwrap(), vec![28.0 / 32.0, 4.0 / 32.0]);
    }

    #[test]
    fn median_weights() {
        let w = median_freq_weights(&[0.5, 0.3, 0.2]).unwrap();
        let want = [0.6, 1.0, 1.5];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{w:?}");
        }
        assert_eq!(median_freq_weights(&[0.25; 4]).unwrap(), vec![1.0; 4]);
        assert_eq!(median_freq_weights(&[1.0]).unwrap(), vec![1.0]);
        // even count: mean of the two middle values
        assert_eq!(median_freq_weights(&[0.1, 0.2, 0.3, 0.4]).unwrap()[0], 2.5);
        assert_eq!(median_freq_weights(&[0.0, 0.5, 0.5]).unwrap(), vec![0.0, 1.0, 1.0]);
        assert!(median_freq_weights(&[0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn frequencies_sum_to_one_and_permute(data in proptest::collection::vec(0u8..4, 1..64)) {
            let n = data.len();
            let m = LabelMap::from_vec(1, n, data.clone()).unwrap();
            let f = frequencies_of(&[m], 4).unwrap();
            prop_assert!((f.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            // relabel c -> 3 - c
            let perm = LabelMap::from_vec(1, n, data.iter().map(|&v| 3 - v).collect()).unwrap();
            let g = frequencies_of(&[perm], 4).unwrap();
            for c in 0..4 {
                prop_assert_eq!(f[c], g[3 - c]);
            }
        }
    }
}
