//! Synthetic data, file codecs, dataset layout and class statistics.

mod dataset;
mod netpbm;
mod stats;
mod synth;

pub use dataset::{
    default_class_names, sample_name, subtract_mean, write_dataset, Dataset, DatasetManifest,
    MANIFEST_FILE,
};
pub use netpbm::{read_pgm_labels, read_ppm, write_pgm_labels, write_ppm};
pub use stats::{class_frequencies, frequencies_of, median_freq_weights};
pub use synth::{class_color, generate_indexed, generate_sample, GenConfig, NOISE_SIGMA};
