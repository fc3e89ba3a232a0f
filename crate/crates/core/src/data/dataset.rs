//! On-disk dataset layout:
//!
//! ```text
//! root/manifest.txt       num_classes=C, then one basename per line
//! root/images/NNNNN.ppm
//! root/labels/NNNNN.pgm
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::netpbm::{read_pgm_labels, read_ppm, write_pgm_labels, write_ppm};
use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::tensor::{Dims, Tensor4};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub samples: Vec<String>,
}

pub fn default_class_names(num_classes: usize) -> Vec<String> {
    (0..num_classes)
        .map(|c| {
            if c == 0 {
                "background".to_string()
            } else {
                format!("class{c}")
            }
        })
        .collect()
}

pub fn sample_name(index: usize) -> String {
    format!("{index:05}")
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, num_classes: usize) -> Self {
        Self {
            root: root.into(),
            num_classes,
            class_names: default_class_names(num_classes),
            samples: Vec::new(),
        }
    }

    pub fn parse(root: impl Into<PathBuf>, text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let first = lines
            .next()
            .ok_or_else(|| Error::data("manifest is empty"))?;
        let num_classes = first
            .strip_prefix("num_classes=")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&c| (2..=255).contains(&c))
            .ok_or_else(|| Error::data(format!("bad manifest header {first:?}")))?;
        let mut m = Self::new(root, num_classes);
        m.samples = lines.map(str::to_string).collect();
        Ok(m)
    }

    pub fn read(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let text = read_file(&root.join(MANIFEST_FILE))?;
        let text = String::from_utf8(text)
            .map_err(|e| Error::data(format!("manifest is not UTF-8: {e}")))?;
        Self::parse(root, &text)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("num_classes={}\n", self.num_classes);
        for name in &self.samples {
            s.push_str(name);
            s.push('\n');
        }
        s
    }

    pub fn write(&self) -> Result<()> {
        write_file(&self.root.join(MANIFEST_FILE), self.to_text().as_bytes())
    }

    pub fn image_path(&self, i: usize) -> PathBuf {
        self.root.join("images").join(format!("{}.ppm", self.samples[i]))
    }

    pub fn label_path(&self, i: usize) -> PathBuf {
        self.root.join("labels").join(format!("{}.pgm", self.samples[i]))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn read_labels(&self, i: usize) -> Result<LabelMap> {
        let path = self.label_path(i);
        let m = read_pgm_labels(&read_file(&path)?).map_err(|e| with_path(e, &path))?;
        m.validate(self.num_classes).map_err(|e| with_path(e, &path))?;
        Ok(m)
    }

    pub fn read_image(&self, i: usize) -> Result<Tensor4<f32>> {
        let path = self.image_path(i);
        read_ppm(&read_file(&path)?).map_err(|e| with_path(e, &path))
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Codec { offset, msg } => Error::Codec {
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Writes image/label pairs named `00000`, `00001`, ... and the manifest.
pub fn write_dataset(
    root: impl AsRef<Path>,
    num_classes: usize,
    samples: impl IntoIterator<Item = Result<(Tensor4<f32>, LabelMap)>>,
) -> Result<DatasetManifest> {
    let root = root.as_ref();
    for sub in ["images", "labels"] {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut m = DatasetManifest::new(root, num_classes);
    for (i, s) in samples.into_iter().enumerate() {
        let (img, labels) = s?;
        m.samples.push(sample_name(i));
        write_file(&m.image_path(i), &write_ppm(&img)?)?;
        write_file(&m.label_path(i), &write_pgm_labels(&labels))?;
    }
    m.write()?;
    Ok(m)
}

/// A dataset held in memory: raw `[0, 1]` images and their label maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub images: Vec<Tensor4<f32>>,
    pub labels: Vec<LabelMap>,
}

impl Dataset {
    pub fn load(manifest: &DatasetManifest) -> Result<Self> {
        let mut images = Vec::with_capacity(manifest.len());
        let mut labels = Vec::with_capacity(manifest.len());
        for i in 0..manifest.len() {
            let img = manifest.read_image(i)?;
            let lab = manifest.read_labels(i)?;
            let d = img.dims();
            if d.h != lab.height() || d.w != lab.width() {
                return Err(Error::dim(format!(
                    "sample {}: image {}x{} but labels {}x{}",
                    manifest.samples[i],
                    d.h,
                    d.w,
                    lab.height(),
                    lab.width()
                )));
            }
            if let Some(first) = images.first().map(|t: &Tensor4<f32>| t.dims()) {
                if first != d {
                    return Err(Error::dim(format!(
                        "sample {} has dims {d}, others {first}",
                        manifest.samples[i]
                    )));
                }
            }
            images.push(img);
            labels.push(lab);
        }
        Ok(Self {
            num_classes: manifest.num_classes,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(h, w)` of the samples, if any.
    pub fn image_size(&self) -> Option<(usize, usize)> {
        self.images.first().map(|t| (t.dims().h, t.dims().w))
    }

    /// Per-channel mean over every pixel of every image.
    pub fn mean_pixel(&self) -> Result<[f32; 3]> {
        if self.is_empty() {
            return Err(Error::data("cannot compute the mean pixel of an empty dataset"));
        }
        let mut sums = [0.0f64; 3];
        let mut count = 0usize;
        for img in &self.images {
            for (c, s) in sums.iter_mut().enumerate() {
                *s += img.plane(0, c).iter().map(|&v| f64::from(v)).sum::<f64>();
            }
            count += img.dims().plane();
        }
        Ok(sums.map(|s| (s / count as f64) as f32))
    }

    /// Stacks the given samples into one mean-subtracted batch.
    pub fn batch(&self, indices: &[usize], mean: &[f32; 3]) -> Result<(Tensor4<f32>, Vec<LabelMap>)> {
        let imgs: Vec<Tensor4<f32>> = indices
            .iter()
            .map(|&i| subtract_mean(&self.images[i], mean))
            .collect();
        let labels = indices.iter().map(|&i| self.labels[i].clone()).collect();
        Ok((Tensor4::stack(&imgs)?, labels))
    }
}

/// Subtracts a per-channel mean from an `(n, 3, h, w)` image.
pub fn subtract_mean(img: &Tensor4<f32>, mean: &[f32; 3]) -> Tensor4<f32> {
    let d: Dims = img.dims();
    let mut out = img.clone();
    for (i, plane) in out.data_mut().chunks_mut(d.plane()).enumerate() {
        let m = mean[i % d.c.min(3)];
        for v in plane {
            *v -= m;
        }
    }
    out
}
