use crate::error::{Error, Result};

/// Label value excluded from losses, class statistics and metrics.
pub const IGNORE: u8 = 255;

/// Per-pixel class indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMap {
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn filled(h: usize, w: usize, value: u8) -> Self {
        Self {
            h,
            w,
            data: vec![value; h * w],
        }
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w {
            return Err(Error::dim(format!(
                "label map {h}x{w} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self { h, w, data })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.data[y * self.w + x] = v;
    }

    /// Fails if any non-ignore value is not a valid class index.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self
            .data
            .iter()
            .position(|&v| v != IGNORE && usize::from(v) >= num_classes)
        {
            None => Ok(()),
            Some(i) => Err(Error::data(format!(
                "label {} at pixel {i} is out of range for {num_classes} classes",
                self.data[i]
            ))),
        }
    }
}
