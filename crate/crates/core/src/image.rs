//! Intensity images with values in `[0, 1]`.

use crate::error::{Error, Result};

/// `height × width × channels` image, channels interleaved, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Image(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(
                format!(
                    "{} samples for {width}x{height}x{channels}",
                    width * height * channels
                ),
                data.len(),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Image(format!("value {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    /// Builds a single-channel image; values are clamped into `[0, 1]`.
    pub fn gray_from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                data.push(f(i, j).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    /// Crate-internal constructor for buffers whose values are known to be in range.
    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(j * self.width + i) * self.channels + c]
    }

    /// All channels of pixel `(i, j)`.
    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let k = (j * self.width + i) * self.channels;
        &self.data[k..k + self.channels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Replaces sample `(i, j, c)`; the value is clamped into `[0, 1]`.
    pub fn set(&mut self, i: usize, j: usize, c: usize, value: f64) {
        let k = (j * self.width + i) * self.channels + c;
        self.data[k] = value.clamp(0.0, 1.0);
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> Result<()> {
        if self.width != other.width
            || self.height != other.height
            || self.channels != other.channels
        {
            return Err(Error::shape(
                format!("{}x{}x{}", self.width, self.height, self.channels),
                format!("{}x{}x{}", other.width, other.height, other.channels),
            ));
        }
        Ok(())
    }

    /// Single-channel view: the mean over channels.
    pub fn luminance(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.clone();
        }
        self.data
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() / self.channels as f64)
            .collect()
    }
}
