//! Square, planar floating-point images.
//!
//! Samples are stored channel-major (`data[c][y][x]`), nominally in
//! `[0, 255]` but unclamped: AC layers and residuals go negative.

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    side: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(side: usize, channels: usize, data: Vec<f32>) -> Result<Image> {
        check_shape(side, channels)?;
        if data.len() != side * side * channels {
            return Err(invalid(format!(
                "image data has {} samples, expected {}x{}x{}",
                data.len(),
                side,
                side,
                channels
            )));
        }
        Ok(Image {
            side,
            channels,
            data,
        })
    }

    pub fn zeros(side: usize, channels: usize) -> Result<Image> {
        check_shape(side, channels)?;
        Ok(Image {
            side,
            channels,
            data: vec![0.0; side * side * channels],
        })
    }

    pub fn constant(side: usize, channels: usize, value: f32) -> Result<Image> {
        let mut img = Image::zeros(side, channels)?;
        img.data.fill(value);
        Ok(img)
    }

    /// Builds an image from `f(channel, y, x)`.
    pub fn from_fn(
        side: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Image> {
        check_shape(side, channels)?;
        let mut data = Vec::with_capacity(side * side * channels);
        for c in 0..channels {
            for y in 0..side {
                for x in 0..side {
                    data.push(f(c, y, x));
                }
            }
        }
        Ok(Image {
            side,
            channels,
            data,
        })
    }

    /// Converts channel-interleaved 8-bit samples (`RGBRGB...`).
    pub fn from_interleaved_u8(side: usize, channels: usize, samples: &[u8]) -> Result<Image> {
        check_shape(side, channels)?;
        if samples.len() != side * side * channels {
            return Err(invalid("sample buffer does not match image shape"));
        }
        Image::from_fn(side, channels, |c, y, x| {
            samples[(y * side + x) * channels + c] as f32
        })
    }

    /// Rounds, clamps to `[0, 255]` and interleaves channels.
    pub fn to_interleaved_u8(&self) -> Vec<u8> {
        let plane = self.side * self.side;
        let mut out = vec![0u8; plane * self.channels];
        for c in 0..self.channels {
            for (i, &v) in self.plane(c).iter().enumerate() {
                out[i * self.channels + c] = to_u8(v);
            }
        }
        out
    }

    /// The image as it would be emitted: every sample rounded and clamped.
    pub fn quantized_u8(&self) -> Image {
        self.with_data(self.data.iter().map(|&v| to_u8(v) as f32).collect())
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `N` such that `side == 2^N`.
    pub fn grid(&self) -> u8 {
        self.side.trailing_zeros() as u8
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.side * self.side;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.side * self.side;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.side + y) * self.side + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.side + y) * self.side + x] = v;
    }

    fn same_shape(&self, other: &Image) -> Result<()> {
        if self.side != other.side || self.channels != other.channels {
            return Err(invalid(format!(
                "shape mismatch: {}x{}x{} vs {}x{}x{}",
                self.side, self.side, self.channels, other.side, other.side, other.channels
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Image) -> Result<Image> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(self.with_data(data))
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(self.with_data(data))
    }

    pub fn scale(&self, k: f32) -> Image {
        self.with_data(self.data.iter().map(|v| v * k).collect())
    }

    fn with_data(&self, data: Vec<f32>) -> Image {
        Image {
            side: self.side,
            channels: self.channels,
            data,
        }
    }

    /// Mean squared value over every sample.
    pub fn mean_square(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / self.data.len() as f64
    }

    pub fn mse(&self, other: &Image) -> Result<f64> {
        self.same_shape(other)?;
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    pub fn max_abs_diff(&self, other: &Image) -> Result<f32> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    /// Number of samples in a `side`x`side` block across all channels.
    pub fn block_len(&self, side: usize) -> usize {
        side * side * self.channels
    }

    /// Copies the block at `(y, x)` into `out`, channel-major.
    pub fn read_block(&self, y: usize, x: usize, side: usize, out: &mut [f32]) {
        debug_assert_eq!(out.len(), self.block_len(side));
        let mut k = 0;
        for c in 0..self.channels {
            for r in 0..side {
                let start = (c * self.side + y + r) * self.side + x;
                out[k..k + side].copy_from_slice(&self.data[start..start + side]);
                k += side;
            }
        }
    }

    pub fn write_block(&mut self, y: usize, x: usize, side: usize, block: &[f32]) {
        debug_assert_eq!(block.len(), self.block_len(side));
        let mut k = 0;
        for c in 0..self.channels {
            for r in 0..side {
                let start = (c * self.side + y + r) * self.side + x;
                self.data[start..start + side].copy_from_slice(&block[k..k + side]);
                k += side;
            }
        }
    }

    /// `self[block] += block`.
    pub fn add_block(&mut self, y: usize, x: usize, side: usize, block: &[f32]) {
        self.zip_block(y, x, side, block, |a, b| *a += b);
    }

    /// `self[block] -= block`.
    pub fn sub_block(&mut self, y: usize, x: usize, side: usize, block: &[f32]) {
        self.zip_block(y, x, side, block, |a, b| *a -= b);
    }

    fn zip_block(
        &mut self,
        y: usize,
        x: usize,
        side: usize,
        block: &[f32],
        op: impl Fn(&mut f32, f32),
    ) {
        debug_assert_eq!(block.len(), self.block_len(side));
        let mut k = 0;
        for c in 0..self.channels {
            for r in 0..side {
                let start = (c * self.side + y + r) * self.side + x;
                for (a, &b) in self.data[start..start + side].iter_mut().zip(&block[k..k + side]) {
                    op(a, b);
                }
                k += side;
            }
        }
    }

    /// Mean squared value over one block, all channels jointly.
    pub fn block_mean_square(&self, y: usize, x: usize, side: usize) -> f64 {
        let mut sum = 0.0f64;
        for c in 0..self.channels {
            for r in 0..side {
                let start = (c * self.side + y + r) * self.side + x;
                for &v in &self.data[start..start + side] {
                    sum += (v as f64) * (v as f64);
                }
            }
        }
        sum / self.block_len(side) as f64
    }
}

#[inline]
pub(crate) fn to_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn check_shape(side: usize, channels: usize) -> Result<()> {
    if side == 0 || !side.is_power_of_two() {
        return Err(invalid(format!("image side {side} is not a power of two")));
    }
    if channels != 1 && channels != 3 {
        return Err(invalid(format!("unsupported channel count {channels}")));
    }
    Ok(())
}
