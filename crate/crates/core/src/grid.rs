//! Dense row-major rasters shared by every stage of the pipeline.
//!
//! Pixel centers sit at integer coordinates, x grows to the right and y grows
//! downwards. Multi-channel data is stored interleaved (`H x W x C`).

use crate::error::{Error, Result};

/// `H x W x C` scalar raster. Also used for feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} image needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Edge-replicated access.
    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize, c: usize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.at(x, y, c)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Luma conversion with (0.299, 0.587, 0.114) weights. Single-channel
    /// images are returned unchanged.
    pub fn to_gray(&self) -> Image {
        match self.channels {
            1 => self.clone(),
            3 => {
                let data = self
                    .data
                    .chunks_exact(3)
                    .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                    .collect();
                Image {
                    width: self.width,
                    height: self.height,
                    channels: 1,
                    data,
                }
            }
            n => {
                let data = self
                    .data
                    .chunks_exact(n)
                    .map(|p| p.iter().sum::<f64>() / n as f64)
                    .collect();
                Image {
                    width: self.width,
                    height: self.height,
                    channels: 1,
                    data,
                }
            }
        }
    }

    /// Bilinear sample of every channel at `(x, y)`. Returns `false` when the
    /// point lies outside `[0, W-1] x [0, H-1]`; `out` is then zero-filled.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) -> bool {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
            out.iter_mut().for_each(|v| *v = 0.0);
            return false;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        for (c, o) in out.iter_mut().enumerate() {
            let p00 = self.at(x0, y0, c);
            let p10 = self.at(x1, y0, c);
            let p01 = self.at(x0, y1, c);
            let p11 = self.at(x1, y1, c);
            // Exact at integer positions: the zero-weight terms vanish.
            let top = if fx == 0.0 {
                p00
            } else if fx == 1.0 {
                p10
            } else {
                p00 + fx * (p10 - p00)
            };
            let bottom = if fx == 0.0 {
                p01
            } else if fx == 1.0 {
                p11
            } else {
                p01 + fx * (p11 - p01)
            };
            *o = if fy == 0.0 {
                top
            } else if fy == 1.0 {
                bottom
            } else {
                top + fy * (bottom - top)
            };
        }
        true
    }
}

/// Single-channel `H x W` map of scalars (sigma, confidence, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Map2 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Map2 {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} map needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Per-pixel standard deviation of the depth distribution, scene units.
pub type SigmaMap = Map2;

/// Per-pixel photometric confidence in `[0, 1]`.
pub type ConfidenceMap = Map2;

/// Depth values with a validity mask. Invalid entries carry `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if data.len() != width * height || valid.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} depth map needs {} values",
                width,
                height,
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            valid,
        })
    }

    /// All pixels valid.
    pub fn from_values(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let valid = vec![true; data.len()];
        Self::new(width, height, data, valid)
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        Self {
            width,
            height,
            data: vec![depth; width * height],
            valid: vec![true; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.data[i])
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn crop(&self, width: usize, height: usize) -> DepthMap {
        let mut data = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for y in 0..height {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row..row + width]);
            valid.extend_from_slice(&self.valid[row..row + width]);
        }
        DepthMap {
            width,
            height,
            data,
            valid,
        }
    }
}

pub fn crop_map(map: &Map2, width: usize, height: usize) -> Map2 {
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = y * map.width;
        data.extend_from_slice(&map.data[row..row + width]);
    }
    Map2 { width, height, data }
}

/// Bilinear 2x upsampling of a masked scalar field onto a `(width, height)`
/// grid whose pixel `u` sits at `(u - 0.5) / 2` in the coarse grid. Invalid
/// coarse samples are excluded and the remaining weights renormalized.
pub fn upsample2x_masked(
    values: &[f64],
    valid: &[bool],
    src_width: usize,
    src_height: usize,
    width: usize,
    height: usize,
) -> (Vec<f64>, Vec<bool>) {
    let mut out = vec![0.0; width * height];
    let mut out_valid = vec![false; width * height];
    let max_x = (src_width - 1) as f64;
    let max_y = (src_height - 1) as f64;
    for y in 0..height {
        let sy = ((y as f64 - 0.5) / 2.0).clamp(0.0, max_y);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(src_height - 1);
        let fy = sy - y0 as f64;
        for x in 0..width {
            let sx = ((x as f64 - 0.5) / 2.0).clamp(0.0, max_x);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(src_width - 1);
            let fx = sx - x0 as f64;
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x1, y0, fx * (1.0 - fy)),
                (x0, y1, (1.0 - fx) * fy),
                (x1, y1, fx * fy),
            ];
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (tx, ty, w) in taps {
                let i = ty * src_width + tx;
                if valid[i] && w > 0.0 {
                    acc += w * values[i];
                    wsum += w;
                }
            }
            if wsum > 0.0 {
                out[y * width + x] = acc / wsum;
                out_valid[y * width + x] = true;
            } else {
                // Fall back to the nearest valid tap with zero weight (e.g. exact
                // grid alignment next to an invalid neighbor).
                if let Some((tx, ty, _)) = taps.iter().find(|(tx, ty, _)| valid[ty * src_width + tx]) {
                    out[y * width + x] = values[ty * src_width + tx];
                    out_valid[y * width + x] = true;
                }
            }
        }
    }
    (out, out_valid)
}

pub fn upsample_depth(depth: &DepthMap, width: usize, height: usize) -> DepthMap {
    let (data, valid) = upsample2x_masked(&depth.data, &depth.valid, depth.width, depth.height, width, height);
    DepthMap {
        width,
        height,
        data,
        valid,
    }
}

pub fn upsample_map(map: &Map2, width: usize, height: usize) -> Map2 {
    let valid = vec![true; map.data.len()];
    let (data, _) = upsample2x_masked(&map.data, &valid, map.width, map.height, width, height);
    Map2 { width, height, data }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_exact_on_grid_and_masked_outside() {
        let img = Image::from_fn(4, 3, 1, |x, y, _| (x * 10 + y) as f64);
        let mut out = [0.0];
        assert!(img.sample_bilinear(2.0, 1.0, &mut out));
        assert_eq!(out[0], 21.0);
        assert!(img.sample_bilinear(3.0, 2.0, &mut out));
        assert_eq!(out[0], 32.0);
        assert!(img.sample_bilinear(1.5, 0.5, &mut out));
        assert!((out[0] - 15.5).abs() < 1e-12);
        assert!(!img.sample_bilinear(3.01, 0.0, &mut out));
        assert_eq!(out[0], 0.0);
        assert!(!img.sample_bilinear(-0.01, 0.0, &mut out));
    }

    #[test]
    fn gray_weights() {
        let img = Image::from_vec(1, 1, 3, vec![1.0, 1.0, 1.0]).unwrap();
        assert!((img.to_gray().data[0] - 1.0).abs() < 1e-12);
        let img = Image::from_vec(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(img.to_gray().data[0], 0.299);
    }

    #[test]
    fn upsampling_preserves_constants_and_bounds() {
        let d = DepthMap::constant(4, 3, 7.5);
        let up = upsample_depth(&d, 8, 6);
        assert!(up.data.iter().all(|v| *v == 7.5));
        assert!(up.valid.iter().all(|v| *v));

        let ramp = DepthMap::from_values(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let up = upsample_depth(&ramp, 6, 2);
        for v in &up.data {
            assert!((1.0..=3.0).contains(v));
        }
        // pixel 3 sits at coarse coordinate 1.25
        assert!((up.data[3] - 2.25).abs() < 1e-12);
    }

    #[test]
    fn upsampling_skips_invalid_samples() {
        let d = DepthMap::new(2, 1, vec![4.0, 0.0], vec![true, false]).unwrap();
        let up = upsample_depth(&d, 4, 2);
        // column 3 lies entirely over the invalid coarse pixel
        for y in 0..2 {
            assert_eq!(&up.valid[y * 4..y * 4 + 4], &[true, true, true, false]);
            assert!(up.data[y * 4..y * 4 + 3].iter().all(|v| *v == 4.0));
        }
    }
}
