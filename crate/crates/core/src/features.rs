//! Classical multi-scale matching features: intensity, gradients and census
//! bits, normalized per channel.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Image;

pub const DEFAULT_CENSUS_WINDOW: usize = 5;
pub const MAX_CENSUS_BITS: usize = 24;
pub const PYRAMID_LEVELS: usize = 4;
/// Downsampling factor of the coarsest pyramid level.
pub const COARSEST_FACTOR: usize = 8;

/// Per-pixel feature vectors; each channel normalized to zero mean and unit
/// variance over the image (constant channels stay zero).
pub type FeatureMap = Image;

#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    /// Scales 1/8, 1/4, 1/2, 1 of the padded input.
    pub levels: Vec<FeatureMap>,
    /// Input size before edge padding.
    pub original: (usize, usize),
}

impl FeaturePyramid {
    pub fn level(&self, k: usize) -> &FeatureMap {
        &self.levels[k]
    }

    /// Downsampling factor of level `k` relative to the full resolution.
    pub fn factor(k: usize) -> usize {
        COARSEST_FACTOR >> k
    }
}

/// Census neighbor offsets for an odd window, row-major, center excluded,
/// evenly subsampled down to [`MAX_CENSUS_BITS`].
pub fn census_offsets(window: usize) -> Vec<(isize, isize)> {
    let r = (window / 2) as isize;
    let all: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx != 0 || dy != 0)
        .collect();
    if all.len() <= MAX_CENSUS_BITS {
        return all;
    }
    (0..MAX_CENSUS_BITS)
        .map(|i| all[i * all.len() / MAX_CENSUS_BITS])
        .collect()
}

pub fn feature_channels(window: usize) -> usize {
    3 + census_offsets(window).len()
}

fn check_window(image: &Image, window: usize) -> Result<()> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "census window must be odd and >= 3, got {window}"
        )));
    }
    if image.width < window || image.height < window {
        return Err(Error::ImageTooSmall {
            width: image.width,
            height: image.height,
            window,
        });
    }
    Ok(())
}

/// Unnormalized channels: `[intensity, dI/dx, dI/dy, census bits...]`.
///
/// Gradients are backward differences with edge replication, so a step
/// between columns `e-1` and `e` responds only at column `e`. A census bit is
/// 1 when the neighbor is darker than the center.
pub fn extract_raw_features(gray: &Image, window: usize) -> Result<Image> {
    if gray.channels != 1 {
        return Err(Error::ShapeMismatch(format!(
            "feature extraction expects a single-channel image, got {} channels",
            gray.channels
        )));
    }
    check_window(gray, window)?;
    let offsets = census_offsets(window);
    let channels = 3 + offsets.len();
    let (w, h) = (gray.width, gray.height);
    let mut out = Image::zeros(w, h, channels);
    out.data.par_chunks_mut(w * channels).enumerate().for_each(|(y, row)| {
        let yi = y as isize;
        for x in 0..w {
            let xi = x as isize;
            let px = &mut row[x * channels..(x + 1) * channels];
            let center = gray.at(x, y, 0);
            px[0] = center;
            px[1] = center - gray.at_clamped(xi - 1, yi, 0);
            px[2] = center - gray.at_clamped(xi, yi - 1, 0);
            for (b, &(dx, dy)) in offsets.iter().enumerate() {
                px[3 + b] = if gray.at_clamped(xi + dx, yi + dy, 0) < center {
                    1.0
                } else {
                    0.0
                };
            }
        }
    });
    Ok(out)
}

/// Zero-mean, unit-variance per channel (population statistics).
pub fn normalize_channels(image: &mut Image) {
    let n = (image.width * image.height) as f64;
    let c = image.channels;
    for ch in 0..c {
        let mean = image.data.iter().skip(ch).step_by(c).sum::<f64>() / n;
        let var = image
            .data
            .iter()
            .skip(ch)
            .step_by(c)
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        let scale_floor = 1e-12 * mean.abs().max(1.0);
        if var <= scale_floor * scale_floor {
            image.data.iter_mut().skip(ch).step_by(c).for_each(|v| *v = 0.0);
        } else {
            let inv = 1.0 / var.sqrt();
            image
                .data
                .iter_mut()
                .skip(ch)
                .step_by(c)
                .for_each(|v| *v = (*v - mean) * inv);
        }
    }
}

pub fn extract_features(gray: &Image, window: usize) -> Result<FeatureMap> {
    let mut f = extract_raw_features(gray, window)?;
    normalize_channels(&mut f);
    Ok(f)
}

/// 2x box average. Odd trailing rows/columns are dropped.
pub fn downsample2(image: &Image) -> Image {
    let w = image.width / 2;
    let h = image.height / 2;
    Image::from_fn(w, h, image.channels, |x, y, c| {
        (image.at(2 * x, 2 * y, c)
            + image.at(2 * x + 1, 2 * y, c)
            + image.at(2 * x, 2 * y + 1, c)
            + image.at(2 * x + 1, 2 * y + 1, c))
            * 0.25
    })
}

/// Edge-replicating pad on the right and bottom to a multiple of `m`.
pub fn pad_to_multiple(image: &Image, m: usize) -> Image {
    let w = image.width.div_ceil(m) * m;
    let h = image.height.div_ceil(m) * m;
    if w == image.width && h == image.height {
        return image.clone();
    }
    Image::from_fn(w, h, image.channels, |x, y, c| {
        image.at(x.min(image.width - 1), y.min(image.height - 1), c)
    })
}

/// Padded size for a given input size.
pub fn padded_dims(width: usize, height: usize) -> (usize, usize) {
    (
        width.div_ceil(COARSEST_FACTOR) * COARSEST_FACTOR,
        height.div_ceil(COARSEST_FACTOR) * COARSEST_FACTOR,
    )
}

/// Grayscale images of the four pyramid scales, coarsest first.
pub fn gray_pyramid(image: &Image) -> Vec<Image> {
    let gray = pad_to_multiple(&image.to_gray(), COARSEST_FACTOR);
    let mut levels = vec![gray];
    for _ in 1..PYRAMID_LEVELS {
        let next = downsample2(levels.last().unwrap());
        levels.push(next);
    }
    levels.reverse();
    levels
}

pub fn build_pyramid(image: &Image, window: usize) -> Result<FeaturePyramid> {
    let levels = gray_pyramid(image)
        .iter()
        .map(|g| extract_features(g, window))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeaturePyramid {
        levels,
        original: (image.width, image.height),
    })
}
