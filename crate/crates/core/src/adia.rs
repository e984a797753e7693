//! Adaptive depth interval adjustment: per-pixel ranges of one sigma around
//! the previous depth, equal partition, z-score softmax offsets and the
//! variable-interval plane update `d_i <- d_i + d_inter * offset_i`.

use rayon::prelude::*;

use crate::adrp::DepthRange;
use crate::cost_volume::HypothesisPlanes;
use crate::error::{Error, Result};
use crate::grid::{DepthMap, SigmaMap};

/// Absolute lower bound on sigma.
pub const SIGMA_FLOOR_ABS: f64 = 1e-6;
/// Sigma floor relative to the mean plane interval of the stage that
/// produced it.
pub const SIGMA_FLOOR_REL: f64 = 1e-3;

pub fn sigma_floor(mean_interval: f64) -> f64 {
    SIGMA_FLOOR_ABS.max(SIGMA_FLOOR_REL * mean_interval)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffsetMode {
    /// `softmax_i((d_i - L) / sigma)`
    #[default]
    ZScore,
    /// `softmax_i(d_i - L)`, sigma removed.
    Linear,
}

impl std::str::FromStr for OffsetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zscore" | "z-score" => Ok(OffsetMode::ZScore),
            "linear" => Ok(OffsetMode::Linear),
            other => Err(Error::InvalidConfig(format!("unknown offset mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for OffsetMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OffsetMode::ZScore => "zscore",
            OffsetMode::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelRangeMap {
    pub width: usize,
    pub height: usize,
    pub d_min: Vec<f64>,
    pub d_max: Vec<f64>,
}

/// `[L - sigma, L + sigma]` per pixel with sigma floored, clamped into the
/// all-pixel range. Pixels without a valid depth get the all-pixel range.
pub fn pixelwise_range(depth: &DepthMap, sigma: &SigmaMap, global: &DepthRange, floor: f64) -> Result<PixelRangeMap> {
    if depth.dims() != sigma.dims() {
        return Err(Error::ShapeMismatch("sigma map does not match depth map".into()));
    }
    let n = depth.width * depth.height;
    let mut d_min = Vec::with_capacity(n);
    let mut d_max = Vec::with_capacity(n);
    for i in 0..n {
        if !depth.valid[i] {
            d_min.push(global.d_min);
            d_max.push(global.d_max);
            continue;
        }
        let l = depth.data[i];
        let s = sigma.data[i].max(floor);
        let mut lo = (l - s).max(global.d_min);
        let mut hi = (l + s).min(global.d_max);
        if !(hi > lo) {
            // the depth sits outside the all-pixel range; keep the raw band
            lo = l - s;
            hi = l + s;
        }
        d_min.push(lo);
        d_max.push(hi);
    }
    Ok(PixelRangeMap {
        width: depth.width,
        height: depth.height,
        d_min,
        d_max,
    })
}

fn check_count(count: usize) -> Result<()> {
    if count < 2 {
        return Err(Error::InvalidCount(count));
    }
    Ok(())
}

/// `d_inter = (d_max - d_min) / count`, planes `d_min + j * d_inter` for
/// `j = 0 .. count - 1`.
pub fn equal_partition(d_min: f64, d_max: f64, count: usize) -> Result<HypothesisPlanes> {
    check_count(count)?;
    if !(d_max > d_min) {
        return Err(Error::DegenerateRange(d_min, d_max));
    }
    let interval = (d_max - d_min) / count as f64;
    let values = (0..count).map(|j| d_min + j as f64 * interval).collect();
    HypothesisPlanes::global(values, interval)
}

pub fn equal_partition_range(range: &DepthRange, count: usize) -> Result<HypothesisPlanes> {
    equal_partition(range.d_min, range.d_max, count)
}

pub fn equal_partition_pixelwise(ranges: &PixelRangeMap, count: usize) -> Result<HypothesisPlanes> {
    check_count(count)?;
    let n = ranges.width * ranges.height;
    let mut intervals = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = (ranges.d_min[i], ranges.d_max[i]);
        if !(hi > lo) {
            return Err(Error::DegenerateRange(lo, hi));
        }
        intervals.push((hi - lo) / count as f64);
    }
    let mut values = vec![0.0; count * n];
    for j in 0..count {
        for i in 0..n {
            values[j * n + i] = ranges.d_min[i] + j as f64 * intervals[i];
        }
    }
    HypothesisPlanes::per_pixel(ranges.width, ranges.height, count, values, intervals)
}

/// Per-pixel offset weights, plane-major `D x H x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetVolume {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl OffsetVolume {
    #[inline]
    pub fn at(&self, j: usize, pixel: usize) -> f64 {
        self.data[j * self.width * self.height + pixel]
    }
}

fn softmax_in_place(col: &mut [f64]) {
    let best = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in col.iter_mut() {
        *v = (*v - best).exp();
        sum += *v;
    }
    col.iter_mut().for_each(|v| *v /= sum);
    if col.len() > 1 {
        // far-off planes underflow to 0 and the winner rounds to 1; keep every
        // weight strictly inside (0, 1)
        col.iter_mut()
            .for_each(|v| *v = v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON));
    }
}

/// Softmax over the plane axis of each pixel's (z-)scores relative to the
/// previous depth.
pub fn offsets(
    planes: &HypothesisPlanes,
    prev_depth: &DepthMap,
    sigma: &SigmaMap,
    mode: OffsetMode,
) -> Result<OffsetVolume> {
    let (w, h) = prev_depth.dims();
    if sigma.dims() != (w, h) {
        return Err(Error::ShapeMismatch("sigma map does not match depth map".into()));
    }
    if let Some(d) = planes.dims() {
        if d != (w, h) {
            return Err(Error::ShapeMismatch(format!(
                "planes are {d:?}, depth map is {:?}",
                (w, h)
            )));
        }
    }
    let n = w * h;
    let count = planes.count();
    let mut columns = vec![0.0; n * count];
    columns.par_chunks_mut(count).enumerate().for_each(|(p, col)| {
        let mean = prev_depth.data[p];
        let scale = match mode {
            OffsetMode::ZScore => 1.0 / sigma.data[p].max(SIGMA_FLOOR_ABS),
            OffsetMode::Linear => 1.0,
        };
        for (j, v) in col.iter_mut().enumerate() {
            *v = (planes.depth(j, p) - mean) * scale;
        }
        softmax_in_place(col);
    });
    let mut data = vec![0.0; n * count];
    for p in 0..n {
        for j in 0..count {
            data[j * n + p] = columns[p * count + j];
        }
    }
    Ok(OffsetVolume {
        count,
        width: w,
        height: h,
        data,
    })
}

/// `d_i(x) + d_inter(x) * offset_i(x)`; always returns per-pixel planes.
pub fn adjust_planes(planes: &HypothesisPlanes, offsets: &OffsetVolume) -> Result<HypothesisPlanes> {
    if planes.count() != offsets.count {
        return Err(Error::ShapeMismatch(format!(
            "{} planes vs {} offsets",
            planes.count(),
            offsets.count
        )));
    }
    let (w, h) = (offsets.width, offsets.height);
    if let Some(d) = planes.dims() {
        if d != (w, h) {
            return Err(Error::ShapeMismatch(format!(
                "planes are {d:?}, offsets are {:?}",
                (w, h)
            )));
        }
    }
    let n = w * h;
    let count = planes.count();
    let mut values = vec![0.0; count * n];
    for j in 0..count {
        for p in 0..n {
            values[j * n + p] = planes.depth(j, p) + planes.interval(p) * offsets.data[j * n + p];
        }
    }
    let intervals = (0..n).map(|p| planes.interval(p)).collect();
    HypothesisPlanes::per_pixel(w, h, count, values, intervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Map2;
    use proptest::prelude::*;

    fn one(depth: f64, sigma: f64) -> (DepthMap, SigmaMap) {
        (DepthMap::constant(1, 1, depth), Map2::filled(1, 1, sigma))
    }

    #[test]
    fn pixelwise_range_examples() {
        let global = DepthRange::new(1.0, 10.0).unwrap();
        let (l, s) = one(5.0, 0.5);
        let r = pixelwise_range(&l, &s, &global, 1e-6).unwrap();
        assert_eq!((r.d_min[0], r.d_max[0]), (4.5, 5.5));

        let (l, s) = one(1.2, 0.5);
        let r = pixelwise_range(&l, &s, &global, 1e-6).unwrap();
        assert_eq!(r.d_min[0], 1.0);
        assert!((r.d_max[0] - 1.7).abs() < 1e-12);

        let floor = sigma_floor(0.2);
        assert_eq!(floor, 2e-4);
        let (l, s) = one(5.0, 0.0);
        let r = pixelwise_range(&l, &s, &global, floor).unwrap();
        assert_eq!((r.d_min[0], r.d_max[0]), (5.0 - floor, 5.0 + floor));
        assert_eq!(sigma_floor(1e-5), SIGMA_FLOOR_ABS);
    }

    #[test]
    fn invalid_pixels_take_the_global_range() {
        let global = DepthRange::new(1.0, 10.0).unwrap();
        let l = DepthMap::new(1, 1, vec![0.0], vec![false]).unwrap();
        let r = pixelwise_range(&l, &Map2::filled(1, 1, 0.0), &global, 1e-6).unwrap();
        assert_eq!((r.d_min[0], r.d_max[0]), (1.0, 10.0));
    }

    #[test]
    fn partition_examples() {
        let p = equal_partition(425.0, 745.0, 128).unwrap();
        assert_eq!(p.interval(0), 2.5);
        assert_eq!(p.depth(0, 0), 425.0);
        assert_eq!(p.depth(127, 0), 425.0 + 127.0 * 2.5);
        let p = equal_partition(0.0, 4.0, 4).unwrap();
        assert_eq!(p.values(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(p.interval(0), 1.0);
        assert!(matches!(equal_partition(0.0, 4.0, 1), Err(Error::InvalidCount(1))));
    }

    #[test]
    fn pixelwise_partition() {
        let ranges = PixelRangeMap {
            width: 2,
            height: 1,
            d_min: vec![1.0, 10.0],
            d_max: vec![2.0, 14.0],
        };
        let p = equal_partition_pixelwise(&ranges, 4).unwrap();
        assert_eq!(p.interval(0), 0.25);
        assert_eq!(p.interval(1), 1.0);
        assert_eq!(p.depth(3, 0), 1.75);
        assert_eq!(p.depth(3, 1), 13.0);
    }

    #[test]
    fn offset_examples() {
        let planes = HypothesisPlanes::global(vec![1.0, 2.0, 3.0], 1.0).unwrap();
        let (l, s) = one(2.0, 1.0);
        let o = offsets(&planes, &l, &s, OffsetMode::ZScore).unwrap();
        let expected = [0.09003057317038046, 0.24472847105479767, 0.6652409557748219];
        for (j, e) in expected.iter().enumerate() {
            assert!((o.data[j] - e).abs() < 1e-12);
        }

        let planes = HypothesisPlanes::global(vec![1.0, 2.0, 3.0, 4.0], 1.0).unwrap();
        let (l, s) = one(2.5, 1e9);
        let o = offsets(&planes, &l, &s, OffsetMode::ZScore).unwrap();
        assert!(o.data.iter().all(|v| (v - 0.25).abs() < 1e-9));

        let planes = HypothesisPlanes::global(vec![7.0], 1.0).unwrap();
        let (l, s) = one(3.0, 0.1);
        let o = offsets(&planes, &l, &s, OffsetMode::ZScore).unwrap();
        assert_eq!(o.data, vec![1.0]);
    }

    #[test]
    fn linear_mode_drops_sigma() {
        let planes = HypothesisPlanes::global(vec![1.0, 2.0, 3.0], 1.0).unwrap();
        let (l, _) = one(2.0, 1.0);
        let a = offsets(&planes, &l, &Map2::filled(1, 1, 0.01), OffsetMode::Linear).unwrap();
        let b = offsets(&planes, &l, &Map2::filled(1, 1, 100.0), OffsetMode::Linear).unwrap();
        assert_eq!(a, b);
        let z = offsets(&planes, &l, &Map2::filled(1, 1, 1.0), OffsetMode::ZScore).unwrap();
        assert_eq!(a, z);
        assert_eq!("linear".parse::<OffsetMode>().unwrap(), OffsetMode::Linear);
        assert!("quadratic".parse::<OffsetMode>().is_err());
    }

    #[test]
    fn adjust_examples() {
        let planes = HypothesisPlanes::global(vec![1.0, 2.0, 3.0], 1.0).unwrap();
        let zero = OffsetVolume {
            count: 3,
            width: 1,
            height: 1,
            data: vec![0.0; 3],
        };
        assert_eq!(adjust_planes(&planes, &zero).unwrap().values(), &[1.0, 2.0, 3.0]);

        let o = OffsetVolume {
            count: 3,
            width: 1,
            height: 1,
            data: vec![0.09003, 0.24473, 0.66524],
        };
        let adj = adjust_planes(&planes, &o).unwrap();
        for (a, e) in adj.values().iter().zip([1.09003, 2.24473, 3.66524]) {
            assert!((a - e).abs() < 1e-12);
        }

        let third = 1.0 / 3.0;
        let o = OffsetVolume {
            count: 3,
            width: 1,
            height: 1,
            data: vec![third; 3],
        };
        let adj = adjust_planes(&planes, &o).unwrap();
        for (a, e) in adj.values().iter().zip([4.0 / 3.0, 7.0 / 3.0, 10.0 / 3.0]) {
            assert!((a - e).abs() < 1e-12);
        }

        let bad = OffsetVolume {
            count: 2,
            width: 1,
            height: 1,
            data: vec![0.5; 2],
        };
        assert!(matches!(adjust_planes(&planes, &bad), Err(Error::ShapeMismatch(_))));
    }

    proptest! {
        #[test]
        fn adia_invariants(
            lo in 0.5f64..100.0,
            width in 0.01f64..20.0,
            count in 2usize..20,
            l_frac in -0.5f64..1.5,
            sig_frac in 0.05f64..5.0,
            scale in 0.01f64..100.0,
        ) {
            let ranges = PixelRangeMap { width: 1, height: 1, d_min: vec![lo], d_max: vec![lo + width] };
            let planes = equal_partition_pixelwise(&ranges, count).unwrap();
            let sigma = sig_frac * width;
            let (l, s) = one(lo + l_frac * width, sigma);
            let o = offsets(&planes, &l, &s, OffsetMode::ZScore).unwrap();
            let sum: f64 = o.data.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            for w in o.data.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            for v in &o.data {
                prop_assert!(*v > 0.0 && *v < 1.0 || count == 1);
            }
            let adj = adjust_planes(&planes, &o).unwrap();
            let interval = planes.interval(0);
            for w in adj.values().windows(2) {
                prop_assert!(w[1] > w[0]);
            }
            for v in adj.values() {
                prop_assert!(*v >= lo && *v <= lo + width + interval + 1e-9);
            }

            // joint positive rescaling leaves z-score offsets unchanged
            let scaled_ranges = PixelRangeMap {
                width: 1, height: 1, d_min: vec![lo * scale], d_max: vec![(lo + width) * scale],
            };
            let scaled_planes = equal_partition_pixelwise(&scaled_ranges, count).unwrap();
            let (sl, ss) = one((lo + l_frac * width) * scale, sigma * scale);
            let so = offsets(&scaled_planes, &sl, &ss, OffsetMode::ZScore).unwrap();
            for (a, b) in o.data.iter().zip(&so.data) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
