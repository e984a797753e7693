//! Plane-sweep feature volumes, variance cost aggregation, spatial cost
//! regularization, softmax probabilities and soft-argmax depth regression.
//!
//! Every `D x H x W` volume is stored plane-major: cell `(j, pixel)` lives at
//! `j * H * W + pixel` with `pixel = y * W + x`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::geometry::{plane_homography, warp_map, warp_with, CameraView, RayWarper};
use crate::grid::{ConfidenceMap, DepthMap, Map2, SigmaMap};

/// Cost assigned to cells seen by fewer than two views.
pub const SENTINEL_COST: f64 = 1e6;
/// Number of planes summed around the argmax for the confidence map.
pub const CONFIDENCE_WINDOW: usize = 4;

/// Ordered depth hypotheses, shared by all pixels (global) or per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisPlanes {
    count: usize,
    dims: Option<(usize, usize)>,
    values: Vec<f64>,
    intervals: Vec<f64>,
}

impl HypothesisPlanes {
    /// One set of depths for every pixel. Values must be strictly increasing
    /// and the interval positive; positivity of the depths themselves is
    /// enforced when the planes are swept.
    pub fn global(values: Vec<f64>, interval: f64) -> Result<Self> {
        let planes = Self {
            count: values.len(),
            dims: None,
            values,
            intervals: vec![interval],
        };
        planes.validate()?;
        Ok(planes)
    }

    /// `values` is plane-major `D x H x W`; `intervals` is `H x W`.
    pub fn per_pixel(width: usize, height: usize, count: usize, values: Vec<f64>, intervals: Vec<f64>) -> Result<Self> {
        if values.len() != count * width * height || intervals.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "per-pixel planes {count}x{height}x{width}: got {} values and {} intervals",
                values.len(),
                intervals.len()
            )));
        }
        let planes = Self {
            count,
            dims: Some((width, height)),
            values,
            intervals,
        };
        planes.validate()?;
        Ok(planes)
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidPlanes("no planes".into()));
        }
        if let Some(bad) = self.intervals.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidPlanes(format!("interval must be positive, got {bad}")));
        }
        let n = self.pixel_stride();
        for p in 0..n {
            for j in 0..self.count {
                let v = self.values[j * n + p];
                if !v.is_finite() {
                    return Err(Error::InvalidPlanes("non-finite plane depth".into()));
                }
                if j > 0 && !(v > self.values[(j - 1) * n + p]) {
                    return Err(Error::InvalidPlanes(format!(
                        "planes must be strictly increasing (pixel {p}, plane {j})"
                    )));
                }
            }
        }
        Ok(())
    }

    fn pixel_stride(&self) -> usize {
        self.dims.map(|(w, h)| w * h).unwrap_or(1)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_per_pixel(&self) -> bool {
        self.dims.is_some()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.dims
    }

    /// Depth of plane `j` at `pixel` (ignored for global planes).
    #[inline]
    pub fn depth(&self, j: usize, pixel: usize) -> f64 {
        match self.dims {
            None => self.values[j],
            Some((w, h)) => self.values[j * w * h + pixel],
        }
    }

    #[inline]
    pub fn interval(&self, pixel: usize) -> f64 {
        match self.dims {
            None => self.intervals[0],
            Some(_) => self.intervals[pixel],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn min_depth(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_depth(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_interval(&self) -> f64 {
        self.intervals.iter().sum::<f64>() / self.intervals.len() as f64
    }

    fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        match self.dims {
            Some(d) if d != (width, height) => Err(Error::ResolutionMismatch {
                expected: (width, height),
                actual: d,
            }),
            _ => Ok(()),
        }
    }
}

/// Source features resampled onto every hypothesis plane of the reference
/// grid: `D x H x W x C` values plus a `D x H x W` validity mask.
#[derive(Debug, Clone)]
pub struct FeatureVolume {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl FeatureVolume {
    #[inline]
    pub fn features(&self, j: usize, pixel: usize) -> &[f64] {
        let start = (j * self.width * self.height + pixel) * self.channels;
        &self.data[start..start + self.channels]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub cost: Vec<f64>,
    /// Number of views (reference included) that saw each cell.
    pub valid_views: Vec<u16>,
}

impl CostVolume {
    #[inline]
    pub fn at(&self, j: usize, pixel: usize) -> f64 {
        self.cost[j * self.width * self.height + pixel]
    }

    /// A pixel is usable when at least one plane was seen by two views.
    pub fn pixel_validity(&self) -> Vec<bool> {
        let n = self.width * self.height;
        (0..n)
            .map(|p| (0..self.count).any(|j| self.valid_views[j * n + p] >= 2))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ProbabilityVolume {
    pub fn new(count: usize, width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != count * width * height {
            return Err(Error::ShapeMismatch(format!(
                "probability volume {count}x{height}x{width} needs {} values",
                count * width * height
            )));
        }
        Ok(Self {
            count,
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn at(&self, j: usize, pixel: usize) -> f64 {
        self.data[j * self.width * self.height + pixel]
    }
}

/// Computes a `D`-long column per pixel in parallel and scatters it into a
/// plane-major volume.
fn per_pixel_columns<F>(pixels: usize, depth: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut columns = vec![0.0; pixels * depth];
    columns.par_chunks_mut(depth).enumerate().for_each(|(p, col)| f(p, col));
    let mut out = vec![0.0; pixels * depth];
    for p in 0..pixels {
        for j in 0..depth {
            out[j * pixels + p] = columns[p * depth + j];
        }
    }
    out
}

/// Warps `src` onto every plane of the reference view. `src`, the reference
/// grid and per-pixel planes must share one resolution, and both views'
/// intrinsics must already be scaled to it.
pub fn build_feature_volume(
    src: &FeatureMap,
    ref_view: &CameraView,
    src_view: &CameraView,
    planes: &HypothesisPlanes,
) -> Result<FeatureVolume> {
    let (w, h) = src.dims();
    planes.check_dims(w, h)?;
    if let Some(bad) = planes.values().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NonPositiveDepth(*bad));
    }
    let c = src.channels;
    let n = w * h;
    let d = planes.count();
    let mut data = Vec::with_capacity(d * n * c);
    let mut valid = Vec::with_capacity(d * n);
    if planes.is_per_pixel() {
        let warper = RayWarper::new(ref_view, src_view, w, h);
        for j in 0..d {
            let (slice, mask) = warp_with(src, w, h, |x, y| warper.map(x, y, planes.depth(j, y * w + x)));
            data.extend_from_slice(&slice.data);
            valid.extend_from_slice(&mask);
        }
    } else {
        for j in 0..d {
            let hom = plane_homography(ref_view, src_view, planes.depth(j, 0))?;
            let (slice, mask) = warp_map(src, &hom)?;
            data.extend_from_slice(&slice.data);
            valid.extend_from_slice(&mask);
        }
    }
    Ok(FeatureVolume {
        count: d,
        width: w,
        height: h,
        channels: c,
        data,
        valid,
    })
}

/// Channel-averaged population variance across the reference and every
/// source view that sees the cell.
pub fn aggregate_variance(ref_feature: &FeatureMap, volumes: &[FeatureVolume]) -> Result<CostVolume> {
    let first = volumes.first().ok_or(Error::NoSourceViews)?;
    let (w, h, c, d) = (first.width, first.height, first.channels, first.count);
    if ref_feature.dims() != (w, h) || ref_feature.channels != c {
        return Err(Error::ShapeMismatch(
            "reference features do not match the volumes".into(),
        ));
    }
    if volumes
        .iter()
        .any(|v| v.width != w || v.height != h || v.channels != c || v.count != d)
    {
        return Err(Error::ShapeMismatch("feature volumes disagree in shape".into()));
    }
    let n = w * h;
    let mut cost = vec![0.0; d * n];
    let mut valid_views = vec![0u16; d * n];
    cost.par_chunks_mut(n)
        .zip(valid_views.par_chunks_mut(n))
        .enumerate()
        .for_each(|(j, (cost_row, count_row))| {
            let mut mean = vec![0.0; c];
            for p in 0..n {
                let reference = ref_feature.pixel(p % w, p / w);
                let mut views = 1usize;
                mean.copy_from_slice(reference);
                for v in volumes {
                    if v.valid[j * n + p] {
                        views += 1;
                        for (m, x) in mean.iter_mut().zip(v.features(j, p)) {
                            *m += x;
                        }
                    }
                }
                count_row[p] = views as u16;
                if views < 2 {
                    cost_row[p] = SENTINEL_COST;
                    continue;
                }
                let inv = 1.0 / views as f64;
                mean.iter_mut().for_each(|m| *m *= inv);
                let mut acc = 0.0;
                for (x, m) in reference.iter().zip(&mean) {
                    acc += (x - m) * (x - m);
                }
                for v in volumes {
                    if v.valid[j * n + p] {
                        for (x, m) in v.features(j, p).iter().zip(&mean) {
                            acc += (x - m) * (x - m);
                        }
                    }
                }
                cost_row[p] = acc * inv / c as f64;
            }
        });
    Ok(CostVolume {
        count: d,
        width: w,
        height: h,
        cost,
        valid_views,
    })
}

/// Separable `(2r+1)` box sum along one axis with zero padding.
fn box_sum_1d(src: &[f64], dst: &mut [f64], w: usize, h: usize, r: usize, horizontal: bool) {
    let (outer, inner, stride_outer, stride_inner) = if horizontal { (h, w, w, 1) } else { (w, h, 1, w) };
    for o in 0..outer {
        let base = o * stride_outer;
        for i in 0..inner {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(inner - 1);
            let mut s = 0.0;
            for k in lo..=hi {
                s += src[base + k * stride_inner];
            }
            dst[base + i * stride_inner] = s;
        }
    }
}

/// Spatial box filter of every depth slice, repeated `passes` times. Sentinel
/// cells are left out of the averages and stay sentinel.
pub fn regularize(volume: &CostVolume, radius: usize, passes: usize) -> CostVolume {
    if radius == 0 || passes == 0 {
        return volume.clone();
    }
    let (w, h) = (volume.width, volume.height);
    let n = w * h;
    let mut out = volume.clone();
    out.cost
        .par_chunks_mut(n)
        .zip(volume.valid_views.par_chunks(n))
        .for_each(|(slice, counts)| {
            let mask: Vec<f64> = counts.iter().map(|&c| if c >= 2 { 1.0 } else { 0.0 }).collect();
            let mut weight = vec![0.0; n];
            let mut tmp = vec![0.0; n];
            box_sum_1d(&mask, &mut tmp, w, h, radius, true);
            box_sum_1d(&tmp, &mut weight, w, h, radius, false);
            let mut values = vec![0.0; n];
            for _ in 0..passes {
                let masked: Vec<f64> = slice.iter().zip(&mask).map(|(v, m)| v * m).collect();
                box_sum_1d(&masked, &mut tmp, w, h, radius, true);
                box_sum_1d(&tmp, &mut values, w, h, radius, false);
                for p in 0..n {
                    if mask[p] > 0.0 {
                        slice[p] = values[p] / weight[p];
                    }
                }
            }
        });
    out
}

/// `P(j, x) = softmax_j(-cost(j, x) / temperature)`.
pub fn to_probability(volume: &CostVolume, temperature: f64) -> Result<ProbabilityVolume> {
    if !(temperature > 0.0) {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    let n = volume.width * volume.height;
    let d = volume.count;
    let data = per_pixel_columns(n, d, |p, col| {
        let mut best = f64::NEG_INFINITY;
        for (j, v) in col.iter_mut().enumerate() {
            *v = -volume.cost[j * n + p] / temperature;
            best = best.max(*v);
        }
        let mut sum = 0.0;
        for v in col.iter_mut() {
            *v = (*v - best).exp();
            sum += *v;
        }
        col.iter_mut().for_each(|v| *v /= sum);
    });
    ProbabilityVolume::new(d, volume.width, volume.height, data)
}

fn check_planes(p: &ProbabilityVolume, planes: &HypothesisPlanes) -> Result<()> {
    if planes.count() != p.count {
        return Err(Error::ShapeMismatch(format!(
            "{} probability planes vs {} hypothesis planes",
            p.count,
            planes.count()
        )));
    }
    if let Some(d) = planes.dims() {
        if d != (p.width, p.height) {
            return Err(Error::ShapeMismatch(format!(
                "planes are {d:?}, probabilities are {:?}",
                (p.width, p.height)
            )));
        }
    }
    Ok(())
}

/// Soft argmax `L(x) = sum_j P_j(x) d_j(x)`.
pub fn regress_depth(p: &ProbabilityVolume, planes: &HypothesisPlanes) -> Result<DepthMap> {
    check_planes(p, planes)?;
    let n = p.width * p.height;
    let data: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|px| (0..p.count).map(|j| p.data[j * n + px] * planes.depth(j, px)).sum())
        .collect();
    DepthMap::from_values(p.width, p.height, data)
}

/// `sigma(x) = sqrt(sum_j P_j(x) (d_j(x) - L(x))^2)`.
pub fn sigma_map(p: &ProbabilityVolume, planes: &HypothesisPlanes, depth: &DepthMap) -> Result<SigmaMap> {
    check_planes(p, planes)?;
    if depth.dims() != (p.width, p.height) {
        return Err(Error::ShapeMismatch("depth map does not match probabilities".into()));
    }
    let n = p.width * p.height;
    let data: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|px| {
            let mean = depth.data[px];
            (0..p.count)
                .map(|j| {
                    let dev = planes.depth(j, px) - mean;
                    p.data[j * n + px] * dev * dev
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Map2::from_vec(p.width, p.height, data)
}

/// Probability mass in the 4-plane window `[a - 1, a + 2]` around the argmax
/// plane `a`, clipped to the volume.
pub fn confidence_map(p: &ProbabilityVolume) -> ConfidenceMap {
    let n = p.width * p.height;
    let data: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|px| {
            let mut arg = 0;
            let mut best = f64::NEG_INFINITY;
            for j in 0..p.count {
                let v = p.data[j * n + px];
                if v > best {
                    best = v;
                    arg = j;
                }
            }
            // [arg-1, arg+2], slid inward at the volume ends
            let lo = arg.saturating_sub(1).min(p.count.saturating_sub(CONFIDENCE_WINDOW));
            let hi = (lo + CONFIDENCE_WINDOW).min(p.count);
            (lo..hi).map(|j| p.data[j * n + px]).sum::<f64>().min(1.0)
        })
        .collect();
    Map2 {
        width: p.width,
        height: p.height,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraExtrinsics, CameraIntrinsics};
    use crate::grid::Image;
    use nalgebra::{Matrix3, Vector3};
    use proptest::prelude::*;

    fn view(t: [f64; 3]) -> CameraView {
        CameraView::new(
            CameraIntrinsics::new(100.0, 100.0, 15.5, 7.5).unwrap(),
            CameraExtrinsics::new(Matrix3::identity(), Vector3::from(t)).unwrap(),
            None,
            "v",
        )
        .unwrap()
    }

    fn cost_volume(count: usize, w: usize, h: usize, cost: Vec<f64>) -> CostVolume {
        let valid_views = vec![2; cost.len()];
        CostVolume {
            count,
            width: w,
            height: h,
            cost,
            valid_views,
        }
    }

    #[test]
    fn plane_validation() {
        assert!(HypothesisPlanes::global(vec![1.0, 2.0, 3.0], 1.0).is_ok());
        assert!(HypothesisPlanes::global(vec![1.0, 1.0], 1.0).is_err());
        assert!(HypothesisPlanes::global(vec![1.0, 2.0], 0.0).is_err());
        assert!(HypothesisPlanes::per_pixel(1, 1, 2, vec![2.0, 1.0], vec![1.0]).is_err());
        assert!(HypothesisPlanes::per_pixel(2, 1, 2, vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn self_warp_volume_is_the_source() {
        let src = Image::from_fn(32, 16, 3, |x, y, c| (x * 3 + y * 5 + c) as f64);
        let v = view([0.0; 3]);
        let planes = HypothesisPlanes::global(vec![2.0, 5.0, 9.0], 3.0).unwrap();
        let vol = build_feature_volume(&src, &v, &v, &planes).unwrap();
        assert!(vol.valid.iter().all(|m| *m));
        for j in 0..3 {
            for p in 0..32 * 16 {
                assert_eq!(vol.features(j, p), src.pixel(p % 32, p / 32));
            }
        }
    }

    #[test]
    fn true_plane_aligns_census_bits() {
        // rectified pair: source sees the scene shifted by f*b/d = 100*0.4/10 = 4 px
        let (w, h) = (32, 16);
        let scene = |x: f64, y: f64| ((x * 0.9).sin() + (y * 1.3).cos() * 0.5 + (x * y * 0.07).sin()) * 0.5;
        let reference = Image::from_fn(w, h, 1, |x, y, _| scene(x as f64, y as f64));
        let source = Image::from_fn(w, h, 1, |x, y, _| scene(x as f64 - 4.0, y as f64));
        let fr = crate::features::extract_features(&reference, 5).unwrap();
        let fs = crate::features::extract_features(&source, 5).unwrap();
        let planes = HypothesisPlanes::global(vec![10.0], 1.0).unwrap();
        let vol = build_feature_volume(&fs, &view([0.0; 3]), &view([0.4, 0.0, 0.0]), &planes).unwrap();
        // interior pixels whose census windows are unaffected by borders
        for y in 2..h - 2 {
            for x in 2..w - 8 {
                let p = y * w + x;
                assert!(vol.valid[p]);
                let warped = vol.features(0, p);
                let reff = fr.pixel(x, y);
                for b in 3..fr.channels {
                    assert_eq!(warped[b] > 0.0, reff[b] > 0.0, "census bit {b} at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn zero_depth_plane_is_rejected() {
        let src = Image::zeros(8, 8, 1);
        let planes = HypothesisPlanes::global(vec![0.0, 1.0], 1.0).unwrap();
        let err = build_feature_volume(&src, &view([0.0; 3]), &view([1.0, 0.0, 0.0]), &planes);
        assert!(matches!(err, Err(Error::NonPositiveDepth(_))));
    }

    #[test]
    fn per_pixel_resolution_is_checked() {
        let src = Image::zeros(8, 8, 1);
        let planes = HypothesisPlanes::per_pixel(4, 4, 1, vec![1.0; 16], vec![1.0; 16]).unwrap();
        let err = build_feature_volume(&src, &view([0.0; 3]), &view([1.0, 0.0, 0.0]), &planes);
        assert!(matches!(err, Err(Error::ResolutionMismatch { .. })));
    }

    fn one_channel_volume(values: Vec<f64>, valid: Vec<bool>) -> FeatureVolume {
        FeatureVolume {
            count: 1,
            width: values.len(),
            height: 1,
            channels: 1,
            data: values,
            valid,
        }
    }

    #[test]
    fn variance_examples() {
        let reference = Image::from_vec(2, 1, 1, vec![0.0, 3.0]).unwrap();
        let same = one_channel_volume(vec![0.0, 3.0], vec![true, true]);
        let c = aggregate_variance(&reference, &[same.clone(), same]).unwrap();
        assert_eq!(c.cost, vec![0.0, 0.0]);

        let reference = Image::from_vec(1, 1, 1, vec![0.0]).unwrap();
        let two = one_channel_volume(vec![2.0], vec![true]);
        let c = aggregate_variance(&reference, &[two]).unwrap();
        assert_eq!(c.cost, vec![1.0]);
        assert_eq!(c.valid_views, vec![2]);

        let missing = one_channel_volume(vec![0.0], vec![false]);
        let c = aggregate_variance(&reference, &[missing]).unwrap();
        assert_eq!(c.cost, vec![SENTINEL_COST]);
        assert_eq!(c.valid_views, vec![1]);
        assert!(!c.pixel_validity()[0]);

        assert!(matches!(aggregate_variance(&reference, &[]), Err(Error::NoSourceViews)));
    }

    #[test]
    fn regularize_examples() {
        let c = cost_volume(1, 5, 5, (0..25).map(|v| v as f64).collect());
        assert_eq!(regularize(&c, 0, 3), c);

        let flat = cost_volume(2, 6, 4, vec![0.7; 48]);
        let r = regularize(&flat, 2, 2);
        assert!(r.cost.iter().all(|v| (v - 0.7).abs() < 1e-15));

        let mut impulse = vec![0.0; 49];
        impulse[3 * 7 + 3] = 9.0;
        let r = regularize(&cost_volume(1, 7, 7, impulse.clone()), 1, 1);
        // direct convolution oracle over the in-bounds neighborhood
        for y in 0..7i32 {
            for x in 0..7i32 {
                let mut s = 0.0;
                let mut n = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (xx, yy) = (x + dx, y + dy);
                        if (0..7).contains(&xx) && (0..7).contains(&yy) {
                            s += impulse[(yy * 7 + xx) as usize];
                            n += 1.0;
                        }
                    }
                }
                assert!((r.cost[(y * 7 + x) as usize] - s / n).abs() < 1e-12);
            }
        }
        assert_eq!(r.cost[3 * 7 + 3], 1.0);
    }

    #[test]
    fn regularize_excludes_sentinels() {
        let mut c = cost_volume(1, 3, 1, vec![1.0, SENTINEL_COST, 3.0]);
        c.valid_views[1] = 1;
        let r = regularize(&c, 1, 1);
        assert_eq!(r.cost, vec![1.0, SENTINEL_COST, 3.0]);
        let r = regularize(&c, 2, 1);
        assert_eq!(r.cost, vec![2.0, SENTINEL_COST, 2.0]);
    }

    #[test]
    fn softmax_examples() {
        let p = to_probability(&cost_volume(4, 1, 1, vec![0.3; 4]), 1.0).unwrap();
        assert!(p.data.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let p = to_probability(&cost_volume(2, 1, 1, vec![0.0, 1.0]), 1.0).unwrap();
        // 1 / (1 + e^-1)
        assert!((p.data[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((p.data[1] - 0.2689414213699951).abs() < 1e-12);
        assert!(matches!(
            to_probability(&cost_volume(2, 1, 1, vec![0.0, 1.0]), 0.0),
            Err(Error::NonPositiveTemperature(_))
        ));
        let p = to_probability(&cost_volume(2, 1, 1, vec![0.0, SENTINEL_COST]), 1.0).unwrap();
        assert_eq!(p.data[1], 0.0);
    }

    fn prob(values: &[f64]) -> ProbabilityVolume {
        ProbabilityVolume::new(values.len(), 1, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn regression_examples() {
        let planes = HypothesisPlanes::global(vec![1.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(regress_depth(&prob(&[0.0, 0.0, 1.0]), &planes).unwrap().data, vec![3.0]);
        assert_eq!(
            regress_depth(&prob(&[0.25, 0.5, 0.25]), &planes).unwrap().data,
            vec![2.0]
        );
        let planes = HypothesisPlanes::global(vec![10.0, 20.0, 30.0], 10.0).unwrap();
        let l = regress_depth(&prob(&[0.1, 0.2, 0.7]), &planes).unwrap();
        assert!((l.data[0] - 26.0).abs() < 1e-12);
        assert!(matches!(
            regress_depth(&prob(&[0.5, 0.5]), &planes),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn sigma_examples() {
        let planes = HypothesisPlanes::global(vec![0.0, 1.0, 2.0], 1.0).unwrap();
        let one_hot = prob(&[0.0, 1.0, 0.0]);
        let l = regress_depth(&one_hot, &planes).unwrap();
        assert_eq!(sigma_map(&one_hot, &planes, &l).unwrap().data, vec![0.0]);

        let third = 1.0 / 3.0;
        let uniform = prob(&[third, third, third]);
        let l = DepthMap::constant(1, 1, 1.0);
        let s = sigma_map(&uniform, &planes, &l).unwrap();
        assert!((s.data[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);

        let planes = HypothesisPlanes::global(vec![1.0, 3.0], 2.0).unwrap();
        let s = sigma_map(&prob(&[0.5, 0.5]), &planes, &DepthMap::constant(1, 1, 2.0)).unwrap();
        assert_eq!(s.data, vec![1.0]);
        assert!(sigma_map(&prob(&[0.5, 0.5]), &planes, &DepthMap::constant(2, 1, 2.0)).is_err());
    }

    #[test]
    fn confidence_examples() {
        let c = confidence_map(&prob(&[0.0, 0.0, 1.0, 0.0]));
        assert_eq!(c.data, vec![1.0]);
        let c = confidence_map(&prob(&[1.0 / 16.0; 16]));
        assert!((c.data[0] - 0.25).abs() < 1e-15);
        let c = confidence_map(&prob(&[0.5, 0.5]));
        assert_eq!(c.data, vec![1.0]);
    }

    proptest! {
        #[test]
        fn probabilities_normalize_and_regression_is_convex(
            costs in proptest::collection::vec(0.0f64..50.0, 12),
            t in 0.01f64..10.0,
            shift in -100.0f64..100.0,
        ) {
            let c = cost_volume(6, 2, 1, costs.clone());
            let p = to_probability(&c, t).unwrap();
            for px in 0..2 {
                let s: f64 = (0..6).map(|j| p.at(j, px)).sum();
                prop_assert!((s - 1.0).abs() < 1e-6);
            }
            let shifted = cost_volume(6, 2, 1, costs.iter().map(|v| v + shift).collect());
            let q = to_probability(&shifted, t).unwrap();
            for (a, b) in p.data.iter().zip(&q.data) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let planes = HypothesisPlanes::global(vec![1.0, 1.5, 2.5, 4.0, 4.1, 9.0], 0.5).unwrap();
            let l = regress_depth(&p, &planes).unwrap();
            for v in &l.data {
                prop_assert!(*v >= 1.0 - 1e-12 && *v <= 9.0 + 1e-12);
            }
            let conf = confidence_map(&p);
            for v in &conf.data {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }

        #[test]
        fn variance_is_permutation_invariant(
            refv in proptest::collection::vec(-3.0f64..3.0, 6),
            a in proptest::collection::vec(-3.0f64..3.0, 6),
            b in proptest::collection::vec(-3.0f64..3.0, 6),
            c in proptest::collection::vec(-3.0f64..3.0, 6),
            mask in proptest::collection::vec(any::<bool>(), 3),
        ) {
            let reference = Image::from_vec(3, 1, 2, refv).unwrap();
            let vol = |data: Vec<f64>, m: bool| FeatureVolume {
                count: 1, width: 3, height: 1, channels: 2, data,
                valid: vec![m, true, !m],
            };
            let va = vol(a, mask[0]);
            let vb = vol(b, mask[1]);
            let vc = vol(c, mask[2]);
            let x = aggregate_variance(&reference, &[va.clone(), vb.clone(), vc.clone()]).unwrap();
            let y = aggregate_variance(&reference, &[vc, va, vb]).unwrap();
            for (p, q) in x.cost.iter().zip(&y.cost) {
                prop_assert!((p - q).abs() < 1e-12);
            }
            prop_assert_eq!(x.valid_views, y.valid_views);
        }
    }
}
