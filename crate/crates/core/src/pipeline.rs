//! Four-stage coarse-to-fine depth inference: a fixed all-pixel range, an
//! adjusted all-pixel range, then two stages of per-pixel adaptive
//! intervals.

use std::time::Instant;

use log::debug;
use rayon::prelude::*;

use crate::adia::{
    adjust_planes, equal_partition_pixelwise, equal_partition_range, offsets, pixelwise_range, sigma_floor, OffsetMode,
};
use crate::adrp::{
    adjust_range_with, calibrate_scalars, range_extremes, robust_extremes, CalibrationScene, DepthRange, RangeScalars,
};
use crate::config::{PipelineConfig, RangeSource, StageConfig};
use crate::cost_volume::{
    aggregate_variance, build_feature_volume, confidence_map, regress_depth, regularize, sigma_map, to_probability,
    HypothesisPlanes,
};
use crate::error::{Error, Result};
use crate::features::{build_pyramid, FeatureMap, FeaturePyramid, COARSEST_FACTOR, PYRAMID_LEVELS};
use crate::geometry::CameraView;
use crate::grid::{crop_map, upsample_depth, upsample_map, ConfidenceMap, DepthMap, Map2, SigmaMap};
use crate::io::SceneBundle;

/// Shared inputs of one stage, all at the stage resolution.
pub struct StageInputs<'a> {
    pub level: usize,
    pub reference: &'a FeatureMap,
    pub sources: Vec<&'a FeatureMap>,
    pub ref_view: CameraView,
    pub src_views: Vec<CameraView>,
    /// Size of the unpadded image at this level; pixels beyond it are
    /// padding and never valid.
    pub active: (usize, usize),
}

/// Range settings that do not vary per stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSettings {
    pub initial: DepthRange,
    pub scalars: RangeScalars,
    pub mode: OffsetMode,
    pub robust_extremes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutput {
    pub level: usize,
    pub planes: HypothesisPlanes,
    /// All-pixel range in force at this stage.
    pub range: DepthRange,
    pub depth: DepthMap,
    pub sigma: SigmaMap,
    pub confidence: ConfidenceMap,
    /// Largest plane probability per pixel.
    pub peak: Map2,
}

impl StageOutput {
    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }
}

/// Replaces invalid depths by the range centre with a range-wide sigma so
/// every pixel has a usable prior.
fn fill_invalid(depth: &DepthMap, sigma: &SigmaMap, range: &DepthRange) -> (DepthMap, SigmaMap) {
    let mut d = depth.clone();
    let mut s = sigma.clone();
    for i in 0..d.data.len() {
        if !d.valid[i] {
            d.data[i] = 0.5 * (range.d_min + range.d_max);
            d.valid[i] = true;
            s.data[i] = 0.5 * range.length();
        }
    }
    (d, s)
}

fn stage_planes(
    cfg: &StageConfig,
    dims: (usize, usize),
    prev: Option<&StageOutput>,
    settings: &RangeSettings,
) -> Result<(HypothesisPlanes, DepthRange)> {
    match cfg.range_source {
        RangeSource::Fixed => Ok((equal_partition_range(&settings.initial, cfg.planes)?, settings.initial)),
        RangeSource::Adrp => {
            let prev = prev.ok_or(Error::MissingPreviousStage(0))?;
            let extremes = if settings.robust_extremes > 0.0 {
                robust_extremes(&prev.depth, settings.robust_extremes)?
            } else {
                range_extremes(&prev.depth)?
            };
            let range = adjust_range_with(&extremes, &prev.depth, &prev.sigma, settings.scalars)?;
            Ok((equal_partition_range(&range, cfg.planes)?, range))
        }
        RangeSource::Adia | RangeSource::PixelEqual => {
            let prev = prev.ok_or(Error::MissingPreviousStage(0))?;
            let (w, h) = dims;
            let (depth, sigma) = if prev.dims() == dims {
                (prev.depth.clone(), prev.sigma.clone())
            } else {
                (upsample_depth(&prev.depth, w, h), upsample_map(&prev.sigma, w, h))
            };
            let (depth, sigma) = fill_invalid(&depth, &sigma, &prev.range);
            let floor = sigma_floor(prev.planes.mean_interval());
            let ranges = pixelwise_range(&depth, &sigma, &prev.range, floor)?;
            let equal = equal_partition_pixelwise(&ranges, cfg.planes)?;
            let planes = if cfg.range_source == RangeSource::Adia {
                let floored = Map2 {
                    width: w,
                    height: h,
                    data: sigma.data.iter().map(|s| s.max(floor)).collect(),
                };
                adjust_planes(&equal, &offsets(&equal, &depth, &floored, settings.mode)?)?
            } else {
                equal
            };
            Ok((planes, prev.range))
        }
    }
}

/// Runs one stage: hypothesis placement, plane sweep, variance cost,
/// regularization, softmax and regression.
pub fn run_stage(
    cfg: &StageConfig,
    inputs: &StageInputs,
    prev: Option<&StageOutput>,
    settings: &RangeSettings,
) -> Result<StageOutput> {
    let dims = inputs.reference.dims();
    let (planes, range) = stage_planes(cfg, dims, prev, settings).map_err(|e| match e {
        Error::MissingPreviousStage(_) => Error::MissingPreviousStage(inputs.level + 1),
        other => other,
    })?;
    if inputs.sources.is_empty() || inputs.sources.len() != inputs.src_views.len() {
        return Err(Error::NoSourceViews);
    }
    let volumes = inputs
        .sources
        .iter()
        .zip(&inputs.src_views)
        .map(|(src, view)| build_feature_volume(src, &inputs.ref_view, view, &planes))
        .collect::<Result<Vec<_>>>()?;
    let cost = aggregate_variance(inputs.reference, &volumes)?;
    drop(volumes);
    let cost = regularize(&cost, cfg.reg_radius, cfg.reg_passes);
    let prob = to_probability(&cost, cfg.temperature)?;
    let mut depth = regress_depth(&prob, &planes)?;
    let sigma = sigma_map(&prob, &planes, &depth)?;
    let confidence = confidence_map(&prob);
    let n = dims.0 * dims.1;
    let peak = Map2 {
        width: dims.0,
        height: dims.1,
        data: (0..n)
            .into_par_iter()
            .map(|p| (0..prob.count).map(|j| prob.data[j * n + p]).fold(0.0, f64::max))
            .collect(),
    };
    let seen = cost.pixel_validity();
    for (i, valid) in depth.valid.iter_mut().enumerate() {
        let (x, y) = (i % dims.0, i / dims.0);
        *valid = seen[i] && x < inputs.active.0 && y < inputs.active.1;
    }
    debug!(
        "stage {}: {} planes in [{:.4}, {:.4}], {} valid pixels",
        inputs.level + 1,
        planes.count(),
        planes.min_depth(),
        planes.max_depth(),
        depth.valid_count()
    );
    Ok(StageOutput {
        level: inputs.level,
        planes,
        range,
        depth,
        sigma,
        confidence,
        peak,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewReconstruction {
    pub reference: usize,
    /// Full-resolution results cropped to the input size.
    pub depth: DepthMap,
    pub confidence: ConfidenceMap,
    pub stages: Vec<StageOutput>,
    /// Wall time of each stage in milliseconds; not part of the result.
    pub stage_millis: Vec<f64>,
}

fn initial_range(view: &CameraView, cfg: &PipelineConfig) -> Result<DepthRange> {
    match (cfg.depth_range, view.depth_hint) {
        (Some(r), _) => Ok(r),
        (None, Some((lo, hi))) => DepthRange::new(lo, hi),
        (None, None) => Err(Error::InvalidConfig(format!(
            "view {} has no depth hint and no depth range is configured",
            view.image_id
        ))),
    }
}

pub fn build_pyramids(scene: &SceneBundle, cfg: &PipelineConfig) -> Result<Vec<FeaturePyramid>> {
    scene
        .images
        .par_iter()
        .map(|img| build_pyramid(img, cfg.census_window))
        .collect()
}

/// The first `count` stages for one reference view over precomputed
/// pyramids. Useful when only the coarse output is needed.
pub fn run_stages(
    scene: &SceneBundle,
    pyramids: &[FeaturePyramid],
    reference: usize,
    cfg: &PipelineConfig,
    count: usize,
) -> Result<(Vec<StageOutput>, Vec<f64>)> {
    if scene.len() < 2 {
        return Err(Error::InsufficientViews(scene.len()));
    }
    let mut sources = scene.sources_for(reference);
    if cfg.max_sources > 0 {
        sources.truncate(cfg.max_sources);
    }
    if sources.is_empty() {
        return Err(Error::NoSourceViews);
    }
    let settings = RangeSettings {
        initial: initial_range(&scene.views[reference], cfg)?,
        scalars: cfg.scalars,
        mode: cfg.adia_mode,
        robust_extremes: cfg.robust_extremes,
    };
    let (ow, oh) = pyramids[reference].original;
    let mut stages: Vec<StageOutput> = Vec::with_capacity(PYRAMID_LEVELS);
    let mut millis = Vec::with_capacity(PYRAMID_LEVELS);
    for (k, stage_cfg) in cfg.stages.iter().enumerate().take(count) {
        let start = Instant::now();
        let factor = FeaturePyramid::factor(k);
        let inputs = StageInputs {
            level: k,
            reference: pyramids[reference].level(k),
            sources: sources.iter().map(|&s| pyramids[s].level(k)).collect(),
            ref_view: scene.views[reference].downscaled(factor),
            src_views: sources.iter().map(|&s| scene.views[s].downscaled(factor)).collect(),
            active: (ow.div_ceil(factor), oh.div_ceil(factor)),
        };
        let out = run_stage(stage_cfg, &inputs, stages.last(), &settings)?;
        stages.push(out);
        millis.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok((stages, millis))
}

/// All four stages for one reference view over precomputed pyramids.
pub fn reconstruct_view(
    scene: &SceneBundle,
    pyramids: &[FeaturePyramid],
    reference: usize,
    cfg: &PipelineConfig,
) -> Result<ViewReconstruction> {
    let (stages, stage_millis) = run_stages(scene, pyramids, reference, cfg, PYRAMID_LEVELS)?;
    let (ow, oh) = pyramids[reference].original;
    let last = stages.last().expect("four stages ran");
    Ok(ViewReconstruction {
        reference,
        depth: last.depth.crop(ow, oh),
        confidence: crop_map(&last.confidence, ow, oh),
        stages,
        stage_millis,
    })
}

/// Reconstructs every view (or the listed ones) as a reference.
pub fn reconstruct(
    scene: &SceneBundle,
    cfg: &PipelineConfig,
    references: Option<&[usize]>,
) -> Result<Vec<ViewReconstruction>> {
    if scene.len() < 2 {
        return Err(Error::InsufficientViews(scene.len()));
    }
    cfg.validate()?;
    let pyramids = build_pyramids(scene, cfg)?;
    let all: Vec<usize> = (0..scene.len()).collect();
    let refs = references.unwrap_or(&all);
    if let Some(bad) = refs.iter().find(|r| **r >= scene.len()) {
        return Err(Error::InvalidConfig(format!("reference view {bad} out of range")));
    }
    refs.par_iter()
        .map(|&r| reconstruct_view(scene, &pyramids, r, cfg))
        .collect()
}

/// Smallest and largest valid ground-truth depth.
pub fn gt_range(gt: &DepthMap) -> Result<DepthRange> {
    let e = range_extremes(gt)?;
    DepthRange::new(e.min_value, e.max_value)
}

/// Stage-1 output of one view paired with its true depth range, as a
/// sample for fitting the range scalars.
pub fn calibration_sample(
    scene: &SceneBundle,
    pyramids: &[FeaturePyramid],
    reference: usize,
    cfg: &PipelineConfig,
) -> Result<CalibrationScene> {
    let gt = scene
        .gt_depths
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("calibration scenes need ground-truth depth".into()))?;
    let truth = gt_range(&gt[reference])?;
    let (mut stages, _) = run_stages(scene, pyramids, reference, cfg, 1)?;
    let s1 = stages.pop().expect("one stage ran");
    Ok(CalibrationScene {
        depth: s1.depth,
        sigma: s1.sigma,
        truth,
    })
}

/// Fits the range scalars on every view of every scene.
pub fn calibrate_on_scenes(scenes: &[SceneBundle], cfg: &PipelineConfig) -> Result<RangeScalars> {
    let mut samples = Vec::new();
    for scene in scenes {
        let pyramids = build_pyramids(scene, cfg)?;
        let batch = (0..scene.len())
            .into_par_iter()
            .map(|r| calibration_sample(scene, &pyramids, r, cfg))
            .collect::<Result<Vec<_>>>()?;
        samples.extend(batch);
    }
    calibrate_scalars(&samples)
}

/// Ground truth at each stage resolution: edge-padded to the pyramid grid,
/// then block means of the valid pixels. Coarsest first.
pub fn gt_pyramid(gt: &DepthMap) -> Vec<DepthMap> {
    let (pw, ph) = crate::features::padded_dims(gt.width, gt.height);
    let mut padded = DepthMap::new(pw, ph, vec![0.0; pw * ph], vec![false; pw * ph]).expect("sizes match");
    for y in 0..ph {
        for x in 0..pw {
            let src = y.min(gt.height - 1) * gt.width + x.min(gt.width - 1);
            padded.data[y * pw + x] = gt.data[src];
            padded.valid[y * pw + x] = gt.valid[src];
        }
    }
    (0..PYRAMID_LEVELS)
        .map(|k| {
            let f = COARSEST_FACTOR >> k;
            let (w, h) = (pw / f, ph / f);
            let mut out = DepthMap::new(w, h, vec![0.0; w * h], vec![false; w * h]).expect("sizes match");
            for y in 0..h {
                for x in 0..w {
                    let (mut sum, mut n) = (0.0, 0usize);
                    for yy in y * f..(y + 1) * f {
                        for xx in x * f..(x + 1) * f {
                            let i = yy * pw + xx;
                            if padded.valid[i] {
                                sum += padded.data[i];
                                n += 1;
                            }
                        }
                    }
                    if n > 0 {
                        out.data[y * w + x] = sum / n as f64;
                        out.valid[y * w + x] = true;
                    }
                }
            }
            out
        })
        .collect()
}

/// Mean absolute error over pixels valid in both maps; `None` when none are.
pub fn mean_abs_error(pred: &DepthMap, gt: &DepthMap) -> Result<Option<f64>> {
    if pred.dims() != gt.dims() {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {:?}, ground truth is {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..pred.data.len() {
        if pred.valid[i] && gt.valid[i] {
            sum += (pred.data[i] - gt.data[i]).abs();
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// `sum_i lambda_i * mean_x |L_i(x) - L*_i(x)|` over the stages.
pub fn stage_metric(outputs: &[StageOutput], gt: &[DepthMap], weights: &[f64]) -> Result<f64> {
    if outputs.len() != gt.len() || outputs.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} stages, {} ground-truth levels, {} weights",
            outputs.len(),
            gt.len(),
            weights.len()
        )));
    }
    let mut total = 0.0;
    for ((out, g), w) in outputs.iter().zip(gt).zip(weights) {
        total += w * mean_abs_error(&out.depth, g)?.unwrap_or(0.0);
    }
    Ok(total)
}

/// Bilinear upsampling of a stage depth to `factor` times its size by
/// repeated doubling, cropped to `width x height`.
pub fn upsample_to(depth: &DepthMap, factor: usize, width: usize, height: usize) -> DepthMap {
    let mut d = depth.clone();
    let mut f = 1;
    while f < factor {
        d = upsample_depth(&d, d.width * 2, d.height * 2);
        f *= 2;
    }
    d.crop(width, height)
}
