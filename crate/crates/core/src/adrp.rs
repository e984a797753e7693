//! Adaptive all-pixel depth range: the coarse depth map's extremes pushed
//! outwards by scalar multiples of their standard deviation, plus the range
//! overlap metrics used to judge a range against ground truth.

use crate::error::{Error, Result};
use crate::grid::{DepthMap, SigmaMap};

/// Lower bound applied to every predicted `d_min`.
pub const DEPTH_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRange {
    pub d_min: f64,
    pub d_max: f64,
}

impl DepthRange {
    pub fn new(d_min: f64, d_max: f64) -> Result<Self> {
        if !(d_min > 0.0 && d_min < d_max) || !d_max.is_finite() {
            return Err(Error::DegenerateRange(d_min, d_max));
        }
        Ok(Self { d_min, d_max })
    }

    pub fn length(&self) -> f64 {
        self.d_max - self.d_min
    }

    /// Range of the valid entries of a (ground-truth) depth map.
    pub fn of_depth_map(depth: &DepthMap) -> Result<Self> {
        let e = range_extremes(depth)?;
        Self::new(e.min_value, e.max_value)
    }
}

/// Multipliers on sigma at the extreme pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeScalars {
    pub alpha_dr: f64,
    pub beta_dr: f64,
}

impl Default for RangeScalars {
    fn default() -> Self {
        Self {
            alpha_dr: -1.0,
            beta_dr: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub min_pos: (usize, usize),
    pub max_pos: (usize, usize),
    pub min_value: f64,
    pub max_value: f64,
}

/// Positions and values of the smallest and largest valid depth. Ties go to
/// the first occurrence in row-major order.
pub fn range_extremes(depth: &DepthMap) -> Result<Extremes> {
    let mut best: Option<(usize, usize)> = None;
    for (i, (&v, &ok)) in depth.data.iter().zip(&depth.valid).enumerate() {
        if !ok {
            continue;
        }
        best = Some(match best {
            None => (i, i),
            Some((lo, hi)) => (
                if v < depth.data[lo] { i } else { lo },
                if v > depth.data[hi] { i } else { hi },
            ),
        });
    }
    let (lo, hi) = best.ok_or(Error::EmptyDepthMap)?;
    let w = depth.width;
    Ok(Extremes {
        min_pos: (lo % w, lo / w),
        max_pos: (hi % w, hi / w),
        min_value: depth.data[lo],
        max_value: depth.data[hi],
    })
}

/// Like [`range_extremes`] but skipping the lowest and highest `fraction`
/// of valid pixels (rounded down), to resist isolated outliers.
pub fn robust_extremes(depth: &DepthMap, fraction: f64) -> Result<Extremes> {
    let mut order: Vec<usize> = (0..depth.data.len()).filter(|&i| depth.valid[i]).collect();
    if order.is_empty() {
        return Err(Error::EmptyDepthMap);
    }
    order.sort_by(|&a, &b| depth.data[a].total_cmp(&depth.data[b]).then(a.cmp(&b)));
    let skip = ((order.len() as f64) * fraction).floor() as usize;
    let skip = skip.min((order.len() - 1) / 2);
    let lo = order[skip];
    let hi = order[order.len() - 1 - skip];
    let w = depth.width;
    Ok(Extremes {
        min_pos: (lo % w, lo / w),
        max_pos: (hi % w, hi / w),
        min_value: depth.data[lo],
        max_value: depth.data[hi],
    })
}

fn sigma_at(sigma: &SigmaMap, pos: (usize, usize)) -> f64 {
    sigma.at(pos.0, pos.1)
}

/// `d_min = L(x_min) + alpha * sigma(x_min)`, `d_max = L(x_max) + beta * sigma(x_max)`.
pub fn adjust_range(depth: &DepthMap, sigma: &SigmaMap, scalars: RangeScalars) -> Result<DepthRange> {
    adjust_range_with(&range_extremes(depth)?, depth, sigma, scalars)
}

pub fn adjust_range_with(
    extremes: &Extremes,
    depth: &DepthMap,
    sigma: &SigmaMap,
    scalars: RangeScalars,
) -> Result<DepthRange> {
    if sigma.dims() != depth.dims() {
        return Err(Error::ShapeMismatch("sigma map does not match depth map".into()));
    }
    let s_min = sigma_at(sigma, extremes.min_pos);
    let s_max = sigma_at(sigma, extremes.max_pos);
    let d_min = (extremes.min_value + scalars.alpha_dr * s_min).max(DEPTH_FLOOR);
    let d_max = extremes.max_value + scalars.beta_dr * s_max;
    if !(d_min < d_max) {
        return Err(Error::DegenerateRange(d_min, d_max));
    }
    Ok(DepthRange { d_min, d_max })
}

/// One calibration sample: coarse depth, its sigma map and the true range.
#[derive(Debug, Clone)]
pub struct CalibrationScene {
    pub depth: DepthMap,
    pub sigma: SigmaMap,
    pub truth: DepthRange,
}

/// Least-squares fit of the two scalars. Each decouples into a 1-D problem
/// with the closed form `alpha = sum(s_i r_i) / sum(s_i^2)` where `r_i` is the
/// residual between truth and the coarse extreme.
pub fn calibrate_scalars(scenes: &[CalibrationScene]) -> Result<RangeScalars> {
    if scenes.is_empty() {
        return Err(Error::InsufficientData("no calibration scenes".into()));
    }
    let (mut sa, mut saa, mut sb, mut sbb) = (0.0, 0.0, 0.0, 0.0);
    for scene in scenes {
        let e = range_extremes(&scene.depth)?;
        let s_min = sigma_at(&scene.sigma, e.min_pos);
        let s_max = sigma_at(&scene.sigma, e.max_pos);
        sa += s_min * (scene.truth.d_min - e.min_value);
        saa += s_min * s_min;
        sb += s_max * (scene.truth.d_max - e.max_value);
        sbb += s_max * s_max;
    }
    if !(saa > 0.0) || !(sbb > 0.0) {
        return Err(Error::InsufficientData(
            "sigma vanishes at every calibration extreme".into(),
        ));
    }
    Ok(RangeScalars {
        alpha_dr: sa / saa,
        beta_dr: sb / sbb,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapReport {
    pub aog: f64,
    pub aos: f64,
    pub f_score: f64,
}

/// Fraction of the ground-truth range covered (AOG) and fraction of the
/// candidate range that is useful (AOS).
pub fn overlap_metrics(truth: &DepthRange, candidate: &DepthRange) -> OverlapReport {
    let inter = (truth.d_max.min(candidate.d_max) - truth.d_min.max(candidate.d_min)).max(0.0);
    let aog = (inter / truth.length()).clamp(0.0, 1.0);
    let aos = (inter / candidate.length()).clamp(0.0, 1.0);
    let f_score = if aog > 0.0 && aos > 0.0 {
        2.0 * aog * aos / (aog + aos)
    } else {
        0.0
    };
    OverlapReport { aog, aos, f_score }
}
