//! Pipeline settings and their plain-text `key = value` form.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::adia::OffsetMode;
use crate::adrp::{DepthRange, RangeScalars};
use crate::error::{Error, Result};
use crate::features::{DEFAULT_CENSUS_WINDOW, PYRAMID_LEVELS};
use crate::fusion::ConsistencyThresholds;

/// How a stage places its depth hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeSource {
    /// Equal partition of the initial all-pixel range.
    Fixed,
    /// Equal partition of the range adjusted from the previous stage.
    Adrp,
    /// Per-pixel range around the previous depth, equal partition, then
    /// offset-adjusted intervals.
    Adia,
    /// Per-pixel range and equal partition without offsets.
    PixelEqual,
}

impl FromStr for RangeSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(RangeSource::Fixed),
            "adrp" => Ok(RangeSource::Adrp),
            "adia" => Ok(RangeSource::Adia),
            "pixel_equal" => Ok(RangeSource::PixelEqual),
            other => Err(Error::InvalidConfig(format!("unknown range source `{other}`"))),
        }
    }
}

impl std::fmt::Display for RangeSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RangeSource::Fixed => "fixed",
            RangeSource::Adrp => "adrp",
            RangeSource::Adia => "adia",
            RangeSource::PixelEqual => "pixel_equal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageConfig {
    pub planes: usize,
    pub range_source: RangeSource,
    pub temperature: f64,
    pub reg_radius: usize,
    pub reg_passes: usize,
}

pub const DEFAULT_PLANES: [usize; PYRAMID_LEVELS] = [16, 64, 16, 8];
pub const DEFAULT_STAGE_WEIGHTS: [f64; PYRAMID_LEVELS] = [0.5, 1.0, 1.5, 2.0];
/// Softmax temperatures in units of the normalized feature variance.
/// The warmer second stage widens its sigma, which sets the search span of
/// the adaptive stages after it.
pub const DEFAULT_TEMPERATURES: [f64; PYRAMID_LEVELS] = [0.05, 0.1, 0.05, 0.02];
pub const DEFAULT_REG_RADII: [usize; PYRAMID_LEVELS] = [1; PYRAMID_LEVELS];
pub const DEFAULT_REG_PASSES: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub stages: [StageConfig; PYRAMID_LEVELS],
    /// Overrides the camera depth hints for the first stage when set.
    pub depth_range: Option<DepthRange>,
    pub scalars: RangeScalars,
    pub adia_mode: OffsetMode,
    pub census_window: usize,
    /// Trim this fraction from each end when locating the depth extremes;
    /// 0 uses the literal minimum and maximum.
    pub robust_extremes: f64,
    /// Use at most this many ranked sources per reference; 0 means all.
    pub max_sources: usize,
    pub stage_weights: [f64; PYRAMID_LEVELS],
    pub fusion: ConsistencyThresholds,
    /// 0 picks half the pixel footprint at the median depth.
    pub merge_radius: f64,
    pub seed: u64,
    /// 0 lets the thread pool decide.
    pub threads: usize,
    /// Scene directories with ground truth used to fit the range scalars.
    pub calibration_scenes: Vec<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sources = [
            RangeSource::Fixed,
            RangeSource::Adrp,
            RangeSource::Adia,
            RangeSource::Adia,
        ];
        Self {
            stages: std::array::from_fn(|k| StageConfig {
                planes: DEFAULT_PLANES[k],
                range_source: sources[k],
                temperature: DEFAULT_TEMPERATURES[k],
                reg_radius: DEFAULT_REG_RADII[k],
                reg_passes: DEFAULT_REG_PASSES,
            }),
            depth_range: None,
            scalars: RangeScalars::default(),
            adia_mode: OffsetMode::ZScore,
            census_window: DEFAULT_CENSUS_WINDOW,
            robust_extremes: 0.0,
            max_sources: 0,
            stage_weights: DEFAULT_STAGE_WEIGHTS,
            fusion: ConsistencyThresholds::default(),
            merge_radius: 0.0,
            seed: 0,
            threads: 0,
            calibration_scenes: Vec::new(),
        }
    }
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value for `{key}`: {value:?}")))
}

/// One value applies to every stage; otherwise exactly one per stage.
fn parse_stages<T: FromStr + Copy>(key: &str, value: &str) -> Result<[T; PYRAMID_LEVELS]> {
    let items: Vec<T> = value.split(',').map(|v| parse_one(key, v)).collect::<Result<_>>()?;
    match items.len() {
        1 => Ok([items[0]; PYRAMID_LEVELS]),
        PYRAMID_LEVELS => Ok(std::array::from_fn(|k| items[k])),
        n => Err(Error::InvalidConfig(format!(
            "`{key}` needs 1 or {PYRAMID_LEVELS} values, got {n}"
        ))),
    }
}

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub const KEYS: &[&str] = &[
    "planes",
    "range_sources",
    "temperatures",
    "reg_radius",
    "reg_passes",
    "depth_min",
    "depth_max",
    "alpha",
    "beta",
    "adia_mode",
    "census_window",
    "robust_extremes",
    "max_sources",
    "stage_weights",
    "max_reproj_err",
    "max_rel_depth_diff",
    "min_consistent_views",
    "min_confidence",
    "merge_radius",
    "seed",
    "threads",
    "calibration_scenes",
];

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "planes" => {
                let v: [usize; PYRAMID_LEVELS] = parse_stages(key, value)?;
                for (s, p) in self.stages.iter_mut().zip(v) {
                    s.planes = p;
                }
            }
            "range_sources" => {
                let v: Vec<RangeSource> = value.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?;
                if v.len() != PYRAMID_LEVELS {
                    return Err(Error::InvalidConfig(format!("`{key}` needs {PYRAMID_LEVELS} values")));
                }
                for (s, r) in self.stages.iter_mut().zip(v) {
                    s.range_source = r;
                }
            }
            "temperature" | "temperatures" => {
                let v: [f64; PYRAMID_LEVELS] = parse_stages(key, value)?;
                for (s, t) in self.stages.iter_mut().zip(v) {
                    s.temperature = t;
                }
            }
            "reg_radius" => {
                let v: [usize; PYRAMID_LEVELS] = parse_stages(key, value)?;
                for (s, r) in self.stages.iter_mut().zip(v) {
                    s.reg_radius = r;
                }
            }
            "reg_passes" => {
                let v: [usize; PYRAMID_LEVELS] = parse_stages(key, value)?;
                for (s, p) in self.stages.iter_mut().zip(v) {
                    s.reg_passes = p;
                }
            }
            "depth_min" | "depth_max" => {
                let v: f64 = parse_one(key, value)?;
                let (lo, hi) = match (self.depth_range, key) {
                    (Some(r), "depth_min") => (v, r.d_max),
                    (Some(r), _) => (r.d_min, v),
                    // the other end is filled in when it arrives
                    (None, "depth_min") => (v, f64::INFINITY),
                    (None, _) => (f64::NAN, v),
                };
                self.depth_range = Some(DepthRange { d_min: lo, d_max: hi });
            }
            "alpha" => self.scalars.alpha_dr = parse_one(key, value)?,
            "beta" => self.scalars.beta_dr = parse_one(key, value)?,
            "adia_mode" => self.adia_mode = value.parse()?,
            "census_window" => self.census_window = parse_one(key, value)?,
            "robust_extremes" => self.robust_extremes = parse_one(key, value)?,
            "max_sources" => self.max_sources = parse_one(key, value)?,
            "stage_weights" => self.stage_weights = parse_stages(key, value)?,
            "max_reproj_err" => self.fusion.max_reproj_err = parse_one(key, value)?,
            "max_rel_depth_diff" => self.fusion.max_rel_depth_diff = parse_one(key, value)?,
            "min_consistent_views" => self.fusion.min_consistent_views = parse_one(key, value)?,
            "min_confidence" => self.fusion.min_confidence = parse_one(key, value)?,
            "merge_radius" => self.merge_radius = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "threads" => self.threads = parse_one(key, value)?,
            "calibration_scenes" => {
                self.calibration_scenes = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            other => return Err(Error::InvalidConfig(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, format!("expected `key = value`, found {line:?}")))?;
            self.set(key.trim(), value).map_err(|e| match e {
                Error::InvalidConfig(m) => Error::parse(path, i + 1, m),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str, path: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        for (k, s) in self.stages.iter().enumerate() {
            if s.planes < 2 {
                return Err(Error::InvalidConfig(format!("stage {} needs at least 2 planes", k + 1)));
            }
            if !(s.temperature > 0.0 && s.temperature.is_finite()) {
                return Err(Error::NonPositiveTemperature(s.temperature));
            }
        }
        if let Some(r) = self.depth_range {
            if !(r.d_min > 0.0 && r.d_min < r.d_max && r.d_max.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "depth range needs 0 < depth_min < depth_max, got [{}, {}]",
                    r.d_min, r.d_max
                )));
            }
        }
        if !(0.0..0.5).contains(&self.robust_extremes) {
            return Err(Error::InvalidConfig(format!(
                "robust_extremes must lie in [0, 0.5), got {}",
                self.robust_extremes
            )));
        }
        if self.census_window < 3 || self.census_window % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "census_window must be odd and at least 3, got {}",
                self.census_window
            )));
        }
        if !(self.merge_radius >= 0.0) {
            return Err(Error::InvalidConfig("merge_radius must be nonnegative".into()));
        }
        if !self.scalars.alpha_dr.is_finite() || !self.scalars.beta_dr.is_finite() {
            return Err(Error::InvalidConfig("range scalars must be finite".into()));
        }
        self.fusion.validate()
    }

    /// Every setting, one `key = value` per line in [`KEYS`] order;
    /// `from_text(to_text())` reproduces the config exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("planes", join(self.stages.iter().map(|s| s.planes)));
        put("range_sources", join(self.stages.iter().map(|s| s.range_source)));
        put("temperatures", join(self.stages.iter().map(|s| s.temperature)));
        put("reg_radius", join(self.stages.iter().map(|s| s.reg_radius)));
        put("reg_passes", join(self.stages.iter().map(|s| s.reg_passes)));
        if let Some(r) = self.depth_range {
            put("depth_min", r.d_min.to_string());
            put("depth_max", r.d_max.to_string());
        }
        put("alpha", self.scalars.alpha_dr.to_string());
        put("beta", self.scalars.beta_dr.to_string());
        put("adia_mode", self.adia_mode.to_string());
        put("census_window", self.census_window.to_string());
        put("robust_extremes", self.robust_extremes.to_string());
        put("max_sources", self.max_sources.to_string());
        put("stage_weights", join(self.stage_weights));
        put("max_reproj_err", self.fusion.max_reproj_err.to_string());
        put("max_rel_depth_diff", self.fusion.max_rel_depth_diff.to_string());
        put("min_consistent_views", self.fusion.min_consistent_views.to_string());
        put("min_confidence", self.fusion.min_confidence.to_string());
        put("merge_radius", self.merge_radius.to_string());
        put("seed", self.seed.to_string());
        put("threads", self.threads.to_string());
        put(
            "calibration_scenes",
            join(self.calibration_scenes.iter().map(|p| p.display().to_string())),
        );
        s
    }
}
