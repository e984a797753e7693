//! Cross-view geometric consistency filtering and point-cloud fusion.

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{project, unproject, CameraView};
use crate::grid::{ConfidenceMap, DepthMap, Image};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyThresholds {
    /// Round-trip reprojection error, pixels.
    pub max_reproj_err: f64,
    /// Relative depth disagreement in the source view.
    pub max_rel_depth_diff: f64,
    pub min_consistent_views: usize,
    pub min_confidence: f64,
}

impl Default for ConsistencyThresholds {
    fn default() -> Self {
        Self {
            max_reproj_err: 1.0,
            max_rel_depth_diff: 0.01,
            min_consistent_views: 2,
            min_confidence: 0.3,
        }
    }
}

impl ConsistencyThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_reproj_err > 0.0 && self.max_rel_depth_diff > 0.0 && self.min_confidence >= 0.0)
            || self.min_consistent_views < 1
        {
            return Err(Error::InvalidConfig(format!("invalid consistency thresholds {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: [f64; 3],
    pub color: [u8; 3],
    pub view: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn validate(&self) -> Result<()> {
        match self
            .points
            .iter()
            .position(|p| !p.position.iter().all(|v| v.is_finite()))
        {
            Some(i) => Err(Error::InvalidPoint(format!("point {i} has a non-finite coordinate"))),
            None => Ok(()),
        }
    }
}

/// Checks the pixel `(x, y)` of view `r` against view `s`.
fn agrees(
    depths: &[DepthMap],
    views: &[CameraView],
    r: usize,
    s: usize,
    x: usize,
    y: usize,
    th: &ConsistencyThresholds,
) -> bool {
    let d = depths[r].data[y * depths[r].width + x];
    let Ok(world) = unproject(&views[r], x as f64, y as f64, d) else {
        return false;
    };
    let Ok((u, v, d_reproj)) = project(&views[s], &world) else {
        return false;
    };
    let src = &depths[s];
    let (ui, vi) = (u.round(), v.round());
    if ui < 0.0 || vi < 0.0 || ui >= src.width as f64 || vi >= src.height as f64 {
        return false;
    }
    let (ui, vi) = (ui as usize, vi as usize);
    let Some(d_src) = src.at(ui, vi) else {
        return false;
    };
    if !(d_src > 0.0) {
        return false;
    }
    if (d_reproj - d_src).abs() / d_src > th.max_rel_depth_diff {
        return false;
    }
    // back through the source depth into the reference view
    let Ok(back) = unproject(&views[s], ui as f64, vi as f64, d_src) else {
        return false;
    };
    let Ok((bu, bv, _)) = project(&views[r], &back) else {
        return false;
    };
    let err = ((bu - x as f64).powi(2) + (bv - y as f64).powi(2)).sqrt();
    err <= th.max_reproj_err
}

/// Per-view keep masks: confident pixels whose depth agrees with at least
/// `min_consistent_views` other views.
pub fn geometric_consistency(
    depths: &[DepthMap],
    confidences: &[ConfidenceMap],
    views: &[CameraView],
    th: &ConsistencyThresholds,
) -> Result<Vec<Vec<bool>>> {
    if depths.len() < 2 {
        return Err(Error::InsufficientViews(depths.len()));
    }
    if confidences.len() != depths.len() || views.len() != depths.len() {
        return Err(Error::ShapeMismatch(
            "depths, confidences and views differ in count".into(),
        ));
    }
    for (d, c) in depths.iter().zip(confidences) {
        if d.dims() != c.dims() {
            return Err(Error::ShapeMismatch("confidence map does not match depth map".into()));
        }
    }
    th.validate()?;
    Ok((0..depths.len())
        .map(|r| {
            let dm = &depths[r];
            (0..dm.width * dm.height)
                .into_par_iter()
                .map(|i| {
                    let (x, y) = (i % dm.width, i / dm.width);
                    if !dm.valid[i] || confidences[r].data[i] < th.min_confidence {
                        return false;
                    }
                    let mut count = 0;
                    for s in 0..depths.len() {
                        if s != r && agrees(depths, views, r, s, x, y, th) {
                            count += 1;
                            if count >= th.min_consistent_views {
                                return true;
                            }
                        }
                    }
                    false
                })
                .collect()
        })
        .collect())
}

fn color_of(image: &Image, x: usize, y: usize) -> [u8; 3] {
    let to_u8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    if image.channels >= 3 {
        [
            to_u8(image.at(x, y, 0)),
            to_u8(image.at(x, y, 1)),
            to_u8(image.at(x, y, 2)),
        ]
    } else {
        let g = to_u8(image.at(x, y, 0));
        [g, g, g]
    }
}

/// World points of every kept pixel, in view order then row-major order,
/// with the source pixel each came from.
pub fn unproject_kept(
    depths: &[DepthMap],
    masks: &[Vec<bool>],
    images: &[Image],
    views: &[CameraView],
) -> Result<Vec<(CloudPoint, (usize, usize))>> {
    if masks.len() != depths.len() || images.len() != depths.len() || views.len() != depths.len() {
        return Err(Error::ShapeMismatch("fusion inputs differ in view count".into()));
    }
    let mut out = Vec::new();
    for (v, ((depth, mask), image)) in depths.iter().zip(masks).zip(images).enumerate() {
        if mask.len() != depth.data.len() {
            return Err(Error::ShapeMismatch("mask does not match depth map".into()));
        }
        for y in 0..depth.height {
            for x in 0..depth.width {
                let i = y * depth.width + x;
                if !mask[i] || !depth.valid[i] {
                    continue;
                }
                let p = unproject(&views[v], x as f64, y as f64, depth.data[i])?;
                let (ix, iy) = (x.min(image.width - 1), y.min(image.height - 1));
                out.push((
                    CloudPoint {
                        position: [p.x, p.y, p.z],
                        color: color_of(image, ix, iy),
                        view: v as u32,
                    },
                    (x, y),
                ));
            }
        }
    }
    Ok(out)
}

/// Unprojects kept pixels and merges points closer than `merge_radius`
/// (greedy, in deterministic input order, via a spatial hash). Merged points
/// take the mean position and color and the first contributor's view id.
pub fn fuse(
    depths: &[DepthMap],
    masks: &[Vec<bool>],
    images: &[Image],
    views: &[CameraView],
    merge_radius: f64,
) -> Result<PointCloud> {
    let raw = unproject_kept(depths, masks, images, views)?;
    if !(merge_radius > 0.0) {
        return Ok(PointCloud {
            points: raw.into_iter().map(|(p, _)| p).collect(),
        });
    }
    struct Cluster {
        anchor: Vector3<f64>,
        sum: Vector3<f64>,
        color: [u64; 3],
        count: u64,
        view: u32,
    }
    let cell_of = |p: &Vector3<f64>| {
        (
            (p.x / merge_radius).floor() as i64,
            (p.y / merge_radius).floor() as i64,
            (p.z / merge_radius).floor() as i64,
        )
    };
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut hash: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (point, _) in raw {
        let pos = Vector3::from(point.position);
        let c = cell_of(&pos);
        let mut found: Option<usize> = None;
        'search: for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(ids) = hash.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        for &id in ids {
                            if (clusters[id].anchor - pos).norm() < merge_radius && found.map_or(true, |f| id < f) {
                                found = Some(id);
                            }
                        }
                    }
                    if found.is_some() && dz == 1 && dy == 1 && dx == 1 {
                        break 'search;
                    }
                }
            }
        }
        match found {
            Some(id) => {
                let cl = &mut clusters[id];
                cl.sum += pos;
                for k in 0..3 {
                    cl.color[k] += point.color[k] as u64;
                }
                cl.count += 1;
            }
            None => {
                hash.entry(c).or_default().push(clusters.len());
                clusters.push(Cluster {
                    anchor: pos,
                    sum: pos,
                    color: point.color.map(|v| v as u64),
                    count: 1,
                    view: point.view,
                });
            }
        }
    }
    Ok(PointCloud {
        points: clusters
            .into_iter()
            .map(|cl| {
                let mean = cl.sum / cl.count as f64;
                CloudPoint {
                    position: [mean.x, mean.y, mean.z],
                    color: cl.color.map(|v| ((v + cl.count / 2) / cl.count) as u8),
                    view: cl.view,
                }
            })
            .collect(),
    })
}

/// Half the pixel footprint at the median valid depth of the first view.
pub fn default_merge_radius(depths: &[DepthMap], views: &[CameraView]) -> f64 {
    let Some(depth) = depths.first() else {
        return 0.0;
    };
    let mut vals: Vec<f64> = depth
        .data
        .iter()
        .zip(&depth.valid)
        .filter(|(_, v)| **v)
        .map(|(d, _)| *d)
        .collect();
    if vals.is_empty() {
        return 0.0;
    }
    vals.sort_by(f64::total_cmp);
    let median = vals[vals.len() / 2];
    0.5 * median / views[0].intrinsics.fx
}
