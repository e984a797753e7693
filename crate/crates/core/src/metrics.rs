//! Depth-map and point-cloud evaluation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::PointCloud;
use crate::grid::DepthMap;

pub const DEFAULT_PNUMD_TOL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthErrorReport {
    /// Mean absolute error, scene units.
    pub epe: f64,
    /// Percentage of pixels with error above the first threshold.
    pub e1: f64,
    /// Percentage of pixels with error above the second threshold.
    pub e3: f64,
    pub pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorThresholds {
    pub first: f64,
    pub second: f64,
}

impl Default for ErrorThresholds {
    fn default() -> Self {
        Self {
            first: 1.0,
            second: 3.0,
        }
    }
}

fn joint_errors(pred: &DepthMap, gt: &DepthMap) -> Result<Vec<f64>> {
    if pred.dims() != gt.dims() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let errors: Vec<f64> = (0..pred.data.len())
        .filter(|&i| pred.valid[i] && gt.valid[i])
        .map(|i| (pred.data[i] - gt.data[i]).abs())
        .collect();
    if errors.is_empty() {
        return Err(Error::NoValidPixels);
    }
    Ok(errors)
}

pub fn depth_errors(pred: &DepthMap, gt: &DepthMap) -> Result<DepthErrorReport> {
    depth_errors_with(pred, gt, ErrorThresholds::default())
}

pub fn depth_errors_with(pred: &DepthMap, gt: &DepthMap, th: ErrorThresholds) -> Result<DepthErrorReport> {
    let errors = joint_errors(pred, gt)?;
    let n = errors.len() as f64;
    let epe = errors.iter().sum::<f64>() / n;
    let e1 = errors.iter().filter(|e| **e > th.first).count() as f64 * 100.0 / n;
    let e3 = errors.iter().filter(|e| **e > th.second).count() as f64 * 100.0 / n;
    Ok(DepthErrorReport {
        epe,
        e1,
        e3,
        pixels: errors.len(),
    })
}

/// Percentage of jointly valid pixels with `|pred - gt| <= tol`.
pub fn pnumd(pred: &DepthMap, gt: &DepthMap, tol: f64) -> Result<f64> {
    let errors = joint_errors(pred, gt)?;
    Ok(errors.iter().filter(|e| **e <= tol).count() as f64 * 100.0 / errors.len() as f64)
}

/// Percentage of jointly valid pixels with relative error below `ratio`.
pub fn relative_inliers(pred: &DepthMap, gt: &DepthMap, ratio: f64) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(Error::ShapeMismatch(
            "prediction and ground truth differ in size".into(),
        ));
    }
    let mut total = 0usize;
    let mut good = 0usize;
    for i in 0..pred.data.len() {
        if pred.valid[i] && gt.valid[i] {
            total += 1;
            if (pred.data[i] - gt.data[i]).abs() < ratio * gt.data[i] {
                good += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(good as f64 * 100.0 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudMetricReport {
    pub acc: f64,
    pub comp: f64,
    pub overall: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

/// Uniform-grid nearest-neighbor index over 3-D points.
pub struct SpatialGrid<'a> {
    points: &'a [[f64; 3]],
    cell: f64,
    origin: [f64; 3],
    dims: [usize; 3],
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> SpatialGrid<'a> {
    pub fn new(points: &'a [[f64; 3]]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent: Vec<f64> = (0..3).map(|k| (hi[k] - lo[k]).max(0.0)).collect();
        let longest = extent.iter().copied().fold(0.0, f64::max);
        // about two points per cell on a surface-like cloud, at most 1024 cells per axis
        let mut cell = longest / (points.len() as f64 / 2.0).sqrt().max(1.0);
        cell = cell.max(longest / 1024.0);
        if !(cell > 0.0) {
            cell = 1.0;
        }
        let dims = [0, 1, 2].map(|k| (extent[k] / cell).floor() as usize + 1);
        let mut grid = Self {
            points,
            cell,
            origin: lo,
            dims,
            starts: Vec::new(),
            order: Vec::new(),
        };
        let ncells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; ncells + 1];
        let keys: Vec<usize> = points.iter().map(|p| grid.key(grid.coords(p))).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..ncells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0usize; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k]] = i;
            fill[k] += 1;
        }
        grid.starts = counts;
        grid.order = order;
        grid
    }

    fn coords(&self, p: &[f64; 3]) -> [isize; 3] {
        [0, 1, 2].map(|k| ((p[k] - self.origin[k]) / self.cell).floor() as isize)
    }

    fn key(&self, c: [isize; 3]) -> usize {
        let c = [0, 1, 2].map(|k| c[k].clamp(0, self.dims[k] as isize - 1) as usize);
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Exact nearest-neighbor distance, searched in growing shells of cells.
    pub fn nearest_distance(&self, q: &[f64; 3]) -> f64 {
        let c = self.coords(q);
        // distance from q to the grid's bounding box, in cells
        let mut best = f64::INFINITY;
        let max_ring = *self.dims.iter().max().unwrap() as isize + 1;
        let outside: isize = (0..3)
            .map(|k| {
                if c[k] < 0 {
                    -c[k]
                } else if c[k] >= self.dims[k] as isize {
                    c[k] - self.dims[k] as isize + 1
                } else {
                    0
                }
            })
            .max()
            .unwrap();
        let mut ring = outside;
        loop {
            // visit the shell at Chebyshev distance `ring`
            for dz in -ring..=ring {
                for dy in -ring..=ring {
                    for dx in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let cc = [c[0] + dx, c[1] + dy, c[2] + dz];
                        if (0..3).any(|k| cc[k] < 0 || cc[k] >= self.dims[k] as isize) {
                            continue;
                        }
                        let key = self.key(cc);
                        for &i in &self.order[self.starts[key]..self.starts[key + 1]] {
                            let p = &self.points[i];
                            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                            best = best.min(d2);
                        }
                    }
                }
            }
            // every unvisited point is at least (ring) cells away
            let guaranteed = ring as f64 * self.cell;
            if best.is_finite() && best.sqrt() <= guaranteed {
                return best.sqrt();
            }
            if ring > max_ring + outside {
                return best.sqrt();
            }
            ring += 1;
        }
    }
}

fn nearest_distances(queries: &[[f64; 3]], targets: &[[f64; 3]]) -> Vec<f64> {
    let grid = SpatialGrid::new(targets);
    queries.par_iter().map(|q| grid.nearest_distance(q)).collect()
}

/// Accuracy (pred to gt), completeness (gt to pred), their mean, and
/// precision/recall/F at distance `tau` (percentages).
pub fn cloud_metrics(pred: &PointCloud, gt: &PointCloud, tau: f64) -> Result<CloudMetricReport> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let p = pred.positions();
    let g = gt.positions();
    let d_pred = nearest_distances(&p, &g);
    let d_gt = nearest_distances(&g, &p);
    Ok(report_from_distances(&d_pred, &d_gt, tau))
}

pub fn report_from_distances(d_pred: &[f64], d_gt: &[f64], tau: f64) -> CloudMetricReport {
    let acc = d_pred.iter().sum::<f64>() / d_pred.len() as f64;
    let comp = d_gt.iter().sum::<f64>() / d_gt.len() as f64;
    let precision = d_pred.iter().filter(|d| **d <= tau).count() as f64 * 100.0 / d_pred.len() as f64;
    let recall = d_gt.iter().filter(|d| **d <= tau).count() as f64 * 100.0 / d_gt.len() as f64;
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    CloudMetricReport {
        acc,
        comp,
        overall: (acc + comp) / 2.0,
        precision,
        recall,
        f_score,
    }
}
