//! Scene directories:
//!
//! ```text
//! cams/00000000_cam.txt
//! images/00000000.ppm      (or .pgm)
//! depth_gt/00000000.pfm    (optional)
//! pair.txt                 (optional)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::grid::{DepthMap, Image};
use crate::io::cam::{cam_from_view, read_cam, write_cam};
use crate::io::pair::{read_pair, write_pair, PairList};
use crate::io::pfm::{read_pfm, write_pfm};
use crate::io::pnm::{read_pnm, write_pnm};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub views: Vec<CameraView>,
    pub images: Vec<Image>,
    pub gt_depths: Option<Vec<DepthMap>>,
    /// Ranked sources per reference view; indices into `views`.
    pub pairs: PairList,
}

impl SceneBundle {
    pub fn new(
        views: Vec<CameraView>,
        images: Vec<Image>,
        gt_depths: Option<Vec<DepthMap>>,
        pairs: PairList,
    ) -> Result<Self> {
        if views.len() != images.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} views but {} images",
                views.len(),
                images.len()
            )));
        }
        if let Some(first) = images.first() {
            if let Some(bad) = images.iter().find(|i| i.dims() != first.dims()) {
                return Err(Error::ResolutionMismatch {
                    expected: first.dims(),
                    actual: bad.dims(),
                });
            }
            if let Some(gt) = &gt_depths {
                if gt.len() != images.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "{} ground-truth maps for {} views",
                        gt.len(),
                        images.len()
                    )));
                }
                if let Some(bad) = gt.iter().find(|d| d.dims() != first.dims()) {
                    return Err(Error::ResolutionMismatch {
                        expected: first.dims(),
                        actual: bad.dims(),
                    });
                }
            }
        }
        for e in &pairs {
            let ids = std::iter::once(e.reference).chain(e.sources.iter().map(|s| s.0));
            if let Some(bad) = ids.into_iter().find(|i| *i >= views.len()) {
                return Err(Error::ShapeMismatch(format!(
                    "pair list names view {bad} of {}",
                    views.len()
                )));
            }
        }
        Ok(Self {
            views,
            images,
            gt_depths,
            pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// Ranked sources for `reference`: the pair list when it has an entry,
    /// otherwise every other view in index order.
    pub fn sources_for(&self, reference: usize) -> Vec<usize> {
        match self.pairs.iter().find(|e| e.reference == reference) {
            Some(e) => e.sources.iter().map(|s| s.0).filter(|&s| s != reference).collect(),
            None => (0..self.len()).filter(|&s| s != reference).collect(),
        }
    }
}

pub fn view_name(index: usize) -> String {
    format!("{index:08}")
}

pub fn cam_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("cams").join(format!("{}_cam.txt", view_name(index)))
}

pub fn gt_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("depth_gt").join(format!("{}.pfm", view_name(index)))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_scene(dir: &Path, scene: &SceneBundle) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for sub in ["cams", "images"] {
        create_dir(&dir.join(sub))?;
    }
    for (i, (view, image)) in scene.views.iter().zip(&scene.images).enumerate() {
        let cam = cam_path(dir, i);
        write_cam(&cam, &cam_from_view(view))?;
        let ext = if image.channels == 1 { "pgm" } else { "ppm" };
        let img = dir.join("images").join(format!("{}.{ext}", view_name(i)));
        write_pnm(&img, image)?;
        written.extend([cam, img]);
    }
    if let Some(gt) = &scene.gt_depths {
        create_dir(&dir.join("depth_gt"))?;
        for (i, d) in gt.iter().enumerate() {
            let p = gt_path(dir, i);
            write_pfm(&p, d)?;
            written.push(p);
        }
    }
    let pair = dir.join("pair.txt");
    write_pair(&pair, &scene.pairs)?;
    written.push(pair);
    Ok(written)
}

fn image_path(dir: &Path, index: usize) -> Result<PathBuf> {
    let base = dir.join("images").join(view_name(index));
    for ext in ["ppm", "pgm"] {
        let p = base.with_extension(ext);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::io(
        base.with_extension("ppm"),
        std::io::Error::new(std::io::ErrorKind::NotFound, "image not found"),
    ))
}

/// Loads every `cams/*_cam.txt` in index order (indices must be contiguous
/// from 0) with its image, optional ground truth and optional pair list.
pub fn read_scene(dir: &Path) -> Result<SceneBundle> {
    let cams = dir.join("cams");
    let entries = fs::read_dir(&cams).map_err(|e| Error::io(&cams, e))?;
    let mut count = 0;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&cams, e))?;
        if entry.file_name().to_string_lossy().ends_with("_cam.txt") {
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::io(
            &cams,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no camera files"),
        ));
    }
    let mut views = Vec::with_capacity(count);
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        views.push(read_cam(&cam_path(dir, i))?);
        images.push(read_pnm(&image_path(dir, i)?)?);
    }
    let gt_depths = if dir.join("depth_gt").is_dir() {
        Some(
            (0..count)
                .map(|i| read_pfm(&gt_path(dir, i)))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let pair = dir.join("pair.txt");
    let pairs = if pair.is_file() { read_pair(&pair)? } else { Vec::new() };
    SceneBundle::new(views, images, gt_depths, pairs)
}
