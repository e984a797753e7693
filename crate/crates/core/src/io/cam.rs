//! Camera text files: a 4x4 world-to-camera extrinsic block, a 3x3
//! intrinsic block and a trailing depth line `d_min interval [count [d_max]]`.

use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraExtrinsics, CameraIntrinsics, CameraView};

/// Hypothesis count assumed when a depth line gives only `d_min interval`.
pub const DEFAULT_HINT_PLANES: usize = 192;

/// Rotations further than this from orthonormal are rejected outright.
const ORTHO_REPAIR_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CamFile {
    pub extrinsic: Matrix4<f64>,
    pub intrinsic: Matrix3<f64>,
    /// `(d_min, interval, count, d_max)` as written; missing fields are `None`.
    pub depth_line: Option<(f64, f64, Option<f64>, Option<f64>)>,
}

impl CamFile {
    pub fn depth_hint(&self) -> Option<(f64, f64)> {
        let (lo, step, count, hi) = self.depth_line?;
        let hi = match (hi, count) {
            (Some(hi), _) => hi,
            (None, Some(n)) => lo + step * n,
            (None, None) => lo + step * DEFAULT_HINT_PLANES as f64,
        };
        Some((lo, hi))
    }
}

fn numbers(path: &str, line_no: usize, line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::parse(path, line_no, format!("not a number: {t:?}")))
        })
        .collect()
}

pub fn parse_cam(text: &str, path: &str) -> Result<CamFile> {
    // (line number, trimmed content) of non-empty lines
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut it = lines.into_iter().peekable();
    let expect_keyword = |it: &mut std::iter::Peekable<std::vec::IntoIter<(usize, &str)>>, kw: &str| match it.next() {
        Some((_, l)) if l.eq_ignore_ascii_case(kw) => Ok(()),
        Some((n, l)) => Err(Error::parse(path, n, format!("expected {kw:?}, found {l:?}"))),
        None => Err(Error::parse(path, 0, format!("missing {kw:?} section"))),
    };
    let rows = |it: &mut std::iter::Peekable<std::vec::IntoIter<(usize, &str)>>, count: usize, width: usize| {
        let mut out = Vec::with_capacity(count * width);
        for _ in 0..count {
            let (n, l) = it
                .next()
                .ok_or_else(|| Error::parse(path, 0, "unexpected end of file in matrix"))?;
            let row = numbers(path, n, l)?;
            if row.len() != width {
                return Err(Error::parse(
                    path,
                    n,
                    format!("expected {width} values, found {}", row.len()),
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(path, n, "non-finite matrix entry"));
            }
            out.extend(row);
        }
        Ok::<_, Error>(out)
    };
    expect_keyword(&mut it, "extrinsic")?;
    let extrinsic = Matrix4::from_row_slice(&rows(&mut it, 4, 4)?);
    expect_keyword(&mut it, "intrinsic")?;
    let intrinsic = Matrix3::from_row_slice(&rows(&mut it, 3, 3)?);
    let depth_line = match it.next() {
        None => None,
        Some((n, l)) => {
            let v = numbers(path, n, l)?;
            if v.len() < 2 || v.len() > 4 {
                return Err(Error::parse(
                    path,
                    n,
                    format!("depth line needs 2 to 4 values, found {}", v.len()),
                ));
            }
            Some((v[0], v[1], v.get(2).copied(), v.get(3).copied()))
        }
    };
    if let Some((n, l)) = it.next() {
        return Err(Error::parse(path, n, format!("trailing content {l:?}")));
    }
    Ok(CamFile {
        extrinsic,
        intrinsic,
        depth_line,
    })
}

/// Builds a validated view. Rotations that are orthonormal to within 1e-3 but
/// not to the strict tolerance are re-orthonormalized with a warning.
pub fn view_from_cam(cam: &CamFile, image_id: &str) -> Result<CameraView> {
    let k = &cam.intrinsic;
    let intrinsics = CameraIntrinsics::new(k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)])?;
    let extrinsics = match CameraExtrinsics::from_matrix4(&cam.extrinsic) {
        Ok(e) => e,
        Err(err) => {
            let r: Matrix3<f64> = cam.extrinsic.fixed_view::<3, 3>(0, 0).into();
            let t: Vector3<f64> = cam.extrinsic.fixed_view::<3, 1>(0, 3).into();
            let dev = (r.transpose() * r - Matrix3::identity()).abs().max();
            if dev > ORTHO_REPAIR_TOL || !((r.determinant() - 1.0).abs() < ORTHO_REPAIR_TOL) {
                return Err(err);
            }
            warn!("camera {image_id}: rotation off by {dev:.2e}, re-orthonormalizing");
            CameraExtrinsics::orthonormalized(r, t)?
        }
    };
    CameraView::new(intrinsics, extrinsics, cam.depth_hint(), image_id)
}

pub fn read_cam(path: &Path) -> Result<CameraView> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cam = parse_cam(&text, &path.display().to_string())?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .map(|s| s.trim_end_matches("_cam").to_string())
        .unwrap_or_default();
    view_from_cam(&cam, &id)
}

/// Camera file for a view; a depth hint is written as
/// `d_min interval count d_max` so both ends survive exactly.
pub fn cam_from_view(view: &CameraView) -> CamFile {
    CamFile {
        extrinsic: view.extrinsics.matrix4(),
        intrinsic: view.intrinsics.matrix(),
        depth_line: view.depth_hint.map(|(lo, hi)| {
            let n = DEFAULT_HINT_PLANES as f64;
            (lo, (hi - lo) / n, Some(n), Some(hi))
        }),
    }
}

pub fn format_cam(cam: &CamFile) -> String {
    let (e, k) = (&cam.extrinsic, &cam.intrinsic);
    let mut s = String::from("extrinsic\n");
    for r in 0..4 {
        s += &format!("{} {} {} {}\n", e[(r, 0)], e[(r, 1)], e[(r, 2)], e[(r, 3)]);
    }
    s += "\nintrinsic\n";
    for r in 0..3 {
        s += &format!("{} {} {}\n", k[(r, 0)], k[(r, 1)], k[(r, 2)]);
    }
    if let Some((lo, step, count, hi)) = cam.depth_line {
        s += &format!("\n{lo} {step}");
        for v in [count, hi].into_iter().flatten() {
            s += &format!(" {v}");
        }
        s.push('\n');
    }
    s
}

pub fn write_cam(path: &Path, cam: &CamFile) -> Result<()> {
    fs::write(path, format_cam(cam)).map_err(|e| Error::io(path, e))
}
