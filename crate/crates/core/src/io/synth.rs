//! Ray-cast synthetic scenes with analytic ground-truth depth.
//!
//! Textures come from an integer hash and use only `+`, `*` and `floor`, so
//! renders are bit-identical across runs and platforms.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraExtrinsics, CameraIntrinsics, CameraView};
use crate::grid::{DepthMap, Image};
use crate::io::pair::nearest_pairs;
use crate::io::scene::SceneBundle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    /// `z = depth + slope_x * x + slope_y * y` in the reference frame.
    Plane { depth: f64, slope_x: f64, slope_y: f64 },
    /// A sphere in front of (or protruding from) a fronto-parallel backdrop.
    Sphere {
        center: [f64; 3],
        radius: f64,
        backdrop: f64,
    },
    /// A near half-plane (`x < split`) floating over a far plane.
    TwoPlanes { near: f64, far: f64, split: f64 },
    /// `z = apex + slope * |x - ridge|`.
    Wedge { apex: f64, slope: f64, ridge: f64 },
}

impl Geometry {
    pub fn name(&self) -> &'static str {
        match self {
            Geometry::Plane { .. } => "plane",
            Geometry::Sphere { .. } => "sphere",
            Geometry::TwoPlanes { .. } => "two_planes",
            Geometry::Wedge { .. } => "wedge",
        }
    }

    /// Default instance of a named geometry spanning roughly `[lo, hi]`
    /// in depth.
    pub fn preset(name: &str, lo: f64, hi: f64) -> Result<Geometry> {
        let mid = 0.5 * (lo + hi);
        let span = hi - lo;
        Ok(match name {
            "plane" => Geometry::Plane {
                depth: mid,
                slope_x: 0.0,
                slope_y: 0.0,
            },
            "slanted_plane" => Geometry::Plane {
                depth: mid,
                slope_x: 0.3,
                slope_y: -0.2,
            },
            // a spherical cap protruding 0.3 * span from the backdrop, so
            // depth is continuous across the rim
            "sphere" => Geometry::Sphere {
                center: [0.0, 0.0, hi + 0.7 * span],
                radius: span,
                backdrop: hi,
            },
            "two_planes" => Geometry::TwoPlanes {
                near: lo + 0.25 * span,
                far: hi - 0.25 * span,
                split: 0.0,
            },
            "wedge" => Geometry::Wedge {
                apex: lo + 0.3 * span,
                slope: 0.5,
                ridge: 0.0,
            },
            other => return Err(Error::InvalidSpec(format!("unknown geometry {other:?}"))),
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Geometry::Plane {
                depth,
                slope_x,
                slope_y,
            } => depth > 0.0 && slope_x.is_finite() && slope_y.is_finite(),
            Geometry::Sphere {
                center,
                radius,
                backdrop,
            } => radius > 0.0 && center[2] - radius > 0.0 && backdrop > center[2] - radius,
            Geometry::TwoPlanes { near, far, split } => near > 0.0 && far > near && split.is_finite(),
            Geometry::Wedge { apex, slope, ridge } => apex > 0.0 && slope.is_finite() && ridge.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("invalid geometry {self:?}")))
        }
    }

    /// Nearest hit parameter along `origin + t * dir`, `t > 0`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let mut best: Option<f64> = None;
        let mut take = |t: Option<f64>| {
            if let Some(t) = t.filter(|t| *t > 0.0 && t.is_finite()) {
                if best.map_or(true, |b| t < b) {
                    best = Some(t);
                }
            }
        };
        match *self {
            Geometry::Plane {
                depth,
                slope_x,
                slope_y,
            } => {
                take(hit_plane(
                    origin,
                    dir,
                    Vector3::new(-slope_x, -slope_y, 1.0),
                    depth,
                    |_| true,
                ));
            }
            Geometry::Sphere {
                center,
                radius,
                backdrop,
            } => {
                take(hit_sphere(origin, dir, &Vector3::from(center), radius));
                take(hit_plane(origin, dir, Vector3::z(), backdrop, |_| true));
            }
            Geometry::TwoPlanes { near, far, split } => {
                take(hit_plane(origin, dir, Vector3::z(), near, |p| p.x < split));
                take(hit_plane(origin, dir, Vector3::z(), far, |_| true));
            }
            Geometry::Wedge { apex, slope, ridge } => {
                // left face z = apex + slope * (ridge - x), right face mirrored
                take(hit_plane(
                    origin,
                    dir,
                    Vector3::new(slope, 0.0, 1.0),
                    apex + slope * ridge,
                    |p| p.x < ridge,
                ));
                take(hit_plane(
                    origin,
                    dir,
                    Vector3::new(-slope, 0.0, 1.0),
                    apex - slope * ridge,
                    |p| p.x >= ridge,
                ));
            }
        }
        best
    }
}

fn hit_plane(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    normal: Vector3<f64>,
    offset: f64,
    inside: impl Fn(&Vector3<f64>) -> bool,
) -> Option<f64> {
    let denom = normal.dot(dir);
    if denom == 0.0 {
        return None;
    }
    let t = (offset - normal.dot(origin)) / denom;
    inside(&(origin + dir * t)).then_some(t)
}

/// Smaller positive root of `|o + t d - c|^2 = r^2`.
pub fn hit_sphere(origin: &Vector3<f64>, dir: &Vector3<f64>, center: &Vector3<f64>, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let a = dir.dot(dir);
    let b = dir.dot(&oc);
    let c = oc.dot(&oc) - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let near = (-b - s) / a;
    if near > 0.0 {
        Some(near)
    } else {
        Some((-b + s) / a).filter(|t| *t > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    /// Cubes of side `cell` scene units.
    Checker { cell: f64 },
    /// Value noise whose coarsest lattice has spacing `cell`.
    Noise { cell: f64, octaves: u32 },
}

impl Texture {
    pub fn name(&self) -> &'static str {
        match self {
            Texture::Checker { .. } => "checker",
            Texture::Noise { .. } => "noise",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSceneSpec {
    pub geometry: Geometry,
    pub texture: Texture,
    pub num_views: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub baseline: f64,
    /// Written to the camera files as the depth hint.
    pub depth_range: (f64, f64),
    pub seed: u64,
    /// Sources look at the reference's central surface point; otherwise all
    /// cameras share the reference orientation (rectified rig).
    pub convergent: bool,
    /// Samples per pixel along each axis.
    pub supersample: usize,
}

impl SynthSceneSpec {
    /// Scene of the named geometry over `[lo, hi]` with a noise texture sized
    /// for the given image.
    /// An 80 x 64 scene with content between `lo` and `hi`.
    pub fn preset(geometry: &str, lo: f64, hi: f64, num_views: usize, seed: u64) -> Result<Self> {
        Self::preset_sized(geometry, lo, hi, num_views, seed, 80, 64)
    }

    /// Like [`SynthSceneSpec::preset`] at another resolution; the focal
    /// length and texture scale follow the width.
    pub fn preset_sized(
        geometry: &str,
        lo: f64,
        hi: f64,
        num_views: usize,
        seed: u64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let focal = 1.25 * width as f64;
        let mid = 0.5 * (lo + hi);
        Ok(Self {
            geometry: Geometry::preset(geometry, lo, hi)?,
            // coarsest octave about 16 pixels wide at mid depth
            texture: Texture::Noise {
                cell: 16.0 * mid / focal,
                octaves: 4,
            },
            num_views,
            width,
            height,
            focal,
            baseline: 0.3 * mid,
            depth_range: (0.5 * lo, hi + 0.5 * lo),
            seed,
            convergent: true,
            supersample: 2,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.num_views < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 views, got {}",
                self.num_views
            )));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidSpec(format!(
                "image {}x{} is too small",
                self.width, self.height
            )));
        }
        if !(self.focal > 0.0 && self.baseline > 0.0 && self.supersample >= 1) {
            return Err(Error::InvalidSpec(
                "focal, baseline and supersample must be positive".into(),
            ));
        }
        let (lo, hi) = self.depth_range;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::InvalidSpec(format!("invalid depth range ({lo}, {hi})")));
        }
        let cell_ok = match self.texture {
            Texture::Checker { cell } => cell > 0.0,
            Texture::Noise { cell, octaves } => cell > 0.0 && (1..=12).contains(&octaves),
        };
        if !cell_ok {
            return Err(Error::InvalidSpec(format!("invalid texture {:?}", self.texture)));
        }
        self.geometry.validate()
    }
}

/// Source-camera offsets in units of the baseline: a ring of eight
/// directions, repeated at growing radius.
fn source_offset(k: usize) -> (f64, f64) {
    const RING: [(f64, f64); 8] = [
        (1.0, 0.0),
        (-1.0, 0.0),
        (0.0, 1.0),
        (0.0, -1.0),
        (1.0, 1.0),
        (-1.0, -1.0),
        (1.0, -1.0),
        (-1.0, 1.0),
    ];
    let (x, y) = RING[k % 8];
    let r = (k / 8 + 1) as f64;
    (x * r, y * r)
}

/// World-to-camera rotation looking from `eye` at `target` with +y down.
fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>) -> Matrix3<f64> {
    let z = (target - eye).normalize();
    let x = Vector3::y().cross(&z).normalize();
    let y = z.cross(&x);
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

fn hash(mut v: u64) -> u64 {
    v ^= v >> 33;
    v = v.wrapping_mul(0xff51_afd7_ed55_8ccd);
    v ^= v >> 33;
    v = v.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    v ^ (v >> 33)
}

fn lattice(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let h = hash(seed ^ hash((x as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ hash((y as u64) ^ hash(z as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, p: &Vector3<f64>) -> f64 {
    let (fx, fy, fz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
    let (tx, ty, tz) = (smooth(p.x - fx), smooth(p.y - fy), smooth(p.z - fz));
    let mut acc = 0.0;
    for (dz, wz) in [(0, 1.0 - tz), (1, tz)] {
        for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
            for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
                acc += wx * wy * wz * lattice(seed, ix + dx, iy + dy, iz + dz);
            }
        }
    }
    acc
}

/// RGB albedo in `[0, 1]` at a world point.
pub fn albedo(texture: &Texture, seed: u64, p: &Vector3<f64>) -> [f64; 3] {
    match *texture {
        Texture::Checker { cell } => {
            let q = p / cell;
            let parity = (q.x.floor() as i64 + q.y.floor() as i64 + q.z.floor() as i64).rem_euclid(2);
            let v = if parity == 0 { 0.2 } else { 0.8 };
            [v, v, v]
        }
        Texture::Noise { cell, octaves } => {
            let mut rgb = [0.0; 3];
            for (c, out) in rgb.iter_mut().enumerate() {
                let mut scale = 1.0 / cell;
                let (mut sum, mut norm, mut amp) = (0.0, 0.0, 1.0);
                for o in 0..octaves {
                    let s = hash(seed.wrapping_add(c as u64 * 7919 + o as u64 * 104_729));
                    sum += amp * value_noise(s, &(p * scale));
                    norm += amp;
                    scale *= 2.0;
                    amp *= 0.75;
                }
                *out = 0.1 + 0.8 * sum / norm;
            }
            rgb
        }
    }
}

/// Renders one view: supersampled color and analytic depth at pixel centres.
pub fn render_view(spec: &SynthSceneSpec, view: &CameraView) -> (Image, DepthMap) {
    let (w, h) = (spec.width, spec.height);
    let k = &view.intrinsics;
    let rt = view.extrinsics.rotation.transpose();
    let origin = view.extrinsics.center();
    let ray = |u: f64, v: f64| rt * Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
    let mut image = Image::zeros(w, h, 3);
    let mut depth = DepthMap::new(w, h, vec![0.0; w * h], vec![false; w * h]).expect("sizes match");
    let n = spec.supersample;
    for y in 0..h {
        for x in 0..w {
            // camera-frame rays have unit z, so the hit parameter is the depth
            if let Some(t) = spec.geometry.intersect(&origin, &ray(x as f64, y as f64)) {
                depth.data[y * w + x] = t;
                depth.valid[y * w + x] = true;
            }
            let mut acc = [0.0; 3];
            for sy in 0..n {
                for sx in 0..n {
                    let u = x as f64 - 0.5 + (sx as f64 + 0.5) / n as f64;
                    let v = y as f64 - 0.5 + (sy as f64 + 0.5) / n as f64;
                    let d = ray(u, v);
                    if let Some(t) = spec.geometry.intersect(&origin, &d) {
                        let c = albedo(&spec.texture, spec.seed, &(origin + d * t));
                        for i in 0..3 {
                            acc[i] += c[i];
                        }
                    }
                }
            }
            for (i, a) in acc.iter().enumerate() {
                image.set(x, y, i, a / (n * n) as f64);
            }
        }
    }
    (image, depth)
}

pub fn synth_views(spec: &SynthSceneSpec) -> Result<Vec<CameraView>> {
    spec.validate()?;
    let k = CameraIntrinsics::new(
        spec.focal,
        spec.focal,
        (spec.width as f64 - 1.0) / 2.0,
        (spec.height as f64 - 1.0) / 2.0,
    )?;
    let target_depth = spec
        .geometry
        .intersect(&Vector3::zeros(), &Vector3::z())
        .ok_or_else(|| Error::InvalidSpec("reference optical axis misses the scene".into()))?;
    let target = Vector3::new(0.0, 0.0, target_depth);
    (0..spec.num_views)
        .map(|i| {
            let eye = if i == 0 {
                Vector3::zeros()
            } else {
                let (ox, oy) = source_offset(i - 1);
                Vector3::new(ox * spec.baseline, oy * spec.baseline, 0.0)
            };
            let rotation = if spec.convergent && i > 0 {
                look_at(&eye, &target)
            } else {
                Matrix3::identity()
            };
            let extrinsics = CameraExtrinsics::new(rotation, -(rotation * eye))?;
            CameraView::new(k, extrinsics, Some(spec.depth_range), format!("{i:08}"))
        })
        .collect()
}

pub fn synth_scene(spec: &SynthSceneSpec) -> Result<SceneBundle> {
    let views = synth_views(spec)?;
    let (images, depths): (Vec<_>, Vec<_>) = views.iter().map(|v| render_view(spec, v)).unzip();
    let centers: Vec<[f64; 3]> = views
        .iter()
        .map(|v| {
            let c = v.extrinsics.center();
            [c.x, c.y, c.z]
        })
        .collect();
    SceneBundle::new(views, images, Some(depths), nearest_pairs(&centers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;

    fn rectified(depth: f64) -> SynthSceneSpec {
        SynthSceneSpec {
            geometry: Geometry::Plane {
                depth,
                slope_x: 0.0,
                slope_y: 0.0,
            },
            texture: Texture::Checker { cell: 0.5 },
            num_views: 2,
            width: 32,
            height: 24,
            focal: 100.0,
            baseline: 1.0,
            depth_range: (5.0, 20.0),
            seed: 3,
            convergent: false,
            supersample: 1,
        }
    }

    #[test]
    fn fronto_parallel_plane() {
        let spec = rectified(10.0);
        let scene = synth_scene(&spec).unwrap();
        let gt = scene.gt_depths.as_ref().unwrap();
        assert!(gt
            .iter()
            .all(|d| d.valid.iter().all(|v| *v) && d.data.iter().all(|z| *z == 10.0)));
        let world = crate::geometry::unproject(&scene.views[0], 12.0, 7.0, 10.0).unwrap();
        let (u, v, _) = project(&scene.views[1], &world).unwrap();
        assert!((12.0 - u - 100.0 * 1.0 / 10.0).abs() < 1e-12);
        assert!((v - 7.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_depth_matches_closed_form() {
        let mut spec = rectified(10.0);
        spec.geometry = Geometry::Sphere {
            center: [0.0, 0.0, 10.0],
            radius: 2.0,
            backdrop: 20.0,
        };
        let scene = synth_scene(&spec).unwrap();
        let gt = &scene.gt_depths.as_ref().unwrap()[0];
        let k = &scene.views[0].intrinsics;
        for y in 0..spec.height {
            for x in 0..spec.width {
                let (a, b) = ((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy);
                // |t (a, b, 1) - (0, 0, 10)|^2 = 4
                let qa = a * a + b * b + 1.0;
                let disc = 100.0 - qa * 96.0;
                let expect = if disc >= 0.0 { (10.0 - disc.sqrt()) / qa } else { 20.0 };
                let got = gt.data[y * spec.width + x];
                assert!((got - expect).abs() < 1e-9 * expect, "({x},{y}) {got} vs {expect}");
            }
        }
        // smooth: the centre pixel is the nearest point of the sphere
        let min = gt.data.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((8.0..8.01).contains(&min));
    }

    #[test]
    fn two_planes_and_wedge() {
        let mut spec = rectified(10.0);
        spec.geometry = Geometry::TwoPlanes {
            near: 6.0,
            far: 12.0,
            split: 0.0,
        };
        let gt = render_view(&spec, &synth_views(&spec).unwrap()[0]).1;
        assert_eq!(gt.data[5 * 32 + 2], 6.0);
        assert_eq!(gt.data[5 * 32 + 30], 12.0);
        spec.geometry = Geometry::Wedge {
            apex: 8.0,
            slope: 1.0,
            ridge: 0.0,
        };
        let gt = render_view(&spec, &synth_views(&spec).unwrap()[0]).1;
        let row = &gt.data[12 * 32..13 * 32];
        let centre = row.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((8.0..8.1).contains(&centre));
        assert!(row[0] > centre && row[31] > centre);
    }

    #[test]
    fn single_view_is_rejected() {
        let mut spec = rectified(10.0);
        spec.num_views = 1;
        assert!(matches!(synth_scene(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SynthSceneSpec::preset("sphere", 20.0, 40.0, 3, 7).unwrap();
        let a = synth_scene(&spec).unwrap();
        let b = synth_scene(&spec).unwrap();
        assert_eq!(a, b);
        let mut other = spec.clone();
        other.seed = 8;
        assert_ne!(synth_scene(&other).unwrap().images, a.images);
    }

    #[test]
    fn convergent_sources_see_the_target() {
        let spec = SynthSceneSpec::preset("plane", 20.0, 40.0, 9, 1).unwrap();
        let views = synth_views(&spec).unwrap();
        let target = Vector3::new(0.0, 0.0, 30.0);
        for v in &views {
            let (u, w, _) = project(v, &target).unwrap();
            assert!((u - v.intrinsics.cx).abs() < 1e-9 && (w - v.intrinsics.cy).abs() < 1e-9);
        }
    }
}
