//! Pinhole cameras, fronto-parallel plane homographies and image warping.

use nalgebra::{Matrix3, Matrix4, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Image;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::SingularIntrinsics);
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidCamera("principal point must be finite".into()));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Result<Matrix3<f64>> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::SingularIntrinsics);
        }
        Ok(Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        ))
    }

    /// Intrinsics for an image box-downsampled by `factor`: pixel `i` of the
    /// coarse grid covers fine pixels `factor*i .. factor*i + factor - 1`.
    pub fn downscaled(&self, factor: usize) -> Self {
        let s = factor as f64;
        let shift = (s - 1.0) / 2.0;
        Self {
            fx: self.fx / s,
            fy: self.fy / s,
            cx: (self.cx - shift) / s,
            cy: (self.cy - shift) / s,
        }
    }
}

/// World-to-camera rigid transform: `X_cam = R * X_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraExtrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraExtrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (max |R^T R - I| = {err:e})"
            )));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidCamera(format!("rotation determinant {det} != 1")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("translation must be finite".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Projects a nearly orthonormal rotation onto SO(3) (polar
    /// decomposition). Used for camera files printed with limited precision.
    pub fn orthonormalized(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let svd = rotation.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::InvalidCamera("rotation SVD failed".into())),
        };
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            return Err(Error::InvalidCamera("rotation is a reflection".into()));
        }
        // one Newton step tightens orthonormality to machine precision
        r = 0.5 * (r + r.try_inverse().unwrap_or(r).transpose());
        Self::new(r, translation)
    }

    pub fn from_matrix4(m: &Matrix4<f64>) -> Result<Self> {
        let rotation = m.fixed_view::<3, 3>(0, 0).into_owned();
        let translation = m.fixed_view::<3, 1>(0, 3).into_owned();
        Self::new(rotation, translation)
    }

    pub fn matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    #[inline]
    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world + self.translation
    }

    #[inline]
    pub fn to_world(&self, cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (cam - self.translation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
    /// `(d_min, d_max)` hint in scene units.
    pub depth_hint: Option<(f64, f64)>,
    pub image_id: String,
}

impl CameraView {
    pub fn new(
        intrinsics: CameraIntrinsics,
        extrinsics: CameraExtrinsics,
        depth_hint: Option<(f64, f64)>,
        image_id: impl Into<String>,
    ) -> Result<Self> {
        if let Some((lo, hi)) = depth_hint {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::InvalidCamera(format!("invalid depth hint ({lo}, {hi})")));
            }
        }
        Ok(Self {
            intrinsics,
            extrinsics,
            depth_hint,
            image_id: image_id.into(),
        })
    }

    /// Same pose, intrinsics adapted to a `factor`-times coarser grid.
    pub fn downscaled(&self, factor: usize) -> Self {
        Self {
            intrinsics: self.intrinsics.downscaled(factor),
            ..self.clone()
        }
    }
}

/// Projects a world point; returns `(u, v, depth)`.
pub fn project(view: &CameraView, point: &Vector3<f64>) -> Result<(f64, f64, f64)> {
    let p = view.extrinsics.to_camera(point);
    if !(p.z > 0.0) {
        return Err(Error::PointBehindCamera(p.z));
    }
    let k = &view.intrinsics;
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy, p.z))
}

pub fn unproject(view: &CameraView, u: f64, v: f64, depth: f64) -> Result<Vector3<f64>> {
    if !(depth > 0.0) {
        return Err(Error::NonPositiveDepth(depth));
    }
    let k = &view.intrinsics;
    let cam = Vector3::new((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth);
    Ok(view.extrinsics.to_world(&cam))
}

/// Projective map from reference pixels to source pixels, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography3x3(pub Matrix3<f64>);

impl Homography3x3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_row_major(m: [f64; 9]) -> Result<Self> {
        let h = Matrix3::from_row_slice(&m);
        if h.determinant() == 0.0 || !h.iter().all(|v| v.is_finite()) {
            return Err(Error::ShapeMismatch("homography must be finite and invertible".into()));
        }
        Ok(Self(h))
    }

    /// Scaled so the bottom-right entry is 1 (when nonzero).
    pub fn normalized(&self) -> Self {
        let s = self.0[(2, 2)];
        if s != 0.0 {
            Self(self.0 / s)
        } else {
            *self
        }
    }

    /// Maps `(u, v)`; `None` when the point goes to infinity or behind.
    #[inline]
    pub fn apply(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let h = &self.0;
        let w = h[(2, 0)] * u + h[(2, 1)] * v + h[(2, 2)];
        if !(w > 0.0) {
            return None;
        }
        let x = h[(0, 0)] * u + h[(0, 1)] * v + h[(0, 2)];
        let y = h[(1, 0)] * u + h[(1, 1)] * v + h[(1, 2)];
        Some((x / w, y / w))
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let h = &self.0;
        [
            h[(0, 0)],
            h[(0, 1)],
            h[(0, 2)],
            h[(1, 0)],
            h[(1, 1)],
            h[(1, 2)],
            h[(2, 0)],
            h[(2, 1)],
            h[(2, 2)],
        ]
    }
}

/// Relative pose taking reference-camera coordinates to source-camera
/// coordinates.
pub fn relative_pose(reference: &CameraView, source: &CameraView) -> (Matrix3<f64>, Vector3<f64>) {
    let r_ref = &reference.extrinsics.rotation;
    let r_src = &source.extrinsics.rotation;
    let r_rel = r_src * r_ref.transpose();
    let t_rel = source.extrinsics.translation - r_rel * reference.extrinsics.translation;
    (r_rel, t_rel)
}

/// Homography induced by the reference-frame plane `z = d`:
/// `H = K_src (R_rel + t_rel n^T / d) K_ref^-1` with `n = (0, 0, 1)`.
pub fn plane_homography(reference: &CameraView, source: &CameraView, depth: f64) -> Result<Homography3x3> {
    if !(depth > 0.0) {
        return Err(Error::NonPositiveDepth(depth));
    }
    let k_ref_inv = reference.intrinsics.inverse_matrix()?;
    let k_src = source.intrinsics.matrix();
    let (r_rel, t_rel) = relative_pose(reference, source);
    let n = Vector3::new(0.0, 0.0, 1.0);
    let h = k_src * (r_rel + t_rel * n.transpose() / depth) * k_ref_inv;
    Ok(Homography3x3(h).normalized())
}

/// Per-pixel form of the plane sweep: for a reference pixel whose viewing
/// ray is `ray` (with unit z), the source pixel at depth `d` is
/// `K_src (d * R_rel * ray + t_rel)`.
#[derive(Debug, Clone)]
pub struct RayWarper {
    k_src: CameraIntrinsics,
    t_rel: Vector3<f64>,
    rotated_rays: Vec<Vector3<f64>>,
    width: usize,
}

impl RayWarper {
    pub fn new(reference: &CameraView, source: &CameraView, width: usize, height: usize) -> Self {
        let (r_rel, t_rel) = relative_pose(reference, source);
        let k = &reference.intrinsics;
        let mut rotated_rays = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let ray = Vector3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
                rotated_rays.push(r_rel * ray);
            }
        }
        Self {
            k_src: source.intrinsics,
            t_rel,
            rotated_rays,
            width,
        }
    }

    #[inline]
    pub fn map(&self, x: usize, y: usize, depth: f64) -> Option<(f64, f64)> {
        let p = self.rotated_rays[y * self.width + x] * depth + self.t_rel;
        if !(p.z > 0.0) {
            return None;
        }
        Some((
            self.k_src.fx * p.x / p.z + self.k_src.cx,
            self.k_src.fy * p.y / p.z + self.k_src.cy,
        ))
    }
}

/// Bilinear backward warp of `src` through `h`. Pixels whose sample point
/// falls outside the source image are zero and masked invalid.
pub fn warp_map(src: &Image, h: &Homography3x3) -> Result<(Image, Vec<bool>)> {
    if src.width < 2 || src.height < 2 {
        return Err(Error::ImageTooSmall {
            width: src.width,
            height: src.height,
            window: 2,
        });
    }
    Ok(warp_with(src, src.width, src.height, |x, y| {
        h.apply(x as f64, y as f64)
    }))
}

/// Generic backward warp onto a `width x height` grid.
pub fn warp_with<F>(src: &Image, width: usize, height: usize, map: F) -> (Image, Vec<bool>)
where
    F: Fn(usize, usize) -> Option<(f64, f64)> + Sync,
{
    let c = src.channels;
    let mut out = Image::zeros(width, height, c);
    let mut mask = vec![false; width * height];
    out.data
        .par_chunks_mut(width * c)
        .zip(mask.par_chunks_mut(width))
        .enumerate()
        .for_each(|(y, (row, mrow))| {
            for x in 0..width {
                if let Some((sx, sy)) = map(x, y) {
                    mrow[x] = src.sample_bilinear(sx, sy, &mut row[x * c..(x + 1) * c]);
                }
            }
        });
    (out, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam(k: (f64, f64, f64, f64), t: [f64; 3]) -> CameraView {
        CameraView::new(
            CameraIntrinsics::new(k.0, k.1, k.2, k.3).unwrap(),
            CameraExtrinsics::new(Matrix3::identity(), Vector3::from(t)).unwrap(),
            None,
            "v",
        )
        .unwrap()
    }

    fn rotation(ax: f64, ay: f64, az: f64) -> Matrix3<f64> {
        *nalgebra::Rotation3::from_euler_angles(ax, ay, az).matrix()
    }

    #[test]
    fn projection_examples() {
        let v = cam((100.0, 100.0, 50.0, 50.0), [0.0; 3]);
        assert_eq!(project(&v, &Vector3::new(0.0, 0.0, 10.0)).unwrap(), (50.0, 50.0, 10.0));
        assert_eq!(project(&v, &Vector3::new(1.0, 0.0, 10.0)).unwrap(), (60.0, 50.0, 10.0));
        assert!(matches!(
            project(&v, &Vector3::new(0.0, 0.0, -1.0)),
            Err(Error::PointBehindCamera(_))
        ));
        assert!(matches!(
            project(&v, &Vector3::new(1.0, 0.0, 0.0)),
            Err(Error::PointBehindCamera(_))
        ));
    }

    #[test]
    fn unprojection_examples() {
        let v = cam((100.0, 100.0, 50.0, 50.0), [0.0; 3]);
        assert_eq!(unproject(&v, 50.0, 50.0, 10.0).unwrap(), Vector3::new(0.0, 0.0, 10.0));
        assert_eq!(unproject(&v, 60.0, 50.0, 10.0).unwrap(), Vector3::new(1.0, 0.0, 10.0));
        assert!(matches!(unproject(&v, 1.0, 1.0, 0.0), Err(Error::NonPositiveDepth(_))));
    }

    #[test]
    fn homography_examples() {
        let r = cam((100.0, 100.0, 50.0, 50.0), [0.0; 3]);
        let h = plane_homography(&r, &r, 3.7).unwrap();
        assert!((h.0 - Matrix3::identity()).abs().max() < 1e-12);

        let s = cam((100.0, 100.0, 50.0, 50.0), [1.0, 0.0, 0.0]);
        let h = plane_homography(&r, &s, 10.0).unwrap();
        let expected = Matrix3::new(1.0, 0.0, 10.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!((h.0 - expected).abs().max() < 1e-12);
        assert!(matches!(plane_homography(&r, &s, 0.0), Err(Error::NonPositiveDepth(_))));
    }

    #[test]
    fn rejects_bad_cameras() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        let mut r = Matrix3::identity();
        r[(0, 0)] = -1.0;
        assert!(CameraExtrinsics::new(r, Vector3::zeros()).is_err());
        r[(0, 0)] = 1.0 + 1e-6;
        assert!(CameraExtrinsics::new(r, Vector3::zeros()).is_err());
        let fixed = CameraExtrinsics::orthonormalized(r, Vector3::zeros()).unwrap();
        assert!((fixed.rotation - Matrix3::identity()).abs().max() < 1e-5);
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(CameraView::new(k, CameraExtrinsics::identity(), Some((2.0, 1.0)), "x").is_err());
        assert!(CameraView::new(k, CameraExtrinsics::identity(), Some((0.0, 1.0)), "x").is_err());
    }

    #[test]
    fn homography_agrees_with_point_transfer() {
        let k = CameraIntrinsics::new(120.0, 110.0, 40.0, 30.0).unwrap();
        let r = CameraView::new(
            k,
            CameraExtrinsics::new(rotation(0.1, -0.05, 0.02), Vector3::new(0.3, -0.2, 0.5)).unwrap(),
            None,
            "r",
        )
        .unwrap();
        let s = CameraView::new(
            k,
            CameraExtrinsics::new(rotation(-0.04, 0.08, 0.01), Vector3::new(-0.7, 0.1, 0.4)).unwrap(),
            None,
            "s",
        )
        .unwrap();
        let d = 6.5;
        let h = plane_homography(&r, &s, d).unwrap();
        let warper = RayWarper::new(&r, &s, 80, 60);
        for &(u, v) in &[(0usize, 0usize), (17, 42), (79, 59)] {
            let world = unproject(&r, u as f64, v as f64, d).unwrap();
            let (su, sv, _) = project(&s, &world).unwrap();
            let (hu, hv) = h.apply(u as f64, v as f64).unwrap();
            assert!((su - hu).abs() < 1e-9 && (sv - hv).abs() < 1e-9);
            let (wu, wv) = warper.map(u, v, d).unwrap();
            assert!((su - wu).abs() < 1e-9 && (sv - wv).abs() < 1e-9);
        }
    }

    #[test]
    fn warp_examples() {
        let src = Image::from_fn(20, 6, 2, |x, y, c| (x * 7 + y * 3 + c) as f64 * 0.5);
        let (w, m) = warp_map(&src, &Homography3x3::identity()).unwrap();
        assert_eq!(w, src);
        assert!(m.iter().all(|v| *v));

        let shift = Homography3x3::from_row_major([1.0, 0.0, 10.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let (w, m) = warp_map(&src, &shift).unwrap();
        for y in 0..6 {
            for x in 0..20 {
                if x + 10 < 20 {
                    assert!(m[y * 20 + x]);
                    assert_eq!(w.pixel(x, y), src.pixel(x + 10, y));
                } else {
                    assert!(!m[y * 20 + x]);
                    assert_eq!(w.pixel(x, y), &[0.0, 0.0]);
                }
            }
        }

        let away = Homography3x3::from_row_major([1.0, 0.0, 1000.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let (w, m) = warp_map(&src, &away).unwrap();
        assert!(m.iter().all(|v| !*v));
        assert!(w.data.iter().all(|v| *v == 0.0));

        let tiny = Image::zeros(1, 4, 1);
        assert!(warp_map(&tiny, &Homography3x3::identity()).is_err());
    }

    #[test]
    fn downscaled_intrinsics_track_pixel_centers() {
        let k = CameraIntrinsics::new(80.0, 80.0, 39.5, 31.5).unwrap();
        let k8 = k.downscaled(8);
        // fine pixel center of coarse pixel i is 8i + 3.5
        let x = 1.3;
        let fine_u = k.fx * x + k.cx;
        let coarse_u = k8.fx * x + k8.cx;
        assert!((fine_u - (8.0 * coarse_u + 3.5)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn project_unproject_roundtrip(
            u in -50.0f64..150.0, v in -50.0f64..150.0, d in 0.1f64..100.0,
            ax in -0.5f64..0.5, ay in -0.5f64..0.5, az in -0.5f64..0.5,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0,
        ) {
            let view = CameraView::new(
                CameraIntrinsics::new(90.0, 95.0, 48.0, 52.0).unwrap(),
                CameraExtrinsics::new(rotation(ax, ay, az), Vector3::new(tx, ty, tz)).unwrap(),
                None,
                "p",
            ).unwrap();
            let w = unproject(&view, u, v, d).unwrap();
            let (pu, pv, pd) = project(&view, &w).unwrap();
            prop_assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9 && (pd - d).abs() < 1e-9);
        }

        #[test]
        fn rectified_shift_is_disparity(d in 0.5f64..200.0, b in 0.01f64..10.0) {
            let r = cam((100.0, 100.0, 50.0, 50.0), [0.0; 3]);
            let s = cam((100.0, 100.0, 50.0, 50.0), [b, 0.0, 0.0]);
            let h = plane_homography(&r, &s, d).unwrap();
            for &(u, v) in &[(0.0, 0.0), (33.0, 71.0), (99.0, 12.0)] {
                let (x, y) = h.apply(u, v).unwrap();
                prop_assert!((x - u - 100.0 * b / d).abs() < 1e-9);
                prop_assert!((y - v).abs() < 1e-9);
            }
        }

        #[test]
        fn self_homography_is_identity(d in 0.01f64..1e4) {
            let r = cam((70.0, 90.0, 33.0, 21.0), [0.2, -0.4, 1.0]);
            let h = plane_homography(&r, &r, d).unwrap();
            prop_assert!((h.0 - Matrix3::identity()).abs().max() < 1e-12);
        }
    }
}
