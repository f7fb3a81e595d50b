//! Pinhole camera model, rigid motions, and the backproject → transform → project chain.
//!
//! Pixel `(i, j)` is column `i`, row `j`, with pixel centers at integer coordinates,
//! so the homogeneous pixel is `[i, j, 1]ᵀ`. All arithmetic is `f64`.

use nalgebra::{Matrix3, Matrix4, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::warp::ProjectionRecord;

/// Points with depth at or below this value (meters) are invalid projections.
pub const Z_MIN: f64 = 1e-6;

/// Projected coordinates closer than this to an integer are snapped onto it, so
/// exact correspondences (identity motion, integer shifts) hit the grid exactly.
pub const SNAP_EPS: f64 = 1e-9;

const ORTHO_TOL: f64 = 1e-9;

/// Pinhole intrinsics `K` plus image bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics")]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Deserialize)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl TryFrom<RawIntrinsics> for Intrinsics {
    type Error = Error;

    fn try_from(r: RawIntrinsics) -> Result<Self> {
        Intrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::Intrinsics(format!(
                "focal lengths must be positive, got ({fx}, {fy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::Intrinsics(
                "image dimensions must be positive".into(),
            ));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::Intrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `K⁻¹ [i, j, 1]ᵀ`.
    #[inline]
    pub fn ray(&self, i: f64, j: f64) -> Vector3<f64> {
        Vector3::new((i - self.cx) / self.fx, (j - self.cy) / self.fy, 1.0)
    }

    /// Perspective division of `K p`; `None` when `p.z ≤ Z_MIN`.
    #[inline]
    pub fn project_point(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if !(p.z > Z_MIN) {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if (width, height) != (self.width, self.height) {
            return Err(Error::shape(
                format!("{}x{}", self.width, self.height),
                format!("{width}x{height}"),
            ));
        }
        Ok(())
    }
}

/// Rigid motion `p ↦ R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl PoseSE3 {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.iter().any(|v| !(v.abs() <= ORTHO_TOL)) {
            return Err(Error::Pose("rotation is not orthonormal".into()));
        }
        if !((rotation.determinant() - 1.0).abs() <= ORTHO_TOL) {
            return Err(Error::Pose("rotation determinant is not 1".into()));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Pose("translation is not finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation by `angle` radians about the camera y-axis.
    pub fn yaw(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// SE(3) exponential: Rodrigues rotation and the left-Jacobian `V` on the translation.
    pub fn exp(twist: &Twist) -> PoseSE3 {
        let v = Vector3::new(twist.0[0], twist.0[1], twist.0[2]);
        let w = Vector3::new(twist.0[3], twist.0[4], twist.0[5]);
        let theta2 = w.norm_squared();
        let theta = theta2.sqrt();
        let wx = skew(&w);
        let wx2 = wx * wx;
        let (a, b, c) = if theta < 1e-5 {
            // Taylor expansions of sinθ/θ, (1−cosθ)/θ², (θ−sinθ)/θ³.
            (
                1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
                0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
                1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0,
            )
        } else {
            let (s, co) = theta.sin_cos();
            (
                s / theta,
                (1.0 - co) / theta2,
                (theta - s) / (theta2 * theta),
            )
        };
        let rotation = Matrix3::identity() + wx * a + wx2 * b;
        let jac = Matrix3::identity() + wx * b + wx2 * c;
        PoseSE3 {
            rotation,
            translation: jac * v,
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// 16 values, row-major.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_matrix();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    pub fn from_row_major(values: &[f64; 16]) -> Result<Self> {
        let bottom = &values[12..16];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Pose(format!(
                "bottom row must be [0, 0, 0, 1], got {bottom:?}"
            )));
        }
        let rotation = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8], values[9],
            values[10],
        );
        let translation = Vector3::new(values[3], values[7], values[11]);
        Self::new(rotation, translation)
    }
}

impl Serialize for PoseSE3 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseJson {
            t: self.to_row_major(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PoseSE3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PoseJson::deserialize(d)?;
        PoseSE3::from_row_major(&raw.t).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct PoseJson {
    #[serde(rename = "T")]
    t: [f64; 16],
}

pub(crate) fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Local pose increment `(vx, vy, vz, wx, wy, wz)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist(pub [f64; 6]);

impl Twist {
    pub fn new(values: [f64; 6]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Pose("twist components must be finite".into()));
        }
        Ok(Self(values))
    }

    pub fn zero() -> Self {
        Self([0.0; 6])
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0.map(|v| v * k))
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;

    fn neg(self) -> Twist {
        self.scaled(-1.0)
    }
}

/// Strictly positive, finite per-pixel depths in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap(Grid<f64>);

impl DepthMap {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        if let Some(bad) = grid
            .as_slice()
            .iter()
            .find(|d| !(d.is_finite() && **d > 0.0))
        {
            return Err(Error::Depth(format!(
                "depth {bad} is not strictly positive and finite"
            )));
        }
        Ok(Self(grid))
    }

    pub fn from_vec(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(Grid::from_vec(width, height, values)?)
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Result<Self> {
        Self::new(Grid::filled(width, height, depth))
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        Self::new(Grid::from_fn(width, height, f))
    }

    pub(crate) fn from_grid_unchecked(grid: Grid<f64>) -> Self {
        debug_assert!(grid.as_slice().iter().all(|d| *d > 0.0));
        Self(grid)
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        *self.0.get(i, j)
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn mean(&self) -> f64 {
        self.as_slice().iter().sum::<f64>() / self.0.len() as f64
    }

    /// Multiplies every depth by `k > 0`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.0.map(|d| d * k))
    }
}

/// Camera-frame points, one per source pixel, in grid order.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud(Grid<Vector3<f64>>);

impl PointCloud {
    pub fn new(grid: Grid<Vector3<f64>>) -> Self {
        Self(grid)
    }

    pub fn grid(&self) -> &Grid<Vector3<f64>> {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn get(&self, i: usize, j: usize) -> &Vector3<f64> {
        self.0.get(i, j)
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        self.0.as_slice()
    }
}

/// `Q^{ij} = D^{ij} · K⁻¹ [i, j, 1]ᵀ`.
pub fn backproject(depth: &DepthMap, intr: &Intrinsics) -> Result<PointCloud> {
    intr.check_dims(depth.width(), depth.height())?;
    Ok(PointCloud(Grid::from_fn(
        depth.width(),
        depth.height(),
        |i, j| intr.ray(i as f64, j as f64) * depth.get(i, j),
    )))
}

pub fn transform_points(cloud: &PointCloud, pose: &PoseSE3) -> PointCloud {
    PointCloud(cloud.0.map(|p| pose.apply(p)))
}

#[inline]
pub(crate) fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < SNAP_EPS {
        r
    } else {
        x
    }
}

/// Perspective projection of every point; points with `z ≤ Z_MIN` are flagged invalid.
pub fn project(cloud: &PointCloud, intr: &Intrinsics) -> ProjectionRecord {
    let (w, h) = cloud.dims();
    let entries: Vec<([f64; 2], f64, bool)> = cloud
        .points()
        .par_iter()
        .map(|p| match intr.project_point(p) {
            Some((u, v)) => ([snap(u), snap(v)], p.z, true),
            None => ([f64::NAN, f64::NAN], p.z, false),
        })
        .collect();
    let mut coords = Vec::with_capacity(w * h);
    let mut z = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for (c, d, ok) in entries {
        coords.push(c);
        z.push(d);
        valid.push(ok);
    }
    ProjectionRecord::from_parts(w, h, coords, z, valid).expect("shapes agree by construction")
}

/// Backproject `depth`, move the points with `pose`, and project them back through `intr`.
pub fn project_depth(
    depth: &DepthMap,
    pose: &PoseSE3,
    intr: &Intrinsics,
) -> Result<ProjectionRecord> {
    let cloud = backproject(depth, intr)?;
    Ok(project(&transform_points(&cloud, pose), intr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_k(w: usize, h: usize) -> Intrinsics {
        Intrinsics::new(1.0, 1.0, 0.0, 0.0, w, h).unwrap()
    }

    #[test]
    fn intrinsics_invariants() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 4.0, 0.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 0.0, -0.5, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 3.9, 3.9, 4, 4).is_ok());
    }

    #[test]
    fn backproject_examples() {
        let k = unit_k(4, 4);
        let ones = DepthMap::constant(4, 4, 1.0).unwrap();
        let cloud = backproject(&ones, &k).unwrap();
        assert_eq!(*cloud.get(0, 0), Vector3::new(0.0, 0.0, 1.0));

        let d = DepthMap::from_fn(4, 4, |i, j| if (i, j) == (2, 3) { 2.0 } else { 1.0 }).unwrap();
        let cloud = backproject(&d, &k).unwrap();
        assert_eq!(*cloud.get(2, 3), Vector3::new(4.0, 6.0, 2.0));

        let k2 = Intrinsics::new(2.0, 1.0, 1.0, 0.0, 4, 1).unwrap();
        let d = DepthMap::constant(4, 1, 1.0).unwrap();
        assert_eq!(backproject(&d, &k2).unwrap().get(3, 0).x, 1.0);
    }

    #[test]
    fn backproject_rejects_wrong_shape() {
        let d = DepthMap::constant(3, 4, 1.0).unwrap();
        assert!(matches!(
            backproject(&d, &unit_k(4, 4)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn depth_map_rejects_non_positive() {
        assert!(DepthMap::from_vec(2, 1, vec![1.0, 0.0]).is_err());
        assert!(DepthMap::from_vec(2, 1, vec![1.0, -2.0]).is_err());
        assert!(DepthMap::from_vec(2, 1, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn transform_examples() {
        let cloud =
            PointCloud::new(Grid::from_vec(1, 1, vec![Vector3::new(4.0, 6.0, 2.0)]).unwrap());
        assert_eq!(transform_points(&cloud, &PoseSE3::identity()), cloud);
        let moved = transform_points(
            &cloud,
            &PoseSE3::from_translation(Vector3::new(1.0, 0.0, 0.0)),
        );
        assert_eq!(*moved.get(0, 0), Vector3::new(5.0, 6.0, 2.0));

        let forward =
            PointCloud::new(Grid::from_vec(1, 1, vec![Vector3::new(0.0, 0.0, 1.0)]).unwrap());
        let yawed = transform_points(&forward, &PoseSE3::yaw(std::f64::consts::FRAC_PI_2));
        assert_abs_diff_eq!(
            *yawed.get(0, 0),
            Vector3::new(1.0, 0.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn project_examples() {
        let k = unit_k(8, 8);
        let cloud = PointCloud::new(
            Grid::from_vec(
                2,
                1,
                vec![Vector3::new(5.0, 6.0, 2.0), Vector3::new(1.0, 1.0, 0.0)],
            )
            .unwrap(),
        );
        let rec = project(&cloud, &k);
        assert_eq!(rec.coord(0, 0), [2.5, 3.0]);
        assert_eq!(rec.depth(0, 0), 2.0);
        assert!(rec.is_valid(0, 0));
        assert!(!rec.is_valid(1, 0));
    }

    #[test]
    fn identity_round_trip_is_exact() {
        let k = Intrinsics::new(96.0, 93.0, 63.5, 31.5, 128, 64).unwrap();
        let d = DepthMap::from_fn(128, 64, |i, j| {
            1.0 + 0.37 * i as f64 + 0.11 * (j as f64).sin().abs()
        })
        .unwrap();
        let rec = project_depth(&d, &PoseSE3::identity(), &k).unwrap();
        for j in 0..64 {
            for i in 0..128 {
                assert_eq!(rec.coord(i, j), [i as f64, j as f64]);
                assert_abs_diff_eq!(rec.depth(i, j), d.get(i, j), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn exp_examples() {
        assert_eq!(PoseSE3::exp(&Twist::zero()), PoseSE3::identity());
        let p = PoseSE3::exp(&Twist([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        assert_eq!(*p.translation(), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(*p.rotation(), Matrix3::identity());
    }

    #[test]
    fn exp_rotation_matches_yaw() {
        let p = PoseSE3::exp(&Twist([0.0, 0.0, 0.0, 0.0, 0.3, 0.0]));
        assert_abs_diff_eq!(
            *p.rotation(),
            *PoseSE3::yaw(0.3).rotation(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn pose_json_uses_row_major_t() {
        let p = PoseSE3::exp(&Twist([0.1, -0.2, 0.3, 0.0, 0.0, 0.0]));
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.starts_with("{\"T\":[1.0,0.0,0.0,0.1,"), "{s}");
        let back: PoseSE3 = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(
            serde_json::from_str::<PoseSE3>("{\"T\":[2,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}")
                .is_err()
        );
    }

    #[test]
    fn intrinsics_json_field_names() {
        let k = Intrinsics::new(96.0, 96.0, 63.5, 31.5, 128, 64).unwrap();
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(
            s,
            r#"{"fx":96.0,"fy":96.0,"cx":63.5,"cy":31.5,"width":128,"height":64}"#
        );
        assert!(serde_json::from_str::<Intrinsics>(
            r#"{"fx":-1,"fy":1,"cx":0,"cy":0,"width":2,"height":2}"#
        )
        .is_err());
    }
}
