//! Deterministic synthetic scenes of textured fronto-parallel rectangles, a ray-cast
//! renderer, and an exact visibility oracle for frame pairs.
//!
//! Poses in this module are camera-to-world. World z is the viewing direction of the
//! reference camera; every primitive is the rectangle `{z = depth} × [x0,x1] × [y0,y1]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics, PoseSE3, Z_MIN};
use crate::grid::{Grid, Mask};
use crate::image::ImageBuffer;

/// Depth tolerance of the visibility oracle, in meters.
pub const VISIBILITY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Sinusoid {
    amplitude: f64,
    /// Angular frequency in radians per meter.
    omega: f64,
    phase: f64,
}

/// Sum of a few seeded sinusoids per axis around mid-gray.
#[derive(Clone, Debug, PartialEq)]
pub struct Texture {
    base: f64,
    x_terms: Vec<Sinusoid>,
    y_terms: Vec<Sinusoid>,
}

impl Texture {
    /// Wavelength band, in pixels of the view the texture was sized for.
    pub const MIN_WAVELENGTH_PX: f64 = 6.0;
    pub const MAX_WAVELENGTH_PX: f64 = 16.0;
    const X_AMPLITUDE: (f64, f64) = (0.05, 0.08);
    const Y_AMPLITUDE: (f64, f64) = (0.04, 0.06);

    /// `meters_per_pixel` converts the pixel wavelength band into plane units. The
    /// amplitudes of all terms sum to at most 0.44 around a base in [0.45, 0.55], so
    /// the texture never saturates.
    pub fn procedural(seed: u64, meters_per_pixel: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = rng.gen_range(0.45..0.55);
        let mut axis = |count: usize, (lo, hi): (f64, f64)| -> Vec<Sinusoid> {
            (0..count)
                .map(|_| {
                    let wavelength_px =
                        rng.gen_range(Self::MIN_WAVELENGTH_PX..Self::MAX_WAVELENGTH_PX);
                    Sinusoid {
                        amplitude: rng.gen_range(lo..hi),
                        omega: std::f64::consts::TAU / (wavelength_px * meters_per_pixel),
                        phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    }
                })
                .collect()
        };
        let x_terms = axis(4, Self::X_AMPLITUDE);
        let y_terms = axis(2, Self::Y_AMPLITUDE);
        Self {
            base,
            x_terms,
            y_terms,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            base: value.clamp(0.0, 1.0),
            x_terms: Vec::new(),
            y_terms: Vec::new(),
        }
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let sx: f64 = self
            .x_terms
            .iter()
            .map(|s| s.amplitude * (s.omega * x + s.phase).sin())
            .sum();
        let sy: f64 = self
            .y_terms
            .iter()
            .map(|s| s.amplitude * (s.omega * y + s.phase).sin())
            .sum();
        (self.base + sx + sy).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rectangle {
    pub depth: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub texture: Texture,
}

impl Rectangle {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_range.0 && x <= self.x_range.1 && y >= self.y_range.0 && y <= self.y_range.1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    primitives: Vec<Rectangle>,
    background_depth: f64,
    background: Texture,
}

/// Nearest surface along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Ray parameter; equals the camera-frame depth for rays `R · K⁻¹[u, v, 1]ᵀ`.
    pub depth: f64,
    pub point: Vector3<f64>,
    /// Index into the primitives, `None` for the background.
    pub primitive: Option<usize>,
}

impl Scene {
    pub fn new(
        primitives: Vec<Rectangle>,
        background_depth: f64,
        background: Texture,
    ) -> Result<Self> {
        if !(background_depth > 0.0 && background_depth.is_finite()) {
            return Err(Error::Scene("background depth must be positive".into()));
        }
        for (k, p) in primitives.iter().enumerate() {
            if !(p.depth > 0.0 && p.depth < background_depth) {
                return Err(Error::Scene(format!(
                    "primitive {k} depth {} outside (0, {background_depth})",
                    p.depth
                )));
            }
            if !(p.x_range.0 < p.x_range.1 && p.y_range.0 < p.y_range.1) {
                return Err(Error::Scene(format!("primitive {k} has empty extent")));
            }
            if primitives[..k].iter().any(|q| q.depth == p.depth) {
                return Err(Error::Scene(format!(
                    "primitive {k} shares its depth with another primitive"
                )));
            }
        }
        Ok(Self {
            primitives,
            background_depth,
            background,
        })
    }

    pub fn primitives(&self) -> &[Rectangle] {
        &self.primitives
    }

    pub fn background_depth(&self) -> f64 {
        self.background_depth
    }

    /// Nearest intersection of `origin + s·dir`, `s > 0`. The background always hits
    /// for rays with `dir.z > 0` from in front of it.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        if !(dir.z > 0.0) {
            return None;
        }
        let mut best: Option<Hit> = None;
        for (k, p) in self.primitives.iter().enumerate() {
            let s = (p.depth - origin.z) / dir.z;
            if s <= 0.0 {
                continue;
            }
            let point = origin + dir * s;
            if p.contains(point.x, point.y) && best.is_none_or(|b| s < b.depth) {
                best = Some(Hit {
                    depth: s,
                    point,
                    primitive: Some(k),
                });
            }
        }
        if best.is_none() {
            let s = (self.background_depth - origin.z) / dir.z;
            if s > 0.0 {
                best = Some(Hit {
                    depth: s,
                    point: origin + dir * s,
                    primitive: None,
                });
            }
        }
        best
    }

    pub fn shade(&self, hit: &Hit) -> f64 {
        match hit.primitive {
            Some(k) => self.primitives[k].texture.sample(hit.point.x, hit.point.y),
            None => self.background.sample(hit.point.x, hit.point.y),
        }
    }

    fn check_camera(&self, intr: &Intrinsics, pose: &PoseSE3) -> Result<()> {
        let c = pose.translation();
        let nearest = self
            .primitives
            .iter()
            .map(|p| p.depth)
            .fold(self.background_depth, f64::min);
        if !(c.z < nearest - Z_MIN) {
            return Err(Error::Scene(format!(
                "camera at z = {} is not in front of all geometry (nearest plane z = {nearest})",
                c.z
            )));
        }
        // The ray z-component is affine in the pixel coordinate: checking corners suffices.
        let (w, h) = (intr.width as f64 - 1.0, intr.height as f64 - 1.0);
        for (u, v) in [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)] {
            let d = pose.rotation() * intr.ray(u, v);
            if !(d.z > 0.0) {
                return Err(Error::Scene("camera looks away from the scene".into()));
            }
        }
        Ok(())
    }

    fn ray(&self, intr: &Intrinsics, pose: &PoseSE3, u: f64, v: f64) -> Option<Hit> {
        self.cast(pose.translation(), &(pose.rotation() * intr.ray(u, v)))
    }
}

/// Ray-casts one view through pixel centers. `pose` is camera-to-world.
pub fn render(scene: &Scene, intr: &Intrinsics, pose: &PoseSE3) -> Result<(ImageBuffer, DepthMap)> {
    scene.check_camera(intr, pose)?;
    let (w, h) = intr.dims();
    let rows: Vec<Vec<(f64, f64)>> = (0..h)
        .into_par_iter()
        .map(|j| {
            (0..w)
                .map(|i| {
                    let hit = scene
                        .ray(intr, pose, i as f64, j as f64)
                        .expect("camera checked");
                    (scene.shade(&hit), hit.depth)
                })
                .collect()
        })
        .collect();
    let flat: Vec<(f64, f64)> = rows.into_iter().flatten().collect();
    let image = ImageBuffer::new(w, h, 1, flat.iter().map(|p| p.0).collect())?;
    let depth = DepthMap::from_vec(w, h, flat.iter().map(|p| p.1).collect())?;
    Ok((image, depth))
}

/// Ground-truth correspondence status of a pixel with respect to the other view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Visibility {
    VisibleBoth,
    OccludedInOther,
    OutOfViewInOther,
}

impl Visibility {
    /// Gray level used when exporting labels.
    pub fn gray(self) -> u8 {
        match self {
            Visibility::VisibleBoth => 255,
            Visibility::OccludedInOther => 128,
            Visibility::OutOfViewInOther => 0,
        }
    }
}

pub type VisibilityLabels = Grid<Visibility>;

/// How a mask (1 = kept) treats each visibility class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MaskAudit {
    pub visible: usize,
    pub visible_kept: usize,
    pub occluded: usize,
    pub occluded_masked: usize,
    pub out_of_view: usize,
    pub out_of_view_masked: usize,
}

impl MaskAudit {
    pub fn new(labels: &VisibilityLabels, mask: &Mask) -> Result<Self> {
        if labels.dims() != mask.dims() {
            return Err(Error::shape(
                format!("{}x{}", labels.width(), labels.height()),
                format!("{}x{}", mask.width(), mask.height()),
            ));
        }
        let mut a = MaskAudit::default();
        for (label, &kept) in labels.as_slice().iter().zip(mask.bits()) {
            match label {
                Visibility::VisibleBoth => {
                    a.visible += 1;
                    a.visible_kept += kept as usize;
                }
                Visibility::OccludedInOther => {
                    a.occluded += 1;
                    a.occluded_masked += !kept as usize;
                }
                Visibility::OutOfViewInOther => {
                    a.out_of_view += 1;
                    a.out_of_view_masked += !kept as usize;
                }
            }
        }
        Ok(a)
    }

    /// Pixels without a true correspondence that the mask still keeps.
    pub fn unmasked_mismatch(&self) -> usize {
        (self.occluded - self.occluded_masked) + (self.out_of_view - self.out_of_view_masked)
    }

    /// Fraction of occluded pixels that are masked; 1 when there are none.
    pub fn occlusion_recall(&self) -> f64 {
        if self.occluded == 0 {
            1.0
        } else {
            self.occluded_masked as f64 / self.occluded as f64
        }
    }

    /// Fraction of mutually visible pixels that are kept; 1 when there are none.
    pub fn visible_retention(&self) -> f64 {
        if self.visible == 0 {
            1.0
        } else {
            self.visible_kept as f64 / self.visible as f64
        }
    }
}

/// Labels every pixel of view `a` by whether its surface point is seen by view `b`.
pub fn visibility_oracle(
    scene: &Scene,
    intr: &Intrinsics,
    pose_a: &PoseSE3,
    pose_b: &PoseSE3,
) -> Result<VisibilityLabels> {
    scene.check_camera(intr, pose_a)?;
    scene.check_camera(intr, pose_b)?;
    let (w, h) = intr.dims();
    let world_to_b = pose_b.inverse();
    let (wmax, hmax) = ((w - 1) as f64, (h - 1) as f64);
    let rows: Vec<Vec<Visibility>> = (0..h)
        .into_par_iter()
        .map(|j| {
            (0..w)
                .map(|i| {
                    let hit = scene
                        .ray(intr, pose_a, i as f64, j as f64)
                        .expect("camera checked");
                    let in_b = world_to_b.apply(&hit.point);
                    let Some((u, v)) = intr.project_point(&in_b) else {
                        return Visibility::OutOfViewInOther;
                    };
                    if !(0.0..=wmax).contains(&u) || !(0.0..=hmax).contains(&v) {
                        return Visibility::OutOfViewInOther;
                    }
                    match scene.ray(intr, pose_b, u, v) {
                        Some(other) if other.depth < in_b.z - VISIBILITY_TOL => {
                            Visibility::OccludedInOther
                        }
                        _ => Visibility::VisibleBoth,
                    }
                })
                .collect()
        })
        .collect();
    Grid::from_vec(w, h, rows.into_iter().flatten().collect())
}

/// Named reference configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PresetName {
    Identity,
    PureTranslation,
    OccluderFig3,
    ReverseFig5,
    ThinObjectFig7,
}

impl PresetName {
    pub const ALL: [PresetName; 5] = [
        PresetName::Identity,
        PresetName::PureTranslation,
        PresetName::OccluderFig3,
        PresetName::ReverseFig5,
        PresetName::ThinObjectFig7,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Identity => "identity",
            PresetName::PureTranslation => "pure_translation",
            PresetName::OccluderFig3 => "occluder_fig3",
            PresetName::ReverseFig5 => "reverse_fig5",
            PresetName::ThinObjectFig7 => "thin_object_fig7",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// A scene with a camera pair: frame `t−1` then frame `t`, both camera-to-world.
#[derive(Clone, Debug)]
pub struct Preset {
    pub name: PresetName,
    pub scene: Scene,
    pub intrinsics: Intrinsics,
    pub camera_tm1: PoseSE3,
    pub camera_t: PoseSE3,
}

/// Rendered views of a preset.
#[derive(Clone, Debug)]
pub struct RenderedPair {
    pub x_t: ImageBuffer,
    pub x_tm1: ImageBuffer,
    pub d_t: DepthMap,
    pub d_tm1: DepthMap,
    /// Maps frame-`t` camera points into the frame-`t−1` camera.
    pub pose_t: PoseSE3,
}

pub const DEFAULT_WIDTH: usize = 128;
pub const DEFAULT_HEIGHT: usize = 64;

pub fn default_intrinsics() -> Intrinsics {
    Intrinsics::new(96.0, 96.0, 63.5, 31.5, DEFAULT_WIDTH, DEFAULT_HEIGHT).expect("valid defaults")
}

impl Preset {
    /// Maps frame-`t` camera points into the frame-`t−1` camera.
    pub fn relative_pose(&self) -> PoseSE3 {
        self.camera_tm1.inverse().compose(&self.camera_t)
    }

    pub fn render(&self) -> Result<RenderedPair> {
        let (x_t, d_t) = render(&self.scene, &self.intrinsics, &self.camera_t)?;
        let (x_tm1, d_tm1) = render(&self.scene, &self.intrinsics, &self.camera_tm1)?;
        Ok(RenderedPair {
            x_t,
            x_tm1,
            d_t,
            d_tm1,
            pose_t: self.relative_pose(),
        })
    }

    /// Labels of frame `t` pixels with respect to frame `t−1`.
    pub fn labels_t(&self) -> Result<VisibilityLabels> {
        visibility_oracle(
            &self.scene,
            &self.intrinsics,
            &self.camera_t,
            &self.camera_tm1,
        )
    }

    /// Labels of frame `t−1` pixels with respect to frame `t`.
    pub fn labels_tm1(&self) -> Result<VisibilityLabels> {
        visibility_oracle(
            &self.scene,
            &self.intrinsics,
            &self.camera_tm1,
            &self.camera_t,
        )
    }
}

struct SceneBuilder {
    fx: f64,
    seed: u64,
    rects: Vec<Rectangle>,
}

impl SceneBuilder {
    fn new(fx: f64, seed: u64) -> Self {
        Self {
            fx,
            seed,
            rects: Vec::new(),
        }
    }

    fn texture(&self, depth: f64) -> Texture {
        let index = self.rects.len() as u64 + 1;
        Texture::procedural(
            self.seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(index),
            depth / self.fx,
        )
    }

    fn rect(mut self, depth: f64, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        let texture = self.texture(depth);
        self.rects.push(Rectangle {
            depth,
            x_range,
            y_range,
            texture,
        });
        self
    }

    fn build(self, background_depth: f64) -> Result<Scene> {
        let bg = Texture::procedural(
            self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            background_depth / self.fx,
        );
        Scene::new(self.rects, background_depth, bg)
    }
}

/// Builds a named preset at the default 64×128 resolution.
pub fn preset(name: PresetName, seed: u64) -> Result<Preset> {
    let intr = default_intrinsics();
    let fx = intr.fx;
    let origin = PoseSE3::identity();
    let shifted = |x: f64| PoseSE3::from_translation(Vector3::new(x, 0.0, 0.0));
    let (scene, camera_tm1, camera_t) = match name {
        PresetName::Identity => (
            SceneBuilder::new(fx, seed)
                .rect(4.0, (-0.6, 0.6), (-0.4, 0.4))
                .build(10.0)?,
            origin,
            origin,
        ),
        PresetName::PureTranslation => (
            SceneBuilder::new(fx, seed)
                .rect(3.5, (-1.6, -0.5), (-0.5, 0.6))
                .rect(5.0, (0.6, 2.0), (-0.9, 0.3))
                .build(8.0)?,
            origin,
            shifted(0.1),
        ),
        PresetName::OccluderFig3 => (
            SceneBuilder::new(fx, seed)
                .rect(3.0, (-0.4, 0.39), (-0.5, 0.5))
                .build(12.0)?,
            origin,
            shifted(0.4),
        ),
        PresetName::ReverseFig5 => (
            SceneBuilder::new(fx, seed)
                .rect(2.5, (-0.35, 0.35), (-0.45, 0.45))
                .rect(6.0, (1.0, 2.2), (-0.8, 0.5))
                .build(10.0)?,
            origin,
            shifted(-0.35),
        ),
        PresetName::ThinObjectFig7 => {
            // World x of reference-view column `u` on the plane at depth `z`.
            let x_at = |u: f64, z: f64| (u - intr.cx) * z / fx;
            // A thin near post, two pixels wide in the reference view, in front of the
            // left edge of a mid-depth panel. It leaves the view in frame t, so the panel
            // strip it hides is covered only by background pixels that frame t cannot see.
            (
                SceneBuilder::new(fx, seed)
                    .rect(2.0, (x_at(20.9, 2.0), x_at(22.9, 2.0)), (-0.15, 0.15))
                    .rect(6.0, (x_at(19.6, 6.0), -0.5), (-0.6, 0.6))
                    .build(12.0)?,
                origin,
                shifted(0.6),
            )
        }
    };
    Ok(Preset {
        name,
        scene,
        intrinsics: intr,
        camera_tm1,
        camera_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_only_depth_is_constant() {
        let intr = default_intrinsics();
        let scene = Scene::new(vec![], 10.0, Texture::procedural(1, 0.1)).unwrap();
        let (_, d) = render(&scene, &intr, &PoseSE3::identity()).unwrap();
        assert!(d.as_slice().iter().all(|&z| (z - 10.0).abs() < 1e-12));
    }

    #[test]
    fn central_rectangle_depth() {
        let intr = default_intrinsics();
        let rect = Rectangle {
            depth: 5.0,
            x_range: (-0.5, 0.5),
            y_range: (-0.25, 0.25),
            texture: Texture::constant(0.2),
        };
        let scene = Scene::new(vec![rect], 10.0, Texture::constant(0.8)).unwrap();
        let (img, d) = render(&scene, &intr, &PoseSE3::identity()).unwrap();
        // x ∈ [-0.5, 0.5] at z = 5 projects to u ∈ [63.5 − 9.6, 63.5 + 9.6].
        for j in 0..intr.height {
            for i in 0..intr.width {
                let u = i as f64 - intr.cx;
                let v = j as f64 - intr.cy;
                let inside = u.abs() <= 9.6 && v.abs() <= 4.8;
                let expected = if inside { 5.0 } else { 10.0 };
                assert!((d.get(i, j) - expected).abs() < 1e-12, "({i}, {j})");
                assert_eq!(img.get(i, j, 0), if inside { 0.2 } else { 0.8 });
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let p = preset(PresetName::OccluderFig3, 7).unwrap();
        let a = p.render().unwrap();
        let b = preset(PresetName::OccluderFig3, 7)
            .unwrap()
            .render()
            .unwrap();
        assert_eq!(a.x_t, b.x_t);
        assert_eq!(a.d_tm1, b.d_tm1);
    }

    #[test]
    fn scene_validation() {
        let r = |z: f64| Rectangle {
            depth: z,
            x_range: (0.0, 1.0),
            y_range: (0.0, 1.0),
            texture: Texture::constant(0.5),
        };
        assert!(Scene::new(vec![r(12.0)], 10.0, Texture::constant(0.5)).is_err());
        assert!(Scene::new(vec![r(3.0), r(3.0)], 10.0, Texture::constant(0.5)).is_err());
        assert!(Scene::new(vec![r(3.0), r(4.0)], 10.0, Texture::constant(0.5)).is_ok());
    }

    #[test]
    fn camera_behind_geometry_is_rejected() {
        let p = preset(PresetName::Identity, 0).unwrap();
        let inside = PoseSE3::from_translation(Vector3::new(0.0, 0.0, 5.0));
        assert!(render(&p.scene, &p.intrinsics, &inside).is_err());
        let backwards = PoseSE3::yaw(std::f64::consts::PI);
        assert!(render(&p.scene, &p.intrinsics, &backwards).is_err());
    }

    #[test]
    fn same_pose_is_all_visible() {
        let p = preset(PresetName::OccluderFig3, 0).unwrap();
        let labels = visibility_oracle(&p.scene, &p.intrinsics, &p.camera_t, &p.camera_t).unwrap();
        assert!(labels
            .as_slice()
            .iter()
            .all(|&l| l == Visibility::VisibleBoth));
    }

    #[test]
    fn large_translation_gives_out_of_view_border() {
        let p = preset(PresetName::Identity, 0).unwrap();
        let far = PoseSE3::from_translation(Vector3::new(3.0, 0.0, 0.0));
        let labels =
            visibility_oracle(&p.scene, &p.intrinsics, &PoseSE3::identity(), &far).unwrap();
        // Background at z = 10 shifts by 96·3/10 = 28.8 px; the left border leaves view b.
        for j in 0..p.intrinsics.height {
            for i in 0..28 {
                assert_eq!(
                    *labels.get(i, j),
                    Visibility::OutOfViewInOther,
                    "({i}, {j})"
                );
            }
            assert_ne!(*labels.get(40, j), Visibility::OutOfViewInOther);
        }
    }

    #[test]
    fn preset_names_round_trip() {
        for p in PresetName::ALL {
            assert_eq!(p.as_str().parse::<PresetName>().unwrap(), p);
        }
        assert!(matches!(
            "nope".parse::<PresetName>(),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn preset_configurations() {
        assert_eq!(
            preset(PresetName::Identity, 0).unwrap().relative_pose(),
            PoseSE3::identity()
        );
        let occ = preset(PresetName::OccluderFig3, 0).unwrap();
        assert_eq!(occ.scene.primitives().len(), 1);
        assert_eq!(occ.scene.primitives()[0].depth, 3.0);
        assert_eq!(occ.scene.background_depth(), 12.0);
        assert_eq!(*occ.camera_t.translation(), Vector3::new(0.4, 0.0, 0.0));
        let thin = preset(PresetName::ThinObjectFig7, 0).unwrap();
        let r = &thin.scene.primitives()[0];
        let width_px = (r.x_range.1 - r.x_range.0) * thin.intrinsics.fx / r.depth;
        assert!((width_px - 2.0).abs() < 1e-12);
    }

    #[test]
    fn audit_counts_by_label() {
        use Visibility::*;
        let labels = Grid::from_vec(
            3,
            2,
            vec![
                VisibleBoth,
                VisibleBoth,
                OccludedInOther,
                OccludedInOther,
                OutOfViewInOther,
                VisibleBoth,
            ],
        )
        .unwrap();
        let mask = Mask::from_bits(3, 2, vec![true, false, false, true, true, true]).unwrap();
        let a = MaskAudit::new(&labels, &mask).unwrap();
        assert_eq!(
            (
                a.visible,
                a.visible_kept,
                a.occluded,
                a.occluded_masked,
                a.out_of_view,
                a.out_of_view_masked
            ),
            (3, 2, 2, 1, 1, 0)
        );
        assert_eq!(a.unmasked_mismatch(), 2);
        assert_eq!(a.occlusion_recall(), 0.5);
        assert!(MaskAudit::new(&labels, &Mask::ones(2, 3)).is_err());
    }

    #[test]
    fn thin_object_hides_panel_then_leaves_view() {
        let p = preset(PresetName::ThinObjectFig7, 0).unwrap();
        let labels = p.labels_tm1().unwrap();
        let d = render(&p.scene, &p.intrinsics, &p.camera_tm1).unwrap().1;
        let post_col = (0..p.intrinsics.width).find(|&i| d.get(i, 32) == 2.0);
        let i = post_col.expect("post visible in the reference view");
        assert_eq!(*labels.get(i, 32), Visibility::OutOfViewInOther);
    }
}
