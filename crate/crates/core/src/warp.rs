//! Bilinear inverse warping and forward splat accounting.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{project_depth, DepthMap, Intrinsics, PoseSE3, Z_MIN};
use crate::grid::{Grid, Mask};
use crate::image::ImageBuffer;

/// Per-source-pixel landing coordinates on the target plane.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionRecord {
    width: usize,
    height: usize,
    coords: Vec<[f64; 2]>,
    z: Vec<f64>,
    valid: Vec<bool>,
}

impl ProjectionRecord {
    /// `valid` is forced to `false` wherever `z ≤ Z_MIN` or a coordinate is not finite.
    pub fn from_parts(
        width: usize,
        height: usize,
        coords: Vec<[f64; 2]>,
        z: Vec<f64>,
        mut valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if coords.len() != n || z.len() != n || valid.len() != n {
            return Err(Error::shape(
                format!("{n} entries"),
                format!("{}/{}/{}", coords.len(), z.len(), valid.len()),
            ));
        }
        for k in 0..n {
            if !(z[k] > Z_MIN) || !coords[k][0].is_finite() || !coords[k][1].is_finite() {
                valid[k] = false;
            }
        }
        Ok(Self {
            width,
            height,
            coords,
            z,
            valid,
        })
    }

    /// Every pixel lands on its own integer position with depth `z`.
    pub fn identity(width: usize, height: usize, z: f64) -> Self {
        let coords = (0..height)
            .flat_map(|j| (0..width).map(move |i| [i as f64, j as f64]))
            .collect();
        Self::from_parts(
            width,
            height,
            coords,
            vec![z; width * height],
            vec![true; width * height],
        )
        .expect("consistent sizes")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn coord(&self, i: usize, j: usize) -> [f64; 2] {
        self.coords[j * self.width + i]
    }

    #[inline]
    pub fn depth(&self, i: usize, j: usize) -> f64 {
        self.z[j * self.width + i]
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[j * self.width + i]
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn depths(&self) -> &[f64] {
        &self.z
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }
}

/// Bilinear interpolation corners in the order top-left, top-right, bottom-left, bottom-right.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearFootprint {
    pub corners: [(i64, i64); 4],
    pub weights: [f64; 4],
    pub in_bounds: [bool; 4],
}

impl BilinearFootprint {
    /// All four corners lie inside the image.
    pub fn fully_inside(&self) -> bool {
        self.in_bounds.iter().all(|&b| b)
    }

    /// The top-left corner and every corner carrying positive weight lie inside the
    /// image; the interpolated value is then well defined.
    pub fn samplable(&self) -> bool {
        self.in_bounds[0]
            && self
                .in_bounds
                .iter()
                .zip(&self.weights)
                .all(|(&inside, &w)| inside || w == 0.0)
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Index of the corner into a row-major buffer of the given width, if in bounds.
    #[inline]
    pub fn linear_index(&self, k: usize, width: usize) -> Option<usize> {
        self.in_bounds[k].then(|| {
            let (x, y) = self.corners[k];
            y as usize * width + x as usize
        })
    }
}

/// Bilinear footprint of a continuous coordinate on a `bounds = (width, height)` plane.
pub fn footprint(coord: (f64, f64), bounds: (usize, usize)) -> BilinearFootprint {
    let (x, y) = coord;
    if !x.is_finite() || !y.is_finite() {
        return BilinearFootprint {
            corners: [(i64::MIN, i64::MIN); 4],
            weights: [0.0; 4],
            in_bounds: [false; 4],
        };
    }
    let fx = x.floor();
    let fy = y.floor();
    let a = x - fx;
    let b = y - fy;
    // Saturating casts keep far-away coordinates out of bounds.
    let x0 = fx as i64;
    let y0 = fy as i64;
    let x1 = x0.saturating_add(1);
    let y1 = y0.saturating_add(1);
    let corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)];
    let (w, h) = (bounds.0 as i64, bounds.1 as i64);
    let in_bounds = corners.map(|(cx, cy)| cx >= 0 && cx < w && cy >= 0 && cy < h);
    BilinearFootprint {
        corners,
        weights: [(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b],
        in_bounds,
    }
}

/// Interpolated value and its derivatives with respect to the sampling coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SampleGrad {
    pub value: f64,
    pub d_u: f64,
    pub d_v: f64,
}

/// Samples channel `c` of `source` at `(u, v)` with zero padding outside the image, so
/// the value is continuous in the coordinate. Agrees with [`bilinear_sample`] wherever
/// the footprint is samplable. `None` for non-finite coordinates.
pub(crate) fn sample_with_grad(
    source: &ImageBuffer,
    u: f64,
    v: f64,
    c: usize,
) -> Option<SampleGrad> {
    if !u.is_finite() || !v.is_finite() {
        return None;
    }
    let fp = footprint((u, v), source.dims());
    let a = u - u.floor();
    let b = v - v.floor();
    let at = |k: usize| -> f64 {
        if fp.in_bounds[k] {
            let (x, y) = fp.corners[k];
            source.get(x as usize, y as usize, c)
        } else {
            0.0
        }
    };
    let (tl, tr, bl, br) = (at(0), at(1), at(2), at(3));
    let mut value = 0.0;
    for (k, corner) in [tl, tr, bl, br].into_iter().enumerate() {
        if fp.weights[k] != 0.0 {
            value += fp.weights[k] * corner;
        }
    }
    Some(SampleGrad {
        value,
        d_u: (1.0 - b) * (tr - tl) + b * (br - bl),
        d_v: (1.0 - a) * (bl - tl) + a * (br - tr),
    })
}

/// Inverse warp: output pixel `p` takes the bilinear interpolation of `source` at the
/// recorded coordinate of `p`. Invalid or non-samplable pixels are 0.
pub fn bilinear_sample(source: &ImageBuffer, record: &ProjectionRecord) -> ImageBuffer {
    let (w, h) = record.dims();
    let ch = source.channels();
    let bounds = source.dims();
    let mut data = vec![0.0; w * h * ch];
    data.par_chunks_mut(w * ch)
        .enumerate()
        .for_each(|(j, row)| {
            for i in 0..w {
                if !record.is_valid(i, j) {
                    continue;
                }
                let [u, v] = record.coord(i, j);
                let fp = footprint((u, v), bounds);
                if !fp.samplable() {
                    continue;
                }
                for c in 0..ch {
                    let mut acc = 0.0;
                    for k in 0..4 {
                        if fp.weights[k] != 0.0 {
                            let (x, y) = fp.corners[k];
                            acc += fp.weights[k] * source.get(x as usize, y as usize, c);
                        }
                    }
                    row[i * ch + c] = acc.clamp(0.0, 1.0);
                }
            }
        });
    ImageBuffer::from_raw(w, h, ch, data)
}

/// Reconstructs the frame whose depth is `d_tgt` by sampling `x_src` through `pose`.
pub fn reconstruct(
    x_src: &ImageBuffer,
    d_tgt: &DepthMap,
    pose: &PoseSE3,
    intr: &Intrinsics,
) -> Result<(ImageBuffer, ProjectionRecord)> {
    if x_src.dims() != intr.dims() {
        return Err(Error::shape(
            format!("{}x{}", intr.width, intr.height),
            format!("{}x{}", x_src.width(), x_src.height()),
        ));
    }
    let record = project_depth(d_tgt, pose, intr)?;
    Ok((bilinear_sample(x_src, &record), record))
}

/// Accumulated bilinear weights on the target plane.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatBuffer(Grid<f64>);

impl SplatBuffer {
    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        *self.0.get(i, j)
    }

    pub fn total(&self) -> f64 {
        self.0.as_slice().iter().sum()
    }
}

/// Forward-splats the footprint weights of every active, valid source pixel onto the
/// target plane. Out-of-bounds corners are skipped. Accumulation runs in source
/// row-major order, so the result is independent of the thread pool.
pub fn splat_weights(
    record: &ProjectionRecord,
    target_bounds: (usize, usize),
    active: &Mask,
) -> Result<SplatBuffer> {
    if active.dims() != record.dims() {
        return Err(Error::shape(
            format!("{}x{}", record.width(), record.height()),
            format!("{}x{}", active.width(), active.height()),
        ));
    }
    let (tw, th) = target_bounds;
    let mut acc = vec![0.0; tw * th];
    for (k, coord) in record.coords().iter().enumerate() {
        if !record.valid()[k] || !active.bits()[k] {
            continue;
        }
        let fp = footprint((coord[0], coord[1]), target_bounds);
        for c in 0..4 {
            if let Some(idx) = fp.linear_index(c, tw) {
                acc[idx] += fp.weights[c];
            }
        }
    }
    Ok(SplatBuffer(Grid::from_vec(tw, th, acc)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;

    fn ramp(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::gray_from_fn(w, h, |i, _| i as f64 / w as f64)
    }

    fn shifted_record(w: usize, h: usize, dx: f64, dy: f64) -> ProjectionRecord {
        let coords = (0..h)
            .flat_map(|j| (0..w).map(move |i| [i as f64 + dx, j as f64 + dy]))
            .collect();
        ProjectionRecord::from_parts(w, h, coords, vec![1.0; w * h], vec![true; w * h]).unwrap()
    }

    #[test]
    fn footprint_half_pixel() {
        let fp = footprint((2.5, 3.0), (8, 8));
        assert_eq!(fp.corners, [(2, 3), (3, 3), (2, 4), (3, 4)]);
        assert_eq!(fp.weights, [0.5, 0.5, 0.0, 0.0]);
        assert!(fp.fully_inside());
    }

    #[test]
    fn footprint_grid_hit() {
        let fp = footprint((4.0, 7.0), (8, 8));
        assert_eq!(fp.corners[0], (4, 7));
        assert_eq!(fp.weights, [1.0, 0.0, 0.0, 0.0]);
        // The +1 row sits outside an 8-row image but carries no weight.
        assert!(!fp.fully_inside());
        assert!(fp.samplable());
    }

    #[test]
    fn footprint_of_non_finite_is_out_of_bounds() {
        let fp = footprint((f64::NAN, 1.0), (8, 8));
        assert!(!fp.samplable());
        let fp = footprint((1e300, 1.0), (8, 8));
        assert!(!fp.in_bounds.iter().any(|&b| b));
    }

    #[test]
    fn identity_record_reproduces_source() {
        let src = ImageBuffer::gray_from_fn(9, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0);
        let out = bilinear_sample(&src, &ProjectionRecord::identity(9, 5, 1.0));
        assert_eq!(out, src);
    }

    #[test]
    fn constant_source_is_preserved() {
        let src = ImageBuffer::constant(10, 6, 3, 0.3).unwrap();
        let out = bilinear_sample(&src, &shifted_record(10, 6, 0.37, 0.81));
        for j in 0..5 {
            for i in 0..9 {
                for c in 0..3 {
                    assert_abs_diff_eq!(out.get(i, j, c), 0.3, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn linear_ramp_is_exact() {
        let (w, h) = (16, 4);
        let src = ramp(w, h);
        let out = bilinear_sample(&src, &shifted_record(w, h, 0.5, 0.0));
        for j in 0..h {
            for i in 0..w - 1 {
                assert_abs_diff_eq!(
                    out.get(i, j, 0),
                    (i as f64 + 0.5) / w as f64,
                    epsilon = 1e-12
                );
            }
            // Last column samples past the image edge.
            assert_eq!(out.get(w - 1, j, 0), 0.0);
        }
    }

    #[test]
    fn invalid_pixels_sample_zero() {
        let src = ImageBuffer::constant(3, 3, 1, 0.7).unwrap();
        let mut z = vec![1.0; 9];
        z[4] = 0.0;
        let rec = ProjectionRecord::from_parts(
            3,
            3,
            ProjectionRecord::identity(3, 3, 1.0).coords().to_vec(),
            z,
            vec![true; 9],
        )
        .unwrap();
        assert!(!rec.is_valid(1, 1));
        assert_eq!(bilinear_sample(&src, &rec).get(1, 1, 0), 0.0);
    }

    #[test]
    fn reconstruct_identity_and_translation() {
        let k = Intrinsics::new(50.0, 50.0, 15.5, 7.5, 32, 16).unwrap();
        let src = ImageBuffer::gray_from_fn(32, 16, |i, j| {
            0.5 + 0.3 * (i as f64 * 0.7).sin() * (j as f64 * 0.3).cos()
        });
        let d = DepthMap::from_fn(32, 16, |i, j| 2.0 + 0.1 * i as f64 + 0.05 * j as f64).unwrap();
        let (out, _) = reconstruct(&src, &d, &PoseSE3::identity(), &k).unwrap();
        assert_eq!(out, src);

        let plane = DepthMap::constant(32, 16, 4.0).unwrap();
        let tx = 0.1;
        let (_, rec) = reconstruct(
            &src,
            &plane,
            &PoseSE3::from_translation(Vector3::new(tx, 0.0, 0.0)),
            &k,
        )
        .unwrap();
        for j in 0..16 {
            for i in 0..32 {
                let [u, v] = rec.coord(i, j);
                assert_abs_diff_eq!(u - i as f64, 50.0 * tx / 4.0, epsilon = 1e-9);
                assert_abs_diff_eq!(v, j as f64, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn reconstruct_rejects_shape_mismatch() {
        let k = Intrinsics::new(50.0, 50.0, 15.5, 7.5, 32, 16).unwrap();
        let src = ImageBuffer::constant(16, 16, 1, 0.5).unwrap();
        let d = DepthMap::constant(32, 16, 1.0).unwrap();
        assert!(reconstruct(&src, &d, &PoseSE3::identity(), &k).is_err());
    }

    #[test]
    fn splat_examples() {
        let rec = ProjectionRecord::identity(6, 4, 1.0);
        let buf = splat_weights(&rec, (6, 4), &Mask::ones(6, 4)).unwrap();
        assert!(buf.grid().as_slice().iter().all(|&w| w == 1.0));

        let none = splat_weights(&rec, (6, 4), &Mask::zeros(6, 4)).unwrap();
        assert_eq!(none.total(), 0.0);

        let mut coords = rec.coords().to_vec();
        coords[0] = [2.5, 3.0];
        let single =
            ProjectionRecord::from_parts(6, 4, coords, vec![1.0; 24], vec![true; 24]).unwrap();
        let mut active = Mask::zeros(6, 4);
        active.set(0, 0, true);
        let buf = splat_weights(&single, (8, 8), &active).unwrap();
        for j in 0..8 {
            for i in 0..8 {
                let expected = if (i, j) == (2, 3) || (i, j) == (3, 3) {
                    0.5
                } else {
                    0.0
                };
                assert_eq!(buf.get(i, j), expected, "({i}, {j})");
            }
        }
    }

    #[test]
    fn sample_gradient_matches_finite_differences() {
        let src = ImageBuffer::gray_from_fn(12, 12, |i, j| {
            0.5 + 0.2 * (i as f64 * 0.9).sin() + 0.1 * (j as f64 * 0.4).cos()
        });
        let h = 1e-5;
        for &(u, v) in &[(3.3, 4.7), (5.61, 2.2), (8.45, 9.9)] {
            let g = sample_with_grad(&src, u, v, 0).unwrap();
            let fu = (sample_with_grad(&src, u + h, v, 0).unwrap().value
                - sample_with_grad(&src, u - h, v, 0).unwrap().value)
                / (2.0 * h);
            let fv = (sample_with_grad(&src, u, v + h, 0).unwrap().value
                - sample_with_grad(&src, u, v - h, 0).unwrap().value)
                / (2.0 * h);
            assert!(
                (g.d_u - fu).abs() <= 1e-4 * fu.abs().max(1e-12),
                "{} vs {}",
                g.d_u,
                fu
            );
            assert!(
                (g.d_v - fv).abs() <= 1e-4 * fv.abs().max(1e-12),
                "{} vs {}",
                g.d_v,
                fv
            );
        }
    }
}
