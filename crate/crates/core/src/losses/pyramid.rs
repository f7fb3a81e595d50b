//! 2×2 pooling pyramids for images, depths, and masks.

use crate::error::{Error, Result};
use crate::geometry::DepthMap;
use crate::grid::{Grid, Mask};
use crate::image::ImageBuffer;
use crate::masks::MaskSet;

/// 2×2 average pooling; odd trailing rows/columns are dropped.
pub fn downsample_image(img: &ImageBuffer) -> ImageBuffer {
    let (w, h) = (img.width() / 2, img.height() / 2);
    let ch = img.channels();
    let mut data = Vec::with_capacity(w * h * ch);
    for j in 0..h {
        for i in 0..w {
            for c in 0..ch {
                let s = img.get(2 * i, 2 * j, c)
                    + img.get(2 * i + 1, 2 * j, c)
                    + img.get(2 * i, 2 * j + 1, c)
                    + img.get(2 * i + 1, 2 * j + 1, c);
                data.push(s * 0.25);
            }
        }
    }
    ImageBuffer::from_raw(w, h, ch, data)
}

pub fn downsample_depth(d: &DepthMap) -> DepthMap {
    let (w, h) = (d.width() / 2, d.height() / 2);
    let g = Grid::from_fn(w, h, |i, j| {
        (d.get(2 * i, 2 * j)
            + d.get(2 * i + 1, 2 * j)
            + d.get(2 * i, 2 * j + 1)
            + d.get(2 * i + 1, 2 * j + 1))
            * 0.25
    });
    DepthMap::from_grid_unchecked(g)
}

/// 2×2 AND pooling: a coarse pixel survives only if all four parents do.
pub fn downsample_mask(m: &Mask) -> Mask {
    let (w, h) = (m.width() / 2, m.height() / 2);
    Mask::from_fn(w, h, |i, j| {
        m.get(2 * i, 2 * j)
            && m.get(2 * i + 1, 2 * j)
            && m.get(2 * i, 2 * j + 1)
            && m.get(2 * i + 1, 2 * j + 1)
    })
}

pub fn downsample_mask_set(s: &MaskSet) -> MaskSet {
    MaskSet {
        edge: downsample_mask(&s.edge),
        overlap: downsample_mask(&s.overlap),
        blank: downsample_mask(&s.blank),
    }
}

#[derive(Clone, Debug)]
pub struct PyramidLevel {
    pub image: ImageBuffer,
    pub depth: DepthMap,
    pub masks: MaskSet,
}

/// Levels at scales 1, 1/2, 1/4, ...
#[derive(Clone, Debug)]
pub struct Pyramid {
    pub levels: Vec<PyramidLevel>,
}

pub(crate) fn check_pyramid_size(width: usize, height: usize, num_scales: usize) -> Result<()> {
    if num_scales == 0 {
        return Err(Error::Config("num_scales must be positive".into()));
    }
    let min = 1usize << (num_scales - 1);
    if width < min || height < min {
        return Err(Error::Config(format!(
            "{width}x{height} image is too small for {num_scales} scales (needs {min} pixels per side)"
        )));
    }
    Ok(())
}

pub fn build_pyramid(
    x: &ImageBuffer,
    d: &DepthMap,
    masks: &MaskSet,
    num_scales: usize,
) -> Result<Pyramid> {
    if x.dims() != d.dims() || x.dims() != masks.dims() {
        return Err(Error::shape(
            format!("{}x{}", x.width(), x.height()),
            format!(
                "depth {}x{}, masks {}x{}",
                d.width(),
                d.height(),
                masks.dims().0,
                masks.dims().1
            ),
        ));
    }
    check_pyramid_size(x.width(), x.height(), num_scales)?;
    let mut levels = vec![PyramidLevel {
        image: x.clone(),
        depth: d.clone(),
        masks: masks.clone(),
    }];
    for _ in 1..num_scales {
        let prev = levels.last().expect("non-empty");
        let next = PyramidLevel {
            image: downsample_image(&prev.image),
            depth: downsample_depth(&prev.depth),
            masks: downsample_mask_set(&prev.masks),
        };
        levels.push(next);
    }
    Ok(Pyramid { levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_stays_constant() {
        let x = ImageBuffer::constant(16, 16, 3, 0.25).unwrap();
        let d = DepthMap::constant(16, 16, 3.0).unwrap();
        let p = build_pyramid(&x, &d, &MaskSet::ones(16, 16), 4).unwrap();
        let sizes: Vec<_> = p.levels.iter().map(|l| l.image.width()).collect();
        assert_eq!(sizes, vec![16, 8, 4, 2]);
        for l in &p.levels {
            assert!(l.image.as_slice().iter().all(|&v| v == 0.25));
            assert!(l.depth.as_slice().iter().all(|&v| v == 3.0));
        }
    }

    #[test]
    fn and_pool_single_zero() {
        let mut m = Mask::ones(4, 4);
        m.set(2, 1, false);
        let coarse = downsample_mask(&m);
        assert_eq!(coarse.count_zeros(), 1);
        assert!(!coarse.get(1, 0));
    }

    #[test]
    fn too_small_for_scales() {
        let x = ImageBuffer::constant(7, 16, 1, 0.5).unwrap();
        let d = DepthMap::constant(7, 16, 1.0).unwrap();
        assert!(build_pyramid(&x, &d, &MaskSet::ones(7, 16), 4).is_err());
        assert!(build_pyramid(&x, &d, &MaskSet::ones(7, 16), 3).is_ok());
    }

    #[test]
    fn odd_sizes_floor() {
        let x = ImageBuffer::constant(9, 5, 1, 0.5).unwrap();
        assert_eq!(downsample_image(&x).dims(), (4, 2));
    }
}
