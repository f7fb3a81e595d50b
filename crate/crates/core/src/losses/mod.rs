//! Masked photometric, SSIM and smoothness losses, and the multi-scale total.

mod pyramid;
mod ssim;

pub use pyramid::{
    build_pyramid, downsample_depth, downsample_image, downsample_mask, downsample_mask_set,
    Pyramid, PyramidLevel,
};
pub(crate) use ssim::ssim_loss_and_grad;
pub use ssim::{ssim_map, C1, C2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics, PoseSE3};
use crate::grid::Mask;
use crate::image::ImageBuffer;
use crate::masks::{combine, repeated_masking, DEFAULT_ROUNDS};

/// Weights of the photometric (`alpha`), smoothness (`beta`) and SSIM (`gamma`) terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub num_scales: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            beta: 0.03,
            gamma: 0.85,
            num_scales: 4,
        }
    }
}

impl LossWeights {
    /// Smoothness weight used together with depth normalization.
    pub const BETA_WITH_DN: f64 = 0.2;

    pub fn for_depth_normalization(dn: bool) -> Self {
        let mut w = Self::default();
        if dn {
            w.beta = Self::BETA_WITH_DN;
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be a nonnegative number, got {v}"
                )));
            }
        }
        if self.num_scales == 0 {
            return Err(Error::Config("num_scales must be positive".into()));
        }
        Ok(())
    }
}

/// Norm applied to the photometric residual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResidualNorm {
    #[default]
    L1,
    L2,
}

fn require_same(x: &ImageBuffer, x_hat: &ImageBuffer, m: &Mask) -> Result<()> {
    x.same_shape(x_hat)?;
    if m.dims() != x.dims() {
        return Err(Error::shape(
            format!("{}x{} mask", x.width(), x.height()),
            format!("{}x{}", m.width(), m.height()),
        ));
    }
    Ok(())
}

/// Mean of `|X − X̂|` over unmasked pixels and all channels; 0 if nothing is unmasked.
pub fn reconstruction_loss(x: &ImageBuffer, x_hat: &ImageBuffer, m: &Mask) -> Result<f64> {
    reconstruction_loss_with(x, x_hat, m, ResidualNorm::L1)
}

pub fn reconstruction_loss_with(
    x: &ImageBuffer,
    x_hat: &ImageBuffer,
    m: &Mask,
    norm: ResidualNorm,
) -> Result<f64> {
    require_same(x, x_hat, m)?;
    let ch = x.channels();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, &on) in m.bits().iter().enumerate() {
        if !on {
            continue;
        }
        for c in 0..ch {
            let r = x.as_slice()[k * ch + c] - x_hat.as_slice()[k * ch + c];
            sum += match norm {
                ResidualNorm::L1 => r.abs(),
                ResidualNorm::L2 => r * r,
            };
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Mean of `1 − SSIM` over unmasked pixels. SSIM windows see every pixel; the mask
/// only selects which SSIM values are averaged.
pub fn ssim_loss(x: &ImageBuffer, x_hat: &ImageBuffer, m: &Mask) -> Result<f64> {
    require_same(x, x_hat, m)?;
    let ch = x.channels();
    let map = ssim_map(x, x_hat);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, &on) in m.bits().iter().enumerate() {
        if on {
            for c in 0..ch {
                sum += 1.0 - map[k * ch + c];
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Channel-averaged absolute forward differences of the image along x and y.
fn image_gradients(x: &ImageBuffer) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = x.dims();
    let ch = x.channels() as f64;
    let mut gx = vec![0.0; w.saturating_sub(1) * h];
    let mut gy = vec![0.0; w * h.saturating_sub(1)];
    for j in 0..h {
        for i in 0..w {
            if i + 1 < w {
                let s: f64 = x
                    .pixel(i + 1, j)
                    .iter()
                    .zip(x.pixel(i, j))
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                gx[j * (w - 1) + i] = s / ch;
            }
            if j + 1 < h {
                let s: f64 = x
                    .pixel(i, j + 1)
                    .iter()
                    .zip(x.pixel(i, j))
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                gy[j * w + i] = s / ch;
            }
        }
    }
    (gx, gy)
}

/// Edge-aware first-order smoothness and its gradient with respect to the depth values.
pub(crate) fn smoothness_and_grad(depth: &[f64], x: &ImageBuffer) -> (f64, Vec<f64>) {
    smoothness_and_grad_eps(depth, x, 0.0)
}

/// As [`smoothness_and_grad`] with `|Δ|` replaced by `√(Δ² + ε²) − ε`; `eps = 0` is exact.
pub(crate) fn smoothness_and_grad_eps(depth: &[f64], x: &ImageBuffer, eps: f64) -> (f64, Vec<f64>) {
    let (w, h) = x.dims();
    let (gx, gy) = image_gradients(x);
    let mut grad = vec![0.0; w * h];
    let mut loss = 0.0;
    let penalty = |diff: f64| -> (f64, f64) {
        if eps == 0.0 {
            (diff.abs(), diff.signum_or_zero())
        } else {
            let r = (diff * diff + eps * eps).sqrt();
            (r - eps, diff / r)
        }
    };
    let mut accumulate = |pairs: &mut dyn Iterator<Item = (usize, usize, f64)>, n: f64| {
        let mut sum = 0.0;
        for (a, b, wgt) in pairs {
            let (p, dp) = penalty(depth[b] - depth[a]);
            sum += p * wgt;
            let s = dp * wgt / n;
            grad[b] += s;
            grad[a] -= s;
        }
        loss += sum / n;
    };
    if w > 1 {
        let n = ((w - 1) * h) as f64;
        let mut it = (0..h)
            .flat_map(|j| (0..w - 1).map(move |i| (j, i)))
            .map(|(j, i)| {
                let k = j * w + i;
                (k, k + 1, (-gx[j * (w - 1) + i]).exp())
            });
        accumulate(&mut it, n);
    }
    if h > 1 {
        let n = (w * (h - 1)) as f64;
        let mut it = (0..(h - 1) * w).map(|k| (k, k + w, (-gy[k]).exp()));
        accumulate(&mut it, n);
    }
    (loss, grad)
}

pub(crate) trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    #[inline]
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// `mean|∂x d|·exp(−|∂x I|) + mean|∂y d|·exp(−|∂y I|)` with forward differences; each
/// mean runs over the pixels where that difference exists.
pub fn smoothness_loss(d: &DepthMap, x: &ImageBuffer) -> Result<f64> {
    if d.dims() != x.dims() {
        return Err(Error::shape(
            format!("{}x{}", x.width(), x.height()),
            format!("{}x{}", d.width(), d.height()),
        ));
    }
    Ok(smoothness_and_grad(d.as_slice(), x).0)
}

/// `d / mean(d)`.
pub fn depth_normalize(d: &DepthMap) -> DepthMap {
    let m = d.mean();
    DepthMap::from_grid_unchecked(d.grid().map(|v| v / m))
}

/// Per-scale loss terms and their weighted total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rec: Vec<f64>,
    pub ssim: Vec<f64>,
    pub smooth: Vec<f64>,
    pub total: f64,
    /// `[frame t, frame t−1]` unmasked pixel counts per scale.
    pub valid_counts: Vec<[usize; 2]>,
}

impl LossReport {
    /// Recomputes the total from the per-scale terms under other weights.
    pub fn total_with(&self, w: &LossWeights) -> f64 {
        (0..self.rec.len())
            .map(|l| w.alpha * self.rec[l] + w.beta * self.smooth[l] + w.gamma * self.ssim[l])
            .sum()
    }
}

/// Configuration of [`total_loss`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub rounds: usize,
    pub depth_normalization: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            rounds: DEFAULT_ROUNDS,
            depth_normalization: false,
        }
    }
}

impl LossConfig {
    pub fn with_depth_normalization(dn: bool) -> Self {
        Self {
            weights: LossWeights::for_depth_normalization(dn),
            rounds: DEFAULT_ROUNDS,
            depth_normalization: dn,
        }
    }
}

/// One direction of the two-way reconstruction at full resolution.
#[derive(Clone, Copy, Debug)]
pub struct DirectionInputs<'a> {
    pub image: &'a ImageBuffer,
    pub recon: &'a ImageBuffer,
    pub mask: &'a Mask,
    pub depth: &'a DepthMap,
}

/// Multi-scale loss from precomputed reconstructions and combined masks.
pub fn loss_from_parts(
    t: DirectionInputs<'_>,
    tm1: DirectionInputs<'_>,
    weights: &LossWeights,
    depth_normalization: bool,
) -> Result<LossReport> {
    weights.validate()?;
    for dir in [&t, &tm1] {
        require_same(dir.image, dir.recon, dir.mask)?;
        if dir.depth.dims() != dir.image.dims() {
            return Err(Error::shape(
                format!("{}x{}", dir.image.width(), dir.image.height()),
                format!("{}x{}", dir.depth.width(), dir.depth.height()),
            ));
        }
    }
    pyramid::check_pyramid_size(t.image.width(), t.image.height(), weights.num_scales)?;

    struct Level {
        image: ImageBuffer,
        recon: ImageBuffer,
        mask: Mask,
        depth: DepthMap,
    }
    let start = |d: &DirectionInputs<'_>| Level {
        image: d.image.clone(),
        recon: d.recon.clone(),
        mask: d.mask.clone(),
        depth: d.depth.clone(),
    };
    let down = |l: &Level| Level {
        image: downsample_image(&l.image),
        recon: downsample_image(&l.recon),
        mask: downsample_mask(&l.mask),
        depth: downsample_depth(&l.depth),
    };

    let mut report = LossReport {
        rec: Vec::with_capacity(weights.num_scales),
        ssim: Vec::with_capacity(weights.num_scales),
        smooth: Vec::with_capacity(weights.num_scales),
        total: 0.0,
        valid_counts: Vec::with_capacity(weights.num_scales),
    };
    let mut levels = [start(&t), start(&tm1)];
    for scale in 0..weights.num_scales {
        if scale > 0 {
            levels = [down(&levels[0]), down(&levels[1])];
        }
        let mut rec = 0.0;
        let mut ssim = 0.0;
        let mut smooth = 0.0;
        for l in &levels {
            rec += reconstruction_loss(&l.image, &l.recon, &l.mask)?;
            ssim += ssim_loss(&l.image, &l.recon, &l.mask)?;
            let d = if depth_normalization {
                depth_normalize(&l.depth)
            } else {
                l.depth.clone()
            };
            smooth += smoothness_loss(&d, &l.image)?;
        }
        report.rec.push(rec / 2.0);
        report.ssim.push(ssim / 2.0);
        report.smooth.push(smooth / 2.0);
        report
            .valid_counts
            .push([levels[0].mask.count_ones(), levels[1].mask.count_ones()]);
    }
    report.total = report.total_with(weights);
    Ok(report)
}

/// Full pipeline: two-way repeated masking at full resolution, then the multi-scale loss.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    x_t: &ImageBuffer,
    x_tm1: &ImageBuffer,
    d_t: &DepthMap,
    d_tm1: &DepthMap,
    pose_t: &PoseSE3,
    intr: &Intrinsics,
    cfg: &LossConfig,
) -> Result<LossReport> {
    let two_way = repeated_masking(x_t, x_tm1, d_t, d_tm1, pose_t, intr, cfg.rounds)?;
    let m_t = combine(&two_way.masks_t);
    let m_tm1 = combine(&two_way.masks_tm1);
    loss_from_parts(
        DirectionInputs {
            image: x_t,
            recon: &two_way.recon_t,
            mask: &m_t,
            depth: d_t,
        },
        DirectionInputs {
            image: x_tm1,
            recon: &two_way.recon_tm1,
            mask: &m_tm1,
            depth: d_tm1,
        },
        &cfg.weights,
        cfg.depth_normalization,
    )
}
