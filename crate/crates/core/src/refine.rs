//! Per-pixel depth and 6-DoF pose refinement by gradient descent on the masked
//! photometric objective, with analytic gradients and a finite-difference oracle.
//!
//! The objective reconstructs frame `t` from frame `t−1` at full resolution:
//! `α·rec + γ·(1 − SSIM)`, plus `β·smooth` when the target is depth. Masks are
//! `edge · overlap` of the current projection and stay fixed between refreshes.
//! Sampling pads the source with zeros, which keeps the objective continuous when a
//! footprint crosses the image border.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_depth, skew, snap, DepthMap, Intrinsics, PoseSE3, Twist};
use crate::grid::Mask;
use crate::image::ImageBuffer;
use crate::losses::{smoothness_and_grad_eps, ssim_loss_and_grad, LossWeights, SignumOrZero};
use crate::masks::{edge_mask, overlap_mask};
use crate::warp::sample_with_grad;

/// Halvings tried on a loss increase before the optimizer stops.
pub const MAX_HALVINGS: usize = 20;

/// Accepted steps between mask refreshes.
pub const MASK_REFRESH: usize = 5;

/// `|Δd|` in the smoothness term becomes `√(Δd² + ε²) − ε` with this `ε` (meters),
/// so small differences inside a plane cost second order and do not block descent.
pub const DEFAULT_SMOOTH_EPS: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineTarget {
    Depth,
    Pose,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub weights: LossWeights,
    pub target: RefineTarget,
    /// Normalize depth by its mean inside the smoothness term.
    pub depth_normalization: bool,
    /// Softening of `|Δd|` in the smoothness term, in meters.
    pub smooth_eps: f64,
}

impl RefineConfig {
    /// Step sizes are per unit gradient of a mean loss, hence the large depth value.
    pub fn depth() -> Self {
        Self {
            step_size: 4000.0,
            max_iters: 200,
            weights: LossWeights::default(),
            target: RefineTarget::Depth,
            depth_normalization: false,
            smooth_eps: DEFAULT_SMOOTH_EPS,
        }
    }

    pub fn pose() -> Self {
        Self {
            step_size: 0.05,
            max_iters: 300,
            weights: LossWeights::default(),
            target: RefineTarget::Pose,
            depth_normalization: false,
            smooth_eps: DEFAULT_SMOOTH_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.smooth_eps >= 0.0 && self.smooth_eps.is_finite()) {
            return Err(Error::Config(format!(
                "smooth_eps must be nonnegative, got {}",
                self.smooth_eps
            )));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        self.weights.validate()
    }
}

/// One row of the loss trace. `step` is 0 for the initial evaluation and for the
/// re-evaluation that follows a mask refresh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub loss: f64,
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    /// No decrease after [`MAX_HALVINGS`] halvings.
    Stalled,
    ZeroGradient,
    Diverged {
        iter: usize,
    },
}

#[derive(Clone, Debug)]
pub struct RefineOutput<T> {
    pub estimate: T,
    pub trace: Vec<TraceEntry>,
    pub stop: StopReason,
}

impl<T> RefineOutput<T> {
    /// The trace as `iter,loss,step` CSV with a header line.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,loss,step\n");
        for e in &self.trace {
            out.push_str(&format!("{},{:.12e},{:.12e}\n", e.iter, e.loss, e.step));
        }
        out
    }
}

/// The frame pair and camera behind the refinement objective.
#[derive(Clone, Copy, Debug)]
pub struct Objective<'a> {
    /// Target frame.
    pub x_t: &'a ImageBuffer,
    /// Source frame sampled to reconstruct the target.
    pub x_tm1: &'a ImageBuffer,
    pub intr: &'a Intrinsics,
    pub weights: LossWeights,
    pub depth_normalization: bool,
    pub smooth_eps: f64,
}

struct PixelJacobian {
    q: Vector3<f64>,
    du_dq: Vector3<f64>,
    dv_dq: Vector3<f64>,
}

impl<'a> Objective<'a> {
    pub fn new(
        x_t: &'a ImageBuffer,
        x_tm1: &'a ImageBuffer,
        intr: &'a Intrinsics,
        weights: LossWeights,
    ) -> Result<Self> {
        weights.validate()?;
        x_t.same_shape(x_tm1)?;
        if x_t.dims() != intr.dims() {
            return Err(Error::shape(
                format!("{}x{}", intr.width, intr.height),
                format!("{}x{}", x_t.width(), x_t.height()),
            ));
        }
        Ok(Self {
            x_t,
            x_tm1,
            intr,
            weights,
            depth_normalization: false,
            smooth_eps: DEFAULT_SMOOTH_EPS,
        })
    }

    fn check_depth(&self, depth: &DepthMap) -> Result<()> {
        if depth.dims() != self.intr.dims() {
            return Err(Error::shape(
                format!("{}x{}", self.intr.width, self.intr.height),
                format!("{}x{}", depth.width(), depth.height()),
            ));
        }
        Ok(())
    }

    /// `edge · overlap` of the projection of frame `t` onto frame `t−1`.
    pub fn masks(&self, depth: &DepthMap, pose: &PoseSE3) -> Result<Mask> {
        self.check_depth(depth)?;
        let record = project_depth(depth, pose, self.intr)?;
        let bounds = self.intr.dims();
        let (w, h) = bounds;
        let mut m = edge_mask(&record, bounds);
        m.and_assign(&overlap_mask(&record, bounds, &Mask::ones(w, h))?);
        Ok(m)
    }

    /// Objective value under a fixed mask.
    pub fn loss(
        &self,
        depth: &DepthMap,
        pose: &PoseSE3,
        mask: &Mask,
        target: RefineTarget,
    ) -> Result<f64> {
        self.check_depth(depth)?;
        check_mask(mask, self.intr)?;
        Ok(self.evaluate(depth.as_slice(), pose, mask, target, false).0)
    }

    /// Analytic gradient under a fixed mask: per-pixel `∂L/∂log d` for the depth
    /// target, `∂L/∂ξ` (twist `[v, ω]` left-composed onto `pose`) for the pose target.
    pub fn gradient(
        &self,
        depth: &DepthMap,
        pose: &PoseSE3,
        mask: &Mask,
        target: RefineTarget,
    ) -> Result<Vec<f64>> {
        self.check_depth(depth)?;
        check_mask(mask, self.intr)?;
        Ok(self.evaluate(depth.as_slice(), pose, mask, target, true).1)
    }

    fn evaluate(
        &self,
        depth: &[f64],
        pose: &PoseSE3,
        mask: &Mask,
        target: RefineTarget,
        want_grad: bool,
    ) -> (f64, Vec<f64>) {
        let intr = self.intr;
        let (w, h) = intr.dims();
        let ch = self.x_t.channels();
        let n = w * h;
        let rot = pose.rotation();
        let trans = pose.translation();

        let mut recon = vec![0.0; n * ch];
        let mut d_u = vec![0.0; n * ch];
        let mut d_v = vec![0.0; n * ch];
        let mut jac: Vec<Option<PixelJacobian>> = Vec::with_capacity(n);
        for j in 0..h {
            for i in 0..w {
                let k = j * w + i;
                let ray = intr.ray(i as f64, j as f64);
                let q = rot * (ray * depth[k]) + trans;
                let Some((u, v)) = intr.project_point(&q) else {
                    jac.push(None);
                    continue;
                };
                let (u, v) = (snap(u), snap(v));
                let mut ok = false;
                for c in 0..ch {
                    if let Some(s) = sample_with_grad(self.x_tm1, u, v, c) {
                        recon[k * ch + c] = s.value;
                        d_u[k * ch + c] = s.d_u;
                        d_v[k * ch + c] = s.d_v;
                        ok = true;
                    }
                }
                if !ok {
                    jac.push(None);
                    continue;
                }
                let iz = 1.0 / q.z;
                jac.push(Some(PixelJacobian {
                    q,
                    du_dq: Vector3::new(intr.fx * iz, 0.0, -intr.fx * q.x * iz * iz),
                    dv_dq: Vector3::new(0.0, intr.fy * iz, -intr.fy * q.y * iz * iz),
                }));
            }
        }

        let wts = &self.weights;
        let count = mask.count_ones();
        let mut g_recon = vec![0.0; n * ch];
        let mut loss = 0.0;
        if count > 0 {
            let norm = 1.0 / (count * ch) as f64;
            let x = self.x_t.as_slice();
            let mut rec = 0.0;
            for (k, &on) in mask.bits().iter().enumerate() {
                if !on {
                    continue;
                }
                for c in 0..ch {
                    let r = recon[k * ch + c] - x[k * ch + c];
                    rec += r.abs();
                    g_recon[k * ch + c] = wts.alpha * r.signum_or_zero() * norm;
                }
            }
            // Unmasked pixels show the target itself, so SSIM windows that overlap
            // them compare only masked reconstructions.
            for (k, &on) in mask.bits().iter().enumerate() {
                if !on {
                    recon[k * ch..(k + 1) * ch].copy_from_slice(&x[k * ch..(k + 1) * ch]);
                }
            }
            let recon_img = ImageBuffer::from_raw(w, h, ch, recon);
            let (ssim, g_ssim) = ssim_loss_and_grad(self.x_t, &recon_img, mask.bits());
            loss += wts.alpha * rec * norm + wts.gamma * ssim;
            for (k, (g, s)) in g_recon.iter_mut().zip(&g_ssim).enumerate() {
                if mask.bits()[k / ch] {
                    *g += wts.gamma * s;
                }
            }
        }

        let mut smooth_grad = Vec::new();
        if target == RefineTarget::Depth && wts.beta > 0.0 {
            let (s, g) = self.smoothness(depth);
            loss += wts.beta * s;
            smooth_grad = g;
        }
        if !want_grad {
            return (loss, Vec::new());
        }

        match target {
            RefineTarget::Depth => {
                let mut grad = vec![0.0; n];
                for j in 0..h {
                    for i in 0..w {
                        let k = j * w + i;
                        if let Some(pj) = &jac[k] {
                            let dq_dd = rot * intr.ray(i as f64, j as f64);
                            let du = pj.du_dq.dot(&dq_dd);
                            let dv = pj.dv_dq.dot(&dq_dd);
                            let mut g = 0.0;
                            for c in 0..ch {
                                let idx = k * ch + c;
                                g += g_recon[idx] * (d_u[idx] * du + d_v[idx] * dv);
                            }
                            grad[k] = g;
                        }
                        if !smooth_grad.is_empty() {
                            grad[k] += wts.beta * smooth_grad[k];
                        }
                        // d/d(log d) = d · d/dd
                        grad[k] *= depth[k];
                    }
                }
                (loss, grad)
            }
            RefineTarget::Pose => {
                let mut grad = [0.0; 6];
                for (k, pj) in jac.iter().enumerate() {
                    let Some(pj) = pj else { continue };
                    let mut dl_du = 0.0;
                    let mut dl_dv = 0.0;
                    for c in 0..ch {
                        let idx = k * ch + c;
                        dl_du += g_recon[idx] * d_u[idx];
                        dl_dv += g_recon[idx] * d_v[idx];
                    }
                    if dl_du == 0.0 && dl_dv == 0.0 {
                        continue;
                    }
                    let dl_dq = pj.du_dq * dl_du + pj.dv_dq * dl_dv;
                    // Q' = exp(ξ) Q ≈ Q + v + ω × Q, so ∂Q/∂v = I and ∂Q/∂ω = −[Q]×.
                    let d_omega: Vector3<f64> = -(skew(&pj.q).transpose() * dl_dq);
                    for a in 0..3 {
                        grad[a] += dl_dq[a];
                        grad[a + 3] += d_omega[a];
                    }
                }
                (loss, grad.to_vec())
            }
        }
    }

    /// Smoothness of the (optionally mean-normalized) depth and its gradient with
    /// respect to the raw depth values. The penalty is 1-homogeneous once `ε` scales
    /// with the depth, so normalizing divides it by the mean.
    fn smoothness(&self, depth: &[f64]) -> (f64, Vec<f64>) {
        let (s, g) = smoothness_and_grad_eps(depth, self.x_t, self.smooth_eps);
        if !self.depth_normalization {
            return (s, g);
        }
        let n = depth.len() as f64;
        let mean = depth.iter().sum::<f64>() / n;
        (
            s / mean,
            g.iter()
                .map(|gi| gi / mean - s / (mean * mean * n))
                .collect(),
        )
    }
}

fn check_mask(mask: &Mask, intr: &Intrinsics) -> Result<()> {
    if mask.dims() != intr.dims() {
        return Err(Error::shape(
            format!("{}x{}", intr.width, intr.height),
            format!("{}x{}", mask.width(), mask.height()),
        ));
    }
    Ok(())
}

fn log_depth(depth: &DepthMap) -> Vec<f64> {
    depth.as_slice().iter().map(|d| d.ln()).collect()
}

fn exp_vec(theta: &[f64]) -> Vec<f64> {
    theta.iter().map(|t| t.exp()).collect()
}

fn exp_depth(theta: &[f64], like: &DepthMap) -> DepthMap {
    DepthMap::from_grid_unchecked(
        crate::grid::Grid::from_vec(like.width(), like.height(), exp_vec(theta))
            .expect("same length"),
    )
}

/// Generic backtracking descent shared by both targets.
fn descend<P: Clone>(
    initial: P,
    cfg: &RefineConfig,
    masks: impl Fn(&P) -> Result<Mask>,
    loss: impl Fn(&P, &Mask) -> f64,
    gradient: impl Fn(&P, &Mask) -> Vec<f64>,
    step: impl Fn(&P, &[f64], f64) -> P,
) -> Result<RefineOutput<P>> {
    let mut params = initial;
    let mut mask = masks(&params)?;
    let mut current = loss(&params, &mask);
    let mut trace = vec![TraceEntry {
        iter: 0,
        loss: current,
        step: 0.0,
    }];
    if !current.is_finite() {
        return Ok(RefineOutput {
            estimate: params,
            trace,
            stop: StopReason::Diverged { iter: 0 },
        });
    }
    let mut accepted = 0usize;
    for iter in 1..=cfg.max_iters {
        let grad = gradient(&params, &mask);
        if grad.iter().all(|&g| g == 0.0) {
            return Ok(RefineOutput {
                estimate: params,
                trace,
                stop: StopReason::ZeroGradient,
            });
        }
        let mut s = cfg.step_size;
        let mut next = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = step(&params, &grad, s);
            let value = loss(&trial, &mask);
            if !value.is_finite() {
                return Ok(RefineOutput {
                    estimate: params,
                    trace,
                    stop: StopReason::Diverged { iter },
                });
            }
            if value < current {
                next = Some((trial, value));
                break;
            }
            s *= 0.5;
        }
        let Some((trial, value)) = next else {
            return Ok(RefineOutput {
                estimate: params,
                trace,
                stop: StopReason::Stalled,
            });
        };
        params = trial;
        current = value;
        trace.push(TraceEntry {
            iter,
            loss: current,
            step: s,
        });
        accepted += 1;
        if accepted.is_multiple_of(MASK_REFRESH) && iter < cfg.max_iters {
            mask = masks(&params)?;
            current = loss(&params, &mask);
            trace.push(TraceEntry {
                iter,
                loss: current,
                step: 0.0,
            });
        }
    }
    Ok(RefineOutput {
        estimate: params,
        trace,
        stop: StopReason::MaxIters,
    })
}

/// Gradient descent on per-pixel log-depth of frame `t` with the pose held fixed.
pub fn refine_depth(
    initial: &DepthMap,
    x_t: &ImageBuffer,
    x_tm1: &ImageBuffer,
    pose: &PoseSE3,
    intr: &Intrinsics,
    cfg: &RefineConfig,
) -> Result<RefineOutput<DepthMap>> {
    cfg.validate()?;
    let mut obj = Objective::new(x_t, x_tm1, intr, cfg.weights)?;
    obj.depth_normalization = cfg.depth_normalization;
    obj.smooth_eps = cfg.smooth_eps;
    obj.check_depth(initial)?;
    let target = RefineTarget::Depth;
    let out = descend(
        log_depth(initial),
        cfg,
        |theta| obj.masks(&exp_depth(theta, initial), pose),
        |theta, m| obj.evaluate(&exp_vec(theta), pose, m, target, false).0,
        |theta, m| obj.evaluate(&exp_vec(theta), pose, m, target, true).1,
        |theta, g, s| theta.iter().zip(g).map(|(t, g)| t - s * g).collect(),
    )?;
    Ok(RefineOutput {
        estimate: exp_depth(&out.estimate, initial),
        trace: out.trace,
        stop: out.stop,
    })
}

/// Gradient descent on a twist left-composed onto the current relative pose, with the
/// depth of frame `t` held fixed.
pub fn refine_pose(
    initial: &PoseSE3,
    depth: &DepthMap,
    x_t: &ImageBuffer,
    x_tm1: &ImageBuffer,
    intr: &Intrinsics,
    cfg: &RefineConfig,
) -> Result<RefineOutput<PoseSE3>> {
    cfg.validate()?;
    let obj = Objective::new(x_t, x_tm1, intr, cfg.weights)?;
    obj.check_depth(depth)?;
    let target = RefineTarget::Pose;
    // Rotation is stepped in units of meters at the mean scene depth, which balances
    // its gradient against the translation part.
    let rho = depth.mean();
    descend(
        *initial,
        cfg,
        |p| obj.masks(depth, p),
        |p, m| obj.evaluate(depth.as_slice(), p, m, target, false).0,
        |p, m| obj.evaluate(depth.as_slice(), p, m, target, true).1,
        |p, g, s| {
            let r2 = rho * rho;
            let xi = Twist([g[0], g[1], g[2], g[3] / r2, g[4] / r2, g[5] / r2]).scaled(-s);
            PoseSE3::exp(&xi).compose(p)
        },
    )
}

/// Central-difference comparison over the given coordinates. Returns the maximum of
/// `|a − fd| / max(|a|, |fd|)` over coordinates with `|a| > 1e-8`, and how many were
/// compared.
pub fn max_relative_error(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    coords: &[usize],
    h: f64,
) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut probe = x.to_vec();
    for &k in coords {
        let a = analytic[k];
        if a.abs() <= 1e-8 {
            continue;
        }
        probe[k] = x[k] + h;
        let plus = f(&probe);
        probe[k] = x[k] - h;
        let minus = f(&probe);
        probe[k] = x[k];
        let fd = (plus - minus) / (2.0 * h);
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()));
        checked += 1;
    }
    (worst, checked)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    /// Over coordinates where the objective is differentiable across `±h`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose `±h` interval crosses a bilinear cell boundary, an L1 or
    /// smoothness kink, or a validity change.
    pub excluded: usize,
    pub max_rel_error_excluded: f64,
}

/// Number of depth coordinates sampled by [`finite_diff_check`].
pub const FD_DEPTH_SAMPLES: usize = 100;

/// Compares the analytic gradient against central differences of the loss with masks
/// held fixed at their values at `(depth, pose)`: every twist coordinate for the pose
/// target, a seeded random subsample of pixels for the depth target.
#[allow(clippy::too_many_arguments)]
pub fn finite_diff_check(
    obj: &Objective<'_>,
    depth: &DepthMap,
    pose: &PoseSE3,
    target: RefineTarget,
    h: f64,
    seed: u64,
) -> Result<FdReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mask = obj.masks(depth, pose)?;
    let analytic = obj.gradient(depth, pose, &mask, target)?;
    let (mut clean, mut kinked) = (Vec::new(), Vec::new());
    let value;
    let x: Vec<f64>;
    match target {
        RefineTarget::Depth => {
            x = log_depth(depth);
            let candidates: Vec<usize> =
                (0..x.len()).filter(|&k| analytic[k].abs() > 1e-8).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picked = sample(
                &mut rng,
                candidates.len(),
                FD_DEPTH_SAMPLES.min(candidates.len()),
            );
            for idx in picked.into_iter() {
                let k = candidates[idx];
                if obj.depth_kink(depth, pose, &mask, k, h) {
                    kinked.push(k);
                } else {
                    clean.push(k);
                }
            }
            clean.sort_unstable();
            kinked.sort_unstable();
            value = Box::new(|t: &[f64]| obj.evaluate(&exp_vec(t), pose, &mask, target, false).0)
                as Box<dyn Fn(&[f64]) -> f64 + '_>;
        }
        RefineTarget::Pose => {
            x = vec![0.0; 6];
            for k in 0..6 {
                if obj.pose_kink(depth, pose, &mask, k, h) {
                    kinked.push(k);
                } else {
                    clean.push(k);
                }
            }
            value = Box::new(|xi: &[f64]| {
                let p =
                    PoseSE3::exp(&Twist([xi[0], xi[1], xi[2], xi[3], xi[4], xi[5]])).compose(pose);
                obj.evaluate(depth.as_slice(), &p, &mask, target, false).0
            });
        }
    }
    let (max_rel_error, checked) = max_relative_error(&value, &x, &analytic, &clean, h);
    let (max_rel_error_excluded, excluded) = max_relative_error(&value, &x, &analytic, &kinked, h);
    Ok(FdReport {
        max_rel_error,
        checked,
        excluded,
        max_rel_error_excluded,
    })
}

/// Per-pixel quantities whose change of sign or cell marks a non-differentiable point.
#[derive(PartialEq)]
struct KinkState {
    cell: Option<(i64, i64)>,
    residual_signs: Vec<i8>,
}

impl Objective<'_> {
    fn pixel_state(
        &self,
        i: usize,
        j: usize,
        d: f64,
        rot: &Matrix3<f64>,
        trans: &Vector3<f64>,
        masked: bool,
    ) -> KinkState {
        let q = rot * (self.intr.ray(i as f64, j as f64) * d) + trans;
        let Some((u, v)) = self.intr.project_point(&q) else {
            return KinkState {
                cell: None,
                residual_signs: Vec::new(),
            };
        };
        let (u, v) = (snap(u), snap(v));
        let ch = self.x_t.channels();
        let mut residual_signs = Vec::with_capacity(ch);
        let mut cell = Some((u.floor() as i64, v.floor() as i64));
        for c in 0..ch {
            match sample_with_grad(self.x_tm1, u, v, c) {
                Some(s) if masked => {
                    residual_signs.push((s.value - self.x_t.get(i, j, c)).signum_or_zero() as i8)
                }
                Some(_) => {}
                None => cell = None,
            }
        }
        KinkState {
            cell,
            residual_signs,
        }
    }

    fn depth_kink(&self, depth: &DepthMap, pose: &PoseSE3, mask: &Mask, k: usize, h: f64) -> bool {
        let (w, hgt) = depth.dims();
        let (i, j) = (k % w, k / w);
        let d = depth.as_slice()[k];
        let (lo, hi) = (d * (-h).exp(), d * h.exp());
        let masked = mask.bits()[k];
        let state = |dd| self.pixel_state(i, j, dd, pose.rotation(), pose.translation(), masked);
        let (a, b) = (state(lo), state(hi));
        if a != b || a.cell.is_none() {
            return true;
        }
        if self.weights.beta > 0.0 {
            let mut neighbors = Vec::with_capacity(4);
            if i > 0 {
                neighbors.push(k - 1);
            }
            if i + 1 < w {
                neighbors.push(k + 1);
            }
            if j > 0 {
                neighbors.push(k - w);
            }
            if j + 1 < hgt {
                neighbors.push(k + w);
            }
            for nb in neighbors {
                let other = depth.as_slice()[nb];
                if (lo - other).signum_or_zero() != (hi - other).signum_or_zero() {
                    return true;
                }
            }
        }
        false
    }

    fn pose_kink(
        &self,
        depth: &DepthMap,
        pose: &PoseSE3,
        mask: &Mask,
        axis: usize,
        h: f64,
    ) -> bool {
        let mut xi = [0.0; 6];
        xi[axis] = h;
        let plus = PoseSE3::exp(&Twist(xi)).compose(pose);
        let minus = PoseSE3::exp(&-Twist(xi)).compose(pose);
        let (w, hgt) = depth.dims();
        (0..hgt).any(|j| {
            (0..w).any(|i| {
                let k = j * w + i;
                let d = depth.as_slice()[k];
                let masked = mask.bits()[k];
                self.pixel_state(i, j, d, plus.rotation(), plus.translation(), masked)
                    != self.pixel_state(i, j, d, minus.rotation(), minus.translation(), masked)
            })
        })
    }
}
