//! Depth accuracy metrics and ATE over short snippets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, PoseSE3};
use crate::grid::Mask;

/// Predictions are clamped from below to this depth.
pub const MIN_DEPTH: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthEvalConfig {
    /// Ground truth beyond this depth is ignored and predictions are clamped to it.
    pub cap: f64,
    pub median_scale: bool,
}

impl Default for DepthEvalConfig {
    fn default() -> Self {
        Self {
            cap: 80.0,
            median_scale: true,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn depth_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    valid: &Mask,
    cfg: &DepthEvalConfig,
) -> Result<DepthMetrics> {
    if pred.dims() != gt.dims() || valid.dims() != gt.dims() {
        return Err(Error::shape(
            format!("{}x{}", gt.width(), gt.height()),
            format!(
                "pred {}x{}, mask {}x{}",
                pred.width(),
                pred.height(),
                valid.width(),
                valid.height()
            ),
        ));
    }
    if !(cfg.cap > MIN_DEPTH) {
        return Err(Error::Config(format!(
            "cap {} must exceed {MIN_DEPTH}",
            cfg.cap
        )));
    }
    let (mut p, g): (Vec<f64>, Vec<f64>) = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .zip(valid.bits())
        .filter(|&((_, &g), &on)| on && g > 0.0 && g <= cfg.cap)
        .map(|((&p, &g), _)| (p, g))
        .unzip();
    if g.is_empty() {
        return Err(Error::NoValidPixels);
    }
    if cfg.median_scale {
        let ratio = median(&mut g.clone()) / median(&mut p.clone());
        p.iter_mut().for_each(|v| *v *= ratio);
    }
    p.iter_mut().for_each(|v| *v = v.clamp(MIN_DEPTH, cfg.cap));

    let n = g.len() as f64;
    let mut m = DepthMetrics {
        abs_rel: 0.0,
        sq_rel: 0.0,
        rmse: 0.0,
        rmse_log: 0.0,
        delta1: 0.0,
        delta2: 0.0,
        delta3: 0.0,
    };
    for (&p, &g) in p.iter().zip(&g) {
        let diff = p - g;
        m.abs_rel += diff.abs() / g;
        m.sq_rel += diff * diff / g;
        m.rmse += diff * diff;
        let dl = p.ln() - g.ln();
        m.rmse_log += dl * dl;
        let ratio = (p / g).max(g / p);
        m.delta1 += f64::from(u8::from(ratio < 1.25));
        m.delta2 += f64::from(u8::from(ratio < 1.25 * 1.25));
        m.delta3 += f64::from(u8::from(ratio < 1.25 * 1.25 * 1.25));
    }
    m.abs_rel /= n;
    m.sq_rel /= n;
    m.rmse = (m.rmse / n).sqrt();
    m.rmse_log = (m.rmse_log / n).sqrt();
    m.delta1 /= n;
    m.delta2 /= n;
    m.delta3 /= n;
    Ok(m)
}

/// Mean and population standard deviation of per-snippet ATE, in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteStats {
    pub mean: f64,
    pub std: f64,
    pub snippets: usize,
}

/// ATE of one window: both windows are re-expressed relative to their first pose,
/// the prediction is scaled by the least-squares fit of translation magnitudes, and
/// the RMSE of the translation residuals is returned.
pub fn snippet_ate(pred: &[PoseSE3], gt: &[PoseSE3]) -> f64 {
    let anchor_p = pred[0].inverse();
    let anchor_g = gt[0].inverse();
    let rel_p: Vec<_> = pred
        .iter()
        .map(|p| *anchor_p.compose(p).translation())
        .collect();
    let rel_g: Vec<_> = gt
        .iter()
        .map(|g| *anchor_g.compose(g).translation())
        .collect();
    let num: f64 = rel_p
        .iter()
        .zip(&rel_g)
        .map(|(p, g)| p.norm() * g.norm())
        .sum();
    let den: f64 = rel_p.iter().map(|p| p.norm_squared()).sum();
    let scale = if den > 0.0 { num / den } else { 1.0 };
    let sq: f64 = rel_p
        .iter()
        .zip(&rel_g)
        .map(|(p, g)| (p * scale - g).norm_squared())
        .sum();
    (sq / pred.len() as f64).sqrt()
}

/// ATE over every window of `snippet_len` consecutive poses (camera-to-world).
pub fn ate_snippets(pred: &[PoseSE3], gt: &[PoseSE3], snippet_len: usize) -> Result<AteStats> {
    if pred.len() != gt.len() {
        return Err(Error::shape(
            format!("{} poses", gt.len()),
            format!("{} poses", pred.len()),
        ));
    }
    if snippet_len < 2 || pred.len() < snippet_len {
        return Err(Error::SequenceTooShort {
            len: pred.len(),
            snippet: snippet_len,
        });
    }
    let errors: Vec<f64> = pred
        .windows(snippet_len)
        .zip(gt.windows(snippet_len))
        .map(|(p, g)| snippet_ate(p, g))
        .collect();
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    Ok(AteStats {
        mean,
        std: var.sqrt(),
        snippets: errors.len(),
    })
}
