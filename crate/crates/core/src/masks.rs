//! Edge, overlap and blank masks, and the repeated two-way masking procedure.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{project_depth, DepthMap, Intrinsics, PoseSE3};
use crate::grid::Mask;
use crate::image::ImageBuffer;
use crate::warp::{bilinear_sample, footprint, splat_weights, ProjectionRecord};

/// Target pixels whose accumulated splat weight falls below this are blank.
pub const W_BLANK: f64 = 1e-6;

/// Default number of two-way masking rounds.
pub const DEFAULT_ROUNDS: usize = 3;

/// The three masks gating one frame's loss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSet {
    pub edge: Mask,
    pub overlap: Mask,
    pub blank: Mask,
}

impl MaskSet {
    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            edge: Mask::ones(width, height),
            overlap: Mask::ones(width, height),
            blank: Mask::ones(width, height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.edge.dims()
    }
}

fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::shape(
            format!("{}x{}", expected.0, expected.1),
            format!("{}x{}", found.0, found.1),
        ));
    }
    Ok(())
}

/// 0 where the footprint on the target plane leaves the image (any corner), or the
/// projection is invalid.
pub fn edge_mask(record: &ProjectionRecord, target_bounds: (usize, usize)) -> Mask {
    let (w, h) = record.dims();
    let bits = record
        .coords()
        .iter()
        .zip(record.valid())
        .map(|(c, &ok)| ok && footprint((c[0], c[1]), target_bounds).fully_inside())
        .collect();
    Mask::from_bits(w, h, bits).expect("record shape")
}

/// Among active, valid pixels landing in the same unit cell `(⌊î⌋, ⌊ĵ⌋)`, keeps only the
/// one with the smallest transformed depth; ties go to the earliest pixel in row-major
/// order. Inactive pixels are 0; active pixels without a valid projection are 1.
pub fn overlap_mask(
    record: &ProjectionRecord,
    _target_bounds: (usize, usize),
    active: &Mask,
) -> Result<Mask> {
    check_dims(record.dims(), active.dims())?;
    let (w, h) = record.dims();
    // cell -> (best z, best index)
    let mut best: HashMap<(i64, i64), (f64, usize)> = HashMap::new();
    for k in 0..record.len() {
        if !active.bits()[k] || !record.valid()[k] {
            continue;
        }
        let [u, v] = record.coords()[k];
        let cell = (u.floor() as i64, v.floor() as i64);
        let z = record.depths()[k];
        best.entry(cell)
            .and_modify(|slot| {
                if z < slot.0 {
                    *slot = (z, k);
                }
            })
            .or_insert((z, k));
    }
    let mut bits = active.bits().to_vec();
    for (k, bit) in bits.iter_mut().enumerate() {
        if !*bit || !record.valid()[k] {
            continue;
        }
        let [u, v] = record.coords()[k];
        let cell = (u.floor() as i64, v.floor() as i64);
        *bit = best[&cell].1 == k;
    }
    Mask::from_bits(w, h, bits)
}

/// Blank mask of THIS frame from the projection of the OTHER frame onto this plane:
/// 0 wherever the other frame's active pixels contribute less than `W_BLANK`.
pub fn blank_mask(
    record_other_to_this: &ProjectionRecord,
    this_bounds: (usize, usize),
    active_other: &Mask,
) -> Result<Mask> {
    let splat = splat_weights(record_other_to_this, this_bounds, active_other)?;
    let bits = splat
        .grid()
        .as_slice()
        .iter()
        .map(|&w| w >= W_BLANK)
        .collect();
    Mask::from_bits(this_bounds.0, this_bounds.1, bits)
}

/// Elementwise product of the three masks.
pub fn combine(set: &MaskSet) -> Mask {
    let mut out = set.edge.clone();
    out.and_assign(&set.overlap);
    out.and_assign(&set.blank);
    out
}

/// Result of two-way repeated masking between frames `t` and `t−1`.
#[derive(Clone, Debug)]
pub struct TwoWayMasks {
    /// Masks gating the loss between `X_t` and `X̂_t`.
    pub masks_t: MaskSet,
    /// Masks gating the loss between `X_{t−1}` and `X̂_{t−1}`.
    pub masks_tm1: MaskSet,
    /// `X_t` reconstructed from `X_{t−1}`.
    pub recon_t: ImageBuffer,
    /// `X_{t−1}` reconstructed from `X_t`.
    pub recon_tm1: ImageBuffer,
    /// Projection of frame `t` onto the `t−1` plane.
    pub record_t: ProjectionRecord,
    /// Projection of frame `t−1` onto the `t` plane.
    pub record_tm1: ProjectionRecord,
    /// Rounds actually executed (stops early at a fixed point).
    pub rounds_run: usize,
}

/// Runs `rounds` rounds of mask updates on precomputed two-way projections.
///
/// Both frames start fully active. In each round, each direction's edge and overlap
/// masks are recomputed with that frame's current active set, and its blank mask from
/// the reverse projection restricted to the other frame's active set. Each mask kind
/// is intersected across rounds; a frame's active set after a round is the product of
/// its three masks. Stops early once a full round changes nothing.
pub fn repeated_masking_records(
    record_t: &ProjectionRecord,
    record_tm1: &ProjectionRecord,
    bounds: (usize, usize),
    rounds: usize,
) -> Result<(MaskSet, MaskSet, usize)> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    check_dims(bounds, record_t.dims())?;
    check_dims(bounds, record_tm1.dims())?;
    let (w, h) = bounds;
    let mut set_t = MaskSet::ones(w, h);
    let mut set_tm1 = MaskSet::ones(w, h);
    let mut active_t = Mask::ones(w, h);
    let mut active_tm1 = Mask::ones(w, h);
    let edge_t = edge_mask(record_t, bounds);
    let edge_tm1 = edge_mask(record_tm1, bounds);
    let mut rounds_run = 0;
    for _ in 0..rounds {
        rounds_run += 1;
        let ove_t = overlap_mask(record_t, bounds, &active_t)?;
        let ove_tm1 = overlap_mask(record_tm1, bounds, &active_tm1)?;
        let bla_t = blank_mask(record_tm1, bounds, &active_tm1)?;
        let bla_tm1 = blank_mask(record_t, bounds, &active_t)?;

        let before = (set_t.clone(), set_tm1.clone());
        set_t.edge.and_assign(&edge_t);
        set_t.overlap.and_assign(&ove_t);
        set_t.blank.and_assign(&bla_t);
        set_tm1.edge.and_assign(&edge_tm1);
        set_tm1.overlap.and_assign(&ove_tm1);
        set_tm1.blank.and_assign(&bla_tm1);

        active_t = combine(&set_t);
        active_tm1 = combine(&set_tm1);
        if before.0 == set_t && before.1 == set_tm1 {
            break;
        }
    }
    Ok((set_t, set_tm1, rounds_run))
}

/// Two-way repeated masking for a frame pair. `pose_t` maps frame-`t` camera points into
/// the `t−1` camera; the reverse direction uses its inverse.
#[allow(clippy::too_many_arguments)]
pub fn repeated_masking(
    x_t: &ImageBuffer,
    x_tm1: &ImageBuffer,
    d_t: &DepthMap,
    d_tm1: &DepthMap,
    pose_t: &PoseSE3,
    intr: &Intrinsics,
    rounds: usize,
) -> Result<TwoWayMasks> {
    let bounds = intr.dims();
    check_dims(bounds, x_t.dims())?;
    check_dims(bounds, x_tm1.dims())?;
    x_t.same_shape(x_tm1)?;
    let record_t = project_depth(d_t, pose_t, intr)?;
    let record_tm1 = project_depth(d_tm1, &pose_t.inverse(), intr)?;
    let (masks_t, masks_tm1, rounds_run) =
        repeated_masking_records(&record_t, &record_tm1, bounds, rounds)?;
    let recon_t = bilinear_sample(x_tm1, &record_t);
    let recon_tm1 = bilinear_sample(x_t, &record_tm1);
    Ok(TwoWayMasks {
        masks_t,
        masks_tm1,
        recon_t,
        recon_tm1,
        record_t,
        record_tm1,
        rounds_run,
    })
}
