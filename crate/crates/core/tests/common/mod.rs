#![allow(dead_code)]

use multimask::masks::W_BLANK;
use multimask::{Mask, ProjectionRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random record with heavy cell sharing, repeated depths, exact integer coordinates,
/// invalid projections and coordinates outside the target plane.
pub fn random_record(w: usize, h: usize, seed: u64) -> (ProjectionRecord, Mask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = rng.gen_range(w as f64 * 0.4..w as f64 * 1.2);
    let n = w * h;
    let mut coords = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for _ in 0..n {
        let mut c = [
            rng.gen_range(-2.0..span),
            rng.gen_range(-2.0..span * h as f64 / w as f64),
        ];
        if rng.gen_bool(0.15) {
            c = [c[0].round(), c[1].round()];
        }
        coords.push(c);
        z.push(if rng.gen_bool(0.5) {
            rng.gen_range(1..5) as f64
        } else {
            rng.gen_range(0.5..20.0)
        });
        valid.push(rng.gen_bool(0.92));
    }
    let active = Mask::from_bits(w, h, (0..n).map(|_| rng.gen_bool(0.85)).collect()).unwrap();
    (
        ProjectionRecord::from_parts(w, h, coords, z, valid).unwrap(),
        active,
    )
}

/// Pairwise enumeration: an active valid pixel is dropped iff some other active valid
/// pixel in its cell is strictly nearer, or equally near and earlier in row-major order.
pub fn overlap_oracle(rec: &ProjectionRecord, active: &Mask) -> Mask {
    let (w, h) = rec.dims();
    let n = w * h;
    let cell = |k: usize| {
        let [u, v] = rec.coords()[k];
        (u.floor() as i64, v.floor() as i64)
    };
    let competes = |k: usize| active.bits()[k] && rec.valid()[k];
    let bits = (0..n)
        .map(|p| {
            if !active.bits()[p] {
                return false;
            }
            if !rec.valid()[p] {
                return true;
            }
            let zp = rec.depths()[p];
            !(0..n).any(|q| {
                q != p && competes(q) && cell(q) == cell(p) && {
                    let zq = rec.depths()[q];
                    zq < zp || (zq == zp && q < p)
                }
            })
        })
        .collect();
    Mask::from_bits(w, h, bits).unwrap()
}

/// Corner enumeration per target pixel: sums, over active valid sources in row-major
/// order, the bilinear weight each one places on that pixel.
pub fn blank_oracle(rec: &ProjectionRecord, bounds: (usize, usize), active: &Mask) -> Mask {
    let (tw, th) = bounds;
    let sources: Vec<usize> = (0..rec.len())
        .filter(|&k| active.bits()[k] && rec.valid()[k])
        .collect();
    let axis_weight = |pos: f64, q: i64| {
        if !pos.is_finite() {
            return 0.0;
        }
        let f = pos.floor();
        let a = pos - f;
        if q == f as i64 {
            1.0 - a
        } else if q == f as i64 + 1 {
            a
        } else {
            0.0
        }
    };
    let bits = (0..th)
        .flat_map(|j| (0..tw).map(move |i| (i, j)))
        .map(|(i, j)| {
            let mut acc = 0.0;
            for &k in &sources {
                let [u, v] = rec.coords()[k];
                let wx = axis_weight(u, i as i64);
                let wy = axis_weight(v, j as i64);
                if wx != 0.0 || wy != 0.0 {
                    acc += wx * wy;
                }
            }
            acc >= W_BLANK
        })
        .collect();
    Mask::from_bits(tw, th, bits).unwrap()
}
