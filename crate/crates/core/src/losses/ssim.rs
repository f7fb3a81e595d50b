//! Per-pixel SSIM over 3×3 uniform windows with reflection padding at the borders.

use crate::image::ImageBuffer;

pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

#[inline]
fn reflect(k: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let r = if k < 0 {
        -k
    } else if k >= n {
        2 * (n - 1) - k
    } else {
        k
    };
    r as usize
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    mx: f64,
    my: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

fn window_moments(x: &ImageBuffer, y: &ImageBuffer, i: usize, j: usize, c: usize) -> Moments {
    let (w, h) = x.dims();
    let mut m = Moments::default();
    for dj in -1..=1isize {
        let jj = reflect(j as isize + dj, h);
        for di in -1..=1isize {
            let ii = reflect(i as isize + di, w);
            let a = x.get(ii, jj, c);
            let b = y.get(ii, jj, c);
            m.mx += a;
            m.my += b;
            m.sxx += a * a;
            m.syy += b * b;
            m.sxy += a * b;
        }
    }
    let n = 9.0;
    Moments {
        mx: m.mx / n,
        my: m.my / n,
        sxx: m.sxx / n,
        syy: m.syy / n,
        sxy: m.sxy / n,
    }
}

struct SsimTerms {
    value: f64,
    // ∂SSIM/∂μy, ∂SSIM/∂E[y²], ∂SSIM/∂E[xy]
    d_my: f64,
    d_syy: f64,
    d_sxy: f64,
}

fn ssim_terms(m: &Moments) -> SsimTerms {
    let var_x = m.sxx - m.mx * m.mx;
    let var_y = m.syy - m.my * m.my;
    let cov = m.sxy - m.mx * m.my;
    let a = 2.0 * m.mx * m.my + C1;
    let b = 2.0 * cov + C2;
    let c = m.mx * m.mx + m.my * m.my + C1;
    let d = var_x + var_y + C2;
    let s = (a * b) / (c * d);
    SsimTerms {
        value: s,
        d_my: s * (2.0 * m.mx / a - 2.0 * m.mx / b - 2.0 * m.my / c + 2.0 * m.my / d),
        d_syy: -s / d,
        d_sxy: 2.0 * s / b,
    }
}

/// SSIM map, interleaved like the inputs. Values clamped to `[-1, 1]`.
pub fn ssim_map(x: &ImageBuffer, y: &ImageBuffer) -> Vec<f64> {
    let (w, h) = x.dims();
    let ch = x.channels();
    let mut out = Vec::with_capacity(w * h * ch);
    for j in 0..h {
        for i in 0..w {
            for c in 0..ch {
                out.push(
                    ssim_terms(&window_moments(x, y, i, j, c))
                        .value
                        .clamp(-1.0, 1.0),
                );
            }
        }
    }
    out
}

/// Masked mean of `1 − SSIM(x, y)` and its gradient with respect to `y`.
pub(crate) fn ssim_loss_and_grad(
    x: &ImageBuffer,
    y: &ImageBuffer,
    mask: &[bool],
) -> (f64, Vec<f64>) {
    let (w, h) = x.dims();
    let ch = x.channels();
    let count = mask.iter().filter(|&&b| b).count();
    let mut grad = vec![0.0; w * h * ch];
    if count == 0 {
        return (0.0, grad);
    }
    let norm = 1.0 / (count * ch) as f64;
    let mut loss = 0.0;
    for j in 0..h {
        for i in 0..w {
            if !mask[j * w + i] {
                continue;
            }
            for c in 0..ch {
                let t = ssim_terms(&window_moments(x, y, i, j, c));
                loss += 1.0 - t.value.clamp(-1.0, 1.0);
                if !(-1.0..=1.0).contains(&t.value) {
                    continue;
                }
                // d(1 − S)/dy(q) accumulated through the window statistics.
                let g_my = -t.d_my * norm / 9.0;
                let g_syy = -t.d_syy * norm / 9.0;
                let g_sxy = -t.d_sxy * norm / 9.0;
                for dj in -1..=1isize {
                    let jj = reflect(j as isize + dj, h);
                    for di in -1..=1isize {
                        let ii = reflect(i as isize + di, w);
                        let q = (jj * w + ii) * ch + c;
                        grad[q] += g_my + g_syy * 2.0 * y.as_slice()[q] + g_sxy * x.as_slice()[q];
                    }
                }
            }
        }
    }
    (loss * norm, grad)
}
