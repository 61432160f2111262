//! Separable bicubic resampling with the Keys kernel.

use crate::filter::phi_bic;
use crate::group::Image;

/// Taps of one output sample along one axis: `(source index, weight)`.
fn axis_taps(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = n_in as f64 / n_out as f64;
    // widen the kernel when shrinking so it acts as a low-pass filter
    let widen = ratio.max(1.0);
    let reach = 2.0 * widen;
    (0..n_out)
        .map(|o| {
            let src = (o as f64 + 0.5) * ratio - 0.5;
            let lo = (src - reach).floor() as i64;
            let hi = (src + reach).ceil() as i64;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for k in lo..=hi {
                let wgt = phi_bic((src - k as f64) / widen);
                if wgt == 0.0 {
                    continue;
                }
                let idx = k.clamp(0, n_in as i64 - 1) as usize;
                match taps.iter_mut().find(|(i, _)| *i == idx) {
                    Some(t) => t.1 += wgt,
                    None => taps.push((idx, wgt)),
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Resamples to `out_h x out_w`; sizes must be at least 1.
///
/// Sample positions follow the cell-centered convention
/// `src = (o + 0.5) * in / out - 0.5`; out-of-range taps replicate the edge.
pub fn bicubic_resize(img: &Image, out_h: usize, out_w: usize) -> Image {
    assert!(out_h >= 1 && out_w >= 1, "output size must be positive");
    if out_h == img.h && out_w == img.w {
        return img.clone();
    }
    let c = img.c;
    let cols = axis_taps(img.w, out_w);
    let mut mid = Image::zeros(img.h, out_w, c);
    for i in 0..img.h {
        for (j, taps) in cols.iter().enumerate() {
            for ch in 0..c {
                let v = taps.iter().map(|&(k, w)| w * img.get(i, k, ch)).sum();
                mid.set(i, j, ch, v);
            }
        }
    }
    let rows = axis_taps(img.h, out_h);
    let mut out = Image::zeros(out_h, out_w, c);
    for (i, taps) in rows.iter().enumerate() {
        for j in 0..out_w {
            for ch in 0..c {
                let v = taps.iter().map(|&(k, w)| w * mid.get(k, j, ch)).sum();
                out.set(i, j, ch, v);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_bit_exact() {
        let img = Image::from_fn(5, 4, 2, |i, j, c| (i * 7 + j * 3 + c) as f64 * 0.013);
        assert_eq!(bicubic_resize(&img, 5, 4), img);
    }

    #[test]
    fn constants_survive() {
        let img = Image::from_fn(7, 5, 3, |_, _, c| 0.25 + c as f64 * 0.1);
        for (h, w) in [(3, 2), (14, 10), (9, 1), (1, 1)] {
            let out = bicubic_resize(&img, h, w);
            for i in 0..h {
                for j in 0..w {
                    for c in 0..3 {
                        assert!((out.get(i, j, c) - img.get(0, 0, c)).abs() <= 1e-12);
                    }
                }
            }
        }
    }
}
