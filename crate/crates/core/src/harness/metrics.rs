//! Norm-ratio equivariance metrics and PSNR.

use crate::error::{Error, Result};
use crate::group::Image;

fn check(a: &Image, b: &Image, mask: Option<&[bool]>) -> Result<()> {
    if (a.h, a.w, a.c) != (b.h, b.w, b.c) {
        return Err(Error::shape(format!(
            "metric needs equal shapes, got {}x{}x{} and {}x{}x{}",
            a.h, a.w, a.c, b.h, b.w, b.c
        )));
    }
    if let Some(m) = mask {
        if m.len() != a.h * a.w {
            return Err(Error::shape(format!(
                "mask has {} entries for {} pixels",
                m.len(),
                a.h * a.w
            )));
        }
    }
    Ok(())
}

/// Pixel-wise `(x_r - x_0, x_0)` pairs selected by the mask.
fn pairs<'a>(
    x_r: &'a Image,
    x_0: &'a Image,
    mask: Option<&'a [bool]>,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    let c = x_r.c;
    x_r.data
        .iter()
        .zip(&x_0.data)
        .enumerate()
        .filter(move |(k, _)| mask.map_or(true, |m| m[k / c]))
        .map(|(_, (&r, &o))| (r - o, o))
}

/// `‖x_r − x_0‖₂ / ‖x_0‖₂`, optionally over masked pixels only.
pub fn nmse(x_r: &Image, x_0: &Image, mask: Option<&[bool]>) -> Result<f64> {
    check(x_r, x_0, mask)?;
    let (num, den) =
        pairs(x_r, x_0, mask).fold((0.0, 0.0), |(n, d), (e, o)| (n + e * e, d + o * o));
    if den == 0.0 {
        return Err(Error::UndefinedMetric("reference has zero L2 norm".into()));
    }
    Ok((num / den).sqrt())
}

/// `‖x_r − x_0‖₁ / ‖x_0‖₁`, optionally over masked pixels only.
pub fn nmae(x_r: &Image, x_0: &Image, mask: Option<&[bool]>) -> Result<f64> {
    check(x_r, x_0, mask)?;
    let (num, den) =
        pairs(x_r, x_0, mask).fold((0.0, 0.0), |(n, d), (e, o)| (n + e.abs(), d + o.abs()));
    if den == 0.0 {
        return Err(Error::UndefinedMetric("reference has zero L1 norm".into()));
    }
    Ok(num / den)
}

/// `10 log10(1 / MSE)` over all samples; identical images give `+inf`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check(a, b, None)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Formats a PSNR value, writing the identical-image sentinel as `inf`.
pub fn format_psnr(db: f64) -> String {
    if db.is_infinite() {
        "inf".to_string()
    } else {
        format!("{db:.4}")
    }
}

/// Sample mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
