use ndarray::Array3;

use crate::error::{Error, Result};

/// Hasler–Süsstrunk colorfulness on `[0, 1]` channels:
/// `sqrt(σ_rg² + σ_yb²) + 0.3 sqrt(μ_rg² + μ_yb²)` with `rg = R − G`, `yb = (R + G)/2 − B`.
pub fn colorfulness(img: &Array3<f32>) -> Result<f64> {
    let (ch, h, w) = img.dim();
    if ch != 3 {
        return Err(Error::Metric(format!("colorfulness needs 3 channels, got {ch}")));
    }
    let n = (h * w) as f64;
    if n == 0.0 {
        return Err(Error::Metric("colorfulness of an empty image".into()));
    }
    let (mut s_rg, mut s_yb) = (0.0, 0.0);
    let mut rg = Vec::with_capacity(h * w);
    let mut yb = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let r = f64::from(img[[0, y, x]]);
            let g = f64::from(img[[1, y, x]]);
            let b = f64::from(img[[2, y, x]]);
            rg.push(r - g);
            yb.push(0.5 * (r + g) - b);
            s_rg += r - g;
            s_yb += 0.5 * (r + g) - b;
        }
    }
    let (m_rg, m_yb) = (s_rg / n, s_yb / n);
    let var = |v: &[f64], m: f64| v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n;
    let std_root = (var(&rg, m_rg) + var(&yb, m_yb)).sqrt();
    let mean_root = (m_rg * m_rg + m_yb * m_yb).sqrt();
    Ok(std_root + 0.3 * mean_root)
}

/// Signed `CF(reference) − CF(generated)`; negative when the output is more colorful.
pub fn delta_cf(reference: &Array3<f32>, generated: &Array3<f32>) -> Result<f64> {
    Ok(colorfulness(reference)? - colorfulness(generated)?)
}
