use ndarray::Array2;

use super::filters::{box_mean, reflect};
use super::fsim::check_planes;
use super::loggabor::FilterBank;
use crate::error::Result;

const WINDOW: usize = 7;

/// Lag-1 shift along columns (`dx = 1`) or rows (`dy = 1`) with symmetric borders.
fn shifted(x: &Array2<f64>, dy: usize, dx: usize) -> Array2<f64> {
    let (h, w) = x.dim();
    Array2::from_shape_fn((h, w), |(y, xx)| {
        x[[reflect((y + dy) as isize, h), reflect((xx + dx) as isize, w)]]
    })
}

/// Local lag-1 correlation coefficients along `(dy, dx)`.
fn local_rho(x: &Array2<f64>, mu: &Array2<f64>, var: &Array2<f64>, dy: usize, dx: usize, c: f64) -> Array2<f64> {
    let xs = shifted(x, dy, dx);
    let mu_s = box_mean(&xs, WINDOW);
    let var_s = box_mean(&(&xs * &xs), WINDOW) - &mu_s * &mu_s;
    let cov = box_mean(&(x * &xs), WINDOW) - mu * &mu_s;
    ndarray::Zip::from(&cov)
        .and(var)
        .and(&var_s)
        .map_collect(|cv, v, vs| (cv / ((v.max(0.0) * vs.max(0.0)).sqrt() + c)).clamp(-1.0, 1.0))
}

/// Mean STSIM-1 term over one pair of subbands.
fn band_score(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let range = x.iter().chain(y.iter()).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let mu_x = box_mean(x, WINDOW);
    let mu_y = box_mean(y, WINDOW);
    let var_x = box_mean(&(x * x), WINDOW) - &mu_x * &mu_x;
    let var_y = box_mean(&(y * y), WINDOW) - &mu_y * &mu_y;
    let rx01 = local_rho(x, &mu_x, &var_x, 0, 1, c2);
    let ry01 = local_rho(y, &mu_y, &var_y, 0, 1, c2);
    let rx10 = local_rho(x, &mu_x, &var_x, 1, 0, c2);
    let ry10 = local_rho(y, &mu_y, &var_y, 1, 0, c2);
    let (h, w) = x.dim();
    let mut total = 0.0;
    for i in 0..h {
        for j in 0..w {
            let (mx, my) = (mu_x[[i, j]], mu_y[[i, j]]);
            let (vx, vy) = (var_x[[i, j]].max(0.0), var_y[[i, j]].max(0.0));
            let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
            let c = (2.0 * (vx * vy).sqrt() + c2) / (vx + vy + c2);
            let c01 = 1.0 - 0.5 * (rx01[[i, j]] - ry01[[i, j]]).abs();
            let c10 = 1.0 - 0.5 * (rx10[[i, j]] - ry10[[i, j]]).abs();
            total += (l.max(0.0) * c * c01 * c10).powf(0.25);
        }
    }
    total / (h * w) as f64
}

/// Structural texture similarity (STSIM-1 style) of two luminance planes.
///
/// Bands are the 16 log-Gabor magnitude responses (4 scales × 4 orientations) plus the
/// image itself. Each band contributes the mean of `(l c c₀₁ c₁₀)^¼`, where `c₀₁`/`c₁₀`
/// compare horizontal/vertical lag-1 autocorrelation; bands are combined by a geometric
/// mean.
pub fn stsim(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    check_planes(a, b, "STSIM")?;
    let (h, w) = a.dim();
    let bank = FilterBank::new(h, w);
    let ra = bank.responses(a);
    let rb = bank.responses(b);
    let mut scores = vec![band_score(a, b)];
    for (sa, sb) in ra.iter().zip(&rb) {
        for (oa, ob) in sa.iter().zip(sb) {
            scores.push(band_score(&oa.mapv(|c| c.norm()), &ob.mapv(|c| c.norm())));
        }
    }
    let log_mean = scores.iter().map(|s| s.max(1e-12).ln()).sum::<f64>() / scores.len() as f64;
    Ok(log_mean.exp())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;

    fn grating(n: usize, phase: f64) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(y, x)| {
            0.5 + 0.4 * (2.0 * std::f64::consts::PI * (x as f64 + 0.5 * y as f64) / 8.0 + phase).sin()
        })
    }

    #[test]
    fn identical_inputs_score_one() {
        let x = grating(32, 0.0);
        assert!((stsim(&x, &x).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn same_texture_beats_flat() {
        let a = grating(64, 0.0);
        let b = grating(64, 1.3);
        let flat = Array2::from_elem((64, 64), 0.5);
        let same = stsim(&a, &b).unwrap();
        let vs_flat = stsim(&a, &flat).unwrap();
        assert!(same > vs_flat, "{same} vs {vs_flat}");
    }

    #[test]
    fn symmetric_and_bounded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = Array2::from_shape_fn((32, 32), |_| rng.gen::<f64>());
        let b = grating(32, 0.4);
        let ab = stsim(&a, &b).unwrap();
        let ba = stsim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-6);
        assert!((0.0..=1.0).contains(&ab));
    }
}
