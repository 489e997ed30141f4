use ndarray::Array2;

use super::filters::conv3_same;
use super::loggabor::{phase_congruency, FilterBank};
use crate::error::{Error, Result};

pub const FSIM_MIN_SIDE: usize = 32;
const T1: f64 = 0.85;
const T2: f64 = 160.0;
const SCHARR_X: [[f64; 3]; 3] = [
    [3.0 / 16.0, 0.0, -3.0 / 16.0],
    [10.0 / 16.0, 0.0, -10.0 / 16.0],
    [3.0 / 16.0, 0.0, -3.0 / 16.0],
];
const SCHARR_Y: [[f64; 3]; 3] = [
    [3.0 / 16.0, 10.0 / 16.0, 3.0 / 16.0],
    [0.0, 0.0, 0.0],
    [-3.0 / 16.0, -10.0 / 16.0, -3.0 / 16.0],
];

pub(crate) fn check_planes(a: &Array2<f64>, b: &Array2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Metric(format!("{what}: shapes {:?} and {:?} differ", a.dim(), b.dim())));
    }
    let (h, w) = a.dim();
    if h < FSIM_MIN_SIDE || w < FSIM_MIN_SIDE {
        return Err(Error::Metric(format!(
            "{what} needs at least {FSIM_MIN_SIDE}x{FSIM_MIN_SIDE} inputs, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Integer-factor pre-smoothing and decimation for inputs larger than 256 px.
fn decimate(x: &Array2<f64>) -> Array2<f64> {
    let (h, w) = x.dim();
    let f = ((h.min(w) as f64) / 256.0).round().max(1.0) as usize;
    if f == 1 {
        return x.clone();
    }
    // 'same'-size f×f average with zero padding, then keep every f-th sample
    let offset = (f - 1) / 2;
    let averaged = Array2::from_shape_fn((h, w), |(y, xx)| {
        let mut s = 0.0;
        for dy in 0..f {
            for dx in 0..f {
                let sy = y as isize + dy as isize - offset as isize;
                let sx = xx as isize + dx as isize - offset as isize;
                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                    s += x[[sy as usize, sx as usize]];
                }
            }
        }
        s / (f * f) as f64
    });
    Array2::from_shape_fn((h.div_ceil(f), w.div_ceil(f)), |(y, xx)| averaged[[y * f, xx * f]])
}

fn gradient_magnitude(x: &Array2<f64>) -> Array2<f64> {
    let gx = conv3_same(x, &SCHARR_X);
    let gy = conv3_same(x, &SCHARR_Y);
    ndarray::Zip::from(&gx).and(&gy).map_collect(|a, b| (a * a + b * b).sqrt())
}

/// Feature similarity of two luminance planes in `[0, 1]` (rescaled to 0–255 internally,
/// the range the gradient constant `T2` is calibrated for).
pub fn fsim(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    check_planes(a, b, "FSIM")?;
    let a = decimate(&a.mapv(|v| v * 255.0));
    let b = decimate(&b.mapv(|v| v * 255.0));
    let (h, w) = a.dim();
    let bank = FilterBank::new(h, w);
    let pc_a = phase_congruency(&bank, &a);
    let pc_b = phase_congruency(&bank, &b);
    let g_a = gradient_magnitude(&a);
    let g_b = gradient_magnitude(&b);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut plain = 0.0;
    for (((&p1, &p2), &g1), &g2) in pc_a.iter().zip(pc_b.iter()).zip(g_a.iter()).zip(g_b.iter()) {
        let s_pc = (2.0 * p1 * p2 + T1) / (p1 * p1 + p2 * p2 + T1);
        let s_g = (2.0 * g1 * g2 + T2) / (g1 * g1 + g2 * g2 + T2);
        let pcm = p1.max(p2);
        num += s_pc * s_g * pcm;
        den += pcm;
        plain += s_pc * s_g;
    }
    if den > 0.0 {
        Ok(num / den)
    } else {
        // no phase-congruent structure in either image: fall back to the unweighted mean
        Ok(plain / (h * w) as f64)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    use super::*;

    /// Blobs and edges with a bit of shading.
    pub(crate) fn phantom(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(y, x)| {
            let (fy, fx) = (y as f64 / n as f64, x as f64 / n as f64);
            let mut v = 0.2 + 0.1 * fx;
            if (fx - 0.4).powi(2) + (fy - 0.5).powi(2) < 0.06 {
                v = 0.7;
            }
            if (fx - 0.7).abs() < 0.1 && (fy - 0.3).abs() < 0.15 {
                v = 0.45;
            }
            v
        })
    }

    fn noisy(x: &Array2<f64>, sigma: f64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = Normal::new(0.0, sigma).unwrap();
        x.mapv(|v| (v + n.sample(&mut rng)).clamp(0.0, 1.0))
    }

    #[test]
    fn identical_inputs_score_one() {
        let x = phantom(64);
        assert!((fsim(&x, &x).unwrap() - 1.0).abs() < 1e-4);
        let flat = Array2::from_elem((32, 32), 0.5);
        assert!((fsim(&flat, &flat).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn structural_change_scores_below_mild_noise() {
        let x = phantom(64);
        let moved = x.t().to_owned();
        let moved_score = fsim(&x, &moved).unwrap();
        let noise = fsim(&x, &noisy(&x, 0.02)).unwrap();
        assert!(moved_score < noise, "transposed {moved_score} vs noisy {noise}");
        assert!((0.0..=1.0).contains(&moved_score) && (0.0..=1.0).contains(&noise));
    }

    #[test]
    fn contrast_polarity_is_ignored() {
        // phase congruency and gradient magnitude are both unchanged by x -> 1 - x,
        // apart from the zero-padded border of the gradient filter
        let x = phantom(64);
        let inverted = x.mapv(|v| 1.0 - v);
        assert!(fsim(&x, &inverted).unwrap() > 0.95);
    }

    #[test]
    fn shared_intensity_offset() {
        // T2 is an absolute constant on the 0-255 scale, so only a shared offset (not a
        // gain) leaves the score unchanged; the residue comes from the zero-padded border
        let x = phantom(64);
        let y = noisy(&x, 0.03);
        let base = fsim(&x, &y).unwrap();
        for off in [0.05, 0.1, -0.1] {
            let shifted = fsim(&x.mapv(|v| v + off), &y.mapv(|v| v + off)).unwrap();
            assert!((shifted - base).abs() < 1e-3, "offset {off}: {base} -> {shifted}");
        }
    }

    #[test]
    fn too_small_rejected() {
        let x = Array2::zeros((16, 16));
        assert!(fsim(&x, &x).is_err());
    }
}
