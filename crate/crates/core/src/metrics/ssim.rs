use ndarray::Array2;

use super::filters::box_mean;
use crate::data::downsample_plane;
use crate::error::{Error, Result};

pub const METRIC_WINDOW: usize = 7;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// Smallest side accepted by [`ms_ssim`]; also the coarsest scale kept.
pub const MS_SSIM_MIN_SIDE: usize = 8;

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check_pair(a: &Array2<f64>, b: &Array2<f64>, min_side: usize, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Metric(format!("{what}: shapes {:?} and {:?} differ", a.dim(), b.dim())));
    }
    let (h, w) = a.dim();
    if h < min_side || w < min_side {
        return Err(Error::Metric(format!(
            "{what} needs images of at least {min_side}x{min_side}, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Luminance and contrast-structure maps over a `win × win` window.
fn ssim_maps(a: &Array2<f64>, b: &Array2<f64>, win: usize) -> (Array2<f64>, Array2<f64>) {
    let mu_a = box_mean(a, win);
    let mu_b = box_mean(b, win);
    let aa = box_mean(&(a * a), win);
    let bb = box_mean(&(b * b), win);
    let ab = box_mean(&(a * b), win);
    let mut lum = Array2::zeros(a.dim());
    let mut cs = Array2::zeros(a.dim());
    for ((idx, l), c) in lum.indexed_iter_mut().zip(cs.iter_mut()) {
        let (ma, mb) = (mu_a[idx], mu_b[idx]);
        let va = aa[idx] - ma * ma;
        let vb = bb[idx] - mb * mb;
        let cov = ab[idx] - ma * mb;
        *l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        *c = (2.0 * cov + C2) / (va + vb + C2);
    }
    (lum, cs)
}

/// Mean 7×7 single-scale SSIM of two planes in `[0, 1]`.
pub fn ssim_metric(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    check_pair(a, b, METRIC_WINDOW, "SSIM")?;
    let (l, cs) = ssim_maps(a, b, METRIC_WINDOW);
    Ok((&l * &cs).mean().expect("non-empty"))
}

/// Number of scales used for an `h × w` input: at most 5, each side divisible by the
/// total pooling factor and the coarsest scale at least [`MS_SSIM_MIN_SIDE`] pixels.
pub fn ms_ssim_scales(h: usize, w: usize) -> usize {
    let mut scales = 1;
    while scales < MS_SSIM_WEIGHTS.len() {
        let f = 1 << scales;
        if h % f != 0 || w % f != 0 || h / f < MS_SSIM_MIN_SIDE || w / f < MS_SSIM_MIN_SIDE {
            break;
        }
        scales += 1;
    }
    scales
}

/// Multi-scale SSIM with 2×2 mean-pool downsampling between scales.
///
/// Contrast-structure means at the finer scales and the full SSIM mean at the coarsest
/// are clamped at 0 and combined with the standard exponents, renormalised when fewer
/// than five scales fit.
pub fn ms_ssim(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    check_pair(a, b, MS_SSIM_MIN_SIDE, "MS-SSIM")?;
    let (h, w) = a.dim();
    let scales = ms_ssim_scales(h, w);
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let norm: f64 = weights.iter().sum();
    let win = METRIC_WINDOW.min(h >> (scales - 1)).min(w >> (scales - 1));
    let win = if win % 2 == 0 { win - 1 } else { win };
    let (mut a, mut b) = (a.clone(), b.clone());
    let mut score = 1.0;
    for (j, wj) in weights.iter().enumerate() {
        let (l, cs) = ssim_maps(&a, &b, win);
        let value = if j + 1 == scales {
            (&l * &cs).mean().expect("non-empty")
        } else {
            cs.mean().expect("non-empty")
        };
        score *= value.max(0.0).powf(wj / norm);
        if j + 1 < scales {
            a = downsample_plane(&a, 2)?;
            b = downsample_plane(&b, 2)?;
        }
    }
    Ok(score)
}

/// Brute-force SSIM map used as a test oracle.
#[cfg(test)]
pub(crate) fn ssim_metric_reference(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    use super::filters::reflect;
    let (h, w) = a.dim();
    let r = (METRIC_WINDOW / 2) as isize;
    let mut total = 0.0;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut pa = Vec::new();
            let mut pb = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    pa.push(a[[reflect(y + dy, h), reflect(x + dx, w)]]);
                    pb.push(b[[reflect(y + dy, h), reflect(x + dx, w)]]);
                }
            }
            let n = pa.len() as f64;
            let ma = pa.iter().sum::<f64>() / n;
            let mb = pb.iter().sum::<f64>() / n;
            let va = pa.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / n;
            let vb = pb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
            let cov = pa.iter().zip(&pb).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / n;
            total += (2.0 * ma * mb + C1) * (2.0 * cov + C2) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
        }
    }
    total / (h * w) as f64
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    use super::*;

    fn random(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.gen())
    }

    fn smooth(h: usize, w: usize) -> Array2<f64> {
        Array2::from_shape_fn((h, w), |(y, x)| {
            0.5 + 0.3 * ((x as f64) / 5.0).sin() * ((y as f64) / 7.0).cos()
        })
    }

    fn noisy(x: &Array2<f64>, sigma: f64, seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sigma).unwrap();
        x.mapv(|v| (v + n.sample(&mut rng)).clamp(0.0, 1.0))
    }

    fn blur(x: &Array2<f64>, radius: usize) -> Array2<f64> {
        box_mean(x, 2 * radius + 1)
    }

    #[test]
    fn identical_inputs() {
        let a = random(32, 32, 0);
        assert!((ssim_metric(&a, &a).unwrap() - 1.0).abs() < 1e-7);
        assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matches_brute_force() {
        let a = random(16, 16, 1);
        let b = random(16, 16, 2);
        assert!((ssim_metric(&a, &b).unwrap() - ssim_metric_reference(&a, &b)).abs() < 1e-6);
    }

    #[test]
    fn decreases_with_noise() {
        let x = smooth(64, 64);
        let scores: Vec<f64> = [0.01, 0.05, 0.1]
            .iter()
            .map(|&s| ssim_metric(&x, &noisy(&x, s, 9)).unwrap())
            .collect();
        assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
    }

    #[test]
    fn ms_ssim_decreases_with_blur() {
        let x = random(64, 64, 3);
        let scores: Vec<f64> = [1, 2, 4].iter().map(|&r| ms_ssim(&x, &blur(&x, r)).unwrap()).collect();
        assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
    }

    #[test]
    fn ms_ssim_range_on_random_pairs() {
        for seed in 0..1000u64 {
            let a = random(16, 16, 2 * seed);
            let b = random(16, 16, 2 * seed + 1);
            let v = ms_ssim(&a, &b).unwrap();
            assert!((0.0..=1.0).contains(&v), "seed {seed}: {v}");
        }
    }

    #[test]
    fn scale_selection_and_size_errors() {
        assert_eq!(ms_ssim_scales(256, 256), 5);
        assert_eq!(ms_ssim_scales(64, 64), 4);
        assert_eq!(ms_ssim_scales(16, 16), 2);
        assert_eq!(ms_ssim_scales(8, 8), 1);
        let tiny = random(6, 6, 0);
        let err = ms_ssim(&tiny, &tiny).unwrap_err().to_string();
        assert!(err.contains("8x8"), "{err}");
        assert!(ssim_metric(&random(8, 8, 0), &random(8, 9, 0)).is_err());
    }
}
