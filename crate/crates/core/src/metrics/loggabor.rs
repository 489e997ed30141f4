//! Log-Gabor filter bank and phase congruency (Kovesi's `phasecong2` formulation).

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;

use super::filters::{fft2, frequency_axis, ifft2};

pub const NSCALE: usize = 4;
pub const NORIENT: usize = 4;
const MIN_WAVELENGTH: f64 = 6.0;
const MULT: f64 = 2.0;
const SIGMA_ON_F: f64 = 0.55;
const D_THETA_ON_SIGMA: f64 = 1.2;
const NOISE_K: f64 = 2.0;
const PC_EPS: f64 = 1e-4;
const LOWPASS_CUTOFF: f64 = 0.45;
const LOWPASS_ORDER: i32 = 15;

/// Frequency-domain filters, indexed `[scale][orientation]`.
pub(crate) struct FilterBank {
    pub filters: Vec<Vec<Array2<f64>>>,
}

impl FilterBank {
    pub fn new(h: usize, w: usize) -> Self {
        let fx = frequency_axis(w);
        let fy = frequency_axis(h);
        let mut radius = Array2::zeros((h, w));
        let mut theta = Array2::zeros((h, w));
        let mut lowpass = Array2::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                let r = (fx[x] * fx[x] + fy[y] * fy[y]).sqrt();
                lowpass[[y, x]] = 1.0 / (1.0 + (r / LOWPASS_CUTOFF).powi(2 * LOWPASS_ORDER));
                radius[[y, x]] = r;
                theta[[y, x]] = (-fy[y]).atan2(fx[x]);
            }
        }
        radius[[0, 0]] = 1.0;
        let log_gabor: Vec<Array2<f64>> = (0..NSCALE)
            .map(|s| {
                let fo = 1.0 / (MIN_WAVELENGTH * MULT.powi(s as i32));
                let denom = 2.0 * SIGMA_ON_F.ln().powi(2);
                let mut g = Array2::from_shape_fn((h, w), |(y, x)| {
                    (-(radius[[y, x]] / fo).ln().powi(2) / denom).exp() * lowpass[[y, x]]
                });
                g[[0, 0]] = 0.0;
                g
            })
            .collect();
        let theta_sigma = PI / NORIENT as f64 / D_THETA_ON_SIGMA;
        let spreads: Vec<Array2<f64>> = (0..NORIENT)
            .map(|o| {
                let angle = o as f64 * PI / NORIENT as f64;
                theta.mapv(|t: f64| {
                    let ds = t.sin() * angle.cos() - t.cos() * angle.sin();
                    let dc = t.cos() * angle.cos() + t.sin() * angle.sin();
                    let dtheta = ds.atan2(dc).abs();
                    (-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma)).exp()
                })
            })
            .collect();
        let filters = log_gabor
            .iter()
            .map(|g| spreads.iter().map(|sp| g * sp).collect())
            .collect();
        Self { filters }
    }

    /// Complex responses `EO[scale][orientation]` of an image.
    pub fn responses(&self, img: &Array2<f64>) -> Vec<Vec<Array2<Complex64>>> {
        let spectrum = fft2(img);
        self.filters
            .iter()
            .map(|per_orient| {
                per_orient
                    .iter()
                    .map(|f| {
                        let prod = ndarray::Zip::from(&spectrum).and(f).map_collect(|s, g| s * g);
                        ifft2(&prod)
                    })
                    .collect()
            })
            .collect()
    }
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = values[mid];
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Phase congruency map in `[0, 1]`.
pub(crate) fn phase_congruency(bank: &FilterBank, img: &Array2<f64>) -> Array2<f64> {
    let (h, w) = img.dim();
    let eo = bank.responses(img);
    let sqrt_n = ((h * w) as f64).sqrt();
    let mut energy_all = Array2::<f64>::zeros((h, w));
    let mut an_all = Array2::<f64>::zeros((h, w));
    for o in 0..NORIENT {
        let mut sum_e = Array2::<f64>::zeros((h, w));
        let mut sum_o = Array2::<f64>::zeros((h, w));
        let mut sum_an = Array2::<f64>::zeros((h, w));
        let mut ifft_filters = Vec::with_capacity(NSCALE);
        for s in 0..NSCALE {
            let filt = &bank.filters[s][o];
            let spatial = ifft2(&filt.mapv(|v| Complex64::new(v, 0.0))).mapv(|c| c.re * sqrt_n);
            ifft_filters.push(spatial);
            ndarray::Zip::from(&mut sum_e)
                .and(&mut sum_o)
                .and(&mut sum_an)
                .and(&eo[s][o])
                .for_each(|e, od, an, c| {
                    *e += c.re;
                    *od += c.im;
                    *an += c.norm();
                });
        }
        let em_n: f64 = bank.filters[0][o].iter().map(|v| v * v).sum();
        let mut energy = Array2::<f64>::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                let xe = (sum_e[[y, x]].powi(2) + sum_o[[y, x]].powi(2)).sqrt() + PC_EPS;
                let (me, mo) = (sum_e[[y, x]] / xe, sum_o[[y, x]] / xe);
                let mut acc = 0.0;
                for s in 0..NSCALE {
                    let c = eo[s][o][[y, x]];
                    acc += c.re * me + c.im * mo - (c.re * mo - c.im * me).abs();
                }
                energy[[y, x]] = acc;
            }
        }
        let mut e2: Vec<f64> = eo[0][o].iter().map(|c| c.norm_sqr()).collect();
        let mean_e2n = -median(&mut e2) / 0.5f64.ln();
        let noise_power = mean_e2n / em_n;
        let sum_an2: f64 = ifft_filters.iter().map(|f| f.iter().map(|v| v * v).sum::<f64>()).sum();
        let mut sum_aiaj = 0.0;
        for si in 0..NSCALE {
            for sj in si + 1..NSCALE {
                sum_aiaj += ifft_filters[si].iter().zip(ifft_filters[sj].iter()).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
        let tau = (noise_energy2 / 2.0).max(0.0).sqrt();
        let noise_energy = tau * (PI / 2.0).sqrt();
        let noise_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let threshold = (noise_energy + NOISE_K * noise_sigma) / 1.7;
        energy_all += &energy.mapv(|e| (e - threshold).max(0.0));
        an_all += &sum_an;
    }
    ndarray::Zip::from(&energy_all)
        .and(&an_all)
        .map_collect(|e, a| e / (a + PC_EPS))
}
