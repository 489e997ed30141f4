//! Multi-patch local SSIM loss with a uniform window and symmetric border padding.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::luminance;

pub const PATCH_SIZES: [usize; 4] = [3, 5, 7, 9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsimConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for SsimConstants {
    fn default() -> Self {
        Self::for_range(1.0)
    }
}

impl SsimConstants {
    /// `C1 = (0.01 L)²`, `C2 = (0.03 L)²`, `C3 = C2 / 2`.
    pub fn for_range(dynamic_range: f64) -> Self {
        let c1 = (0.01 * dynamic_range).powi(2);
        let c2 = (0.03 * dynamic_range).powi(2);
        Self { c1, c2, c3: c2 / 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.c3 > 0.0) {
            return Err(Error::config(format!("SSIM constants must be positive: {self:?}")));
        }
        Ok(())
    }

    fn merged_contrast_structure(&self) -> bool {
        (self.c3 - self.c2 / 2.0).abs() <= f64::EPSILON * self.c2
    }
}

/// Index map for half-sample symmetric padding (`d c b a | a b c d | d c b a`).
fn symmetric_indices(n: usize, pad: usize) -> Vec<u32> {
    let n = n as i64;
    (-(pad as i64)..n + pad as i64)
        .map(|i| {
            let mut j = i;
            // a second reflection only matters when pad > n
            loop {
                if j < 0 {
                    j = -j - 1;
                } else if j >= n {
                    j = 2 * n - j - 1;
                } else {
                    break j as u32;
                }
            }
        })
        .collect()
}

fn pad_symmetric(x: &Tensor, pad: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let dev = x.device();
    let rows = Tensor::new(symmetric_indices(h, pad), dev)?;
    let cols = Tensor::new(symmetric_indices(w, pad), dev)?;
    Ok(x.index_select(&rows, 2)?.index_select(&cols, 3)?)
}

/// Sum of `k` consecutive slices along `dim`; output is `k − 1` shorter.
fn window_sum(x: &Tensor, dim: usize, k: usize) -> Result<Tensor> {
    let len = x.dim(dim)? + 1 - k;
    let mut acc = x.narrow(dim, 0, len)?;
    for i in 1..k {
        acc = (acc + x.narrow(dim, i, len)?)?;
    }
    Ok(acc)
}

/// Box mean over a `patch × patch` window of a `(n, 1, h, w)` tensor, same-size output.
fn box_mean(x: &Tensor, patch: usize) -> Result<Tensor> {
    let padded = pad_symmetric(x, patch / 2)?;
    let summed = window_sum(&window_sum(&padded, 2, patch)?, 3, patch)?;
    Ok(summed.affine(1.0 / (patch * patch) as f64, 0.0)?)
}

/// Per-pixel SSIM `l · k · t` over `patch × patch` windows, computed channel by channel.
///
/// Inputs are `(n, ch, h, w)` with identical shapes; the output has the same shape.
pub fn local_ssim_map(a: &Tensor, b: &Tensor, patch: usize, k: &SsimConstants) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!(
            "SSIM inputs differ in shape: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    if patch % 2 == 0 || patch == 0 {
        return Err(Error::config(format!("SSIM patch size must be odd, got {patch}")));
    }
    let (n, ch, h, w) = a.dims4()?;
    if patch / 2 >= h.min(w) {
        return Err(Error::shape(format!("{patch}x{patch} patch does not fit a {h}x{w} image")));
    }
    let a = a.reshape((n * ch, 1, h, w))?;
    let b = b.reshape((n * ch, 1, h, w))?;
    // all five local moments through one filtering pass
    let nc = n * ch;
    let stats = Tensor::cat(&[&a, &b, &a.sqr()?, &b.sqr()?, &(&a * &b)?], 0)?;
    let means = box_mean(&stats, patch)?;
    let mu_a = means.narrow(0, 0, nc)?;
    let mu_b = means.narrow(0, nc, nc)?;
    let mu_aa = mu_a.sqr()?;
    let mu_bb = mu_b.sqr()?;
    let mu_ab = (&mu_a * &mu_b)?;
    let var_a = (means.narrow(0, 2 * nc, nc)? - &mu_aa)?;
    let var_b = (means.narrow(0, 3 * nc, nc)? - &mu_bb)?;
    let cov = (means.narrow(0, 4 * nc, nc)? - &mu_ab)?;

    let lum = (mu_ab.affine(2.0, k.c1)? / (mu_aa + mu_bb)?.affine(1.0, k.c1)?)?;
    let cs = if k.merged_contrast_structure() {
        (cov.affine(2.0, k.c2)? / (&var_a + &var_b)?.affine(1.0, k.c2)?)?
    } else {
        let sd_a = var_a.relu()?.affine(1.0, 1e-12)?.sqrt()?;
        let sd_b = var_b.relu()?.affine(1.0, 1e-12)?.sqrt()?;
        let sd_ab = (&sd_a * &sd_b)?;
        let contrast = (sd_ab.affine(2.0, k.c2)? / (&var_a + &var_b)?.affine(1.0, k.c2)?)?;
        let structure = (cov.affine(1.0, k.c3)? / sd_ab.affine(1.0, k.c3)?)?;
        (contrast * structure)?
    };
    Ok((lum * cs)?.reshape((n, ch, h, w))?)
}

fn multi_patch_loss(a: &Tensor, b: &Tensor, k: &SsimConstants) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    for &p in &PATCH_SIZES {
        let term = local_ssim_map(a, b, p, k)?.mean_all()?.affine(-1.0, 1.0)?;
        total = Some(match total {
            None => term,
            Some(t) => (t + term)?,
        });
    }
    Ok(total.expect("non-empty patch set"))
}

/// `Σ_b (1 − mean SSIM_b(a, b))` over patch sizes 3, 5, 7, 9, compared on luminance.
///
/// 3-channel inputs are reduced to Rec.601 luminance first. Range `[0, 8]`; 0 for
/// identical inputs.
pub fn ssim_pair_loss(a: &Tensor, b: &Tensor, k: &SsimConstants) -> Result<Tensor> {
    multi_patch_loss(&luminance(a)?, &luminance(b)?, k)
}

/// Same as [`ssim_pair_loss`] but compares each channel separately and averages.
pub fn ssim_pair_loss_per_channel(a: &Tensor, b: &Tensor, k: &SsimConstants) -> Result<Tensor> {
    multi_patch_loss(a, b, k)
}

/// The three structural-similarity terms of the colorization objective.
#[derive(Debug, Clone)]
pub struct SsimComponents {
    /// MRI vs colorized MRI.
    pub m_chat: Tensor,
    /// Cryosection vs reconstructed MRI.
    pub c_mhat: Tensor,
    /// Cryosection vs pseudo Cryosection; `None` without the second decoder.
    pub c_cprime: Option<Tensor>,
    pub total: Tensor,
}

pub fn total_ssim_loss(
    m: &Tensor,
    c: &Tensor,
    c_hat: &Tensor,
    m_hat: &Tensor,
    c_prime: Option<&Tensor>,
    k: &SsimConstants,
) -> Result<SsimComponents> {
    let m_chat = ssim_pair_loss(m, c_hat, k)?;
    let c_mhat = ssim_pair_loss(c, m_hat, k)?;
    let c_cprime = c_prime.map(|cp| ssim_pair_loss_per_channel(c, cp, k)).transpose()?;
    let mut total = (&m_chat + &c_mhat)?;
    if let Some(t) = &c_cprime {
        total = (total + t)?;
    }
    Ok(SsimComponents {
        m_chat,
        c_mhat,
        c_cprime,
        total,
    })
}

/// Reference per-pixel loop used by tests: explicit patch extraction and the direct
/// three-factor formula, on a single `(h, w)` plane given row-major.
#[doc(hidden)]
pub fn ssim_map_reference(a: &[f64], b: &[f64], h: usize, w: usize, patch: usize, k: &SsimConstants) -> Vec<f64> {
    let r = (patch / 2) as i64;
    let reflect = |i: i64, n: usize| -> usize {
        let n = n as i64;
        let mut j = i;
        loop {
            if j < 0 {
                j = -j - 1;
            } else if j >= n {
                j = 2 * n - j - 1;
            } else {
                return j as usize;
            }
        }
    };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut pa = Vec::new();
            let mut pb = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    let idx = reflect(y + dy, h) * w + reflect(x + dx, w);
                    pa.push(a[idx]);
                    pb.push(b[idx]);
                }
            }
            let n = pa.len() as f64;
            let ma = pa.iter().sum::<f64>() / n;
            let mb = pb.iter().sum::<f64>() / n;
            let va = pa.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / n;
            let vb = pb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
            let cov = pa.iter().zip(&pb).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / n;
            let (sa, sb) = (va.sqrt(), vb.sqrt());
            let l = (2.0 * ma * mb + k.c1) / (ma * ma + mb * mb + k.c1);
            let c = (2.0 * sa * sb + k.c2) / (va + vb + k.c2);
            let s = (cov + k.c3) / (sa * sb + k.c3);
            out.push(l * c * s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use candle_core::{DType, Device};
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::gradcheck::check_gradient;

    fn as_f64(t: &Tensor) -> Result<Vec<f64>> {
        Ok(t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?)
    }

    fn random(shape: (usize, usize, usize, usize), seed: u64) -> Tensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = shape.0 * shape.1 * shape.2 * shape.3;
        let v: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
    }

    #[test]
    fn identical_inputs_give_unit_map() {
        let a = random((2, 1, 12, 12), 1);
        for p in PATCH_SIZES {
            let map = as_f64(&local_ssim_map(&a, &a, p, &SsimConstants::default()).unwrap()).unwrap();
            assert!(map.iter().all(|v| (v - 1.0).abs() < 1e-7));
        }
        let loss = ssim_pair_loss(&a, &a, &SsimConstants::default()).unwrap();
        assert!(loss.to_scalar::<f64>().unwrap().abs() < 1e-6);
    }

    #[test]
    fn black_versus_white_closed_form() {
        let a = Tensor::zeros((1, 1, 10, 10), DType::F64, &Device::Cpu).unwrap();
        let b = Tensor::ones((1, 1, 10, 10), DType::F64, &Device::Cpu).unwrap();
        let k = SsimConstants::default();
        let expected = k.c1 / (1.0 + k.c1);
        let map = as_f64(&local_ssim_map(&a, &b, 5, &k).unwrap()).unwrap();
        assert!(map.iter().all(|v| (v - expected).abs() < 1e-12));
        let loss = ssim_pair_loss(&a, &b, &k).unwrap().to_scalar::<f64>().unwrap();
        assert!((loss - 4.0 * (1.0 - expected)).abs() < 1e-9);
    }

    #[test]
    fn matches_patch_loop_reference() {
        let a = random((1, 1, 16, 16), 2);
        let b = random((1, 1, 16, 16), 3);
        let (va, vb) = (as_f64(&a).unwrap(), as_f64(&b).unwrap());
        for k in [SsimConstants::default(), SsimConstants { c3: 3e-4, ..Default::default() }] {
            for p in PATCH_SIZES {
                let map = as_f64(&local_ssim_map(&a, &b, p, &k).unwrap()).unwrap();
                let reference = ssim_map_reference(&va, &vb, 16, 16, p, &k);
                let err = map.iter().zip(&reference).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(err < 1e-6, "patch {p}: {err}");
            }
        }
    }

    #[test]
    fn symmetric_and_bounded() {
        let a = random((1, 1, 16, 16), 4);
        let b = random((1, 1, 16, 16), 5);
        let k = SsimConstants::default();
        let ab = as_f64(&local_ssim_map(&a, &b, 7, &k).unwrap()).unwrap();
        let ba = as_f64(&local_ssim_map(&b, &a, 7, &k).unwrap()).unwrap();
        assert!(ab.iter().zip(&ba).all(|(x, y)| (x - y).abs() < 1e-7));
        assert!(ab.iter().all(|v| (-1.0..=1.0).contains(v)));
        let loss = ssim_pair_loss(&a, &b, &k).unwrap().to_scalar::<f64>().unwrap();
        assert!(loss > 0.0 && loss <= 8.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let a = random((1, 1, 8, 8), 0);
        let b = random((1, 1, 8, 9), 0);
        let k = SsimConstants::default();
        assert!(matches!(local_ssim_map(&a, &b, 3, &k), Err(Error::Shape(_))));
        assert!(matches!(local_ssim_map(&a, &a, 4, &k), Err(Error::Config(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = random((1, 1, 8, 8), 6);
        let b = random((1, 1, 8, 8), 7);
        let k = SsimConstants::default();
        let r = check_gradient(|x| ssim_pair_loss(x, &b, &k), &a, 1e-4).unwrap();
        assert!(r.rel_error < 1e-4, "relative error {}", r.rel_error);
    }

    #[test]
    fn total_is_sum_of_components() {
        let m = random((2, 1, 16, 16), 8);
        let c = random((2, 3, 16, 16), 9);
        let c_hat = random((2, 3, 16, 16), 10);
        let m_hat = random((2, 1, 16, 16), 11);
        let c_prime = random((2, 3, 16, 16), 12);
        let k = SsimConstants::default();
        let comp = total_ssim_loss(&m, &c, &c_hat, &m_hat, Some(&c_prime), &k).unwrap();
        let parts = ssim_pair_loss(&m, &c_hat, &k).unwrap().to_scalar::<f64>().unwrap()
            + ssim_pair_loss(&c, &m_hat, &k).unwrap().to_scalar::<f64>().unwrap()
            + ssim_pair_loss_per_channel(&c, &c_prime, &k).unwrap().to_scalar::<f64>().unwrap();
        assert!((comp.total.to_scalar::<f64>().unwrap() - parts).abs() < 1e-9);

        let no_pseudo = total_ssim_loss(&m, &c, &c_hat, &m_hat, None, &k).unwrap();
        assert!(no_pseudo.c_cprime.is_none());
        let two = comp.m_chat.to_scalar::<f64>().unwrap() + comp.c_mhat.to_scalar::<f64>().unwrap();
        assert!((no_pseudo.total.to_scalar::<f64>().unwrap() - two).abs() < 1e-12);
    }

    #[test]
    fn identity_stub_gives_zero_total() {
        let c = random((1, 3, 16, 16), 13);
        let m = luminance(&c).unwrap();
        let c_hat = Tensor::cat(&[&m, &m, &m], 1).unwrap();
        let comp = total_ssim_loss(&m, &c, &c_hat, &m, Some(&c), &SsimConstants::default()).unwrap();
        assert!(comp.total.to_scalar::<f64>().unwrap().abs() < 1e-6);
    }
}
