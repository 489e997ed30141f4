//! Plane filters shared by the metric kernels.

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Half-sample symmetric index (`… b a | a b … | … b a`).
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
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
}

/// Mean over a `win × win` window centred on each pixel, symmetric borders.
pub(crate) fn box_mean(x: &Array2<f64>, win: usize) -> Array2<f64> {
    let (h, w) = x.dim();
    let r = (win / 2) as isize;
    let norm = 1.0 / win as f64;
    let mut rows = Array2::zeros((h, w));
    for y in 0..h {
        for xx in 0..w {
            let mut s = 0.0;
            for d in -r..=r {
                s += x[[y, reflect(xx as isize + d, w)]];
            }
            rows[[y, xx]] = s * norm;
        }
    }
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for xx in 0..w {
            let mut s = 0.0;
            for d in -r..=r {
                s += rows[[reflect(y as isize + d, h), xx]];
            }
            out[[y, xx]] = s * norm;
        }
    }
    out
}

/// 2-D correlation with a 3×3 kernel flipped (true convolution), zero padding, same size.
pub(crate) fn conv3_same(x: &Array2<f64>, k: &[[f64; 3]; 3]) -> Array2<f64> {
    let (h, w) = x.dim();
    Array2::from_shape_fn((h, w), |(y, xx)| {
        let mut s = 0.0;
        for (ky, row) in k.iter().enumerate() {
            for (kx, kv) in row.iter().enumerate() {
                // convolution flips the kernel
                let sy = y as isize + 1 - ky as isize;
                let sx = xx as isize + 1 - kx as isize;
                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                    s += kv * x[[sy as usize, sx as usize]];
                }
            }
        }
        s
    })
}

fn fft_axes(data: &mut Array2<Complex64>, inverse: bool) {
    let (h, w) = data.dim();
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    let col_fft = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut buf = vec![Complex64::new(0.0, 0.0); w.max(h)];
    for y in 0..h {
        for x in 0..w {
            buf[x] = data[[y, x]];
        }
        row_fft.process(&mut buf[..w]);
        for x in 0..w {
            data[[y, x]] = buf[x];
        }
    }
    for x in 0..w {
        for y in 0..h {
            buf[y] = data[[y, x]];
        }
        col_fft.process(&mut buf[..h]);
        for y in 0..h {
            data[[y, x]] = buf[y];
        }
    }
}

pub(crate) fn fft2(x: &Array2<f64>) -> Array2<Complex64> {
    let mut data = x.mapv(|v| Complex64::new(v, 0.0));
    fft_axes(&mut data, false);
    data
}

/// Inverse transform, normalised by `1 / (h w)`.
pub(crate) fn ifft2(x: &Array2<Complex64>) -> Array2<Complex64> {
    let mut data = x.clone();
    fft_axes(&mut data, true);
    let n = (data.len()) as f64;
    data.mapv_inplace(|v| v / n);
    data
}

/// Normalised frequency coordinates in FFT order (zero frequency first).
pub(crate) fn frequency_axis(n: usize) -> Vec<f64> {
    let centered: Vec<f64> = if n % 2 == 1 {
        let half = (n - 1) as f64 / 2.0;
        (0..n).map(|i| (i as f64 - half) / (n as f64 - 1.0).max(1.0)).collect()
    } else {
        (0..n).map(|i| (i as f64 - (n / 2) as f64) / n as f64).collect()
    };
    // inverse shift: element 0 becomes the zero frequency
    (0..n).map(|i| centered[(i + n / 2) % n]).collect()
}
