use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Hand-picked tissue-like colors for the first eight classes; class 0 is background.
const BASE_PALETTE: [[f32; 3]; 8] = [
    [0.05, 0.04, 0.06],
    [0.82, 0.64, 0.46],
    [0.72, 0.22, 0.18],
    [0.94, 0.89, 0.70],
    [0.52, 0.28, 0.36],
    [0.86, 0.52, 0.28],
    [0.38, 0.16, 0.12],
    [0.62, 0.70, 0.52],
];

/// Parameters of the procedural phantom generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    /// Side length in pixels (square, power of two).
    pub image_size: usize,
    /// Segmentation classes including background.
    pub num_classes: usize,
    /// Inclusive min/max number of organs painted per slice.
    pub organ_count_range: [usize; 2],
    pub palette: Vec<[f32; 3]>,
    pub mri_intensity: Vec<f32>,
    pub noise_sigma: f32,
    /// Maximum displacement (pixels) of the warp applied to the MRI.
    pub deformation_amplitude: f32,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self::new(256, 8, 0)
    }
}

impl PhantomSpec {
    /// Spec with the default palette, intensity table, noise 0.02 and amplitude 4.
    pub fn new(image_size: usize, num_classes: usize, seed: u64) -> Self {
        Self {
            image_size,
            num_classes,
            organ_count_range: [4, 9],
            palette: default_palette(num_classes),
            mri_intensity: default_intensities(num_classes),
            noise_sigma: 0.02,
            deformation_amplitude: 4.0,
            seed,
        }
    }

    /// 256 px slices with 54 labelled structures plus background.
    pub fn paper_scale(seed: u64) -> Self {
        let mut spec = Self::new(256, 55, seed);
        spec.organ_count_range = [12, 30];
        spec
    }

    pub fn with_noise(mut self, sigma: f32) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_amplitude(mut self, amplitude: f32) -> Self {
        self.deformation_amplitude = amplitude;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.num_classes;
        if !self.image_size.is_power_of_two() || self.image_size < 4 {
            return Err(Error::config(format!(
                "image_size must be a power of two >= 4, got {}",
                self.image_size
            )));
        }
        if l == 0 || l > 256 {
            return Err(Error::config(format!(
                "num_classes must be in 1..=256, got {l}"
            )));
        }
        if self.palette.len() != l {
            return Err(Error::config(format!(
                "palette has {} entries but num_classes is {l}",
                self.palette.len()
            )));
        }
        if self.mri_intensity.len() != l {
            return Err(Error::config(format!(
                "mri_intensity has {} entries but num_classes is {l}",
                self.mri_intensity.len()
            )));
        }
        let in_unit = |v: f32| (0.0..=1.0).contains(&v);
        if !self.palette.iter().flatten().copied().all(in_unit)
            || !self.mri_intensity.iter().copied().all(in_unit)
        {
            return Err(Error::config("palette and mri_intensity values must lie in [0, 1]"));
        }
        let quantized: Vec<[u8; 3]> = self.palette.iter().map(|c| c.map(to_u8)).collect();
        for i in 0..l {
            for j in 0..i {
                if quantized[i] == quantized[j] {
                    return Err(Error::config(format!(
                        "palette colors of classes {j} and {i} coincide"
                    )));
                }
            }
        }
        if !(0.0..=0.2).contains(&self.noise_sigma) {
            return Err(Error::config(format!(
                "noise_sigma must lie in [0, 0.2], got {}",
                self.noise_sigma
            )));
        }
        if !(self.deformation_amplitude >= 0.0) || !self.deformation_amplitude.is_finite() {
            return Err(Error::config(format!(
                "deformation_amplitude must be finite and >= 0, got {}",
                self.deformation_amplitude
            )));
        }
        let [lo, hi] = self.organ_count_range;
        if lo > hi {
            return Err(Error::config(format!(
                "organ_count_range min {lo} exceeds max {hi}"
            )));
        }
        Ok(())
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn default_palette(l: usize) -> Vec<[f32; 3]> {
    (0..l)
        .map(|k| {
            if k < BASE_PALETTE.len() {
                BASE_PALETTE[k]
            } else {
                let hue = (k as f64 * GOLDEN).fract();
                let value = 0.45 + 0.45 * ((k as f64 * 0.37).fract());
                hsv_to_rgb(hue, 0.65, value)
            }
        })
        .collect()
}

fn default_intensities(l: usize) -> Vec<f32> {
    (0..l)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                (0.2 + 0.75 * (k as f64 * GOLDEN).fract()) as f32
            }
        })
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f32; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    let (r, g, b) = match (i as i64).rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r as f32, g as f32, b as f32]
}

/// One aligned-but-deformed slice triple.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletSample {
    /// MRI-like image, shape `(1, h, w)`.
    pub m: Array3<f32>,
    /// Cryosection-like image, shape `(3, h, w)`.
    pub c: Array3<f32>,
    /// Label map with ids in `0..num_classes`.
    pub labels: Array2<u8>,
    pub num_classes: usize,
    /// Displacement `(dx, dy)` per pixel, shape `(2, h, w)`.
    pub deformation: Array3<f32>,
}

impl TripletSample {
    pub fn size(&self) -> (usize, usize) {
        self.labels.dim()
    }

    /// One-hot segmentation map, shape `(l, h, w)`.
    pub fn one_hot(&self) -> Array3<f32> {
        let (h, w) = self.labels.dim();
        let mut s = Array3::zeros((self.num_classes, h, w));
        for ((y, x), &k) in self.labels.indexed_iter() {
            s[[k as usize, y, x]] = 1.0;
        }
        s
    }
}

/// Piecewise-constant MRI intensity rendering of a label map.
pub fn render_intensity(spec: &PhantomSpec, labels: &Array2<u8>) -> Array3<f32> {
    let (h, w) = labels.dim();
    Array3::from_shape_fn((1, h, w), |(_, y, x)| spec.mri_intensity[labels[[y, x]] as usize])
}

struct Blob {
    class: u8,
    cx: f64,
    cy: f64,
    radius: f64,
    aspect: f64,
    rotation: f64,
    harmonics: [(f64, f64); 3],
}

impl Blob {
    fn random(rng: &mut ChaCha8Rng, n: f64, class: u8, radius: (f64, f64), spread: f64) -> Self {
        let lo = 0.5 - spread;
        let hi = 0.5 + spread;
        let mut harmonics = [(0.0, 0.0); 3];
        for h in &mut harmonics {
            *h = (rng.gen_range(0.0..0.12), rng.gen_range(0.0..2.0 * PI));
        }
        Self {
            class,
            cx: rng.gen_range(lo..hi) * n,
            cy: rng.gen_range(lo..hi) * n,
            radius: rng.gen_range(radius.0..radius.1) * n,
            aspect: rng.gen_range(0.65..1.35),
            rotation: rng.gen_range(0.0..PI),
            harmonics,
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.rotation.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (c * dx + s * dy) / self.aspect;
        let v = (-s * dx + c * dy) * self.aspect;
        let rho = u.hypot(v);
        let phi = v.atan2(u);
        let boundary = self.radius
            * (1.0
                + self
                    .harmonics
                    .iter()
                    .enumerate()
                    .map(|(k, (a, p))| a * ((k as f64 + 2.0) * phi + p).sin())
                    .sum::<f64>());
        rho <= boundary
    }
}

/// Sum of sinusoids normalised so its peak magnitude over the grid is 1.
struct SmoothField {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl SmoothField {
    fn random(rng: &mut ChaCha8Rng, terms: usize, max_cycles: f64) -> Self {
        let waves = (0..terms)
            .map(|_| {
                (
                    rng.gen_range(-max_cycles..max_cycles),
                    rng.gen_range(-max_cycles..max_cycles),
                    rng.gen_range(0.0..2.0 * PI),
                    rng.gen_range(0.3..1.0),
                )
            })
            .collect();
        Self { waves }
    }

    fn raw(&self, x: f64, y: f64, n: f64) -> f64 {
        self.waves
            .iter()
            .map(|&(fx, fy, phase, weight)| weight * (2.0 * PI * (fx * x + fy * y) / n + phase).sin())
            .sum()
    }

    fn sample(&self, n: usize) -> Array2<f64> {
        let nf = n as f64;
        let mut field = Array2::from_shape_fn((n, n), |(y, x)| self.raw(x as f64, y as f64, nf));
        let peak = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            field.mapv_inplace(|v| v / peak);
        }
        field
    }
}

fn bilinear(img: &Array3<f32>, x: f64, y: f64) -> f32 {
    let (_, h, w) = img.dim();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let v = |yy: usize, xx: usize| f64::from(img[[0, yy, xx]]);
    let top = v(y0, x0) * (1.0 - fx) + v(y0, x1) * fx;
    let bottom = v(y1, x0) * (1.0 - fx) + v(y1, x1) * fx;
    (top * (1.0 - fy) + bottom * fy) as f32
}

/// Deterministically generates sample `index` of the phantom family described by `spec`.
pub fn generate_phantom(spec: &PhantomSpec, index: u64) -> Result<TripletSample> {
    spec.validate()?;
    let n = spec.image_size;
    let nf = n as f64;
    let l = spec.num_classes;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);

    let mut labels = Array2::<u8>::zeros((n, n));
    if l > 1 {
        let [lo, hi] = spec.organ_count_range;
        let count = rng.gen_range(lo..=hi);
        let mut blobs = vec![Blob::random(&mut rng, nf, 1, (0.36, 0.44), 0.03)];
        for _ in 0..count {
            let class = rng.gen_range(1..l) as u8;
            blobs.push(Blob::random(&mut rng, nf, class, (0.06, 0.18), 0.22));
        }
        for ((y, x), label) in labels.indexed_iter_mut() {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            for blob in &blobs {
                if blob.contains(px, py) {
                    *label = blob.class;
                }
            }
        }
    }

    let texture = SmoothField::random(&mut rng, 4, 10.0).sample(n);
    let c = Array3::from_shape_fn((3, n, n), |(ch, y, x)| {
        let base = f64::from(spec.palette[labels[[y, x]] as usize][ch]);
        (base * (1.0 + 0.06 * texture[[y, x]])).clamp(0.0, 1.0) as f32
    });

    let field_x = SmoothField::random(&mut rng, 3, 2.5).sample(n);
    let field_y = SmoothField::random(&mut rng, 3, 2.5).sample(n);
    let amp = f64::from(spec.deformation_amplitude);
    let mut deformation = Array3::<f32>::zeros((2, n, n));
    for y in 0..n {
        for x in 0..n {
            deformation[[0, y, x]] = (amp * field_x[[y, x]]) as f32;
            deformation[[1, y, x]] = (amp * field_y[[y, x]]) as f32;
        }
    }

    let render = render_intensity(spec, &labels);
    let normal = Normal::new(0.0f64, f64::from(spec.noise_sigma))
        .map_err(|e| Error::config(format!("invalid noise_sigma: {e}")))?;
    let mut m = Array3::<f32>::zeros((1, n, n));
    for y in 0..n {
        for x in 0..n {
            let warped = if amp == 0.0 {
                render[[0, y, x]]
            } else {
                bilinear(
                    &render,
                    x as f64 + f64::from(deformation[[0, y, x]]),
                    y as f64 + f64::from(deformation[[1, y, x]]),
                )
            };
            let noise = normal.sample(&mut rng);
            m[[0, y, x]] = if spec.noise_sigma == 0.0 {
                warped
            } else {
                (f64::from(warped) + noise).clamp(0.0, 1.0) as f32
            };
        }
    }

    Ok(TripletSample {
        m,
        c,
        labels,
        num_classes: l,
        deformation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> PhantomSpec {
        PhantomSpec::new(64, 4, seed)
    }

    #[test]
    fn default_specs_validate() {
        PhantomSpec::default().validate().unwrap();
        PhantomSpec::paper_scale(1).validate().unwrap();
        small(0).validate().unwrap();
    }

    #[test]
    fn palette_size_mismatch_is_config_error() {
        let mut spec = small(0);
        spec.palette.pop();
        assert!(matches!(generate_phantom(&spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn duplicate_palette_colors_rejected() {
        let mut spec = small(0);
        spec.palette[2] = spec.palette[1];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn noise_bound_enforced() {
        assert!(small(0).with_noise(0.25).validate().is_err());
        assert!(small(0).with_amplitude(-1.0).validate().is_err());
    }

    #[test]
    fn single_class_without_perturbation_is_constant() {
        let mut spec = PhantomSpec::new(32, 1, 3).with_noise(0.0).with_amplitude(0.0);
        spec.mri_intensity = vec![0.5];
        let t = generate_phantom(&spec, 0).unwrap();
        assert!(t.m.iter().all(|&v| v == 0.5));
        let s = t.one_hot();
        assert!(s.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_perturbation_reproduces_intensity_render() {
        let spec = small(5).with_noise(0.0).with_amplitude(0.0);
        let t = generate_phantom(&spec, 2).unwrap();
        assert_eq!(t.m, render_intensity(&spec, &t.labels));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = PhantomSpec {
            deformation_amplitude: 3.0,
            noise_sigma: 0.02,
            ..small(7)
        };
        let a = generate_phantom(&spec, 0).unwrap();
        let b = generate_phantom(&spec, 0).unwrap();
        assert_eq!(a, b);
        let c = generate_phantom(&spec, 1).unwrap();
        assert_ne!(a.labels, c.labels);
    }

    #[test]
    fn one_hot_sums_to_one() {
        let t = generate_phantom(&small(11), 4).unwrap();
        let s = t.one_hot();
        let (l, h, w) = s.dim();
        for y in 0..h {
            for x in 0..w {
                let sum: f32 = (0..l).map(|k| s[[k, y, x]]).sum();
                assert_eq!(sum, 1.0);
            }
        }
        assert!(s.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn registration_gap_grows_with_amplitude() {
        let gaps: Vec<f64> = [0.0f32, 2.0, 4.0, 8.0]
            .iter()
            .map(|&amp| {
                let spec = small(21).with_noise(0.0).with_amplitude(amp);
                let t = generate_phantom(&spec, 3).unwrap();
                let render = render_intensity(&spec, &t.labels);
                t.m.iter()
                    .zip(render.iter())
                    .map(|(a, b)| f64::from((a - b).abs()))
                    .sum::<f64>()
                    / t.m.len() as f64
            })
            .collect();
        assert_eq!(gaps[0], 0.0);
        for pair in gaps.windows(2) {
            assert!(pair[1] > pair[0], "gaps not increasing: {gaps:?}");
        }
    }

    #[test]
    fn deformation_respects_amplitude() {
        let spec = small(2).with_amplitude(3.0);
        let t = generate_phantom(&spec, 0).unwrap();
        let peak = t.deformation.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!(peak <= 3.0 + 1e-5 && peak > 1.0);
    }

    #[test]
    fn images_stay_in_unit_interval() {
        let spec = PhantomSpec::new(64, 8, 9).with_noise(0.2);
        let t = generate_phantom(&spec, 0).unwrap();
        assert!(t.m.iter().chain(t.c.iter()).all(|v| (0.0..=1.0).contains(v)));
        assert!(t.labels.iter().all(|&k| (k as usize) < spec.num_classes));
    }
}
