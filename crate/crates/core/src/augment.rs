//! Image perturbations: Gaussian blur, Gaussian noise and the random
//! geometric augmentations, plus the per-variant training pipeline.
//!
//! Randomness always flows through an [`RngStream`], so a given
//! `(seed, stream_id)` reproduces the same output on any thread.

use std::fmt;
use std::sync::Arc;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{quantize, reflect_index, resize_region, ImageBuffer};

/// A reproducible random stream keyed by `(seed, stream_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream for a sub-task, independent of the parent's draws.
    pub fn derive(&self, key: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: mix64(self.stream_id ^ mix64(key.wrapping_add(0x632b_e59b_d9b4_e019))),
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentParams {
    pub blur_sigma_min: f64,
    pub blur_sigma_max: f64,
    pub noise_sigma_min: f64,
    pub noise_sigma_max: f64,
    pub apply_probability: f64,
    /// Rotations are drawn from `[-rotation_degrees, rotation_degrees]`.
    pub rotation_degrees: f64,
    pub crop_scale_min: f64,
    pub crop_scale_max: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            blur_sigma_min: 1.0,
            blur_sigma_max: 256.0,
            noise_sigma_min: 1.0,
            noise_sigma_max: 50.0,
            apply_probability: 0.5,
            rotation_degrees: 45.0,
            crop_scale_min: 0.8,
            crop_scale_max: 1.0,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.blur_sigma_min > 0.0
            && self.blur_sigma_max >= self.blur_sigma_min
            && self.noise_sigma_min >= 0.0
            && self.noise_sigma_max > 0.0
            && self.noise_sigma_max >= self.noise_sigma_min
            && (0.0..=1.0).contains(&self.apply_probability)
            && self.rotation_degrees >= 0.0
            && self.crop_scale_min > 0.0
            && self.crop_scale_max <= 1.0
            && self.crop_scale_min <= self.crop_scale_max;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid augmentation parameters: {self:?}")))
        }
    }
}

/// Truncated Gaussian weights with radius `ceil(3 sigma)`, renormalized.
/// Tail entries that underflow to zero are trimmed, so tiny sigmas give `[1]`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("blur sigma must be > 0, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let mut weights: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let trim = weights.iter().take_while(|&&w| w == 0.0).count();
    weights.drain(..trim);
    weights.truncate(weights.len() - trim);
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(weights)
}

/// Kernels longer than this are applied in the frequency domain.
const SPECTRAL_MIN_TAPS: usize = 64;

/// 1-D reflect-border convolution along rows.
enum AxisFilter {
    /// For each output position, the start of the contiguous source window
    /// and its reflect-folded weights.
    Taps(Vec<(usize, Vec<f64>)>),
    /// Circular convolution of the period-`2n` symmetric extension, which
    /// is exactly the reflect border. `gain` is the (real) kernel spectrum.
    Spectral {
        n: usize,
        gain: Vec<f64>,
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
}

impl AxisFilter {
    fn new(kernel: &[f64], n: usize) -> Self {
        let radius = (kernel.len() / 2) as isize;
        if kernel.len() > SPECTRAL_MIN_TAPS {
            let period = 2 * n;
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(period);
            let inverse = planner.plan_fft_inverse(period);
            let mut spectrum = vec![Complex::new(0.0, 0.0); period];
            for (t, &w) in kernel.iter().enumerate() {
                spectrum[(t as isize - radius).rem_euclid(period as isize) as usize].re += w;
            }
            forward.process(&mut spectrum);
            return AxisFilter::Spectral {
                n,
                gain: spectrum.iter().map(|c| c.re / period as f64).collect(),
                forward,
                inverse,
            };
        }
        let mut dense = vec![0.0f64; n];
        let taps = (0..n as isize)
            .map(|x| {
                dense.iter_mut().for_each(|w| *w = 0.0);
                for (t, &w) in kernel.iter().enumerate() {
                    dense[reflect_index(x + t as isize - radius, n)] += w;
                }
                let start = dense.iter().position(|&w| w != 0.0).unwrap_or(0);
                let end = dense.iter().rposition(|&w| w != 0.0).map_or(start + 1, |e| e + 1);
                (start, dense[start..end].to_vec())
            })
            .collect();
        AxisFilter::Taps(taps)
    }

    fn apply_rows(&self, src: &[f64], width: usize, dst: &mut [f64]) {
        match self {
            AxisFilter::Taps(taps) => {
                for (row_in, row_out) in src.chunks_exact(width).zip(dst.chunks_exact_mut(width)) {
                    for (out, (start, w)) in row_out.iter_mut().zip(taps) {
                        *out = w.iter().zip(&row_in[*start..]).map(|(a, b)| a * b).sum();
                    }
                }
            }
            AxisFilter::Spectral { n, gain, forward, inverse } => {
                // Two real rows ride in one complex transform: the gain is
                // real, so they stay in separate components.
                let mut buf = vec![Complex::new(0.0, 0.0); 2 * n];
                for (pair_in, pair_out) in src.chunks(2 * width).zip(dst.chunks_mut(2 * width)) {
                    let second = pair_in.len() > width;
                    for x in 0..*n {
                        let a = pair_in[x];
                        let b = if second { pair_in[width + x] } else { 0.0 };
                        buf[x] = Complex::new(a, b);
                        buf[2 * n - 1 - x] = Complex::new(a, b);
                    }
                    forward.process(&mut buf);
                    for (c, g) in buf.iter_mut().zip(gain) {
                        *c *= g;
                    }
                    inverse.process(&mut buf);
                    for x in 0..*n {
                        pair_out[x] = buf[x].re;
                        if second {
                            pair_out[width + x] = buf[x].im;
                        }
                    }
                }
            }
        }
    }
}

fn transpose(src: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = src[y * width + x];
        }
    }
    out
}

/// Separable Gaussian blur (horizontal, then vertical) with reflect borders.
/// Accumulates in `f64` and quantizes once at the end.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> Result<ImageBuffer> {
    let kernel = gaussian_kernel(sigma)?;
    let (w, h) = (img.width(), img.height());
    let src = img.to_f64();
    let mut horiz = vec![0.0; w * h];
    AxisFilter::new(&kernel, w).apply_rows(&src, w, &mut horiz);
    let t = transpose(&horiz, w, h);
    let mut vert = vec![0.0; w * h];
    AxisFilter::new(&kernel, h).apply_rows(&t, h, &mut vert);
    Ok(ImageBuffer::from_f64(w, h, &transpose(&vert, h, w)))
}

/// Adds i.i.d. `N(0, sigma^2)` intensity noise per pixel.
pub fn gaussian_noise(img: &ImageBuffer, sigma: f64, rng: &RngStream) -> Result<ImageBuffer> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut r = rng.rng();
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| quantize(f64::from(p) + normal.sample(&mut r)))
        .collect();
    ImageBuffer::new(img.width(), img.height(), pixels)
}

/// Crop window as a fraction of the image: side scale and the position of
/// the top-left corner within the free range, both in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropPlan {
    pub scale: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

/// The resolved coin flips and parameters of one geometric augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeometricPlan {
    pub crop: Option<CropPlan>,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// Counter-clockwise rotation in degrees.
    pub rotation: Option<f64>,
}

impl GeometricPlan {
    pub fn sample(params: &AugmentParams, rng: &mut impl Rng) -> Self {
        let p = params.apply_probability;
        let crop = rng.gen_bool(p).then(|| CropPlan {
            scale: uniform(rng, params.crop_scale_min, params.crop_scale_max),
            offset_x: rng.gen::<f64>(),
            offset_y: rng.gen::<f64>(),
        });
        let flip_horizontal = rng.gen_bool(p);
        let flip_vertical = rng.gen_bool(p);
        let rotation = rng
            .gen_bool(p)
            .then(|| uniform(rng, -params.rotation_degrees, params.rotation_degrees));
        Self {
            crop,
            flip_horizontal,
            flip_vertical,
            rotation,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    /// Applies crop, horizontal flip, vertical flip, rotation in that order.
    pub fn apply(&self, img: &ImageBuffer) -> ImageBuffer {
        let mut out = img.clone();
        if let Some(c) = self.crop {
            out = crop_resize(&out, c);
        }
        if self.flip_horizontal {
            out = flip_horizontal(&out);
        }
        if self.flip_vertical {
            out = flip_vertical(&out);
        }
        if let Some(deg) = self.rotation {
            out = rotate(&out, deg);
        }
        out
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

pub fn geometric_augment(img: &ImageBuffer, params: &AugmentParams, rng: &RngStream) -> ImageBuffer {
    GeometricPlan::sample(params, &mut rng.rng()).apply(img)
}

fn crop_resize(img: &ImageBuffer, c: CropPlan) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let cw = ((c.scale * w as f64).round() as usize).clamp(1, w);
    let ch = ((c.scale * h as f64).round() as usize).clamp(1, h);
    let x0 = (c.offset_x * (w - cw) as f64).round();
    let y0 = (c.offset_y * (h - ch) as f64).round();
    let values = resize_region(img, x0, y0, cw as f64, ch as f64, w, h);
    ImageBuffer::from_f64(w, h, &values)
}

pub fn flip_horizontal(img: &ImageBuffer) -> ImageBuffer {
    let w = img.width();
    ImageBuffer::from_fn(w, img.height(), |x, y| img.get(w - 1 - x, y))
}

pub fn flip_vertical(img: &ImageBuffer) -> ImageBuffer {
    let h = img.height();
    ImageBuffer::from_fn(img.width(), h, |x, y| img.get(x, h - 1 - y))
}

/// Rotation about the image center with bilinear sampling and reflect fill.
pub fn rotate(img: &ImageBuffer, degrees: f64) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            // inverse map: rotate the output position back by -angle
            let sx = cx + cos * dx - sin * dy;
            let sy = cy + sin * dx + cos * dy;
            values.push(img.sample_bilinear(sx, sy));
        }
    }
    ImageBuffer::from_f64(w, h, &values)
}

/// Training-time augmentation regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Geometric augmentation only.
    I,
    /// Geometric plus random Gaussian blur.
    II,
    /// Geometric plus random Gaussian noise.
    III,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::I, Variant::II, Variant::III];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::I => "I",
            Variant::II => "II",
            Variant::III => "III",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(Variant::I),
            "II" | "2" => Ok(Variant::II),
            "III" | "3" => Ok(Variant::III),
            other => Err(Error::InvalidInput(format!("unknown dataset variant {other:?} (expected I, II or III)"))),
        }
    }
}

/// Photometric degradation (blur or noise) applied before geometry.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Photometric {
    pub blur_sigma: Option<f64>,
    pub noise_sigma: Option<f64>,
}

impl Photometric {
    /// Draws the variant's blur/noise coin and sigma.
    pub fn sample(variant: Variant, params: &AugmentParams, rng: &mut impl Rng) -> Self {
        let p = params.apply_probability;
        match variant {
            Variant::I => Self::default(),
            Variant::II => Self {
                blur_sigma: rng
                    .gen_bool(p)
                    .then(|| uniform(rng, params.blur_sigma_min, params.blur_sigma_max)),
                noise_sigma: None,
            },
            Variant::III => Self {
                blur_sigma: None,
                noise_sigma: rng
                    .gen_bool(p)
                    .then(|| uniform(rng, params.noise_sigma_min, params.noise_sigma_max)),
            },
        }
    }

    /// Blur first, then noise drawn from `noise_rng`.
    pub fn apply(&self, img: &ImageBuffer, noise_rng: &RngStream) -> Result<ImageBuffer> {
        let mut out = match self.blur_sigma {
            Some(s) => gaussian_blur(img, s)?,
            None => img.clone(),
        };
        if let Some(s) = self.noise_sigma {
            out = gaussian_noise(&out, s, noise_rng)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingPlan {
    pub photometric: Photometric,
    pub geometric: GeometricPlan,
}

const NOISE_KEY: u64 = 0x006e_6f69_7365;

impl TrainingPlan {
    pub fn sample(variant: Variant, params: &AugmentParams, rng: &RngStream) -> Self {
        let mut r = rng.rng();
        let photometric = Photometric::sample(variant, params, &mut r);
        let geometric = GeometricPlan::sample(params, &mut r);
        Self {
            photometric,
            geometric,
        }
    }

    pub fn apply(&self, img: &ImageBuffer, rng: &RngStream) -> Result<ImageBuffer> {
        let degraded = self.photometric.apply(img, &rng.derive(NOISE_KEY))?;
        Ok(self.geometric.apply(&degraded))
    }
}

pub fn training_pipeline(
    img: &ImageBuffer,
    variant: Variant,
    params: &AugmentParams,
    rng: &RngStream,
) -> Result<ImageBuffer> {
    TrainingPlan::sample(variant, params, rng).apply(img, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |x, y| {
            let v = 128.0 + 60.0 * (x as f64 * 0.21).sin() * (y as f64 * 0.13).cos();
            v as u8
        })
    }

    #[test]
    fn kernel_delta_limit() {
        assert_eq!(gaussian_kernel(1e-6).unwrap(), vec![1.0]);
    }

    #[test]
    fn kernel_symmetric_and_normalized() {
        for sigma in [0.3, 1.0, 2.5, 7.0, 32.0, 256.0] {
            let k = gaussian_kernel(sigma).unwrap();
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12, "sigma {sigma}");
            let n = k.len();
            for i in 0..n {
                assert_eq!(k[i], k[n - 1 - i]);
            }
        }
        assert_eq!(gaussian_kernel(1.0).unwrap().len(), 7);
    }

    #[test]
    fn kernel_center_matches_pointwise_formula() {
        let k = gaussian_kernel(1.0).unwrap();
        let raw: Vec<f64> = (-3i32..=3).map(|x| (-(x * x) as f64 / 2.0).exp()).collect();
        let total: f64 = raw.iter().sum();
        assert!((k[3] - 1.0 / total).abs() < 1e-15);
        // unnormalized density at zero is 1/sqrt(2 pi) = 0.3989
        let density_total = total / (2.0 * std::f64::consts::PI).sqrt();
        assert!((k[3] * density_total - 0.3989).abs() < 1e-4);
    }

    #[test]
    fn kernel_rejects_nonpositive_sigma() {
        assert!(gaussian_kernel(0.0).is_err());
        assert!(gaussian_kernel(-1.0).is_err());
        assert!(gaussian_blur(&ImageBuffer::filled(3, 3, 0), 0.0).is_err());
    }

    #[test]
    fn blur_fixes_constants() {
        let img = ImageBuffer::filled(31, 17, 93);
        for sigma in [0.5, 3.0, 40.0] {
            assert_eq!(gaussian_blur(&img, sigma).unwrap(), img);
        }
    }

    #[test]
    fn blur_impulse_matches_dense_convolution() {
        let mut px = vec![0u8; 25];
        px[12] = 255;
        let img = ImageBuffer::new(5, 5, px).unwrap();
        let out = gaussian_blur(&img, 1.0).unwrap();
        let k = gaussian_kernel(1.0).unwrap();
        let r = 3isize;
        for y in 0..5isize {
            for x in 0..5isize {
                let mut acc = 0.0;
                for ky in -r..=r {
                    for kx in -r..=r {
                        let sx = reflect_index(x + kx, 5);
                        let sy = reflect_index(y + ky, 5);
                        acc += k[(ky + r) as usize] * k[(kx + r) as usize] * f64::from(img.get(sx, sy));
                    }
                }
                let got = f64::from(out.get(x as usize, y as usize));
                assert!((got - acc).abs() <= 1.0, "({x},{y}): {got} vs {acc}");
            }
        }
    }

    #[test]
    fn wide_kernels_match_folded_sum() {
        // 3 rows exercise the unpaired final row of the spectral path
        let (n, rows) = (23usize, 3usize);
        let src: Vec<f64> = (0..n * rows).map(|i| ((i * 37) % 101) as f64).collect();
        for sigma in [12.0, 40.0, 256.0] {
            let k = gaussian_kernel(sigma).unwrap();
            let filter = AxisFilter::new(&k, n);
            assert!(matches!(filter, AxisFilter::Spectral { .. }));
            let mut got = vec![0.0; src.len()];
            filter.apply_rows(&src, n, &mut got);
            let r = (k.len() / 2) as isize;
            for row in 0..rows {
                for x in 0..n as isize {
                    let want: f64 = (-r..=r)
                        .map(|t| k[(t + r) as usize] * src[row * n + reflect_index(x + t, n)])
                        .sum();
                    let g = got[row * n + x as usize];
                    assert!((g - want).abs() < 1e-9, "sigma {sigma} row {row} x {x}: {g} vs {want}");
                }
            }
        }
    }

    #[test]
    fn blur_preserves_mean() {
        let img = texture(40, 30);
        let out = gaussian_blur(&img, 4.0).unwrap();
        assert!((out.mean() - img.mean()).abs() < 1.0);
    }

    #[test]
    fn noise_zero_sigma_is_identity_and_negative_rejected() {
        let img = texture(10, 10);
        let rng = RngStream::new(1, 2);
        assert_eq!(gaussian_noise(&img, 0.0, &rng).unwrap(), img);
        assert!(gaussian_noise(&img, -1.0, &rng).is_err());
    }

    #[test]
    fn noise_is_deterministic_per_stream() {
        let img = texture(32, 32);
        let a = gaussian_noise(&img, 10.0, &RngStream::new(5, 9)).unwrap();
        let b = gaussian_noise(&img, 10.0, &RngStream::new(5, 9)).unwrap();
        let c = gaussian_noise(&img, 10.0, &RngStream::new(5, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn identity_plan_is_identity() {
        let img = texture(20, 14);
        assert_eq!(GeometricPlan::default().apply(&img), img);
        let params = AugmentParams {
            apply_probability: 0.0,
            ..AugmentParams::default()
        };
        assert_eq!(geometric_augment(&img, &params, &RngStream::new(3, 3)), img);
        assert_eq!(training_pipeline(&img, Variant::I, &params, &RngStream::new(3, 3)).unwrap(), img);
    }

    #[test]
    fn horizontal_flip_definition() {
        let img = texture(13, 6);
        let plan = GeometricPlan {
            flip_horizontal: true,
            ..GeometricPlan::default()
        };
        let out = plan.apply(&img);
        for y in 0..6 {
            for x in 0..13 {
                assert_eq!(out.get(x, y), img.get(12 - x, y));
            }
        }
    }

    #[test]
    fn augmentations_preserve_dimensions() {
        let img = texture(37, 23);
        let params = AugmentParams {
            apply_probability: 1.0,
            ..AugmentParams::default()
        };
        for s in 0..8 {
            let out = geometric_augment(&img, &params, &RngStream::new(11, s));
            assert_eq!((out.width(), out.height()), (37, 23));
        }
    }

    #[test]
    fn rotation_by_zero_and_full_crop_are_identity() {
        let img = texture(16, 16);
        assert_eq!(rotate(&img, 0.0), img);
        let plan = GeometricPlan {
            crop: Some(CropPlan {
                scale: 1.0,
                offset_x: 0.3,
                offset_y: 0.9,
            }),
            ..GeometricPlan::default()
        };
        assert_eq!(plan.apply(&img), img);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("II".parse::<Variant>().unwrap(), Variant::II);
        assert!("IV".parse::<Variant>().is_err());
        assert_eq!(Variant::III.to_string(), "III");
    }

    #[test]
    fn forced_blur_at_max_sigma_flattens() {
        let img = texture(64, 64);
        let plan = TrainingPlan {
            photometric: Photometric {
                blur_sigma: Some(256.0),
                noise_sigma: None,
            },
            geometric: GeometricPlan::default(),
        };
        let out = plan.apply(&img, &RngStream::new(0, 0)).unwrap();
        let (lo, hi) = out.pixels().iter().fold((255, 0), |(l, h), &p| (l.min(p), h.max(p)));
        assert!(hi - lo <= 2);
    }
}
