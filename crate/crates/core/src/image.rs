//! Single-channel 8-bit raster images and the interpolation helpers the
//! augmentation and model-input code share.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("image must be at least 1x1, got {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image must be at least 1x1");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image must be at least 1x1");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    /// Rounds and clamps each float sample into `[0, 255]`.
    pub fn from_f64(width: usize, height: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            pixels: values.iter().map(|&v| quantize(v)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| f64::from(p)).collect()
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| f64::from(p)).sum::<f64>() / self.pixels.len() as f64
    }

    /// Bilinear sample at a continuous position, reflecting out-of-range taps.
    pub fn sample_bilinear(&self, fx: f64, fy: f64) -> f64 {
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let xa = reflect_index(x0, self.width);
        let xb = reflect_index(x0 + 1, self.width);
        let ya = reflect_index(y0, self.height);
        let yb = reflect_index(y0 + 1, self.height);
        let p = |x: usize, y: usize| f64::from(self.pixels[y * self.width + x]);
        let top = p(xa, ya) * (1.0 - tx) + p(xb, ya) * tx;
        let bottom = p(xa, yb) * (1.0 - tx) + p(xb, yb) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    /// Bilinear resize with pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> ImageBuffer {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let values = resize_region(self, 0.0, 0.0, self.width as f64, self.height as f64, width, height);
        ImageBuffer::from_f64(width, height, &values)
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Maps the region `[x0, x0 + rw) x [y0, y0 + rh)` of `img` onto a
/// `width x height` grid with bilinear interpolation.
pub(crate) fn resize_region(
    img: &ImageBuffer,
    x0: f64,
    y0: f64,
    rw: f64,
    rh: f64,
    width: usize,
    height: usize,
) -> Vec<f64> {
    let sx = rw / width as f64;
    let sy = rh / height as f64;
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = y0 + (y as f64 + 0.5) * sy - 0.5;
        for x in 0..width {
            let fx = x0 + (x as f64 + 0.5) * sx - 0.5;
            out.push(img.sample_bilinear(fx, fy));
        }
    }
    out
}

/// Half-sample symmetric reflection: `... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...`.
pub fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_wraps_symmetrically() {
        let got: Vec<usize> = (-4..8).map(|i| reflect_index(i, 3)).collect();
        assert_eq!(got, vec![2, 2, 1, 0, 0, 1, 2, 2, 1, 0, 0, 1]);
        assert_eq!(reflect_index(0, 1), 0);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn constructor_checks_dimensions() {
        assert!(ImageBuffer::new(2, 2, vec![0; 3]).is_err());
        assert!(ImageBuffer::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn resize_same_size_is_identity_and_constants_survive() {
        let img = ImageBuffer::from_fn(9, 7, |x, y| (x * 20 + y * 3) as u8);
        assert_eq!(img.resize_bilinear(9, 7), img);
        let flat = ImageBuffer::filled(224, 224, 77);
        assert_eq!(flat.resize_bilinear(64, 64), ImageBuffer::filled(64, 64, 77));
    }

    #[test]
    fn integer_downsample_of_ramp_averages() {
        // 2x downsample samples exactly between pixel pairs
        let img = ImageBuffer::from_fn(4, 1, |x, _| (x * 10) as u8);
        let small = img.resize_bilinear(2, 1);
        assert_eq!(small.pixels(), &[5, 25]);
    }
}
