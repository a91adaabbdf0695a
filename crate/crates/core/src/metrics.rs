//! Luminance PSNR and single-scale SSIM restricted to the fisheye disc.

use std::fmt;

use thiserror::Error;

use crate::frames::{CircularMask, Frame};

/// SSIM window side length.
pub const SSIM_WINDOW: usize = 8;
const PEAK: f64 = 255.0;
const C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
const C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("frame sizes differ: {0:?} vs {1:?}")]
    SizeMismatch((usize, usize), (usize, usize)),
    #[error("mask size {0:?} does not match frame size {1:?}")]
    MaskMismatch((usize, usize), (usize, usize)),
    #[error("no {SSIM_WINDOW}x{SSIM_WINDOW} window lies entirely inside the mask")]
    NoWindow,
}

/// PSNR value; identical inputs give [`Psnr::Infinite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn is_infinite(self) -> bool {
        matches!(self, Psnr::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        }
    }

    /// Numeric value, `f64::INFINITY` for identical frames.
    pub fn db(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.4}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

fn check(a: &Frame, b: &Frame, mask: &CircularMask) -> Result<(), MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::SizeMismatch(a.dims(), b.dims()));
    }
    if mask.dims() != a.dims() {
        return Err(MetricsError::MaskMismatch(mask.dims(), a.dims()));
    }
    Ok(())
}

/// Peak signal-to-noise ratio over the masked pixels.
pub fn psnr(a: &Frame, b: &Frame, mask: &CircularMask) -> Result<Psnr, MetricsError> {
    check(a, b, mask)?;
    let (sum, n) = a
        .luma()
        .iter()
        .zip(b.luma())
        .zip(mask.bits())
        .filter(|(_, &m)| m)
        .fold((0.0f64, 0usize), |(s, n), ((&x, &y), _)| {
            let d = x as f64 - y as f64;
            (s + d * d, n + 1)
        });
    if sum == 0.0 {
        return Ok(Psnr::Infinite);
    }
    let mse = sum / n as f64;
    Ok(Psnr::Finite(10.0 * (PEAK * PEAK / mse).log10()))
}

/// Summed-area table with a zero row and column in front.
struct Integral {
    stride: usize,
    data: Vec<f64>,
}

impl Integral {
    fn new(width: usize, height: usize, value: impl Fn(usize) -> f64) -> Self {
        let stride = width + 1;
        let mut data = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += value(y * width + x);
                data[(y + 1) * stride + x + 1] = data[y * stride + x + 1] + row;
            }
        }
        Self { stride, data }
    }

    /// Sum over `[x, x + n) × [y, y + n)`.
    fn window(&self, x: usize, y: usize, n: usize) -> f64 {
        let s = self.stride;
        let (x1, y1) = (x + n, y + n);
        self.data[y1 * s + x1] - self.data[y * s + x1] - self.data[y1 * s + x] + self.data[y * s + x]
    }
}

/// Mean SSIM over all 8×8 windows (stride 1) lying entirely inside the mask.
pub fn ssim(a: &Frame, b: &Frame, mask: &CircularMask) -> Result<f64, MetricsError> {
    check(a, b, mask)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::NoWindow);
    }
    // zero outside the mask so exterior pixels cannot leak in through rounding
    let m = mask.bits();
    let va = |i: usize| if m[i] { a.luma()[i] as f64 } else { 0.0 };
    let vb = |i: usize| if m[i] { b.luma()[i] as f64 } else { 0.0 };
    let count = Integral::new(w, h, |i| f64::from(u8::from(m[i])));
    let sa = Integral::new(w, h, va);
    let sb = Integral::new(w, h, vb);
    let saa = Integral::new(w, h, |i| va(i) * va(i));
    let sbb = Integral::new(w, h, |i| vb(i) * vb(i));
    let sab = Integral::new(w, h, |i| va(i) * vb(i));

    let n = SSIM_WINDOW;
    let full = (n * n) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for y in 0..=h - n {
        for x in 0..=w - n {
            if count.window(x, y, n) != full {
                continue;
            }
            let mu_a = sa.window(x, y, n) / full;
            let mu_b = sb.window(x, y, n) / full;
            let var_a = saa.window(x, y, n) / full - mu_a * mu_a;
            let var_b = sbb.window(x, y, n) / full - mu_b * mu_b;
            let cov = sab.window(x, y, n) / full - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2);
            let den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2);
            total += num / den;
            windows += 1;
        }
    }
    if windows == 0 {
        return Err(MetricsError::NoWindow);
    }
    Ok(total / windows as f64)
}

/// Quality of one frame against its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub psnr: Psnr,
    pub ssim: f64,
    pub pixel_count: usize,
    pub mask_radius_px: f64,
}

pub fn evaluate(reference: &Frame, test: &Frame, mask: &CircularMask) -> Result<MetricReport, MetricsError> {
    Ok(MetricReport {
        psnr: psnr(reference, test, mask)?,
        ssim: ssim(reference, test, mask)?,
        pixel_count: mask.count(),
        mask_radius_px: mask.radius_px(),
    })
}

/// Averages over a set of reports. Infinite PSNR entries are left out of the
/// PSNR mean and counted separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub frames: usize,
    /// `None` when every entry is infinite or the set is empty.
    pub mean_psnr: Option<f64>,
    pub mean_ssim: f64,
    pub mean_pixel_count: f64,
    pub infinite_psnr: usize,
}

pub fn summarize(reports: &[MetricReport]) -> MetricSummary {
    let finite: Vec<f64> = reports.iter().filter_map(|r| r.psnr.finite()).collect();
    let n = reports.len().max(1) as f64;
    MetricSummary {
        frames: reports.len(),
        mean_psnr: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
        mean_ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
        mean_pixel_count: reports.iter().map(|r| r.pixel_count as f64).sum::<f64>() / n,
        infinite_psnr: reports.len() - finite.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gradient(w: usize, h: usize) -> Frame {
        Frame::from_fn(w, h, |x, y| ((x * 7 + y * 13) % 256) as f32)
    }

    #[test]
    fn identical_frames_are_infinite() {
        let f = gradient(32, 32);
        let mask = CircularMask::full(32, 32);
        let p = psnr(&f, &f, &mask).unwrap();
        assert_eq!(p, Psnr::Infinite);
        assert_eq!(p.to_string(), "inf");
        assert_eq!(ssim(&f, &f, &mask).unwrap(), 1.0);
    }

    #[test]
    fn uniform_difference_of_one() {
        let a = Frame::filled(16, 16, 100.0);
        let b = Frame::filled(16, 16, 101.0);
        let p = psnr(&a, &b, &CircularMask::full(16, 16)).unwrap().db();
        assert_relative_eq!(p, 10.0 * (255.0f64 * 255.0).log10(), epsilon = 1e-12);
        assert!((p - 48.13).abs() < 0.01);
    }

    #[test]
    fn single_full_scale_error() {
        let a = Frame::filled(20, 20, 0.0);
        let mut b = a.clone();
        b.set(10, 10, 255.0);
        let mask = CircularMask::new(20, 20, 6.0).unwrap();
        let n = mask.count() as f64;
        let p = psnr(&a, &b, &mask).unwrap().db();
        assert_relative_eq!(p, 10.0 * n.log10(), epsilon = 1e-9);
    }

    #[test]
    fn constant_offset_ssim_is_luminance_term() {
        let a = Frame::filled(16, 16, 80.0);
        let b = Frame::filled(16, 16, 90.0);
        let expected = (2.0 * 80.0 * 90.0 + C1) / (80.0f64.powi(2) + 90.0f64.powi(2) + C1);
        let s = ssim(&a, &b, &CircularMask::full(16, 16)).unwrap();
        assert_relative_eq!(s, expected, epsilon = 1e-12);
    }

    #[test]
    fn inverted_content_lowers_ssim() {
        let a = gradient(24, 24);
        let b = Frame::from_fn(24, 24, |x, y| 255.0 - a.get(x, y));
        assert!(ssim(&a, &b, &CircularMask::full(24, 24)).unwrap() < 1.0);
    }

    #[test]
    fn exterior_pixels_are_ignored() {
        let a = gradient(40, 40);
        let mut b = Frame::from_fn(40, 40, |x, y| (a.get(x, y) + ((x + y) % 5) as f32).min(255.0));
        let mask = CircularMask::new(40, 40, 15.0).unwrap();
        let before = (psnr(&a, &b, &mask).unwrap(), ssim(&a, &b, &mask).unwrap());
        b.set(0, 0, 3.0);
        b.set(39, 39, 250.0);
        let after = (psnr(&a, &b, &mask).unwrap(), ssim(&a, &b, &mask).unwrap());
        assert_eq!(before, after);
    }

    #[test]
    fn size_checks() {
        let a = Frame::filled(8, 8, 0.0);
        let b = Frame::filled(9, 8, 0.0);
        assert!(matches!(psnr(&a, &b, &CircularMask::full(8, 8)), Err(MetricsError::SizeMismatch(..))));
        assert!(matches!(ssim(&a, &a, &CircularMask::full(9, 8)), Err(MetricsError::MaskMismatch(..))));
        let tiny = CircularMask::new(8, 8, 1.0).unwrap();
        assert_eq!(ssim(&a, &a, &tiny), Err(MetricsError::NoWindow));
    }

    #[test]
    fn summary_skips_infinite() {
        let r = |p: Psnr| MetricReport {
            psnr: p,
            ssim: 0.5,
            pixel_count: 10,
            mask_radius_px: 3.0,
        };
        let s = summarize(&[r(Psnr::Finite(30.0)), r(Psnr::Infinite), r(Psnr::Finite(40.0))]);
        assert_eq!(s.mean_psnr, Some(35.0));
        assert_eq!(s.infinite_psnr, 1);
        assert_eq!(s.frames, 3);
        assert_eq!(summarize(&[r(Psnr::Infinite)]).mean_psnr, None);
    }
}
