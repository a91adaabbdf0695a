//! Luminance frames, image I/O, sub-pixel upscaling and the fisheye mask.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ImageEncoder};
use thiserror::Error;

use crate::exec::Execution;
use crate::geometry::{GeometryError, Lens};

/// Default sub-pixel factor (1/8 pel).
pub const DEFAULT_FACTOR: usize = 8;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode image {path}: {message}")]
    Decode { path: String, message: String },
    #[error("unsupported pixel format {0} (8-bit gray or color expected)")]
    UnsupportedFormat(String),
    #[error("unsupported output extension for {0} (use .png or .pgm)")]
    UnsupportedExtension(String),
    #[error("frame dimensions {0}x{1} are invalid")]
    InvalidDimensions(usize, usize),
    #[error("sample buffer has {got} samples, expected {expected}")]
    BufferSize { got: usize, expected: usize },
    #[error("mask field of view {0}° must be positive and not exceed the lens field of view")]
    MaskLimit(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Row-major luminance raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    luma: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, luma: Vec<f32>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::InvalidDimensions(width, height));
        }
        if luma.len() != width * height {
            return Err(FrameError::BufferSize {
                got: luma.len(),
                expected: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            luma,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0, "frame must not be empty");
        Self {
            width,
            height,
            luma: vec![value; width * height],
        }
    }

    /// Builds a frame from `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0, "frame must not be empty");
        let luma = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            luma,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Image centre `(floor(w/2), floor(h/2))`, the origin of centred
    /// coordinates.
    pub fn center(&self) -> (usize, usize) {
        (self.width / 2, self.height / 2)
    }

    pub fn luma(&self) -> &[f32] {
        &self.luma
    }

    pub fn luma_mut(&mut self) -> &mut [f32] {
        &mut self.luma
    }

    pub fn into_luma(self) -> Vec<f32> {
        self.luma
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.luma[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.luma[y * self.width + x] = v;
    }

    /// Sample at integer position, zero outside the frame.
    #[inline]
    pub fn get_or_zero(&self, x: i64, y: i64) -> f32 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0.0
        } else {
            self.luma[y as usize * self.width + x as usize]
        }
    }

    /// Catmull-Rom sample at a real-valued position, or `None` when the 4×4
    /// support leaves the frame. Result clamped to [0, 255].
    pub fn sample_cubic(&self, x: f64, y: f64) -> Option<f64> {
        let x0 = x.floor();
        let y0 = y.floor();
        let (ix, iy) = (x0 as i64, y0 as i64);
        if !x.is_finite()
            || !y.is_finite()
            || ix < 1
            || iy < 1
            || ix + 2 >= self.width as i64
            || iy + 2 >= self.height as i64
        {
            // exact nodes on the border need no support
            if x == x0 && y == y0 && ix >= 0 && iy >= 0 && ix < self.width as i64 && iy < self.height as i64 {
                return Some(self.get(ix as usize, iy as usize) as f64);
            }
            return None;
        }
        let wx = catmull_rom_weights(x - x0);
        let wy = catmull_rom_weights(y - y0);
        let mut acc = 0.0;
        for (j, wyj) in wy.iter().enumerate() {
            let row = (iy - 1 + j as i64) as usize * self.width;
            let mut r = 0.0;
            for (i, wxi) in wx.iter().enumerate() {
                r += wxi * self.luma[row + (ix - 1 + i as i64) as usize] as f64;
            }
            acc += wyj * r;
        }
        Some(acc.clamp(0.0, 255.0))
    }
}

/// Catmull-Rom (a = −0.5) weights for taps at offsets −1, 0, 1, 2.
#[inline]
pub fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Reads a PNG or PGM image as luminance. Color input is converted with the
/// BT.601 weights.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame, FrameError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let reader = image::ImageReader::open(path).map_err(|source| FrameError::Io {
        path: shown.clone(),
        source,
    })?;
    let reader = reader.with_guessed_format().map_err(|source| FrameError::Io {
        path: shown.clone(),
        source,
    })?;
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(source) => FrameError::Io {
            path: shown.clone(),
            source,
        },
        other => FrameError::Decode {
            path: shown.clone(),
            message: other.to_string(),
        },
    })?;
    from_image(img)
}

fn from_image(img: DynamicImage) -> Result<Frame, FrameError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let luma: Vec<f32> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f32::from).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| f32::from(p.0[0])).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| bt601(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(buf) => buf.pixels().map(|p| bt601(p.0[0], p.0[1], p.0[2])).collect(),
        other => return Err(FrameError::UnsupportedFormat(format!("{:?}", other.color()))),
    };
    Frame::new(w, h, luma)
}

fn bt601(r: u8, g: u8, b: u8) -> f32 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) as f32
}

/// Rounds half away from zero and clamps to 8 bits.
pub fn to_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Writes an 8-bit grayscale PNG or binary PGM, chosen by extension.
pub fn save_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<(), FrameError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let bytes: Vec<u8> = frame.luma.iter().map(|&v| to_u8(v)).collect();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let io = |source| FrameError::Io {
        path: shown.clone(),
        source,
    };
    let file = BufWriter::new(File::create(path).map_err(io)?);
    let (w, h) = (frame.width as u32, frame.height as u32);
    let result = match ext.as_deref() {
        Some("png") => image::codecs::png::PngEncoder::new(file).write_image(
            &bytes,
            w,
            h,
            image::ExtendedColorType::L8,
        ),
        Some("pgm") => PnmEncoder::new(file)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&bytes, w, h, image::ExtendedColorType::L8),
        _ => return Err(FrameError::UnsupportedExtension(shown)),
    };
    result.map_err(|e| match e {
        image::ImageError::IoError(source) => FrameError::Io {
            path: shown.clone(),
            source,
        },
        other => FrameError::Decode {
            path: shown.clone(),
            message: other.to_string(),
        },
    })
}

/// Reference frame resampled on a `1/factor`-pel grid.
///
/// Grid node `(gx, gy)` lies at frame position `(gx / factor, gy / factor)`.
/// The grid spans the frame from the first to the last pixel centre.
#[derive(Debug, Clone, PartialEq)]
pub struct UpscaledFrame {
    factor: usize,
    width: usize,
    height: usize,
    grid_w: usize,
    grid_h: usize,
    data: Vec<f32>,
}

impl UpscaledFrame {
    pub fn factor(&self) -> usize {
        self.factor
    }

    /// Dimensions of the source frame.
    pub fn source_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.grid_w, self.grid_h)
    }

    /// Sample at grid node `(gx, gy)`; zero outside the frame.
    #[inline]
    pub fn at_grid(&self, gx: i64, gy: i64) -> f32 {
        if gx < 0 || gy < 0 || gx >= self.grid_w as i64 || gy >= self.grid_h as i64 {
            0.0
        } else {
            self.data[gy as usize * self.grid_w + gx as usize]
        }
    }

    /// Nearest grid node to an absolute frame position, rounding half away
    /// from zero.
    #[inline]
    pub fn quantize(&self, x: f64, y: f64) -> (i64, i64) {
        let k = self.factor as f64;
        ((x * k).round() as i64, (y * k).round() as i64)
    }

    /// Sample at an absolute frame position quantized to the grid.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f32 {
        let (gx, gy) = self.quantize(x, y);
        self.at_grid(gx, gy)
    }

    /// Sample at a coordinate relative to the frame centre, quantized to the
    /// grid.
    #[inline]
    pub fn sample_centered(&self, x: f64, y: f64) -> f32 {
        let k = self.factor as i64;
        let (cx, cy) = (self.width as i64 / 2, self.height as i64 / 2);
        let (qx, qy) = self.quantize(x, y);
        self.at_grid(cx * k + qx, cy * k + qy)
    }
}

/// Separable Catmull-Rom upscaling by `factor`, with edge replication at the
/// borders and output clamped to [0, 255]. Integer positions keep their
/// source sample bit for bit.
pub fn upscale(frame: &Frame, factor: usize) -> UpscaledFrame {
    upscale_with(frame, factor, Execution::default())
}

pub fn upscale_with(frame: &Frame, factor: usize, exec: Execution) -> UpscaledFrame {
    assert!(factor >= 1, "upscale factor must be at least 1");
    let (w, h) = frame.dims();
    let gw = (w - 1) * factor + 1;
    let gh = (h - 1) * factor + 1;
    let weights: Vec<[f64; 4]> = (0..factor)
        .map(|p| catmull_rom_weights(p as f64 / factor as f64))
        .collect();

    // horizontal pass: h rows of gw samples
    let mut horiz = vec![0.0f64; gw * h];
    exec.for_each_chunk(&mut horiz, gw, |y, out| {
        let row = &frame.luma[y * w..(y + 1) * w];
        for (gx, o) in out.iter_mut().enumerate() {
            let (i, p) = (gx / factor, gx % factor);
            *o = if p == 0 {
                row[i] as f64
            } else {
                interp4(&weights[p], |k| row[clamp_index(i as i64 - 1 + k, w)] as f64)
            };
        }
    });

    let mut data = vec![0.0f32; gw * gh];
    exec.for_each_chunk(&mut data, gw, |gy, out| {
        let (j, p) = (gy / factor, gy % factor);
        if p == 0 {
            let src = &horiz[j * gw..(j + 1) * gw];
            for (o, &s) in out.iter_mut().zip(src) {
                *o = s.clamp(0.0, 255.0) as f32;
            }
        } else {
            let wts = &weights[p];
            let rows = [
                clamp_index(j as i64 - 1, h),
                j,
                clamp_index(j as i64 + 1, h),
                clamp_index(j as i64 + 2, h),
            ];
            for (gx, o) in out.iter_mut().enumerate() {
                let v = interp4(wts, |k| horiz[rows[k as usize] * gw + gx]);
                *o = v.clamp(0.0, 255.0) as f32;
            }
        }
    });

    UpscaledFrame {
        factor,
        width: w,
        height: h,
        grid_w: gw,
        grid_h: gh,
        data,
    }
}

#[inline]
fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

#[inline]
fn interp4(w: &[f64; 4], tap: impl Fn(i64) -> f64) -> f64 {
    w[0] * tap(0) + w[1] * tap(1) + w[2] * tap(2) + w[3] * tap(3)
}

/// Pixels within `radius_px` of the frame centre.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularMask {
    width: usize,
    height: usize,
    radius_px: f64,
    inside: Vec<bool>,
}

impl CircularMask {
    pub fn new(width: usize, height: usize, radius_px: f64) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::InvalidDimensions(width, height));
        }
        let (cx, cy) = ((width / 2) as f64, (height / 2) as f64);
        let inside: Vec<bool> = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                (dx * dx + dy * dy).sqrt() <= radius_px
            })
            .collect();
        if !(radius_px > 0.0) || !inside.iter().any(|&b| b) {
            return Err(FrameError::MaskLimit(radius_px));
        }
        Ok(Self {
            width,
            height,
            radius_px,
            inside,
        })
    }

    /// Mask covering the whole frame.
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            radius_px: f64::INFINITY,
            inside: vec![true; width * height],
        }
    }

    pub fn radius_px(&self) -> f64 {
        self.radius_px
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.inside[y * self.width + x]
    }

    pub fn bits(&self) -> &[bool] {
        &self.inside
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }
}

/// Mask of the image circle at `fov_limit_deg` (default: the lens field of
/// view).
pub fn make_mask(lens: &Lens, fov_limit_deg: Option<f64>) -> Result<CircularMask, FrameError> {
    let geom = lens.geometry();
    let limit = fov_limit_deg.unwrap_or(geom.fov_deg);
    if !(limit > 0.0) || limit > geom.fov_deg {
        return Err(FrameError::MaskLimit(limit));
    }
    let radius = lens.project_theta((limit / 2.0).to_radians())?;
    CircularMask::new(geom.width_px, geom.height_px, radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraGeometry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let luma = (0..w * h).map(|_| rng.gen_range(0.0..255.0f32)).collect();
        Frame::new(w, h, luma).unwrap()
    }

    #[test]
    fn constant_frame_upscales_to_constant() {
        let f = Frame::filled(9, 7, 42.0);
        let up = upscale(&f, 8);
        assert_eq!(up.grid_dims(), (65, 49));
        assert!(up.data.iter().all(|&v| (v - 42.0).abs() < 1e-4));
    }

    #[test]
    fn factor_one_is_identity() {
        let f = random_frame(13, 11, 1);
        let up = upscale(&f, 1);
        assert_eq!(up.data, f.luma);
    }

    #[test]
    fn ramp_half_pel() {
        let f = Frame::from_fn(10, 1, |x, _| 8.0 * x as f32);
        let up = upscale(&f, 2);
        // interior half-pel between samples 1 (8) and 2 (16)
        assert!((up.at_grid(3, 0) as f64 - 12.0).abs() < 1e-9);
    }

    #[test]
    fn nodes_are_exact() {
        let f = random_frame(17, 12, 7);
        let up = upscale(&f, 8);
        for y in 0..12 {
            for x in 0..17 {
                assert_eq!(up.at_grid(8 * x as i64, 8 * y as i64), f.get(x, y));
            }
        }
    }

    #[test]
    fn sample_outside_is_zero() {
        let f = Frame::filled(8, 8, 100.0);
        let up = upscale(&f, 8);
        assert_eq!(up.sample(-50.0, 3.0), 0.0);
        assert_eq!(up.sample(3.0, 1e6), 0.0);
        assert_eq!(up.sample(3.0, 4.0), 100.0);
        assert_eq!(up.sample_centered(0.0, 0.0), 100.0);
        assert_eq!(up.sample_centered(-4.0, -4.0), 100.0);
        assert_eq!(up.sample_centered(-4.2, -4.0), 0.0);
    }

    #[test]
    fn quantize_rounds_half_away_from_zero() {
        let up = upscale(&Frame::filled(4, 4, 1.0), 8);
        assert_eq!(up.quantize(1.0 / 16.0, -1.0 / 16.0), (1, -1));
        assert_eq!(up.quantize(0.06, 0.0), (0, 0));
    }

    #[test]
    fn sequential_and_parallel_upscale_agree() {
        let f = random_frame(33, 21, 3);
        assert_eq!(
            upscale_with(&f, 8, Execution::Sequential),
            upscale_with(&f, 8, Execution::Parallel)
        );
    }

    #[test]
    fn cubic_sample_reproduces_nodes_and_ramps() {
        let f = Frame::from_fn(10, 10, |x, y| (3 * x + 2 * y) as f32);
        assert_eq!(f.sample_cubic(4.0, 5.0), Some(22.0));
        let v = f.sample_cubic(4.25, 5.5).unwrap();
        assert!((v - (3.0 * 4.25 + 2.0 * 5.5)).abs() < 1e-9);
        assert_eq!(f.sample_cubic(0.5, 5.0), None);
        assert_eq!(f.sample_cubic(0.0, 0.0), Some(0.0));
    }

    #[test]
    fn reference_rig_mask_radius() {
        let lens = Lens::equisolid(CameraGeometry::reference_rig(1088, 1088)).unwrap();
        let mask = make_mask(&lens, None).unwrap();
        // 2·1.8·sin(46.25°) mm at 1088/5.2 px per mm
        let expected = 2.0 * 1.8 * (46.25f64).to_radians().sin() * 1088.0 / 5.2;
        assert!((mask.radius_px() - expected).abs() < 1e-9);
        assert!((mask.radius_px() - 544.2).abs() < 0.2);
    }

    #[test]
    fn mask_limits() {
        let lens = Lens::equisolid(CameraGeometry::reference_rig(128, 128)).unwrap();
        assert!(make_mask(&lens, Some(0.0)).is_err());
        assert!(make_mask(&lens, Some(190.0)).is_err());
        let narrow = make_mask(&lens, Some(170.0)).unwrap();
        let wide = make_mask(&lens, Some(185.0)).unwrap();
        assert!(narrow.count() < wide.count());
    }

    #[test]
    fn mask_is_point_symmetric_for_odd_sizes() {
        let m = CircularMask::new(31, 31, 11.3).unwrap();
        for y in 0..31 {
            for x in 0..31 {
                assert_eq!(m.contains(x, y), m.contains(30 - x, 30 - y));
            }
        }
    }

    #[test]
    fn png_and_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = Frame::from_fn(16, 16, |x, y| (x * 16 + y) as f32);
        for name in ["g.png", "g.pgm"] {
            let p = dir.path().join(name);
            save_frame(&f, &p).unwrap();
            assert_eq!(load_frame(&p).unwrap(), f);
        }
    }

    #[test]
    fn rgb_is_converted_to_luma() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        let img = image::RgbImage::from_pixel(4, 3, image::Rgb([100, 100, 100]));
        img.save(&p).unwrap();
        let f = load_frame(&p).unwrap();
        assert!(f.luma().iter().all(|&v| (v - 100.0).abs() < 1e-4));
    }

    #[test]
    fn truncated_file_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.png");
        save_frame(&Frame::filled(32, 32, 9.0), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_frame(&p).is_err());
        assert!(matches!(
            load_frame(dir.path().join("missing.png")),
            Err(FrameError::Io { .. })
        ));
    }

    #[test]
    fn sixteen_bit_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("deep.png");
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_pixel(4, 4, image::Luma([1000u16]));
        img.save(&p).unwrap();
        assert!(matches!(load_frame(&p), Err(FrameError::UnsupportedFormat(_))));
    }
}
