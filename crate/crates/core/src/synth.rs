//! Synthetic fisheye sequences with known perspective-domain motion.
//!
//! Each output pixel inside the image circle is mapped to the perspective
//! plane of the lens, offset by the cumulative shift of its frame and
//! averaged over its footprint in a large perspective source, sampled with
//! the Catmull-Rom kernel. Frame `k`
//! thus shows the source translated by `k · shift`, so for every consecutive
//! pair (reference `k`, current `k + 1`) a projected block matcher should
//! return `shift` for every block.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::blockmatch::MotionVector;
use crate::exec::Execution;
use crate::frames::{save_frame, Frame, FrameError};
use crate::geometry::{GeometryError, Lens, RadialMap};

/// Widest field of view a perspective source can feed.
pub const MAX_SYNTH_FOV_DEG: f64 = 175.0;

/// Header of the truth sidecar.
pub const TRUTH_HEADER: &str = "pair_index,truth_dx,truth_dy";

/// Margin in source pixels kept around the required area for the cubic
/// kernel support.
const KERNEL_MARGIN: f64 = 3.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synthesis needs a field of view of at most {MAX_SYNTH_FOV_DEG} degrees, got {0}")]
    FovTooWide(f64),
    #[error("a sequence needs at least two frames, got {0}")]
    FrameCount(usize),
    #[error("frame {frame} pixel ({x}, {y}) samples outside the source; need at least {need_w}x{need_h}")]
    Coverage {
        frame: usize,
        x: usize,
        y: usize,
        need_w: usize,
        need_h: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("cannot write sequence: {0}")]
    Io(#[from] std::io::Error),
}

/// Parameters of a synthetic sequence.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub lens: Lens,
    /// Perspective source, sampled around its centre.
    pub source: Frame,
    /// Perspective-domain translation per frame step.
    pub shift: (i32, i32),
    pub frame_count: usize,
}

/// Generated frames and the truth vector of every consecutive pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSequence {
    pub frames: Vec<Frame>,
    pub truth: Vec<MotionVector>,
}

impl SynthSequence {
    pub fn truth_csv(&self) -> String {
        let mut out = String::from(TRUTH_HEADER);
        out.push('\n');
        for (i, v) in self.truth.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{}", v.dx, v.dy);
        }
        out
    }

    /// Writes `frame_000.png`, `frame_001.png`, ... and `truth.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), SynthError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (i, f) in self.frames.iter().enumerate() {
            save_frame(f, dir.join(frame_name(i)))?;
        }
        std::fs::write(dir.join("truth.csv"), self.truth_csv())?;
        Ok(())
    }
}

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:03}.png")
}

/// Smallest odd square source that covers every frame of a sequence.
pub fn required_source_size(lens: &Lens, shift: (i32, i32), frame_count: usize) -> Result<usize, GeometryError> {
    let reach = lens.to_perspective(lens.r_max())?;
    let steps = frame_count.saturating_sub(1) as f64;
    let travel = steps * (shift.0.unsigned_abs().max(shift.1.unsigned_abs()) as f64);
    let half = (reach + travel + KERNEL_MARGIN).ceil() as usize;
    Ok(2 * half + 1)
}

/// Multi-octave value noise rescaled to [10, 245].
pub fn texture(width: usize, height: usize, seed: u64) -> Frame {
    const OCTAVES: [(usize, f64); 5] = [(48, 1.0), (24, 0.8), (12, 0.6), (6, 0.45), (3, 0.3)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lattices: Vec<(usize, usize, Vec<f64>)> = OCTAVES
        .iter()
        .map(|&(period, _)| {
            let lw = width / period + 2;
            let lh = height / period + 2;
            let values = (0..lw * lh).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (period, lw, values)
        })
        .collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let raw: Vec<f64> = (0..width * height)
        .map(|i| {
            let (x, y) = (i % width, i / width);
            lattices
                .iter()
                .zip(OCTAVES)
                .map(|((period, lw, values), (_, amp))| {
                    let (gx, gy) = (x / period, y / period);
                    let tx = smooth((x % period) as f64 / *period as f64);
                    let ty = smooth((y % period) as f64 / *period as f64);
                    let v = |ix: usize, iy: usize| values[iy * lw + ix];
                    let top = v(gx, gy) + tx * (v(gx + 1, gy) - v(gx, gy));
                    let bottom = v(gx, gy + 1) + tx * (v(gx + 1, gy + 1) - v(gx, gy + 1));
                    amp * (top + ty * (bottom - top))
                })
                .sum()
        })
        .collect();
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let scale = if hi > lo { 235.0 / (hi - lo) } else { 0.0 };
    Frame::new(width, height, raw.iter().map(|&v| (10.0 + (v - lo) * scale).round() as f32).collect())
        .expect("texture dimensions are positive")
}

/// Caps on sub-samples per pixel along the radial and tangential axes.
const MAX_RADIAL_SAMPLES: usize = 32;
const MAX_TANGENTIAL_SAMPLES: usize = 16;

/// Area of one fisheye pixel on the perspective plane, approximated by a
/// polar-aligned grid of sub-samples. Near the rim a single pixel covers many
/// source pixels radially, and point sampling would alias badly there.
struct Footprint {
    u: f64,
    v: f64,
    radial: usize,
    tangential: usize,
}

impl Footprint {
    fn at(lens: &Lens, u: f64, v: f64) -> Result<Option<Self>, GeometryError> {
        let r = u.hypot(v);
        let r_max = lens.r_max();
        if r > r_max {
            return Ok(None);
        }
        let step = 0.25;
        let (lo, hi) = ((r - step).max(0.0), (r + step).min(r_max));
        let radial_scale = (lens.to_perspective(hi)? - lens.to_perspective(lo)?) / (hi - lo);
        let tangential_scale = if r > 0.0 { lens.to_perspective(r)? / r } else { 1.0 };
        let count = |scale: f64, cap: usize| ((scale - 1e-3).ceil() as usize).clamp(1, cap);
        Ok(Some(Self {
            u,
            v,
            radial: count(radial_scale, MAX_RADIAL_SAMPLES),
            tangential: count(tangential_scale, MAX_TANGENTIAL_SAMPLES),
        }))
    }

    fn count(&self) -> usize {
        self.radial * self.tangential
    }

    /// Perspective-plane positions of the sub-samples, relative to the optical centre.
    fn samples(&self, lens: &Lens) -> Result<Vec<(f64, f64)>, GeometryError> {
        let r = self.u.hypot(self.v);
        let (er, et) = if r > 0.0 {
            ((self.u / r, self.v / r), (-self.v / r, self.u / r))
        } else {
            ((1.0, 0.0), (0.0, 1.0))
        };
        let offset = |i: usize, n: usize| (i as f64 + 0.5) / n as f64 - 0.5;
        let mut out = Vec::with_capacity(self.count());
        for i in 0..self.radial {
            let a = offset(i, self.radial);
            for j in 0..self.tangential {
                let b = offset(j, self.tangential);
                let (qx, qy) = (self.u + a * er.0 + b * et.0, self.v + a * er.1 + b * et.1);
                let rq = qx.hypot(qy);
                if rq == 0.0 {
                    out.push((0.0, 0.0));
                    continue;
                }
                let s = lens.to_perspective(rq.min(lens.r_max()))? / rq;
                out.push((qx * s, qy * s));
            }
        }
        Ok(out)
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthSequence, SynthError> {
    generate_with(spec, Execution::default())
}

pub fn generate_with(spec: &SynthSpec, exec: Execution) -> Result<SynthSequence, SynthError> {
    let geom = spec.lens.geometry();
    if geom.fov_deg > MAX_SYNTH_FOV_DEG {
        return Err(SynthError::FovTooWide(geom.fov_deg));
    }
    if spec.frame_count < 2 {
        return Err(SynthError::FrameCount(spec.frame_count));
    }
    let (w, h) = (geom.width_px, geom.height_px);
    let (cx, cy) = ((w / 2) as f64, (h / 2) as f64);
    let (scx, scy) = {
        let c = spec.source.center();
        (c.0 as f64, c.1 as f64)
    };
    let need = required_source_size(&spec.lens, spec.shift, spec.frame_count)?;
    let offsets: Vec<(f64, f64)> = (0..spec.frame_count)
        .map(|k| {
            let k = k as f64;
            (scx + k * spec.shift.0 as f64, scy + k * spec.shift.1 as f64)
        })
        .collect();
    let pixels = exec.map(w * h, |i| -> Result<Vec<f32>, SynthError> {
        let (u, v) = ((i % w) as f64 - cx, (i / w) as f64 - cy);
        let footprint = match Footprint::at(&spec.lens, u, v)? {
            None => return Ok(vec![0.0; offsets.len()]),
            Some(fp) => fp,
        };
        let mut acc = vec![0.0; offsets.len()];
        for (px, py) in footprint.samples(&spec.lens)? {
            for (k, (a, &(ox, oy))) in acc.iter_mut().zip(&offsets).enumerate() {
                *a += spec.source.sample_cubic(ox + px, oy + py).ok_or(SynthError::Coverage {
                    frame: k,
                    x: i % w,
                    y: i / w,
                    need_w: need,
                    need_h: need,
                })?;
            }
        }
        let n = footprint.count() as f64;
        Ok(acc.into_iter().map(|a| (a / n).round() as f32).collect())
    });
    let pixels = pixels.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut frames = Vec::with_capacity(spec.frame_count);
    for k in 0..spec.frame_count {
        frames.push(Frame::new(w, h, pixels.iter().map(|p| p[k]).collect())?);
    }
    let truth = vec![MotionVector::new(spec.shift.0, spec.shift.1); spec.frame_count - 1];
    Ok(SynthSequence { frames, truth })
}
