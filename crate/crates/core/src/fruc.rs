//! Frame-rate up-conversion between a previous and a next frame.
//!
//! Motion compensated modes estimate a forward field (previous → next) and a
//! backward field (next → previous), expand both to one vector per pixel,
//! combine them with a central weighted median into a field valid at the
//! intermediate instant, and fetch from one or both frames along it. With
//! fisheye adaptation, blocks entirely inside the hybrid field of view are
//! estimated with EME+ or CME+ and every pixel gets its own fisheye-domain
//! vector; all other blocks use TME.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::blockmatch::{
    estimate_mixed, pixel_displacements, BlockMatchError, BlockRect, Method, MotionField,
    SearchConfig,
};
use crate::exec::Execution;
use crate::frames::{upscale_with, Frame, UpscaledFrame};
use crate::geometry::{GeometryError, IdentityMap, Lens, ProjectionModel, RadialMap};

/// Weight of the centre vector of each field in the median.
pub const CWM_CENTER_WEIGHT: usize = 7;
/// Cross taps per arm, at distances `b`, `2b`, `3b`.
pub const CWM_ARM_TAPS: usize = 3;

#[derive(Debug, Error)]
pub enum FrucError {
    #[error("frame sizes differ: {0:?} vs {1:?}")]
    SizeMismatch((usize, usize), (usize, usize)),
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("hybrid field of view {hybrid} must be positive and below the lens field of view {fov}")]
    HybridFov { hybrid: f64, fov: f64 },
    #[error("adaptation {adapt} needs a lens with the {expected} projection, got {got}")]
    AdaptModel {
        adapt: Adapt,
        expected: &'static str,
        got: String,
    },
    #[error("adaptation {0} needs a lens")]
    MissingLens(Adapt),
    #[error(transparent)]
    BlockMatch(#[from] BlockMatchError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Interpolation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrucMode {
    /// Frame repetition.
    Rep,
    /// Linear average.
    La,
    /// Motion compensated fetching from the previous frame.
    Mcf,
    /// Motion compensated linear average of both fetches.
    #[default]
    Mcla,
}

impl FromStr for FrucMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rep" => Ok(FrucMode::Rep),
            "la" => Ok(FrucMode::La),
            "mcf" => Ok(FrucMode::Mcf),
            "mcla" => Ok(FrucMode::Mcla),
            other => Err(format!("unknown mode `{other}` (rep, la, mcf, mcla)")),
        }
    }
}

impl fmt::Display for FrucMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrucMode::Rep => "rep",
            FrucMode::La => "la",
            FrucMode::Mcf => "mcf",
            FrucMode::Mcla => "mcla",
        })
    }
}

/// Fisheye adaptation of the motion estimation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Adapt {
    #[default]
    None,
    Equisolid,
    Calibrated,
}

impl Adapt {
    pub fn method(self) -> Option<Method> {
        match self {
            Adapt::None => None,
            Adapt::Equisolid => Some(Method::EmePlus),
            Adapt::Calibrated => Some(Method::CmePlus),
        }
    }
}

impl FromStr for Adapt {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Adapt::None),
            "equisolid" => Ok(Adapt::Equisolid),
            "calibrated" => Ok(Adapt::Calibrated),
            other => Err(format!("unknown adaptation `{other}` (none, equisolid, calibrated)")),
        }
    }
}

impl fmt::Display for Adapt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Adapt::None => "none",
            Adapt::Equisolid => "equisolid",
            Adapt::Calibrated => "calibrated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrucConfig {
    /// Temporal distance of the new frame from the next frame.
    pub alpha: f64,
    pub mode: FrucMode,
    pub adapt: Adapt,
    pub hybrid_fov_deg: f64,
    pub search: SearchConfig,
}

impl Default for FrucConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            mode: FrucMode::default(),
            adapt: Adapt::default(),
            hybrid_fov_deg: 170.0,
            search: SearchConfig::default(),
        }
    }
}

impl FrucConfig {
    pub fn with_mode(self, mode: FrucMode) -> Self {
        Self { mode, ..self }
    }

    pub fn with_adapt(self, adapt: Adapt) -> Self {
        Self { adapt, ..self }
    }

    pub fn validate(&self, lens: Option<&Lens>) -> Result<(), FrucError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(FrucError::Alpha(self.alpha));
        }
        self.search.validate()?;
        if self.adapt == Adapt::None || !matches!(self.mode, FrucMode::Mcf | FrucMode::Mcla) {
            return Ok(());
        }
        let lens = lens.ok_or(FrucError::MissingLens(self.adapt))?;
        let (ok, expected) = match self.adapt {
            Adapt::Equisolid => (matches!(lens.model(), ProjectionModel::Equisolid), "equisolid"),
            _ => (matches!(lens.model(), ProjectionModel::Calibrated(_)), "calibrated"),
        };
        if !ok {
            return Err(FrucError::AdaptModel {
                adapt: self.adapt,
                expected,
                got: lens.model().name().to_owned(),
            });
        }
        let fov = lens.geometry().fov_deg;
        if !(self.hybrid_fov_deg > 0.0 && self.hybrid_fov_deg < fov) {
            return Err(FrucError::HybridFov {
                hybrid: self.hybrid_fov_deg,
                fov,
            });
        }
        Ok(())
    }
}

/// Where a dense field came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Forward,
    Backward,
    Retimed,
}

/// One fisheye-domain vector per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMotionField {
    pub width: usize,
    pub height: usize,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub provenance: Provenance,
}

impl DenseMotionField {
    pub fn uniform(width: usize, height: usize, v: (f64, f64), provenance: Provenance) -> Self {
        Self {
            width,
            height,
            vx: vec![v.0; width * height],
            vy: vec![v.1; width * height],
            provenance,
        }
    }

    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.vx[i], self.vy[i])
    }

    pub fn negated(&self, provenance: Provenance) -> Self {
        Self {
            vx: self.vx.iter().map(|v| -v).collect(),
            vy: self.vy.iter().map(|v| -v).collect(),
            provenance,
            ..*self
        }
    }
}

/// Expands a block field to one vector per pixel. TME blocks pass their
/// vector to every pixel; projected blocks run each pixel through the
/// re-projection of the winning candidate.
pub fn densify<M: RadialMap + ?Sized>(
    field: &MotionField,
    width: usize,
    height: usize,
    map: &M,
    provenance: Provenance,
) -> Result<DenseMotionField, FrucError> {
    densify_with(field, width, height, map, provenance, Execution::default())
}

pub fn densify_with<M: RadialMap + ?Sized>(
    field: &MotionField,
    width: usize,
    height: usize,
    map: &M,
    provenance: Provenance,
    exec: Execution,
) -> Result<DenseMotionField, FrucError> {
    field.check_frame(width, height)?;
    let bs = field.config.block_size;
    let bx = field.blocks_x;
    let center = (width / 2, height / 2);
    let patches = exec.map(field.blocks.len(), |i| {
        let rect = BlockRect::of(i % bx, i / bx, bs, width, height);
        pixel_displacements(rect, &field.blocks[i], center, map)
    });
    let mut out = DenseMotionField::uniform(width, height, (0.0, 0.0), provenance);
    for (i, patch) in patches.into_iter().enumerate() {
        let rect = BlockRect::of(i % bx, i / bx, bs, width, height);
        for ((x, y), (vx, vy)) in rect.pixels().zip(patch?) {
            out.vx[y * width + x] = vx;
            out.vy[y * width + x] = vy;
        }
    }
    Ok(out)
}

/// Median of a multiset; the mean of the two middle values for even counts.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty set");
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Cross tap offsets in units of the block size.
fn cross_offsets() -> impl Iterator<Item = (i64, i64)> {
    [(1, 0), (-1, 0), (0, 1), (0, -1)]
        .into_iter()
        .flat_map(|(ax, ay)| (1..=CWM_ARM_TAPS as i64).map(move |k| (ax * k, ay * k)))
}

/// Central weighted median of the forward field and the negated backward
/// field. Per pixel and component the multiset holds each centre vector seven
/// times plus the taps of a cross at distances `b`, `2b`, `3b` from both
/// fields (38 values); taps outside the frame are dropped.
pub fn retime_cwm(fwd: &DenseMotionField, bwd: &DenseMotionField, b: usize) -> Result<DenseMotionField, FrucError> {
    retime_cwm_with(fwd, bwd, b, Execution::default())
}

pub fn retime_cwm_with(
    fwd: &DenseMotionField,
    bwd: &DenseMotionField,
    b: usize,
    exec: Execution,
) -> Result<DenseMotionField, FrucError> {
    let (w, h) = (fwd.width, fwd.height);
    if (bwd.width, bwd.height) != (w, h) {
        return Err(FrucError::SizeMismatch((w, h), (bwd.width, bwd.height)));
    }
    let offsets: Vec<(i64, i64)> = cross_offsets().map(|(x, y)| (x * b as i64, y * b as i64)).collect();
    let rows = exec.map(h, |y| {
        let mut xs = Vec::with_capacity(38);
        let mut ys = Vec::with_capacity(38);
        let mut out = Vec::with_capacity(w);
        for x in 0..w {
            xs.clear();
            ys.clear();
            let i = y * w + x;
            for _ in 0..CWM_CENTER_WEIGHT {
                xs.extend([fwd.vx[i], -bwd.vx[i]]);
                ys.extend([fwd.vy[i], -bwd.vy[i]]);
            }
            for &(ox, oy) in &offsets {
                let (tx, ty) = (x as i64 + ox, y as i64 + oy);
                if tx < 0 || ty < 0 || tx >= w as i64 || ty >= h as i64 {
                    continue;
                }
                let j = ty as usize * w + tx as usize;
                xs.extend([fwd.vx[j], -bwd.vx[j]]);
                ys.extend([fwd.vy[j], -bwd.vy[j]]);
            }
            out.push((median(&mut xs), median(&mut ys)));
        }
        out
    });
    let (vx, vy) = rows.into_iter().flatten().unzip();
    Ok(DenseMotionField {
        width: w,
        height: h,
        vx,
        vy,
        provenance: Provenance::Retimed,
    })
}

/// Per-block estimation class of the hybrid scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockClass {
    Adapted,
    Conventional,
}

/// Blocks whose four corner pixels all lie within the image circle of
/// `hybrid_fov_deg` are adapted; all others are conventional.
pub fn hybrid_region_split(lens: &Lens, hybrid_fov_deg: f64, block_size: usize) -> Result<Vec<BlockClass>, FrucError> {
    let geom = lens.geometry();
    if !(hybrid_fov_deg > 0.0 && hybrid_fov_deg <= geom.fov_deg) {
        return Err(FrucError::HybridFov {
            hybrid: hybrid_fov_deg,
            fov: geom.fov_deg,
        });
    }
    let radius = lens.project_theta((hybrid_fov_deg / 2.0).to_radians())?;
    let (w, h) = (geom.width_px, geom.height_px);
    let (bx, by) = crate::blockmatch::grid_dims(w, h, block_size);
    let center = (w / 2, h / 2);
    Ok((0..bx * by)
        .map(|i| {
            let rect = BlockRect::of(i % bx, i / bx, block_size, w, h);
            if rect.corners(center).iter().all(|c| c.x.hypot(c.y) <= radius) {
                BlockClass::Adapted
            } else {
                BlockClass::Conventional
            }
        })
        .collect())
}

/// Intermediate frame plus the pieces it was built from.
#[derive(Debug, Clone)]
pub struct FrucOutput {
    pub frame: Frame,
    /// `next(p + α·m)`; motion compensated modes only.
    pub forward_fetch: Option<Frame>,
    /// `prev(p − (1 − α)·m)`; motion compensated modes only.
    pub backward_fetch: Option<Frame>,
    pub retimed: Option<DenseMotionField>,
}

/// Creates the frame at `α` before `next`.
pub fn interpolate(prev: &Frame, next: &Frame, cfg: &FrucConfig, lens: Option<&Lens>) -> Result<Frame, FrucError> {
    Ok(interpolate_detailed(prev, next, cfg, lens, Execution::default())?.frame)
}

fn round_frame(w: usize, h: usize, luma: Vec<f32>) -> Frame {
    Frame::new(w, h, luma.into_iter().map(|v| v.round().clamp(0.0, 255.0)).collect())
        .expect("dimensions match the inputs")
}

pub fn interpolate_detailed(
    prev: &Frame,
    next: &Frame,
    cfg: &FrucConfig,
    lens: Option<&Lens>,
    exec: Execution,
) -> Result<FrucOutput, FrucError> {
    if prev.dims() != next.dims() {
        return Err(FrucError::SizeMismatch(prev.dims(), next.dims()));
    }
    cfg.validate(lens)?;
    let (w, h) = prev.dims();
    let alpha = cfg.alpha;
    let plain = |frame: Frame| FrucOutput {
        frame,
        forward_fetch: None,
        backward_fetch: None,
        retimed: None,
    };
    match cfg.mode {
        FrucMode::Rep => return Ok(plain(prev.clone())),
        FrucMode::La => {
            let luma = prev
                .luma()
                .iter()
                .zip(next.luma())
                .map(|(&p, &n)| (alpha * p as f64 + (1.0 - alpha) * n as f64) as f32)
                .collect();
            return Ok(plain(round_frame(w, h, luma)));
        }
        FrucMode::Mcf | FrucMode::Mcla => {}
    }

    let precision = cfg.search.precision;
    let prev_up = upscale_with(prev, precision, exec);
    let next_up = upscale_with(next, precision, exec);
    let retimed = match (cfg.adapt.method(), lens) {
        (Some(method), Some(lens)) => {
            let classes = hybrid_region_split(lens, cfg.hybrid_fov_deg, cfg.search.block_size)?;
            let methods: Vec<Method> = classes
                .iter()
                .map(|c| match c {
                    BlockClass::Adapted => method,
                    BlockClass::Conventional => Method::Tme,
                })
                .collect();
            retimed_field(prev, next, &prev_up, &next_up, cfg, lens, &methods, exec)?
        }
        _ => {
            let (bx, by) = crate::blockmatch::grid_dims(w, h, cfg.search.block_size);
            let methods = vec![Method::Tme; bx * by];
            retimed_field(prev, next, &prev_up, &next_up, cfg, &IdentityMap, &methods, exec)?
        }
    };

    let fetch = |up: &UpscaledFrame, scale: f64| {
        let luma = exec.map(w * h, |i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            up.sample(x + scale * retimed.vx[i], y + scale * retimed.vy[i])
        });
        Frame::new(w, h, luma).expect("dimensions match the inputs")
    };
    let fw = fetch(&next_up, alpha);
    let bw = fetch(&prev_up, -(1.0 - alpha));
    let frame = match cfg.mode {
        FrucMode::Mcf => round_frame(w, h, bw.luma().to_vec()),
        _ => {
            let luma = fw
                .luma()
                .iter()
                .zip(bw.luma())
                .map(|(&a, &b)| (0.5 * (a as f64 + b as f64)) as f32)
                .collect();
            round_frame(w, h, luma)
        }
    };
    Ok(FrucOutput {
        frame,
        forward_fetch: Some(fw),
        backward_fetch: Some(bw),
        retimed: Some(retimed),
    })
}

#[allow(clippy::too_many_arguments)]
fn retimed_field<M: RadialMap + ?Sized>(
    prev: &Frame,
    next: &Frame,
    prev_up: &UpscaledFrame,
    next_up: &UpscaledFrame,
    cfg: &FrucConfig,
    map: &M,
    methods: &[Method],
    exec: Execution,
) -> Result<DenseMotionField, FrucError> {
    let (w, h) = prev.dims();
    let search = &cfg.search;
    // forward: prev(p) ≈ next(p + m); backward: next(p) ≈ prev(p + m')
    let fwd: MotionField = estimate_mixed(prev, Some(next), next_up, search, map, methods, exec)?;
    let bwd: MotionField = estimate_mixed(next, Some(prev), prev_up, search, map, methods, exec)?;
    let fwd = densify_with(&fwd, w, h, map, Provenance::Forward, exec)?;
    let bwd = densify_with(&bwd, w, h, map, Provenance::Backward, exec)?;
    retime_cwm_with(&fwd, &bwd, search.block_size, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockmatch::{BlockMotion, MotionVector};
    use crate::geometry::CameraGeometry;

    fn ramp(w: usize, h: usize) -> Frame {
        Frame::from_fn(w, h, |x, y| ((x * 5 + y * 3) % 200) as f32 + 20.0)
    }

    #[test]
    fn rep_and_la() {
        let prev = Frame::filled(16, 16, 10.0);
        let next = Frame::filled(16, 16, 30.0);
        let cfg = FrucConfig {
            search: SearchConfig::new(8, 2, Method::Tme),
            ..FrucConfig::default()
        };
        let rep = interpolate(&prev, &next, &cfg.with_mode(FrucMode::Rep), None).unwrap();
        assert_eq!(rep, prev);
        let la = interpolate(&prev, &next, &cfg.with_mode(FrucMode::La), None).unwrap();
        assert!(la.luma().iter().all(|&v| v == 20.0));
        let la = interpolate(&prev, &next, &FrucConfig { alpha: 0.25, ..cfg.with_mode(FrucMode::La) }, None).unwrap();
        assert!(la.luma().iter().all(|&v| v == 25.0));
    }

    #[test]
    fn identity_for_every_mode() {
        let f = ramp(32, 32);
        let cfg = FrucConfig {
            search: SearchConfig::new(8, 3, Method::Tme),
            ..FrucConfig::default()
        };
        for mode in [FrucMode::Rep, FrucMode::La, FrucMode::Mcf, FrucMode::Mcla] {
            assert_eq!(interpolate(&f, &f, &cfg.with_mode(mode), None).unwrap(), f, "{mode}");
        }
    }

    #[test]
    fn config_checks() {
        let f = Frame::filled(16, 16, 0.0);
        let bad = FrucConfig { alpha: 1.0, ..FrucConfig::default() };
        assert!(matches!(interpolate(&f, &f, &bad, None), Err(FrucError::Alpha(_))));
        let adapt = FrucConfig::default().with_adapt(Adapt::Equisolid);
        assert!(matches!(interpolate(&f, &f, &adapt, None), Err(FrucError::MissingLens(_))));
        let lens = Lens::equisolid(CameraGeometry::reference_rig(16, 16)).unwrap();
        let calib = FrucConfig::default().with_adapt(Adapt::Calibrated);
        assert!(matches!(calib.validate(Some(&lens)), Err(FrucError::AdaptModel { .. })));
        let wide = FrucConfig { hybrid_fov_deg: 190.0, ..adapt };
        assert!(matches!(wide.validate(Some(&lens)), Err(FrucError::HybridFov { .. })));
        let g = Frame::filled(8, 16, 0.0);
        assert!(matches!(interpolate(&f, &g, &FrucConfig::default(), None), Err(FrucError::SizeMismatch(..))));
    }

    #[test]
    fn median_rules() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn cwm_constant_and_outlier() {
        let fwd = DenseMotionField::uniform(64, 64, (1.5, -2.0), Provenance::Forward);
        let bwd = fwd.negated(Provenance::Backward);
        let out = retime_cwm(&fwd, &bwd, 8).unwrap();
        assert!(out.vx.iter().all(|&v| v == 1.5) && out.vy.iter().all(|&v| v == -2.0));

        let mut fwd = DenseMotionField::uniform(64, 64, (0.0, 0.0), Provenance::Forward);
        let bwd = DenseMotionField::uniform(64, 64, (0.0, 0.0), Provenance::Backward);
        let i = 32 * 64 + 32;
        fwd.vx[i] = 100.0;
        fwd.vy[i] = 100.0;
        let out = retime_cwm(&fwd, &bwd, 8).unwrap();
        assert_eq!(out.at(32, 32), (0.0, 0.0));
    }

    #[test]
    fn cwm_counts_38_values_in_the_interior() {
        assert_eq!(cross_offsets().count(), 12);
        assert_eq!(2 * (CWM_CENTER_WEIGHT + cross_offsets().count()), 38);
    }

    #[test]
    fn densify_tme_is_block_constant() {
        let cfg = SearchConfig::new(8, 4, Method::Tme);
        let mut field = MotionField::zero(24, 16, cfg);
        for b in &mut field.blocks {
            b.vector = MotionVector::new(2, 0);
        }
        let dense = densify(&field, 24, 16, &IdentityMap, Provenance::Forward).unwrap();
        assert!(dense.vx.iter().all(|&v| v == 2.0) && dense.vy.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn densify_adapted_zero_field_is_zero() {
        let field = MotionField::zero(32, 32, SearchConfig::new(8, 4, Method::EmePlus));
        let max_abs = |fov: f64| {
            let lens = Lens::equisolid(CameraGeometry::reference_rig(32, 32).with_fov(fov)).unwrap();
            let dense = densify(&field, 32, 32, &lens, Provenance::Forward).unwrap();
            dense.vx.iter().chain(&dense.vy).fold(0.0f64, |a, v| a.max(v.abs()))
        };
        assert!(max_abs(170.0) < 1e-9);
        // the radial mirror beyond 90 degrees is approximate
        assert!(max_abs(185.0) < 1.0 / 16.0);
    }

    #[test]
    fn densify_adapted_shrinks_with_radius() {
        let lens = Lens::equisolid(CameraGeometry::reference_rig(128, 128).with_fov(170.0)).unwrap();
        let cfg = SearchConfig::new(16, 4, Method::EmePlus);
        let mut field = MotionField::zero(128, 128, cfg);
        *field.block_mut(5, 4) = BlockMotion {
            vector: MotionVector::new(4, 0),
            cost: 0.0,
            skipped: false,
            method: Method::EmePlus,
        };
        let dense = densify(&field, 128, 128, &lens, Provenance::Forward).unwrap();
        // block (5, 4) covers x in 80..96 on the centre row y = 64
        let row: Vec<f64> = (80..96).map(|x| dense.at(x, 64).0).collect();
        assert!(row.windows(2).all(|p| p[1] < p[0]));
        assert!(row.iter().all(|&v| v > 0.0 && v < 4.0));
        for (k, x) in (80..96).enumerate() {
            let r = (x - 64) as f64;
            let rp = lens.to_perspective(r).unwrap();
            let expected = lens.to_fisheye(rp + 4.0).unwrap() - r;
            assert!((row[k] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn hybrid_split_centre_and_corners() {
        let lens = Lens::equisolid(CameraGeometry::reference_rig(256, 256)).unwrap();
        let classes = hybrid_region_split(&lens, 170.0, 16).unwrap();
        assert_eq!(classes[8 * 16 + 8], BlockClass::Adapted);
        assert_eq!(classes[0], BlockClass::Conventional);
        let narrow = hybrid_region_split(&lens, 160.0, 16).unwrap();
        let count = |c: &[BlockClass]| c.iter().filter(|&&k| k == BlockClass::Adapted).count();
        assert!(count(&narrow) <= count(&classes));
    }
}
