//! Exhaustive block-matching motion estimation and motion compensation.
//!
//! Three flavours share one search loop:
//!
//! * **TME**: conventional translational block matching on integer pixels.
//! * **EME+**: candidates are added on the perspective plane reached through
//!   the equisolid projection, then re-projected into the fisheye image, with
//!   ultra wide-angle compensation beyond 90°.
//! * **CME+**: as EME+ with a calibrated projection.
//!
//! A candidate `(dx, dy)` reads the reference at `current position + (dx, dy)`
//! (in the perspective domain for EME+/CME+). Among equal costs the candidate
//! with the smaller `|dx| + |dy|` wins, then the earlier one in raster order
//! (`dy`, then `dx`), so results never depend on evaluation order.

use std::cmp::Ordering;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::exec::Execution;
use crate::frames::{upscale_with, Frame, UpscaledFrame};
use crate::geometry::{CartCoord, GeometryError, Lens, PerspectiveRay, ProjectionModel, RadialMap};

/// Header of the motion field CSV format.
pub const FIELD_HEADER: &str = "bx,by,dx,dy,cost,skipped,method,block,range,precision";

/// Block sizes accepted by [`SearchConfig`].
pub const BLOCK_SIZES: [usize; 4] = [8, 16, 32, 64];

#[derive(Debug, Error)]
pub enum BlockMatchError {
    #[error("frame sizes differ: {0:?} vs {1:?}")]
    SizeMismatch((usize, usize), (usize, usize)),
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("method {method} cannot run with the {model} projection")]
    MethodMismatch { method: Method, model: String },
    #[error("motion field does not fit the frame: {0}")]
    FieldMismatch(String),
    #[error("motion field parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("motion field I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Block matching error criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// Sum of squared differences.
    #[default]
    Ssd,
    /// Sum of absolute differences.
    Sad,
}

impl Metric {
    #[inline]
    pub fn term(self, diff: f64) -> f64 {
        match self {
            Metric::Ssd => diff * diff,
            Metric::Sad => diff.abs(),
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ssd" => Ok(Metric::Ssd),
            "sad" => Ok(Metric::Sad),
            other => Err(format!("unknown metric `{other}` (ssd, sad)")),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Ssd => "ssd",
            Metric::Sad => "sad",
        })
    }
}

/// Motion estimation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Method {
    /// Translational block matching.
    #[default]
    Tme,
    /// Equisolid re-projection with ultra wide-angle compensation.
    EmePlus,
    /// Calibrated re-projection with ultra wide-angle compensation.
    CmePlus,
}

impl Method {
    pub fn is_projected(self) -> bool {
        self != Method::Tme
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tme => "tme",
            Method::EmePlus => "eme+",
            Method::CmePlus => "cme+",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tme" => Ok(Method::Tme),
            "eme+" | "eme" => Ok(Method::EmePlus),
            "cme+" | "cme" => Ok(Method::CmePlus),
            other => Err(format!("unknown method `{other}` (tme, eme+, cme+)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Integer displacement; perspective-domain for EME+/CME+, image-domain for
/// TME.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MotionVector {
    pub dx: i32,
    pub dy: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { dx: 0, dy: 0 };

    pub const fn new(dx: i32, dy: i32) -> Self {
        Self { dx, dy }
    }

    pub fn l1(self) -> i32 {
        self.dx.abs() + self.dy.abs()
    }

    /// Tie-break order: smaller `|dx| + |dy|`, then raster order.
    fn tie_key(self) -> (i32, i32, i32) {
        (self.l1(), self.dy, self.dx)
    }
}

/// Returns true if `(cost, mv)` beats `(best_cost, best)` under the cost
/// minimum and tie-break rule.
#[inline]
pub fn is_better(cost: f64, mv: MotionVector, best_cost: f64, best: MotionVector) -> bool {
    match cost.partial_cmp(&best_cost) {
        Some(Ordering::Less) => true,
        Some(Ordering::Equal) => mv.tie_key() < best.tie_key(),
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub block_size: usize,
    /// Search range `s`; `(2s + 1)²` candidates per block.
    pub range: i32,
    /// Sub-pel denominator of the reference sampling grid.
    pub precision: usize,
    pub metric: Metric,
    pub method: Method,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            block_size: 16,
            range: 64,
            precision: 8,
            metric: Metric::Ssd,
            method: Method::Tme,
        }
    }
}

impl SearchConfig {
    pub fn new(block_size: usize, range: i32, method: Method) -> Self {
        Self {
            block_size,
            range,
            method,
            ..Self::default()
        }
    }

    pub fn with_metric(self, metric: Metric) -> Self {
        Self { metric, ..self }
    }

    pub fn with_method(self, method: Method) -> Self {
        Self { method, ..self }
    }

    pub fn validate(&self) -> Result<(), BlockMatchError> {
        if !BLOCK_SIZES.contains(&self.block_size) {
            return Err(BlockMatchError::InvalidConfig(format!(
                "block size {} not in {BLOCK_SIZES:?}",
                self.block_size
            )));
        }
        if self.range <= 0 {
            return Err(BlockMatchError::InvalidConfig(format!(
                "search range must be positive, got {}",
                self.range
            )));
        }
        if self.precision == 0 {
            return Err(BlockMatchError::InvalidConfig("precision must be at least 1".into()));
        }
        Ok(())
    }

    pub fn candidate_count(&self) -> usize {
        let side = (2 * self.range + 1) as usize;
        side * side
    }
}

/// Pixel rectangle of one block, clipped to the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BlockRect {
    pub fn of(bx: usize, by: usize, block: usize, width: usize, height: usize) -> Self {
        let (x, y) = (bx * block, by * block);
        Self {
            x,
            y,
            w: block.min(width - x),
            h: block.min(height - y),
        }
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y..self.y + self.h).flat_map(move |y| (self.x..self.x + self.w).map(move |x| (x, y)))
    }

    /// Pixel-centre corners relative to the frame centre.
    pub fn corners(&self, center: (usize, usize)) -> [CartCoord; 4] {
        let (cx, cy) = (center.0 as f64, center.1 as f64);
        let (x0, y0) = (self.x as f64 - cx, self.y as f64 - cy);
        let (x1, y1) = (x0 + self.w as f64 - 1.0, y0 + self.h as f64 - 1.0);
        [
            CartCoord::new(x0, y0),
            CartCoord::new(x1, y0),
            CartCoord::new(x0, y1),
            CartCoord::new(x1, y1),
        ]
    }
}

/// Estimation result for one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMotion {
    pub vector: MotionVector,
    pub cost: f64,
    /// Block lies entirely outside the image circle.
    pub skipped: bool,
    pub method: Method,
}

/// Per-block motion vectors in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub config: SearchConfig,
    pub blocks: Vec<BlockMotion>,
}

impl MotionField {
    /// Field of zero vectors for a frame of the given size.
    pub fn zero(width: usize, height: usize, config: SearchConfig) -> Self {
        let (bx, by) = grid_dims(width, height, config.block_size);
        Self {
            blocks_x: bx,
            blocks_y: by,
            config,
            blocks: vec![
                BlockMotion {
                    vector: MotionVector::ZERO,
                    cost: 0.0,
                    skipped: false,
                    method: config.method,
                };
                bx * by
            ],
        }
    }

    pub fn block(&self, bx: usize, by: usize) -> &BlockMotion {
        &self.blocks[by * self.blocks_x + bx]
    }

    pub fn block_mut(&mut self, bx: usize, by: usize) -> &mut BlockMotion {
        &mut self.blocks[by * self.blocks_x + bx]
    }

    pub fn vectors(&self) -> impl Iterator<Item = MotionVector> + '_ {
        self.blocks.iter().map(|b| b.vector)
    }

    pub fn total_cost(&self) -> f64 {
        self.blocks.iter().map(|b| b.cost).sum()
    }

    pub fn check_frame(&self, width: usize, height: usize) -> Result<(), BlockMatchError> {
        let dims = grid_dims(width, height, self.config.block_size);
        if dims != (self.blocks_x, self.blocks_y) {
            return Err(BlockMatchError::FieldMismatch(format!(
                "field has {}x{} blocks, frame {width}x{height} needs {}x{}",
                self.blocks_x, self.blocks_y, dims.0, dims.1
            )));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.blocks.len() + 1));
        out.push_str(FIELD_HEADER);
        out.push('\n');
        for by in 0..self.blocks_y {
            for bx in 0..self.blocks_x {
                let b = self.block(bx, by);
                let _ = writeln!(
                    out,
                    "{bx},{by},{},{},{},{},{},{},{},{}",
                    b.vector.dx,
                    b.vector.dy,
                    b.cost,
                    u8::from(b.skipped),
                    b.method,
                    self.config.block_size,
                    self.config.range,
                    self.config.precision
                );
            }
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), BlockMatchError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, BlockMatchError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses the CSV format. The metric is not part of the format and is set
    /// to the default.
    pub fn parse(text: &str) -> Result<Self, BlockMatchError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == FIELD_HEADER => {}
            _ => {
                return Err(BlockMatchError::Parse {
                    line: 1,
                    message: format!("expected header `{FIELD_HEADER}`"),
                })
            }
        }
        let mut rows = Vec::new();
        let mut config: Option<SearchConfig> = None;
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| BlockMatchError::Parse {
                line: line_no,
                message,
            };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 10 {
                return Err(err(format!("expected 10 fields, found {}", f.len())));
            }
            fn num<T: FromStr>(s: &str, what: &str) -> Result<T, String>
            where
                T::Err: fmt::Display,
            {
                s.parse::<T>().map_err(|e| format!("{what} `{s}`: {e}"))
            }
            let bx: usize = num(f[0], "bx").map_err(err)?;
            let by: usize = num(f[1], "by").map_err(err)?;
            let dx: i32 = num(f[2], "dx").map_err(err)?;
            let dy: i32 = num(f[3], "dy").map_err(err)?;
            let cost: f64 = num(f[4], "cost").map_err(err)?;
            let skipped = match f[5] {
                "0" => false,
                "1" => true,
                s => return Err(err(format!("skipped must be 0 or 1, got `{s}`"))),
            };
            let method: Method = f[6].parse().map_err(err)?;
            let row_cfg = SearchConfig {
                block_size: num(f[7], "block").map_err(err)?,
                range: num(f[8], "range").map_err(err)?,
                precision: num(f[9], "precision").map_err(err)?,
                metric: Metric::default(),
                method,
            };
            match &config {
                None => config = Some(row_cfg),
                Some(c) => {
                    if (c.block_size, c.range, c.precision)
                        != (row_cfg.block_size, row_cfg.range, row_cfg.precision)
                    {
                        return Err(err("configuration differs between rows".into()));
                    }
                }
            }
            rows.push((bx, by, BlockMotion {
                vector: MotionVector::new(dx, dy),
                cost,
                skipped,
                method,
            }));
        }
        let mut config = config.ok_or(BlockMatchError::Parse {
            line: 2,
            message: "no blocks".into(),
        })?;
        let blocks_x = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
        let blocks_y = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
        if rows.len() != blocks_x * blocks_y {
            return Err(BlockMatchError::Parse {
                line: rows.len() + 1,
                message: format!("expected {} rows for a {blocks_x}x{blocks_y} grid", blocks_x * blocks_y),
            });
        }
        // field-level tag: any projected method, else TME
        config.method = rows
            .iter()
            .map(|r| r.2.method)
            .find(|m| m.is_projected())
            .unwrap_or(Method::Tme);
        let mut blocks = vec![None; blocks_x * blocks_y];
        for (bx, by, b) in rows {
            let slot = &mut blocks[by * blocks_x + bx];
            if slot.is_some() {
                return Err(BlockMatchError::Parse {
                    line: 0,
                    message: format!("duplicate block ({bx}, {by})"),
                });
            }
            *slot = Some(b);
        }
        Ok(Self {
            blocks_x,
            blocks_y,
            config,
            blocks: blocks.into_iter().map(|b| b.expect("all slots filled")).collect(),
        })
    }
}

/// Number of blocks per row and column.
pub fn grid_dims(width: usize, height: usize, block: usize) -> (usize, usize) {
    (width.div_ceil(block), height.div_ceil(block))
}

fn check_sizes(a: &Frame, b: &Frame) -> Result<(), BlockMatchError> {
    if a.dims() != b.dims() {
        return Err(BlockMatchError::SizeMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// Translational matching cost of one block against the reference sampled
/// at integer offsets.
pub fn block_cost(
    cur: &Frame,
    ref_up: &UpscaledFrame,
    rect: BlockRect,
    candidate: MotionVector,
    metric: Metric,
) -> f64 {
    let k = ref_up.factor() as i64;
    rect.pixels()
        .map(|(x, y)| {
            let r = ref_up.at_grid(
                (x as i64 + candidate.dx as i64) * k,
                (y as i64 + candidate.dy as i64) * k,
            );
            metric.term(cur.get(x, y) as f64 - r as f64)
        })
        .sum()
}

/// Candidates in search order: zero first, then raster order.
fn candidates(range: i32) -> impl Iterator<Item = MotionVector> {
    std::iter::once(MotionVector::ZERO).chain(
        (-range..=range)
            .flat_map(move |dy| (-range..=range).map(move |dx| MotionVector::new(dx, dy)))
            .filter(|mv| *mv != MotionVector::ZERO),
    )
}

/// Exhaustive minimisation over all candidates. `cost(mv, bound)` may stop
/// early and return any value above `bound` once the partial sum exceeds it.
fn search(range: i32, mut cost: impl FnMut(MotionVector, f64) -> f64) -> (MotionVector, f64) {
    let mut best = MotionVector::ZERO;
    let mut best_cost = f64::INFINITY;
    for mv in candidates(range) {
        let c = cost(mv, best_cost);
        if is_better(c, mv, best_cost, best) {
            best = mv;
            best_cost = c;
        }
    }
    (best, best_cost)
}

fn tme_block(cur: &Frame, reference: &Frame, rect: BlockRect, cfg: &SearchConfig) -> BlockMotion {
    let metric = cfg.metric;
    let (vector, cost) = search(cfg.range, |mv, bound| {
        let mut acc = 0.0;
        for y in rect.y..rect.y + rect.h {
            let ry = y as i64 + mv.dy as i64;
            for x in rect.x..rect.x + rect.w {
                let r = reference.get_or_zero(x as i64 + mv.dx as i64, ry);
                acc += metric.term(cur.get(x, y) as f64 - r as f64);
            }
            if acc > bound {
                return acc;
            }
        }
        acc
    });
    BlockMotion {
        vector,
        cost,
        skipped: false,
        method: Method::Tme,
    }
}

/// Perspective ray of one block pixel together with its current sample.
#[derive(Debug, Clone, Copy)]
struct RayPixel {
    ray: PerspectiveRay,
    value: f32,
}

fn centred(x: usize, y: usize, center: (usize, usize)) -> CartCoord {
    CartCoord::new(x as f64 - center.0 as f64, y as f64 - center.1 as f64)
}

fn block_rays<M: RadialMap + ?Sized>(
    cur: &Frame,
    rect: BlockRect,
    map: &M,
) -> Result<Vec<RayPixel>, GeometryError> {
    let center = cur.center();
    let mut rays = Vec::with_capacity(rect.w * rect.h);
    for (x, y) in rect.pixels() {
        if let Some(ray) = PerspectiveRay::from_fisheye(centred(x, y, center), map)? {
            rays.push(RayPixel {
                ray,
                value: cur.get(x, y),
            });
        }
    }
    Ok(rays)
}

#[inline]
fn fetch<M: RadialMap + ?Sized>(ref_up: &UpscaledFrame, ray: &PerspectiveRay, dx: f64, dy: f64, map: &M) -> f32 {
    match ray.displaced(dx, dy, map) {
        Some(c) => ref_up.sample_centered(c.x, c.y),
        None => 0.0,
    }
}

fn projected_block<M: RadialMap + ?Sized>(
    cur: &Frame,
    ref_up: &UpscaledFrame,
    rect: BlockRect,
    cfg: &SearchConfig,
    method: Method,
    map: &M,
) -> Result<BlockMotion, GeometryError> {
    let rays = block_rays(cur, rect, map)?;
    if rays.is_empty() {
        return Ok(BlockMotion {
            vector: MotionVector::ZERO,
            cost: 0.0,
            skipped: true,
            method,
        });
    }
    let metric = cfg.metric;
    let (vector, cost) = search(cfg.range, |mv, bound| {
        let (dx, dy) = (mv.dx as f64, mv.dy as f64);
        let mut acc = 0.0;
        for (i, p) in rays.iter().enumerate() {
            let r = fetch(ref_up, &p.ray, dx, dy, map);
            acc += metric.term(p.value as f64 - r as f64);
            if i % 16 == 15 && acc > bound {
                return acc;
            }
        }
        acc
    });
    Ok(BlockMotion {
        vector,
        cost,
        skipped: false,
        method,
    })
}

/// Conventional translational block matching (TME).
pub fn estimate_tme(cur: &Frame, reference: &Frame, cfg: &SearchConfig) -> Result<MotionField, BlockMatchError> {
    estimate_tme_with(cur, reference, cfg, Execution::default())
}

pub fn estimate_tme_with(
    cur: &Frame,
    reference: &Frame,
    cfg: &SearchConfig,
    exec: Execution,
) -> Result<MotionField, BlockMatchError> {
    check_sizes(cur, reference)?;
    cfg.validate()?;
    let (w, h) = cur.dims();
    let (bx, by) = grid_dims(w, h, cfg.block_size);
    let blocks = exec.map(bx * by, |i| {
        let rect = BlockRect::of(i % bx, i / bx, cfg.block_size, w, h);
        tme_block(cur, reference, rect, cfg)
    });
    Ok(MotionField {
        blocks_x: bx,
        blocks_y: by,
        config: cfg.with_method(Method::Tme),
        blocks,
    })
}

/// Projection-aware block matching (EME+ / CME+) through `map`.
///
/// Blocks entirely outside the image circle are skipped with a zero vector
/// and zero cost. Pixels outside the circle do not contribute to the cost of
/// partially covered blocks.
pub fn estimate_projected<M: RadialMap + ?Sized>(
    cur: &Frame,
    reference: &Frame,
    cfg: &SearchConfig,
    map: &M,
) -> Result<MotionField, BlockMatchError> {
    let exec = Execution::default();
    let ref_up = upscale_with(reference, cfg.precision.max(1), exec);
    estimate_projected_with(cur, &ref_up, cfg, map, exec)
}

pub fn estimate_projected_with<M: RadialMap + ?Sized>(
    cur: &Frame,
    ref_up: &UpscaledFrame,
    cfg: &SearchConfig,
    map: &M,
    exec: Execution,
) -> Result<MotionField, BlockMatchError> {
    if !cfg.method.is_projected() {
        return Err(BlockMatchError::InvalidConfig(
            "projected estimation needs method eme+ or cme+".into(),
        ));
    }
    let (w, h) = cur.dims();
    let (bx, by) = grid_dims(w, h, cfg.block_size);
    let methods = vec![cfg.method; bx * by];
    estimate_mixed(cur, None, ref_up, cfg, map, &methods, exec)
}

/// Block matching with a per-block method choice. TME blocks need the
/// integer reference `reference`; when absent they are sampled from the
/// upscaled reference at integer nodes, which holds the same values.
pub fn estimate_mixed<M: RadialMap + ?Sized>(
    cur: &Frame,
    reference: Option<&Frame>,
    ref_up: &UpscaledFrame,
    cfg: &SearchConfig,
    map: &M,
    methods: &[Method],
    exec: Execution,
) -> Result<MotionField, BlockMatchError> {
    cfg.validate()?;
    if cur.dims() != ref_up.source_dims() {
        return Err(BlockMatchError::SizeMismatch(cur.dims(), ref_up.source_dims()));
    }
    if let Some(r) = reference {
        check_sizes(cur, r)?;
    }
    if ref_up.factor() != cfg.precision {
        return Err(BlockMatchError::InvalidConfig(format!(
            "reference upscaled by {} but precision is {}",
            ref_up.factor(),
            cfg.precision
        )));
    }
    let (w, h) = cur.dims();
    let (bx, by) = grid_dims(w, h, cfg.block_size);
    if methods.len() != bx * by {
        return Err(BlockMatchError::FieldMismatch(format!(
            "{} method assignments for {} blocks",
            methods.len(),
            bx * by
        )));
    }
    let blocks = exec.map(bx * by, |i| {
        let rect = BlockRect::of(i % bx, i / bx, cfg.block_size, w, h);
        match (methods[i], reference) {
            (Method::Tme, Some(r)) => Ok(tme_block(cur, r, rect, cfg)),
            (Method::Tme, None) => Ok(tme_block_upscaled(cur, ref_up, rect, cfg)),
            (m, _) => projected_block(cur, ref_up, rect, cfg, m, map),
        }
    });
    let blocks = blocks.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(MotionField {
        blocks_x: bx,
        blocks_y: by,
        config: *cfg,
        blocks,
    })
}

fn tme_block_upscaled(cur: &Frame, ref_up: &UpscaledFrame, rect: BlockRect, cfg: &SearchConfig) -> BlockMotion {
    let (vector, cost) = search(cfg.range, |mv, _| block_cost(cur, ref_up, rect, mv, cfg.metric));
    BlockMotion {
        vector,
        cost,
        skipped: false,
        method: Method::Tme,
    }
}

/// Checks that a lens model fits the projected method.
pub fn check_method_model(method: Method, model: &ProjectionModel) -> Result<(), BlockMatchError> {
    let ok = match method {
        Method::Tme => true,
        Method::EmePlus => matches!(model, ProjectionModel::Equisolid),
        Method::CmePlus => matches!(model, ProjectionModel::Calibrated(_)),
    };
    if ok {
        Ok(())
    } else {
        Err(BlockMatchError::MethodMismatch {
            method,
            model: model.name().to_owned(),
        })
    }
}

/// Runs the method selected in `cfg`: TME ignores the lens, EME+ requires an
/// equisolid lens and CME+ a calibrated one.
pub fn estimate(
    cur: &Frame,
    reference: &Frame,
    cfg: &SearchConfig,
    lens: &Lens,
) -> Result<MotionField, BlockMatchError> {
    check_method_model(cfg.method, lens.model())?;
    match cfg.method {
        Method::Tme => estimate_tme(cur, reference, cfg),
        _ => estimate_projected(cur, reference, cfg, lens),
    }
}

/// Motion compensated prediction of the current frame from `reference`.
pub fn compensate<M: RadialMap + ?Sized>(
    reference: &Frame,
    field: &MotionField,
    map: &M,
) -> Result<Frame, BlockMatchError> {
    let exec = Execution::default();
    let needs_up = field.blocks.iter().any(|b| b.method.is_projected());
    let ref_up = if needs_up {
        upscale_with(reference, field.config.precision.max(1), exec)
    } else {
        upscale_with(reference, 1, exec)
    };
    compensate_upscaled(&ref_up, field, map, exec)
}

/// Like [`compensate`] with a precomputed upscaled reference.
pub fn compensate_upscaled<M: RadialMap + ?Sized>(
    ref_up: &UpscaledFrame,
    field: &MotionField,
    map: &M,
    exec: Execution,
) -> Result<Frame, BlockMatchError> {
    let (w, h) = ref_up.source_dims();
    field.check_frame(w, h)?;
    let needs_up = field.blocks.iter().any(|b| b.method.is_projected());
    if needs_up && ref_up.factor() != field.config.precision {
        return Err(BlockMatchError::InvalidConfig(format!(
            "reference upscaled by {} but field precision is {}",
            ref_up.factor(),
            field.config.precision
        )));
    }
    let center = (w / 2, h / 2);
    let k = ref_up.factor() as i64;
    let bs = field.config.block_size;
    let bx = field.blocks_x;
    let patches = exec.map(bx * field.blocks_y, |i| -> Result<Vec<f32>, GeometryError> {
        let rect = BlockRect::of(i % bx, i / bx, bs, w, h);
        let b = &field.blocks[i];
        if b.skipped {
            return Ok(vec![0.0; rect.w * rect.h]);
        }
        let (dx, dy) = (b.vector.dx, b.vector.dy);
        if b.method == Method::Tme {
            return Ok(rect
                .pixels()
                .map(|(x, y)| ref_up.at_grid((x as i64 + dx as i64) * k, (y as i64 + dy as i64) * k))
                .collect());
        }
        rect.pixels()
            .map(|(x, y)| {
                Ok(match PerspectiveRay::from_fisheye(centred(x, y, center), map)? {
                    Some(ray) => fetch(ref_up, &ray, dx as f64, dy as f64, map),
                    None => 0.0,
                })
            })
            .collect()
    });
    let mut out = Frame::filled(w, h, 0.0);
    for (i, patch) in patches.into_iter().enumerate() {
        let patch = patch?;
        let rect = BlockRect::of(i % bx, i / bx, bs, w, h);
        for ((x, y), v) in rect.pixels().zip(patch) {
            out.set(x, y, v);
        }
    }
    Ok(out)
}

/// Fisheye-domain displacement of every pixel of a block under its vector.
/// TME blocks yield the block vector for every pixel; projected blocks run
/// each pixel through the re-projection. Pixels outside the image circle and
/// skipped blocks yield zero.
pub(crate) fn pixel_displacements<M: RadialMap + ?Sized>(
    rect: BlockRect,
    block: &BlockMotion,
    center: (usize, usize),
    map: &M,
) -> Result<Vec<(f64, f64)>, GeometryError> {
    if block.skipped {
        return Ok(vec![(0.0, 0.0); rect.w * rect.h]);
    }
    let (dx, dy) = (block.vector.dx as f64, block.vector.dy as f64);
    if block.method == Method::Tme {
        return Ok(vec![(dx, dy); rect.w * rect.h]);
    }
    rect.pixels()
        .map(|(x, y)| {
            let c = centred(x, y, center);
            Ok(match PerspectiveRay::from_fisheye(c, map)? {
                Some(ray) => match ray.displaced(dx, dy, map) {
                    Some(t) => (t.x - c.x, t.y - c.y),
                    None => (0.0, 0.0),
                },
                None => (0.0, 0.0),
            })
        })
        .collect()
}
