//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data errors (missing
//! or malformed files, geometry or estimation failures).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::blockmatch::{
    check_method_model, compensate_upscaled, estimate_projected_with, estimate_tme_with, Method,
    Metric, MotionField, SearchConfig,
};
use crate::exec::Execution;
use crate::frames::{load_frame, make_mask, save_frame, upscale_with, CircularMask, Frame};
use crate::fruc::{interpolate_detailed, Adapt, FrucConfig, FrucMode};
use crate::geometry::{load_calibration, CameraGeometry, Lens, ProjectionModel};
use crate::metrics::{evaluate, summarize, MetricReport};
use crate::synth::{generate_with, required_source_size, texture, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Header of the `metrics` output.
pub const METRICS_HEADER: &str = "frame,psnr_db,ssim,masked_pixels";
/// Header of the `batch` output.
pub const BATCH_HEADER: &str = "pair,reference,current,psnr_db,ssim,masked_pixels,infinite_psnr";

#[derive(Debug, Parser)]
#[command(name = "fisheye-me", version, about = "Projection-aware motion estimation for fisheye video")]
pub struct Cli {
    /// Run every stage on a single thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate motion between a reference and a current frame.
    Estimate {
        reference: PathBuf,
        current: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        lens: LensArgs,
        /// Output directory for field.csv and compensated.png.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Predict a frame from a reference and a motion field CSV.
    Compensate {
        reference: PathBuf,
        field: PathBuf,
        #[command(flatten)]
        lens: LensArgs,
        /// Output image (.png or .pgm).
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Create the intermediate frame between two frames.
    Fruc {
        prev: PathBuf,
        next: PathBuf,
        #[arg(long, default_value = "mcla")]
        mode: FrucMode,
        #[arg(long, default_value = "none")]
        adapt: Adapt,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long = "hybrid-fov", default_value_t = 170.0)]
        hybrid_fov: f64,
        /// Ground-truth intermediate frame to score against.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Directory to write both one-sided fetches into.
        #[arg(long)]
        fetches: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        lens: LensArgs,
        /// Output image (.png or .pgm).
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Render a synthetic fisheye sequence with known motion.
    Generate {
        #[arg(long, default_value_t = 512)]
        width: usize,
        /// Defaults to the width.
        #[arg(long)]
        height: Option<usize>,
        #[arg(long = "shift-x", default_value_t = 4, allow_hyphen_values = true)]
        shift_x: i32,
        #[arg(long = "shift-y", default_value_t = 0, allow_hyphen_values = true)]
        shift_y: i32,
        #[arg(long, default_value_t = 2)]
        frames: usize,
        /// Seed of the procedural source texture.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Perspective source image instead of the procedural texture.
        #[arg(long)]
        source: Option<PathBuf>,
        #[command(flatten)]
        lens: LensArgs,
        /// Output directory.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score test frames against a reference inside the image circle.
    Metrics {
        reference: PathBuf,
        #[arg(required = true)]
        tests: Vec<PathBuf>,
        #[command(flatten)]
        lens: LensArgs,
    },
    /// Estimate, compensate and score every pair of a manifest.
    Batch {
        /// CSV with header `reference,current`; relative paths are resolved
        /// against the manifest directory.
        manifest: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        lens: LensArgs,
        /// Output CSV; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[arg(long, default_value = "tme")]
    pub method: Method,
    #[arg(long, default_value_t = 16)]
    pub block: usize,
    #[arg(long, default_value_t = 64)]
    pub range: i32,
    #[arg(long, default_value_t = 8)]
    pub precision: usize,
    #[arg(long, default_value = "ssd")]
    pub metric: Metric,
}

impl SearchArgs {
    fn config(&self) -> SearchConfig {
        SearchConfig {
            block_size: self.block,
            range: self.range,
            precision: self.precision,
            metric: self.metric,
            method: self.method,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LensArgs {
    /// Lens field of view in degrees.
    #[arg(long, default_value_t = 185.0)]
    pub fov: f64,
    #[arg(long = "focal-mm", default_value_t = 1.8)]
    pub focal_mm: f64,
    /// Width of the square sensor in millimetres.
    #[arg(long = "sensor-mm", default_value_t = 5.2)]
    pub sensor_mm: f64,
    /// Calibration lookup table; selects the calibrated projection.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Field of view of the evaluation mask; defaults to the lens field of view.
    #[arg(long = "mask-fov")]
    pub mask_fov: Option<f64>,
}

impl LensArgs {
    fn lens(&self, width: usize, height: usize) -> Result<Lens, CliError> {
        let geom = CameraGeometry::new(self.focal_mm, self.fov, self.sensor_mm, width, height)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let model = match &self.calib {
            Some(path) => ProjectionModel::Calibrated(Arc::new(
                load_calibration(path).map_err(|e| data(path, e))?,
            )),
            None => ProjectionModel::Equisolid,
        };
        Lens::new(model, geom).map_err(|e| CliError::Data(e.to_string()))
    }

    fn mask(&self, lens: &Lens) -> Result<CircularMask, CliError> {
        make_mask(lens, self.mask_fov).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

fn data(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<Frame, CliError> {
    load_frame(path).map_err(|e| CliError::Data(e.to_string()))
}

fn load_pair(a: &Path, b: &Path) -> Result<(Frame, Frame), CliError> {
    let (fa, fb) = (load(a)?, load(b)?);
    if fa.dims() != fb.dims() {
        return Err(CliError::Data(format!(
            "{} is {:?} but {} is {:?}",
            a.display(),
            fa.dims(),
            b.display(),
            fb.dims()
        )));
    }
    Ok((fa, fb))
}

fn save(frame: &Frame, path: &Path) -> Result<(), CliError> {
    save_frame(frame, path).map_err(|e| CliError::Data(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| data(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| data(path, e))
}

fn report_row(label: &str, r: &MetricReport) -> String {
    format!("{label},{},{:.6},{}", r.psnr, r.ssim, r.pixel_count)
}

/// Runs the CLI with `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match dispatch(cli.command, exec, out) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Data(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_DATA
        }
    }
}

fn dispatch(command: Command, exec: Execution, out: &mut dyn Write) -> Result<(), CliError> {
    let text = match command {
        Command::Estimate {
            reference,
            current,
            search,
            lens,
            out: dir,
        } => cmd_estimate(&reference, &current, &search, &lens, &dir, exec)?,
        Command::Compensate {
            reference,
            field,
            lens,
            out: path,
        } => cmd_compensate(&reference, &field, &lens, &path, exec)?,
        Command::Fruc {
            prev,
            next,
            mode,
            adapt,
            alpha,
            hybrid_fov,
            truth,
            fetches,
            search,
            lens,
            out: path,
        } => {
            let cfg = FrucConfig {
                alpha,
                mode,
                adapt,
                hybrid_fov_deg: hybrid_fov,
                search: search.config().with_method(Method::Tme),
            };
            cmd_fruc(&prev, &next, &cfg, truth.as_deref(), fetches.as_deref(), &lens, &path, exec)?
        }
        Command::Generate {
            width,
            height,
            shift_x,
            shift_y,
            frames,
            seed,
            source,
            lens,
            out: dir,
        } => cmd_generate(
            width,
            height.unwrap_or(width),
            (shift_x, shift_y),
            frames,
            seed,
            source.as_deref(),
            &lens,
            &dir,
            exec,
        )?,
        Command::Metrics {
            reference,
            tests,
            lens,
        } => cmd_metrics(&reference, &tests, &lens)?,
        Command::Batch {
            manifest,
            search,
            lens,
            out: path,
        } => {
            let csv = cmd_batch(&manifest, &search, &lens, exec)?;
            match path {
                Some(p) => {
                    write_file(&p, &csv)?;
                    String::new()
                }
                None => csv,
            }
        }
    };
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Data(format!("cannot write output: {e}")))
}

/// Estimates with the configured method and returns the field and the
/// compensated prediction of `current`.
fn estimate_and_compensate(
    reference: &Frame,
    current: &Frame,
    cfg: &SearchConfig,
    lens: &Lens,
    exec: Execution,
) -> Result<(MotionField, Frame), CliError> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    check_method_model(cfg.method, lens.model()).map_err(|e| CliError::Usage(e.to_string()))?;
    let ref_up = upscale_with(reference, cfg.precision, exec);
    let field = match cfg.method {
        Method::Tme => estimate_tme_with(current, reference, cfg, exec),
        _ => estimate_projected_with(current, &ref_up, cfg, lens, exec),
    }
    .map_err(|e| CliError::Data(e.to_string()))?;
    let prediction = compensate_upscaled(&ref_up, &field, lens, exec).map_err(|e| CliError::Data(e.to_string()))?;
    Ok((field, prediction))
}

fn score(reference: &Frame, test: &Frame, mask: &CircularMask) -> Result<MetricReport, CliError> {
    evaluate(reference, test, mask).map_err(|e| CliError::Data(e.to_string()))
}

fn cmd_estimate(
    reference: &Path,
    current: &Path,
    search: &SearchArgs,
    lens_args: &LensArgs,
    dir: &Path,
    exec: Execution,
) -> Result<String, CliError> {
    let (reference, current) = load_pair(reference, current)?;
    let lens = lens_args.lens(current.width(), current.height())?;
    let mask = lens_args.mask(&lens)?;
    let (field, prediction) = estimate_and_compensate(&reference, &current, &search.config(), &lens, exec)?;
    create_dir(dir)?;
    field
        .write(dir.join("field.csv"))
        .map_err(|e| data(&dir.join("field.csv"), e))?;
    save(&prediction, &dir.join("compensated.png"))?;
    let r = score(&current, &prediction, &mask)?;
    Ok(format!("method,psnr_db,ssim,masked_pixels\n{}\n", report_row(search.method.as_str(), &r)))
}

fn cmd_compensate(
    reference: &Path,
    field_path: &Path,
    lens_args: &LensArgs,
    out: &Path,
    exec: Execution,
) -> Result<String, CliError> {
    let reference = load(reference)?;
    let field = MotionField::read(field_path).map_err(|e| data(field_path, e))?;
    let lens = lens_args.lens(reference.width(), reference.height())?;
    if field.blocks.iter().any(|b| b.method.is_projected()) {
        check_method_model(field.config.method, lens.model()).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ref_up = upscale_with(&reference, field.config.precision, exec);
    let prediction = compensate_upscaled(&ref_up, &field, &lens, exec).map_err(|e| data(field_path, e))?;
    save(&prediction, out)?;
    Ok(String::new())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fruc(
    prev: &Path,
    next: &Path,
    cfg: &FrucConfig,
    truth: Option<&Path>,
    fetches: Option<&Path>,
    lens_args: &LensArgs,
    out: &Path,
    exec: Execution,
) -> Result<String, CliError> {
    let (prev, next) = load_pair(prev, next)?;
    let lens = lens_args.lens(prev.width(), prev.height())?;
    cfg.validate(Some(&lens)).map_err(|e| CliError::Usage(e.to_string()))?;
    let result = interpolate_detailed(&prev, &next, cfg, Some(&lens), exec).map_err(|e| CliError::Data(e.to_string()))?;
    save(&result.frame, out)?;
    if let Some(dir) = fetches {
        create_dir(dir)?;
        if let Some(f) = &result.forward_fetch {
            save(f, &dir.join("forward.png"))?;
        }
        if let Some(f) = &result.backward_fetch {
            save(f, &dir.join("backward.png"))?;
        }
    }
    match truth {
        Some(path) => {
            let truth = load(path)?;
            let mask = lens_args.mask(&lens)?;
            let r = score(&truth, &result.frame, &mask)?;
            Ok(format!("{METRICS_HEADER}\n{}\n", report_row(&cfg.mode.to_string(), &r)))
        }
        None => Ok(String::new()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_generate(
    width: usize,
    height: usize,
    shift: (i32, i32),
    frame_count: usize,
    seed: u64,
    source: Option<&Path>,
    lens_args: &LensArgs,
    dir: &Path,
    exec: Execution,
) -> Result<String, CliError> {
    let lens = lens_args.lens(width, height)?;
    let source = match source {
        Some(path) => load(path)?,
        None => {
            let n = required_source_size(&lens, shift, frame_count).map_err(|e| CliError::Usage(e.to_string()))?;
            texture(n, n, seed)
        }
    };
    let spec = SynthSpec {
        lens,
        source,
        shift,
        frame_count,
    };
    let seq = generate_with(&spec, exec).map_err(|e| match e {
        crate::synth::SynthError::FovTooWide(_) | crate::synth::SynthError::FrameCount(_) => {
            CliError::Usage(e.to_string())
        }
        _ => CliError::Data(e.to_string()),
    })?;
    seq.write(dir).map_err(|e| data(dir, e))?;
    Ok(format!("wrote {} frames to {}\n", seq.frames.len(), dir.display()))
}

fn cmd_metrics(reference: &Path, tests: &[PathBuf], lens_args: &LensArgs) -> Result<String, CliError> {
    let reference_frame = load(reference)?;
    let lens = lens_args.lens(reference_frame.width(), reference_frame.height())?;
    let mask = lens_args.mask(&lens)?;
    let mut text = format!("{METRICS_HEADER}\n");
    for path in tests {
        let test = load(path)?;
        let r = evaluate(&reference_frame, &test, &mask).map_err(|e| data(path, e))?;
        let _ = writeln!(text, "{}", report_row(&path.display().to_string(), &r));
    }
    Ok(text)
}

/// Reads a `reference,current` manifest; paths resolve against its directory.
fn read_manifest(path: &Path) -> Result<Vec<(String, String, PathBuf, PathBuf)>, CliError> {
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data(path, e))?;
    let headers = reader.headers().map_err(|e| data(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "reference" || &headers[1] != "current" {
        return Err(data(path, "manifest header must be `reference,current`"));
    }
    let mut pairs = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| data(path, e))?;
        if rec.len() != 2 {
            return Err(data(path, format!("line {}: expected 2 fields", i + 2)));
        }
        let (r, c) = (rec[0].to_owned(), rec[1].to_owned());
        pairs.push((r.clone(), c.clone(), base.join(&r), base.join(&c)));
    }
    if pairs.is_empty() {
        return Err(data(path, "manifest lists no pairs"));
    }
    Ok(pairs)
}

fn cmd_batch(manifest: &Path, search: &SearchArgs, lens_args: &LensArgs, exec: Execution) -> Result<String, CliError> {
    let pairs = read_manifest(manifest)?;
    for (i, (_, _, r, c)) in pairs.iter().enumerate() {
        for p in [r, c] {
            if !p.is_file() {
                return Err(CliError::Data(format!("pair {i}: missing file {}", p.display())));
            }
        }
    }
    let cfg = search.config();
    let mut lens_cache: Option<((usize, usize), Lens, CircularMask)> = None;
    let mut reports = Vec::with_capacity(pairs.len());
    let mut text = format!("{BATCH_HEADER}\n");
    for (i, (r_name, c_name, r_path, c_path)) in pairs.iter().enumerate() {
        let named = |e: CliError| match e {
            CliError::Data(m) => CliError::Data(format!("pair {i} ({r_name}, {c_name}): {m}")),
            CliError::Usage(m) => CliError::Usage(m),
        };
        let (reference, current) = load_pair(r_path, c_path).map_err(named)?;
        let dims = current.dims();
        if lens_cache.as_ref().map(|c| c.0) != Some(dims) {
            let lens = lens_args.lens(dims.0, dims.1)?;
            let mask = lens_args.mask(&lens)?;
            lens_cache = Some((dims, lens, mask));
        }
        let (_, lens, mask) = lens_cache.as_ref().expect("filled above");
        let (_, prediction) = estimate_and_compensate(&reference, &current, &cfg, lens, exec).map_err(named)?;
        let report = score(&current, &prediction, mask).map_err(named)?;
        let _ = writeln!(
            text,
            "{i},{r_name},{c_name},{},{:.6},{},{}",
            report.psnr,
            report.ssim,
            report.pixel_count,
            u8::from(report.psnr.is_infinite())
        );
        reports.push(report);
    }
    let s = summarize(&reports);
    let mean_psnr = s.mean_psnr.map_or_else(|| "inf".to_owned(), |v| format!("{v:.4}"));
    let _ = writeln!(
        text,
        "mean,,,{mean_psnr},{:.6},{},{}",
        s.mean_ssim, s.mean_pixel_count, s.infinite_psnr
    );
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("fisheye-me").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run_args(&[]).0, EXIT_USAGE);
        assert_eq!(run_args(&["estimate", "a.png"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["metrics", "a.png", "b.png", "--method", "foo"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_with_zero() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("estimate"));
    }

    #[test]
    fn defaults_follow_the_reference_rig() {
        let cli = Cli::try_parse_from(["fisheye-me", "estimate", "a", "b", "-o", "d"]).unwrap();
        let Command::Estimate { search, lens, .. } = cli.command else {
            panic!("wrong subcommand")
        };
        assert_eq!(search.config(), SearchConfig::default());
        assert_eq!((lens.fov, lens.focal_mm, lens.sensor_mm), (185.0, 1.8, 5.2));
        assert!(lens.calib.is_none() && lens.mask_fov.is_none());
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.png");
        let m = missing.to_str().unwrap();
        let (code, _, err) = run_args(&["metrics", m, m]);
        assert_eq!(code, EXIT_DATA);
        assert!(err.contains("nope.png"));
    }
}
