use std::path::Path;

use fisheye_me::blockmatch::MotionField;
use fisheye_me::cli::{run, BATCH_HEADER, EXIT_DATA, EXIT_OK, EXIT_USAGE, METRICS_HEADER};
use fisheye_me::frames::load_frame;

fn run_args(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("fisheye-me").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three 96 px frames at 170 degrees moving (2, 1) per step.
fn sequence(dir: &Path) {
    let (code, out, err) = run_args(&[
        "generate", "--width", "96", "--fov", "170", "--shift-x", "2", "--shift-y", "1", "--frames", "3", "-o", s(dir),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("3 frames"));
}

#[test]
fn generate_writes_frames_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    sequence(dir.path());
    for i in 0..3 {
        assert_eq!(load_frame(dir.path().join(format!("frame_{i:03}.png"))).unwrap().dims(), (96, 96));
    }
    let truth = std::fs::read_to_string(dir.path().join("truth.csv")).unwrap();
    assert_eq!(truth, "pair_index,truth_dx,truth_dy\n0,2,1\n1,2,1\n");
}

#[test]
fn generate_rejects_the_default_wide_lens() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run_args(&["generate", "--width", "64", "-o", s(dir.path())]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("175"));
}

#[test]
fn estimate_then_compensate_reproduces_the_prediction() {
    let dir = tempfile::tempdir().unwrap();
    sequence(dir.path());
    let (f0, f1) = (dir.path().join("frame_000.png"), dir.path().join("frame_001.png"));
    let out = dir.path().join("est");
    let lens = ["--fov", "170"];
    let mut args = vec!["estimate", s(&f0), s(&f1), "--method", "eme+", "--range", "4", "-o", s(&out)];
    args.extend(lens);
    let (code, stdout, err) = run_args(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("method,psnr_db,ssim,masked_pixels"));
    assert!(lines.next().unwrap().starts_with("eme+,"));

    let field = MotionField::read(out.join("field.csv")).unwrap();
    assert_eq!((field.blocks_x, field.blocks_y), (6, 6));
    assert_eq!(field.config.range, 4);

    let again = dir.path().join("again.png");
    let field_csv = out.join("field.csv");
    let mut args = vec!["compensate", s(&f0), s(&field_csv), "-o", s(&again)];
    args.extend(lens);
    let (code, _, err) = run_args(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(load_frame(&again).unwrap(), load_frame(out.join("compensated.png")).unwrap());
}

#[test]
fn cme_needs_a_readable_calibration() {
    let dir = tempfile::tempdir().unwrap();
    sequence(dir.path());
    let (f0, f1) = (dir.path().join("frame_000.png"), dir.path().join("frame_001.png"));
    let out = dir.path().join("est");
    let (code, _, _) = run_args(&["estimate", s(&f0), s(&f1), "--method", "cme+", "--fov", "170", "-o", s(&out)]);
    assert_eq!(code, EXIT_USAGE);
    let missing = dir.path().join("lens.csv");
    let (code, _, err) = run_args(&[
        "estimate", s(&f0), s(&f1), "--method", "cme+", "--calib", s(&missing), "--fov", "170", "-o", s(&out),
    ]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("lens.csv"));
}

#[test]
fn fruc_repetition_returns_the_previous_frame() {
    let dir = tempfile::tempdir().unwrap();
    sequence(dir.path());
    let (f0, f1, f2) = (
        dir.path().join("frame_000.png"),
        dir.path().join("frame_001.png"),
        dir.path().join("frame_002.png"),
    );
    let out = dir.path().join("mid.png");
    let (code, stdout, err) = run_args(&[
        "fruc", s(&f0), s(&f2), "--mode", "rep", "--truth", s(&f1), "--fov", "170", "-o", s(&out),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(load_frame(&out).unwrap(), load_frame(&f0).unwrap());
    assert!(stdout.starts_with(METRICS_HEADER));
}

#[test]
fn fruc_mcla_writes_fetches() {
    let dir = tempfile::tempdir().unwrap();
    sequence(dir.path());
    let (f0, f2) = (dir.path().join("frame_000.png"), dir.path().join("frame_002.png"));
    let out = dir.path().join("mid.png");
    let fetches = dir.path().join("fetches");
    let (code, _, err) = run_args(&[
        "fruc", s(&f0), s(&f2), "--method", "eme+", "--range", "6", "--adapt", "equisolid", "--hybrid-fov", "150", "--fov", "170",
        "--fetches",
        s(&fetches), "-o", s(&out),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(fetches.join("forward.png").is_file());
    assert!(fetches.join("backward.png").is_file());
    assert_eq!(load_frame(&out).unwrap().dims(), (96, 96));
}

#[test]
fn batch_reports_infinite_psnr_for_identical_pairs() {
    let dir = tempfile::tempdir().unwrap();
    sequence(dir.path());
    let manifest = dir.path().join("pairs.csv");
    std::fs::write(&manifest, "reference,current\nframe_000.png,frame_000.png\nframe_000.png,frame_001.png\n").unwrap();
    let (code, stdout, err) = run_args(&["batch", s(&manifest), "--range", "3", "--fov", "170"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], BATCH_HEADER);
    assert!(lines[1].starts_with("0,frame_000.png,frame_000.png,inf,1.000000,"));
    assert!(lines[1].ends_with(",1"));
    assert!(lines[2].ends_with(",0"));
    // the mean skips infinite values and counts them separately
    let mean: Vec<&str> = lines[3].split(',').collect();
    assert_eq!(&mean[..3], ["mean", "", ""]);
    let pair_psnr: &str = lines[2].split(',').nth(3).unwrap();
    assert_eq!(mean[3], pair_psnr);
    assert_eq!(mean[6], "1");
}

#[test]
fn batch_names_the_missing_pair() {
    let dir = tempfile::tempdir().unwrap();
    sequence(dir.path());
    let manifest = dir.path().join("pairs.csv");
    std::fs::write(&manifest, "reference,current\nframe_000.png,frame_001.png\nframe_001.png,gone.png\n").unwrap();
    let (code, _, err) = run_args(&["batch", s(&manifest), "--fov", "170"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("pair 1") && err.contains("gone.png"), "{err}");
}
