use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use defence_core::imagecore::{load_mask, save_gray, save_mask, BinaryMask, GrayImage};
use tempfile::TempDir;

fn defence(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_defence"))
        .args(args)
        .output()
        .expect("spawning defence")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(o: &Output, key: &str) -> f64 {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix(' ')?.trim().parse().ok())
        .unwrap_or_else(|| panic!("no {key} in output:\n{}", stdout(o)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// One synthetic bundle and a linear model trained on it, built once.
struct Fixture {
    _dir: TempDir,
    bundle: PathBuf,
    model: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let bundle = dir.path().join("bundle");
        let model = dir.path().join("model.bin");
        let o = defence(&["--seed", "3", "synth", "--out", p(&bundle)]);
        assert!(o.status.success(), "{o:?}");
        let o = defence(&[
            "--set", "cv_folds=0", "train", "--bundle", p(&bundle), "--out", p(&model),
        ]);
        assert!(o.status.success(), "{o:?}");
        Fixture { _dir: dir, bundle, model }
    })
}

#[test]
fn synth_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = defence(&["--seed", "9", "--set", "sigma=0", "synth", "--out", p(out)]);
        assert!(o.status.success(), "{o:?}");
        assert_eq!(value(&o, "frames"), 4.0);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 4 * 3 + 2);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn bars_wider_than_spacing_are_rejected() {
    let dir = TempDir::new().unwrap();
    let o = defence(&["--set", "spacing=2", "--set", "bar_width=2", "synth", "--out", p(&dir.path().join("x"))]);
    assert!(!o.status.success());
    assert!(!dir.path().join("x").exists());
}

#[test]
fn svm_training_separates_synthetic_patches() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("m.bin");
    let o = defence(&["--set", "cv_folds=0", "train", "--bundle", p(&f.bundle), "--out", p(&model)]);
    assert!(o.status.success(), "{o:?}");
    assert!(model.exists());
    assert!(value(&o, "train_accuracy") >= 0.99);
}

#[test]
fn cnn_gradient_check_is_printed_before_training() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("cnn.bin");
    let o = defence(&[
        "--set", "cnn_epochs=1", "train", "--backend", "cnn", "--gradient-check",
        "--bundle", p(&f.bundle), "--out", p(&model),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(value(&o, "gradient_check_max_rel_error") < 1e-4);
    assert_eq!(&fs::read(&model).unwrap()[..4], b"DFKC");
}

#[test]
fn missing_training_directory_fails() {
    let dir = TempDir::new().unwrap();
    let o = defence(&[
        "train", "--pos", p(&dir.path().join("nope")), "--neg", p(&dir.path().join("nada")),
        "--out", p(&dir.path().join("m.bin")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn detect_scores_a_bundle_frame() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let o = defence(&["detect", "--model", p(&f.model), "--bundle", p(&f.bundle), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(value(&o, "f_measure") >= 0.9);
    for name in ["mask.pgm", "joints.txt", "annotated.png"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn blank_image_degrades_to_an_empty_mask() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let img = dir.path().join("blank.pgm");
    save_gray(&GrayImage::filled(96, 96, 128.0), &img).unwrap();
    let out = dir.path().join("out");
    let o = defence(&["detect", "--model", p(&f.model), "--image", p(&img), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    assert_eq!(load_mask(out.join("mask.pgm")).unwrap().count(), 0);
}

#[test]
fn corrupted_model_fails() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("bad.bin");
    let mut bytes = fs::read(&f.model).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(&model, bytes).unwrap();
    let o = defence(&["detect", "--model", p(&model), "--bundle", p(&f.bundle), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
}

fn single_frame(dir: &Path) -> (PathBuf, PathBuf) {
    let frames = dir.join("frames");
    let masks = dir.join("masks");
    fs::create_dir_all(&frames).unwrap();
    fs::create_dir_all(&masks).unwrap();
    let img = GrayImage::from_fn(40, 30, |x, y| ((x * 7 + y * 13) % 256) as f64);
    save_gray(&img, frames.join("frame_00.pgm")).unwrap();
    save_mask(&BinaryMask::new(40, 30), masks.join("mask_00.pgm")).unwrap();
    (frames, masks)
}

#[test]
fn single_clear_frame_passes_through_unchanged() {
    let dir = TempDir::new().unwrap();
    let (frames, masks) = single_frame(dir.path());
    let out = dir.path().join("out.pgm");
    let o = defence(&[
        "--set", "lambda=0", "defence", "--frames", p(&frames), "--masks", p(&masks), "--out", p(&out),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(fs::read(&out).unwrap(), fs::read(frames.join("frame_00.pgm")).unwrap());
}

#[test]
fn reference_out_of_range_fails() {
    let dir = TempDir::new().unwrap();
    let (frames, masks) = single_frame(dir.path());
    let o = defence(&[
        "defence", "--frames", p(&frames), "--masks", p(&masks), "--reference", "3",
        "--out", p(&dir.path().join("o.pgm")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bundle_defence_with_true_masks_is_accurate() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("clean.png");
    let o = defence(&[
        "defence", "--frames", p(&f.bundle), "--masks", p(&f.bundle),
        "--truth", p(&f.bundle.join("truth.pgm")), "--out", p(&out),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(value(&o, "rmse") <= 2.0);
    assert!(value(&o, "energy_after") <= value(&o, "energy_before"));
}

#[test]
fn eval_of_identical_images() {
    let f = fixture();
    let truth = f.bundle.join("truth.pgm");
    let o = defence(&["eval", "--result", p(&truth), "--truth", p(&truth)]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "rmse 0.000000"), "{text}");
    assert!(text.lines().any(|l| l == "ssim 1.000000"), "{text}");
}

#[test]
fn eval_of_a_missing_file_fails() {
    let f = fixture();
    let o = defence(&["eval", "--result", "/nonexistent/x.pgm", "--truth", p(&f.bundle.join("truth.pgm"))]);
    assert_eq!(o.status.code(), Some(1));
}
