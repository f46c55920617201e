use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use defence_core::classifier::{self, KernelKind, Label, TexelSample};
use defence_core::cnn::{self, AugmentPolicy, CnnNetwork, TrainConfig};
use defence_core::evalsynth::{self, SyntheticScene};
use defence_core::fusion;
use defence_core::hog::HogParams;
use defence_core::imagecore::{
    encode_pgm, encode_png, has_png_extension, load_gray, load_mask, warp_mask, BinaryMask,
    GrayImage,
};
use defence_core::lattice::{self, JointModel, Lattice};
use defence_core::motion::{self, AffineTransform};
use defence_core::Error;

use crate::config::RunConfig;
use crate::{Backend, DefenceArgs, DetectArgs, EvalArgs, RegisterArgs, TrainArgs};

const DEGRADED: u8 = 2;

fn kv(key: &str, v: f64) {
    if v.is_infinite() {
        println!("{key} {}", if v > 0.0 { "inf" } else { "-inf" });
    } else {
        println!("{key} {v:.6}");
    }
}

/// Temp file in the destination directory, then rename over the target.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn save_image(img: &GrayImage, path: &Path) -> Result<()> {
    let bytes = if has_png_extension(path) {
        encode_png(img)?
    } else {
        encode_pgm(img)
    };
    write_atomic(path, &bytes)
}

fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    save_image(&mask.to_image(), path)
}

/// `prefix*.pgm` / `prefix*.png` files in lexicographic order.
fn numbered_files(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if name.starts_with(prefix) && matches!(ext.as_deref(), Some("pgm" | "png")) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no {prefix}*.pgm or {prefix}*.png files in {}", dir.display());
    }
    Ok(files)
}

fn load_frames(dir: &Path) -> Result<Vec<GrayImage>> {
    numbered_files(dir, "frame_")?
        .iter()
        .map(|p| load_gray(p).map_err(Into::into))
        .collect()
}

fn load_masks(dir: &Path, count: usize) -> Result<Vec<BinaryMask>> {
    let masks: Vec<BinaryMask> = numbered_files(dir, "mask_")?
        .iter()
        .map(|p| load_mask(p).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    if masks.len() != count {
        bail!("{} masks for {count} frames in {}", masks.len(), dir.display());
    }
    Ok(masks)
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<ExitCode> {
    let truth = evalsynth::synthetic_background(cfg.width, cfg.height, cfg.seed);
    let scene = evalsynth::generate_scene(&truth, &cfg.fence, &cfg.shifts, cfg.sigma, cfg.seed)?;
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(parent)?;
    let staging = tempfile::tempdir_in(parent)?;
    evalsynth::save_bundle(&scene, staging.path())?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut names: Vec<_> = fs::read_dir(staging.path())?
        .map(|e| e.map(|e| e.file_name()))
        .collect::<std::io::Result<_>>()?;
    names.sort();
    for name in names {
        fs::rename(staging.path().join(&name), out.join(&name))
            .with_context(|| format!("moving {name:?} into {}", out.display()))?;
    }
    let interior = scene.interior();
    let covered = scene.coverage().and(&interior)?;
    println!("frames {}", scene.frames.len());
    println!("width {}", cfg.width);
    println!("height {}", cfg.height);
    println!("joints {}", scene.joints[0].len());
    kv("mask_density", scene.fence_masks[0].density());
    kv(
        "coverage",
        covered.count() as f64 / interior.count().max(1) as f64,
    );
    Ok(ExitCode::SUCCESS)
}

fn bundle_scenes(paths: &[PathBuf]) -> Result<Vec<SyntheticScene>> {
    paths
        .iter()
        .map(|p| evalsynth::load_bundle(p).with_context(|| format!("loading bundle {}", p.display())))
        .collect()
}

fn harvest(cfg: &RunConfig, args: &TrainArgs, side: usize) -> Result<Vec<(GrayImage, bool)>> {
    let mut samples = Vec::new();
    for (k, scene) in bundle_scenes(&args.bundle)?.iter().enumerate() {
        samples.extend(evalsynth::harvest_patches(
            scene,
            side,
            cfg.jitter,
            cfg.negatives,
            cfg.negative_distance,
            cfg.seed.wrapping_add(k as u64),
        )?);
    }
    if let (Some(pos), Some(neg)) = (&args.pos, &args.neg) {
        for s in classifier::load_patch_dirs(pos, neg, side)? {
            samples.push((s.patch, s.label == Label::Joint));
        }
    }
    if samples.is_empty() {
        bail!("no training patches: give --bundle or --pos/--neg");
    }
    Ok(samples)
}

pub fn train(cfg: &RunConfig, args: &TrainArgs) -> Result<ExitCode> {
    match args.backend {
        Backend::Svm => train_svm(cfg, args),
        Backend::Cnn => train_cnn(cfg, args),
    }
}

fn train_svm(cfg: &RunConfig, args: &TrainArgs) -> Result<ExitCode> {
    if args.gradient_check {
        bail!("--gradient-check applies to the cnn backend only");
    }
    let params = HogParams::default();
    let samples: Vec<TexelSample> = harvest(cfg, args, params.window)?
        .into_iter()
        .map(|(patch, joint)| TexelSample {
            patch,
            label: if joint { Label::Joint } else { Label::NonJoint },
        })
        .collect();
    let examples = classifier::hog_examples(&samples, &params)?;
    let positives = examples.iter().filter(|e| e.1 == Label::Joint).count();
    println!("samples {}", examples.len());
    println!("positives {positives}");
    let gamma_grid = match cfg.kernel {
        KernelKind::Linear => vec![cfg.gamma],
        KernelKind::Rbf => cfg.gamma_grid.clone(),
    };
    let (c, gamma, folds) = if cfg.cv_folds >= 2 {
        let cv = classifier::grid_search_cv(
            &examples,
            cfg.kernel,
            &cfg.c_grid,
            &gamma_grid,
            cfg.cv_folds,
            cfg.seed,
        )?;
        for e in &cv.table {
            println!("cv_error[c={},gamma={:.6e}] {:.6}", e.c, e.gamma, e.mean_error);
        }
        (cv.best_c, cv.best_gamma, cv.best().fold_errors.clone())
    } else {
        (cfg.c, cfg.gamma, Vec::new())
    };
    let mut model = classifier::train(&examples, cfg.kernel, c, gamma, cfg.seed)?;
    model.meta.fold_errors = folds;
    println!("c {c}");
    println!("gamma {gamma:.6e}");
    if cfg.kernel == KernelKind::Rbf {
        println!("support_vectors {}", model.support_count());
    }
    kv("train_accuracy", classifier::accuracy(&model, &examples)?);
    write_atomic(&args.out, &model.to_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn train_cnn(cfg: &RunConfig, args: &TrainArgs) -> Result<ExitCode> {
    let samples = harvest(cfg, args, cnn::INPUT_SIDE)?;
    println!("samples {}", samples.len());
    println!("positives {}", samples.iter().filter(|s| s.1).count());
    let net = CnnNetwork::random(cfg.seed);
    if args.gradient_check {
        let check = cnn::gradient_check_report(&net, cfg.probes, cfg.probe_step, cfg.seed)?;
        println!("gradient_check_max_rel_error {:.6e}", check.max_rel_error);
        println!("gradient_check_kinked_probes {}", check.kinked_probes);
    }
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        ..cfg.cnn
    };
    let policy = AugmentPolicy {
        flip_y: cfg.flip,
        center_crop: None,
    };
    let (net, report) = cnn::train(&net, &samples, &train_cfg, &policy)?;
    for (e, loss) in report.epoch_loss.iter().enumerate() {
        kv(&format!("loss_epoch_{:03}", e + 1), *loss);
    }
    let mut correct = 0;
    for (img, joint) in &samples {
        if (net.score(img)? >= 0.0) == *joint {
            correct += 1;
        }
    }
    kv("train_accuracy", correct as f64 / samples.len() as f64);
    write_atomic(&args.out, &net.to_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn annotate(img: &GrayImage, lattice: &Lattice) -> GrayImage {
    let mut out = img.clamped();
    let (w, h) = img.dims();
    let mut put = |x: i64, y: i64, v: f64| {
        if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
            out.set(x as usize, y as usize, v);
        }
    };
    for &(i, j) in &lattice.edges {
        let (a, b) = (&lattice.joints[i], &lattice.joints[j]);
        for (x, y) in lattice::bresenham(
            a.x.round() as i64,
            a.y.round() as i64,
            b.x.round() as i64,
            b.y.round() as i64,
        ) {
            put(x, y, 255.0);
        }
    }
    for j in &lattice.joints {
        let (cx, cy) = (j.x.round() as i64, j.y.round() as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                put(cx + dx, cy + dy, 0.0);
            }
        }
    }
    out
}

fn print_detection_scores(
    cfg: &RunConfig,
    joints: &[(f64, f64)],
    mask: &BinaryMask,
    truth: Option<&(Vec<(f64, f64)>, BinaryMask)>,
) -> Result<()> {
    if let Some((tj, tm)) = truth {
        let s = evalsynth::score_detections(joints, tj, cfg.match_radius)?;
        println!("tp {}", s.tp);
        println!("fp {}", s.fp);
        println!("fn {}", s.fn_);
        kv("precision", s.precision);
        kv("recall", s.recall);
        kv("f_measure", s.f_measure);
        kv("mask_iou", evalsynth::score_mask(mask, tm)?.iou);
    }
    Ok(())
}

pub fn detect(cfg: &RunConfig, args: &DetectArgs) -> Result<ExitCode> {
    let model = JointModel::load(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let (img, truth) = match (&args.image, &args.bundle) {
        (Some(path), _) => (load_gray(path)?, None),
        (None, Some(dir)) => {
            let scene = evalsynth::load_bundle(dir)?;
            let Some(frame) = scene.frames.get(args.frame) else {
                bail!("bundle has {} frames, asked for {}", scene.frames.len(), args.frame);
            };
            let truth_joints = evalsynth::detectable_joints(
                &scene.joints[args.frame],
                frame.dims(),
                model.window_side(),
            );
            (
                frame.clone(),
                Some((truth_joints, scene.fence_masks[args.frame].clone())),
            )
        }
        (None, None) => bail!("give --image or --bundle"),
    };
    fs::create_dir_all(&args.out)?;
    let (w, h) = img.dims();
    match lattice::detect_lattice(&img, &model, &cfg.detector) {
        Ok(r) => {
            save_mask(&r.mask, &args.out.join("mask.pgm"))?;
            write_atomic(
                &args.out.join("joints.txt"),
                lattice::format_detections(&r.lattice.joints).as_bytes(),
            )?;
            save_image(&annotate(&img, &r.lattice), &args.out.join("annotated.png"))?;
            println!("detections {}", r.detections.len());
            println!("joints {}", r.lattice.joints.len());
            println!("edges {}", r.lattice.edges.len());
            kv("texel_w", r.lattice.texel_w);
            kv("texel_h", r.lattice.texel_h);
            println!("bar_width {}", r.bar_width);
            let pts = evalsynth::points(&r.lattice.joints);
            print_detection_scores(cfg, &pts, &r.mask, truth.as_ref())?;
            Ok(ExitCode::SUCCESS)
        }
        Err(Error::DegenerateLattice(reason)) => {
            eprintln!("warning: degenerate lattice: {reason}; writing an empty mask");
            let empty = BinaryMask::new(w, h);
            save_mask(&empty, &args.out.join("mask.pgm"))?;
            write_atomic(&args.out.join("joints.txt"), b"")?;
            save_image(&img.clamped(), &args.out.join("annotated.png"))?;
            println!("joints 0");
            println!("edges 0");
            print_detection_scores(cfg, &[], &empty, truth.as_ref())?;
            Ok(ExitCode::from(DEGRADED))
        }
        Err(e) => Err(e.into()),
    }
}

fn registered(
    cfg: &RunConfig,
    frames: &[GrayImage],
    masks: &[BinaryMask],
    reference: usize,
) -> Result<Vec<AffineTransform>> {
    if frames.len() == 1 {
        return Ok(vec![AffineTransform::identity()]);
    }
    Ok(motion::register_frames(
        frames,
        masks,
        reference,
        &cfg.registration,
    )?)
}

fn check_reference(reference: usize, frames: usize) -> Result<()> {
    if reference >= frames {
        bail!("reference index {reference} out of range for {frames} frames");
    }
    Ok(())
}

pub fn register(cfg: &RunConfig, args: &RegisterArgs) -> Result<ExitCode> {
    let frames = load_frames(&args.frames)?;
    check_reference(cfg.reference, frames.len())?;
    let masks = match &args.masks {
        Some(dir) => load_masks(dir, frames.len())?,
        None => frames
            .iter()
            .map(|f| BinaryMask::new(f.width(), f.height()))
            .collect(),
    };
    let ts = registered(cfg, &frames, &masks, cfg.reference)?;
    write_atomic(&args.out, motion::format_transforms(&ts).as_bytes())?;
    for (m, t) in ts.iter().enumerate() {
        println!("transform_{m:02} {t}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn defence(cfg: &RunConfig, args: &DefenceArgs) -> Result<ExitCode> {
    let frames = load_frames(&args.frames)?;
    let reference = args.reference.unwrap_or(cfg.reference);
    check_reference(reference, frames.len())?;
    let masks = match (&args.masks, &args.model) {
        (Some(dir), _) => load_masks(dir, frames.len())?,
        (None, Some(model_path)) => {
            let model = JointModel::load(model_path)
                .with_context(|| format!("loading model {}", model_path.display()))?;
            let mut masks = Vec::with_capacity(frames.len());
            for (m, f) in frames.iter().enumerate() {
                match lattice::detect_lattice(f, &model, &cfg.detector) {
                    Ok(r) => masks.push(r.mask),
                    Err(Error::DegenerateLattice(reason)) => {
                        eprintln!("warning: frame {m}: degenerate lattice ({reason}); no fence assumed");
                        masks.push(BinaryMask::new(f.width(), f.height()));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            masks
        }
        (None, None) => bail!("give --masks or --model"),
    };
    let t0 = Instant::now();
    let transforms = match &args.transforms {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let ts = motion::parse_transforms(&text)?;
            if ts.len() != frames.len() {
                bail!("{} transforms for {} frames", ts.len(), frames.len());
            }
            ts
        }
        None => registered(cfg, &frames, &masks, reference)?,
    };
    let t_register = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let out = fusion::defence(
        &frames,
        &masks,
        &transforms,
        reference,
        &cfg.energy,
        cfg.relabel,
    )?;
    let t_fusion = t1.elapsed().as_secs_f64();
    if let Some(path) = &args.dump_costs {
        write_atomic(path, &out.costs.to_bytes())?;
    }
    save_image(&out.image, &args.out)?;
    println!("frames {}", frames.len());
    println!("reference {reference}");
    kv("energy_before", out.energy_before);
    kv("energy_after", out.energy_after);
    kv("time_register_s", t_register);
    kv("time_fusion_s", t_fusion);
    if let Some(path) = &args.truth {
        let truth = load_gray(path)?;
        kv("rmse", evalsynth::rmse(&out.image, &truth)?);
        kv("psnr", evalsynth::psnr(&out.image, &truth)?);
        if truth.width() >= evalsynth::SSIM_WINDOW && truth.height() >= evalsynth::SSIM_WINDOW {
            kv("ssim", evalsynth::ssim(&out.image, &truth)?);
        }
        let occluded = warp_mask(&masks[reference], &transforms[reference])?;
        if occluded.count() > 0 {
            kv(
                "rmse_occluded",
                evalsynth::masked_rmse(&out.image, &truth, &occluded)?,
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> Result<ExitCode> {
    let mut any = false;
    if let (Some(result), Some(truth)) = (&args.result, &args.truth) {
        any = true;
        let a = load_gray(result)?;
        let b = load_gray(truth)?;
        kv("rmse", evalsynth::rmse(&a, &b)?);
        kv("psnr", evalsynth::psnr(&a, &b)?);
        if a.width() >= evalsynth::SSIM_WINDOW && a.height() >= evalsynth::SSIM_WINDOW {
            kv("ssim", evalsynth::ssim(&a, &b)?);
        }
        if let Some(mask) = &args.mask {
            kv(
                "rmse_masked",
                evalsynth::masked_rmse(&a, &b, &load_mask(mask)?)?,
            );
        }
    }
    if let (Some(pred), Some(gt)) = (&args.pred_mask, &args.gt_mask) {
        any = true;
        let s = evalsynth::score_mask(&load_mask(pred)?, &load_mask(gt)?)?;
        println!("tp {}", s.score.tp);
        println!("fp {}", s.score.fp);
        println!("fn {}", s.score.fn_);
        kv("precision", s.score.precision);
        kv("recall", s.score.recall);
        kv("f_measure", s.score.f_measure);
        kv("iou", s.iou);
    }
    if let (Some(pred), Some(gt)) = (&args.pred_joints, &args.gt_joints) {
        any = true;
        let read = |p: &PathBuf| -> Result<Vec<(f64, f64)>> {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(evalsynth::points(&lattice::parse_detections(&text)?))
        };
        let s = evalsynth::score_detections(&read(pred)?, &read(gt)?, cfg.match_radius)?;
        println!("joint_tp {}", s.tp);
        println!("joint_fp {}", s.fp);
        println!("joint_fn {}", s.fn_);
        kv("joint_precision", s.precision);
        kv("joint_recall", s.recall);
        kv("joint_f_measure", s.f_measure);
    }
    if !any {
        bail!("nothing to evaluate: give --result/--truth, --pred-mask/--gt-mask or --pred-joints/--gt-joints");
    }
    Ok(ExitCode::SUCCESS)
}
