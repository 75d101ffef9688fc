//! The `liplab` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical
//! failure (non-finite loss or gradient, failed gradient check). Progress and
//! reports go to the log on stderr; data goes to files only.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use liplab_core::maskgen::{densify, rasterize, MaskError, DEFAULT_SPACING};
use liplab_core::metrics::{evaluate_report, COLUMNS};
use liplab_core::nn::{grad_check, Graph, NnError, Tensor};
use liplab_core::segnet::{train_pipeline, AUNetSpec, Network, SegnetError};
use liplab_core::synth::{augment, generate, AugmentOp, GeneratorConfig};
use liplab_core::texture::{build_input, LbpParams};
use liplab_core::{BinaryMask, RasterImage};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{write_file, IoError};
use crate::landmarks::{
    default_template, read_landmarks, read_template, write_landmarks, LandmarkFile,
};
use crate::netpbm::{read_mask, read_ppm, write_mask, write_pgm, write_ppm};
use crate::tensorfile::{write_tensor, TensorData};
use crate::weights::{load_pipeline, parse_sampling, save_pipeline, WeightsError};

#[derive(Debug, Parser)]
#[command(
    name = "liplab",
    version,
    about = "Upper-lip segmentation from landmarks, texture inputs and attention UNets"
)]
pub struct Cli {
    /// Worker threads. Every command runs on one thread, so results never depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the 5-plane texture input (RGB, LBP, GLBP) of a PPM image.
    Texture(TextureArgs),
    /// Turn a landmark CSV into a binary mask.
    Maskgen(MaskgenArgs),
    /// Render synthetic lip images with landmarks and masks.
    Synth(SynthArgs),
    /// Train the two-stage pipeline from a config file.
    Train(TrainArgs),
    /// Segment one PPM image with a trained pipeline.
    Infer(InferArgs),
    /// Score predicted masks against ground truth.
    Eval(EvalArgs),
    /// Check analytic gradients of the network against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct TextureArgs {
    /// Input PPM image.
    #[arg(long)]
    pub input: PathBuf,
    /// Output tensor file, dims (H, W, 5).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub neighbors: usize,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// `bilinear` or `nearest`.
    #[arg(long, default_value = "bilinear")]
    pub sampling: String,
    /// Also write the LBP plane as PGM.
    #[arg(long)]
    pub lbp_pgm: Option<PathBuf>,
    /// Also write the GLBP plane as PGM.
    #[arg(long)]
    pub glbp_pgm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaskgenArgs {
    /// Landmark CSV (`name,x,y`).
    #[arg(long)]
    pub landmarks: PathBuf,
    /// Template CSV; the shipped upper-lip template when omitted.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Mask size as `HxW`.
    #[arg(long, value_parser = parse_size, conflicts_with = "image")]
    pub size: Option<(usize, usize)>,
    /// Image whose size the mask takes, instead of `--size`.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Spacing of the interpolated contour points, in pixels.
    #[arg(long, default_value_t = DEFAULT_SPACING)]
    pub spacing: f64,
    /// Output mask (PGM, 0 / 255).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the densified contour as `x,y` CSV.
    #[arg(long)]
    pub contour: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Standard deviation of the pixel noise, in gray levels.
    #[arg(long, default_value_t = 4.0)]
    pub noise: f64,
    /// Comma-separated augmentations applied in order: hflip, rot+5, rot-5, bright0.8, bright1.1.
    #[arg(long, value_delimiter = ',')]
    pub augment: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration (`key = value`); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `data_dir`.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Overrides `out_dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Directory written by `train` (its `pipeline` subdirectory) or by a pipeline save.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Output mask (PGM, 0 / 255).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the final probability map as a tensor file, dims (1, 1, H, W).
    #[arg(long)]
    pub prob: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of ground-truth PGM masks.
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// Directory of predicted PGM masks; files are paired by name.
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Per-image CSV output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CheckSpec {
    /// Toy attention UNet (widths 8/16/32/64) on a 16x16, 5-plane input.
    Toy,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum)]
    pub spec: CheckSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coordinates checked per parameter (0 = all).
    #[arg(long, default_value_t = 4)]
    pub max_coords: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Also write the per-parameter report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command and its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<WeightsError> for CliError {
    fn from(e: WeightsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MaskError> for CliError {
    fn from(e: MaskError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn is_numeric(e: &NnError) -> bool {
    matches!(e, NnError::NonFinite { .. } | NnError::NonFiniteGradient(_))
}

impl From<SegnetError> for CliError {
    fn from(e: SegnetError) -> Self {
        match &e {
            SegnetError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            SegnetError::Nn(n) if is_numeric(n) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        if is_numeric(&e) {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if cli.threads != 1 {
        info!(
            "running single-threaded; --threads {} has no effect",
            cli.threads
        );
    }
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{}", e.message());
            e.code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Texture(a) => texture(a),
        Command::Maskgen(a) => maskgen(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn texture(a: TextureArgs) -> Result<(), CliError> {
    let sampling = parse_sampling(&a.sampling).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown sampling {:?}, expected bilinear or nearest",
            a.sampling
        ))
    })?;
    let params = LbpParams {
        neighbors: a.neighbors,
        radius: a.radius,
        sampling,
    };
    params
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let rgb = read_ppm(&a.input)?;
    let input = build_input(&rgb, &params).map_err(data_err)?;
    write_tensor(&a.out, &TensorData::from_image(input.as_image()))?;
    for (plane, path) in [(3, &a.lbp_pgm), (4, &a.glbp_pgm)] {
        if let Some(path) = path {
            let p = input.plane(plane);
            let scaled = p.data().iter().map(|v| v * 255.0).collect();
            let img = RasterImage::new(p.height(), p.width(), 1, scaled).map_err(data_err)?;
            write_pgm(path, &img)?;
        }
    }
    info!(
        "texture: {} -> {} ({}x{}x5)",
        a.input.display(),
        a.out.display(),
        rgb.height(),
        rgb.width()
    );
    Ok(())
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h: usize = h
        .trim()
        .parse()
        .map_err(|_| format!("bad height in {s:?}"))?;
    let w: usize = w
        .trim()
        .parse()
        .map_err(|_| format!("bad width in {s:?}"))?;
    if h == 0 || w == 0 {
        return Err(format!("empty size {s:?}"));
    }
    Ok((h, w))
}

fn maskgen(a: MaskgenArgs) -> Result<(), CliError> {
    let (height, width) = match (&a.image, a.size) {
        (Some(path), _) => {
            let img = crate::netpbm::read_any(path)?;
            (img.height(), img.width())
        }
        (None, Some(size)) => size,
        (None, None) => return Err(CliError::Usage("give --size HxW or --image".into())),
    };
    let template = match &a.template {
        Some(p) => read_template(p)?,
        None => default_template(),
    };
    let file = read_landmarks(&a.landmarks)?;
    file.check_bounds(height, width)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.landmarks.display())))?;
    if file.names != template.anchor_names() {
        warn!(
            "landmark names {:?} differ from template anchors {:?}; matching by order",
            file.names,
            template.anchor_names()
        );
    }
    let set = file.into_set()?;
    let contour = densify(&set, &template, a.spacing)?;
    let r = rasterize(&contour, height, width)?;
    if r.degenerate {
        warn!("maskgen: contour encloses zero area");
    }
    write_mask(&a.out, &r.mask)?;
    if let Some(path) = &a.contour {
        let mut s = String::from("x,y\n");
        for p in contour.polygon() {
            let _ = writeln!(s, "{:.6},{:.6}", p.x, p.y);
        }
        write_file(path, s.as_bytes())?;
    }
    info!(
        "maskgen: {} foreground pixels -> {}",
        r.mask.count(),
        a.out.display()
    );
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let ops = a
        .augment
        .iter()
        .map(|t| {
            t.parse::<AugmentOp>()
                .map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let config = GeneratorConfig {
        size: a.size,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let samples = generate(&config, a.n).map_err(|e| CliError::Usage(e.to_string()))?;
    create_dir(&a.out_dir)?;
    for (k, s) in samples.iter().enumerate() {
        let s = if ops.is_empty() {
            s.clone()
        } else {
            augment(s, &ops)
        };
        let stem = a.out_dir.join(format!("sample_{k:04}"));
        write_ppm(&stem.with_extension("ppm"), &s.image)?;
        write_landmarks(
            &stem.with_extension("csv"),
            &LandmarkFile::from_set(&s.landmarks),
        )?;
        write_mask(&a.out_dir.join(format!("sample_{k:04}_mask.pgm")), &s.mask)?;
    }
    info!(
        "synth: {} samples ({}x{}, seed {}) -> {}",
        a.n,
        a.size,
        a.size,
        a.seed,
        a.out_dir.display()
    );
    Ok(())
}

/// `(image, mask)` pairs `<stem>.ppm` / `<stem>_mask.pgm`, sorted by stem.
pub fn load_training_set(dir: &Path) -> Result<Vec<(String, RasterImage, BinaryMask)>, CliError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut stems: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter_map(|n| n.strip_suffix(".ppm").map(str::to_string))
        .collect();
    stems.sort();
    let mut out = Vec::with_capacity(stems.len());
    for stem in stems {
        let image = read_ppm(&dir.join(format!("{stem}.ppm")))?;
        let mask_path = dir.join(format!("{stem}_mask.pgm"));
        let mask = read_mask(&mask_path)?;
        if (mask.height(), mask.width()) != (image.height(), image.width()) {
            return Err(CliError::Data(format!(
                "{}: mask is {}x{}, image {stem}.ppm is {}x{}",
                mask_path.display(),
                mask.height(),
                mask.width(),
                image.height(),
                image.width()
            )));
        }
        out.push((stem, image, mask));
    }
    if out.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no .ppm training images",
            dir.display()
        )));
    }
    Ok(out)
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = a.data_dir {
        cfg.data_dir = d;
    }
    if let Some(d) = a.out_dir {
        cfg.out_dir = d;
    }
    cfg.validate().map_err(data_err)?;
    let resolved = cfg.render();
    for line in resolved.lines() {
        info!("config: {line}");
    }
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("config.txt"), resolved.as_bytes())?;

    let set = load_training_set(&cfg.data_dir)?;
    let spec = cfg.pipeline_spec();
    let pairs: Vec<(RasterImage, BinaryMask)> = set.into_iter().map(|(_, i, m)| (i, m)).collect();
    info!(
        "train: {} samples, mode {:?}, widths {:?}",
        pairs.len(),
        spec.mode,
        spec.stage1.widths
    );
    let (pipeline, report) = train_pipeline(spec, &pairs, &cfg.stage1(), &cfg.stage2())?;
    info!(
        "train: training Dice stage 1 {:.4}, stage 2 {:.4}",
        report.stage1_train_dice, report.stage2_train_dice
    );
    save_pipeline(&cfg.out_dir.join("pipeline"), &pipeline)?;
    let mut csv = String::from("stage,epoch,loss\n");
    for (stage, r) in [(1, &report.stage1), (2, &report.stage2)] {
        for (e, l) in r.losses.iter().enumerate() {
            let _ = writeln!(csv, "{stage},{e},{l}");
        }
    }
    write_file(&cfg.out_dir.join("losses.csv"), csv.as_bytes())?;
    Ok(())
}

fn infer(a: InferArgs) -> Result<(), CliError> {
    let nested = a.model.join("pipeline");
    let dir = if nested.join(crate::weights::PIPELINE_MANIFEST).exists() {
        nested
    } else {
        a.model.clone()
    };
    let pipeline = load_pipeline(&dir)?;
    let rgb = read_ppm(&a.input)?;
    let result = pipeline.infer(&rgb)?;
    write_mask(&a.out, &result.mask)?;
    if let Some(p) = &a.prob {
        write_tensor(p, &TensorData::from_tensor(&result.prob))?;
    }
    info!(
        "infer: {} foreground pixels -> {}",
        result.mask.count(),
        a.out.display()
    );
    Ok(())
}

fn list_pgm(dir: &Path) -> Result<Vec<String>, CliError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".pgm"))
        .collect();
    names.sort();
    Ok(names)
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let names = list_pgm(&a.pred_dir)?;
    if names.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no .pgm masks",
            a.pred_dir.display()
        )));
    }
    let mut pairs = Vec::with_capacity(names.len());
    for name in &names {
        let (gt_path, pred_path) = (a.gt_dir.join(name), a.pred_dir.join(name));
        let gt = read_mask(&gt_path)?;
        let pred = read_mask(&pred_path)?;
        if (gt.height(), gt.width()) != (pred.height(), pred.width()) {
            return Err(CliError::Data(format!(
                "dimension mismatch: {} is {}x{}, {} is {}x{}",
                gt_path.display(),
                gt.height(),
                gt.width(),
                pred_path.display(),
                pred.height(),
                pred.width()
            )));
        }
        pairs.push((name.as_str(), gt, pred));
    }
    let report = evaluate_report(pairs.iter().map(|(n, g, p)| (*n, g, p))).map_err(data_err)?;
    write_file(&a.out, report.to_csv().as_bytes())?;
    for line in report.to_table().lines() {
        info!("eval: {line}");
    }
    if let Some(hd) = COLUMNS.iter().position(|&c| c == "hd") {
        let missing = report
            .images
            .iter()
            .filter(|m| m.values()[hd].is_none())
            .count();
        if missing > 0 {
            warn!("eval: HD undefined for {missing} image(s) with an empty mask");
        }
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    let CheckSpec::Toy = a.spec;
    let spec = AUNetSpec {
        in_channels: 5,
        widths: [8, 16, 32, 64],
        input_size: (16, 16),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut store = spec.init(a.seed)?.cast::<f64>();
    // Biases start at zero; small random values keep pre-activations off exact kinks.
    let biases: Vec<String> = store
        .iter()
        .filter(|(n, _)| n.ends_with(".b"))
        .map(|(n, _)| n.to_string())
        .collect();
    for name in biases {
        let dims = store.get(&name).expect("listed").dims();
        let n = dims.iter().product();
        let b = Tensor::from_vec(dims, (0..n).map(|_| rng.random_range(-0.1..0.1)).collect())?;
        store.set(&name, b)?;
    }
    let x = Tensor::from_vec(
        [1, 5, 16, 16],
        (0..5 * 256).map(|_| rng.random_range(0.0..1.0)).collect(),
    )?;
    let target = Tensor::from_vec(
        [1, 1, 16, 16],
        (0..256)
            .map(|_| f64::from(u8::from(rng.random_bool(0.4))))
            .collect(),
    )?;
    let report = grad_check(
        &store,
        |p| {
            let mut g = Graph::new();
            let xi = g.input(x.clone())?;
            let y = spec.forward(&mut g, p, xi)?;
            let l = g.bce_dice(y, &target, 0.5)?;
            Ok((g, l))
        },
        1e-3,
        a.tolerance,
        a.max_coords,
    )?;
    let mut text = String::from("param,max_rel_error,checked,refined,stuck_on_kink\n");
    for p in &report.params {
        info!(
            "gradcheck: {:<16} max rel error {:.3e} ({} checked, {} refined, {} stuck)",
            p.name, p.max_rel_error, p.checked, p.refined, p.skipped_kinks
        );
        let _ = writeln!(
            text,
            "{},{:e},{},{},{}",
            p.name, p.max_rel_error, p.checked, p.refined, p.skipped_kinks
        );
    }
    if let Some(path) = &a.out {
        write_file(path, text.as_bytes())?;
    }
    if report.passed() {
        info!(
            "gradcheck: passed, max rel error {:.3e} < {:e}",
            report.max_rel_error(),
            a.tolerance
        );
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradcheck failed: max rel error {:.3e} >= {:e}",
            report.max_rel_error(),
            a.tolerance
        )))
    }
}
