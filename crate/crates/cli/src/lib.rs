//! Command line front end: simulate cloudy stacks, remove clouds, inspect
//! sparsity-weight bounds, run benchmark sweeps, and score recoveries.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags or flag values),
//! 3 for I/O and data-format errors, 4 when a solver fails to converge and
//! `--strict` was given.

mod config;

pub use config::{load_config, CliConfig};

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use decloud::analysis;
use decloud::eval::{self, Method, MethodVariant, TrialSpec, DEFAULT_GRID_COUNT};
use decloud::imageio::{self, BitDepth, GrayImage};
use decloud::sim::{self, CloudSimConfig};
use decloud::solvers::{self, Completion, SolverConfig, DEFAULT_MASK_GAMMA, DEFAULT_MC_BETA};
use decloud::{Error, Mat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

// ===== Argument grammar =====

/// Cloud removal toolbox for co-registered grayscale image stacks.
#[derive(Debug, Parser)]
#[command(name = "decloud", version)]
pub struct Cli {
    /// JSON file with default knob values; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Composite procedural clouds over a ground image into an observed stack.
    Simulate(SimulateArgs),
    /// Decompose an observed stack into background and cloud layers.
    Remove(RemoveArgs),
    /// Print the operating bounds of the sparsity weight for a stack shape.
    Bounds(BoundsArgs),
    /// Benchmark methods over a lambda grid with seeded repeats.
    Sweep(SweepArgs),
    /// Score recovered images (and optionally cloud masks) against truth.
    Eval(EvalArgs),
}

/// Where the cloud-free ground scene comes from.
#[derive(Debug, Args)]
pub struct GroundSource {
    /// Cloud-free ground image (PGM or PNG).
    #[arg(long, value_name = "IMAGE", conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    /// Generate a synthetic ground scene of the given size instead.
    #[arg(long, value_name = "WxH")]
    pub synthetic: Option<String>,
}

/// Cloud generator knobs shared by `simulate` and `sweep`.
#[derive(Debug, Args)]
pub struct SimKnobs {
    /// Perlin lattice spacing in pixels.
    #[arg(long)]
    pub cell: Option<f64>,
    /// Number of noise octaves to sum.
    #[arg(long)]
    pub octaves: Option<u32>,
    /// Amplitude decay per octave, in (0, 1].
    #[arg(long)]
    pub persistence: Option<f64>,
    /// Frequency growth per octave, > 1.
    #[arg(long)]
    pub lacunarity: Option<f64>,
    /// Cloud density control in [0, 1].
    #[arg(long)]
    pub coverage: Option<f64>,
    /// Tonal exponent applied to the cloud field.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Equalize the cloud histogram after tonal shaping.
    #[arg(long)]
    pub equalize: bool,
    /// Base RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub ground: GroundSource,
    /// Number of observations to simulate.
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub knobs: SimKnobs,
    /// Output directory for truth.pgm, observed/cloud images and stack.lrm.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RemoveArgs {
    /// Observed stack: an .lrm matrix or a directory of images.
    #[arg(long, value_name = "LRM|DIR")]
    pub stack: PathBuf,
    /// Decomposition method.
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Sparsity weight: a number, "auto" (fitted optimum) or "default"
    /// (1/sqrt(d)). Omitting the flag means "auto".
    #[arg(long)]
    pub lambda: Option<String>,
    /// Haze penalty weight (aatm only).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Relative residual stopping tolerance.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Refine the background by masked completion and recover from it.
    #[arg(long)]
    pub mc: bool,
    /// Write the sparse cloud and the haze layer separately (aatm only).
    #[arg(long)]
    pub split_haze: bool,
    /// Exit with code 4 when the solver does not converge.
    #[arg(long)]
    pub strict: bool,
    /// Image width for reshaping when --stack is a bare .lrm matrix.
    #[arg(long)]
    pub width: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Pixels per image.
    #[arg(long)]
    pub d: usize,
    /// Number of images in the stack.
    #[arg(long)]
    pub n: usize,
    /// Observed stack (.lrm) for the data-dependent bounds.
    #[arg(long, value_name = "LRM")]
    pub stack: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub ground: GroundSource,
    /// Number of observations per simulated stack.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated pipelines, e.g. "rpca,rpca+mc,aatm".
    #[arg(long)]
    pub methods: Option<String>,
    /// Odd number of lambda grid points.
    #[arg(long)]
    pub grid_count: Option<usize>,
    /// Seeded repeats per pipeline/lambda combination.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[command(flatten)]
    pub knobs: SimKnobs,
    /// Records CSV path; aggregates land next to it as <stem>_agg.csv.
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Recovered background: an .lrm matrix or a directory of images.
    #[arg(long, value_name = "LRM|DIR")]
    pub recovered: PathBuf,
    /// Ground truth image.
    #[arg(long, value_name = "IMAGE")]
    pub truth: PathBuf,
    /// Estimated cloud layer (.lrm) to score as a binary mask.
    #[arg(long, value_name = "LRM", requires = "cloud_true")]
    pub cloud_est: Option<PathBuf>,
    /// True cloud layer: an .lrm matrix or a directory of images.
    #[arg(long, value_name = "LRM|DIR", requires = "cloud_est")]
    pub cloud_true: Option<PathBuf>,
}

/// Methods accepted by `remove`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rpca,
    Atm,
    Aatm,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Rpca => Method::Rpca,
            MethodArg::Atm => Method::Atm,
            MethodArg::Aatm => Method::Aatm,
        }
    }
}

/// Parses argv without running anything; handy for grammar tests.
pub fn parse_args<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

// ===== Entry point =====

/// Runs the CLI against the given argv, writing to the supplied streams, and
/// returns the process exit code.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                return EXIT_USAGE;
            }
            let _ = write!(out, "{rendered}");
            return EXIT_OK;
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

#[derive(Debug)]
enum CliError {
    /// A flag or flag value is wrong; maps to exit code 2.
    Usage(String),
    /// Reading, writing or interpreting data failed; maps to exit code 3.
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let file = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args, &file),
        Command::Remove(args) => cmd_remove(&args, &file, err),
        Command::Bounds(args) => cmd_bounds(&args, out),
        Command::Sweep(args) => cmd_sweep(&args, &file),
        Command::Eval(args) => cmd_eval(&args, out),
    }
}

// ===== Shared plumbing =====

impl GroundSource {
    fn load(&self) -> Result<GrayImage, CliError> {
        match (&self.input, &self.synthetic) {
            (Some(path), None) => Ok(imageio::load_gray(path)?),
            (None, Some(dims)) => {
                let (w, h) = parse_dims(dims)?;
                Ok(sim::synthetic_ground(w, h))
            }
            _ => Err(usage("give exactly one of --input or --synthetic")),
        }
    }
}

fn parse_dims(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || usage(format!("expected dimensions like 512x512, got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn build_sim_config(ground: &GrayImage, knobs: &SimKnobs, file: &CliConfig) -> CloudSimConfig {
    let mut cfg = CloudSimConfig::new(ground.width(), ground.height());
    if let Some(v) = knobs.cell.or(file.cell) {
        cfg.cell = v;
    }
    if let Some(v) = knobs.octaves.or(file.octaves) {
        cfg.octaves = v;
    }
    if let Some(v) = knobs.persistence.or(file.persistence) {
        cfg.persistence = v;
    }
    if let Some(v) = knobs.lacunarity.or(file.lacunarity) {
        cfg.lacunarity = v;
    }
    if let Some(v) = knobs.coverage.or(file.coverage) {
        cfg.coverage = v;
    }
    if let Some(v) = knobs.gamma.or(file.gamma) {
        cfg.gamma = v;
    }
    cfg.equalize = knobs.equalize || file.equalize.unwrap_or(false);
    cfg.seed = knobs.seed.or(file.seed).unwrap_or(0);
    cfg
}

/// Lists the images in a directory (by .pgm/.png extension), sorted by name.
fn list_images(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::Io {
                path: dir.into(),
                source: e,
            })?
            .path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("pgm") | Some("png")) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(Error::InvalidArgument(format!(
            "no .pgm or .png images found in {}",
            dir.display()
        ))));
    }
    Ok(paths)
}

/// Loads an observed stack from an .lrm matrix or a directory of images, and
/// reports the image width and height the columns reshape to.
fn load_stack(path: &Path, width_hint: Option<usize>) -> Result<(Mat, usize, usize), CliError> {
    if path.is_dir() {
        let mut images = Vec::new();
        for file in list_images(path)? {
            images.push(imageio::load_gray(&file)?);
        }
        let (w, h) = (images[0].width(), images[0].height());
        Ok((imageio::stack_to_matrix(&images)?, w, h))
    } else {
        let mat = imageio::read_matrix(path)?;
        let width = width_hint
            .ok_or_else(|| usage("pass --width to reshape a bare .lrm stack into images"))?;
        if width == 0 || mat.nrows() % width != 0 {
            return Err(usage(format!(
                "width {width} does not divide the pixel count {}",
                mat.nrows()
            )));
        }
        let height = mat.nrows() / width;
        Ok((mat, width, height))
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Data(Error::Io {
            path: dir.into(),
            source: e,
        })
    })
}

fn write_json(path: &Path, text: String) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| {
        CliError::Data(Error::Io {
            path: path.into(),
            source: e,
        })
    })
}

fn emit(out: &mut dyn Write, line: std::fmt::Arguments) -> Result<(), CliError> {
    out.write_fmt(line)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|e| {
            CliError::Data(Error::Io {
                path: "<stdout>".into(),
                source: e,
            })
        })
}

// ===== simulate =====

fn cmd_simulate(args: &SimulateArgs, file: &CliConfig) -> Result<i32, CliError> {
    let ground = args.ground.load()?;
    let n = args
        .n
        .or(file.n)
        .ok_or_else(|| usage("--n is required (or set n in the config file)"))?;
    let cfg = build_sim_config(&ground, &args.knobs, file);
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let stack = sim::simulate_stack(&ground, n, &cfg)?;
    create_dir(&args.out_dir)?;
    imageio::save_gray(&ground, args.out_dir.join("truth.pgm"), BitDepth::Eight)?;
    let observed = imageio::matrix_to_stack(&stack.d, ground.width(), ground.height())?;
    for (i, img) in observed.iter().enumerate() {
        let path = args.out_dir.join(format!("observed_{i:03}.pgm"));
        imageio::save_gray(img, path, BitDepth::Eight)?;
    }
    for (i, cloud) in stack.clouds.iter().enumerate() {
        let img = GrayImage::from_matrix(&cloud.values)?;
        let path = args.out_dir.join(format!("cloud_{i:03}.pgm"));
        imageio::save_gray(&img, path, BitDepth::Eight)?;
    }
    imageio::write_matrix(&stack.d, args.out_dir.join("stack.lrm"))?;
    Ok(EXIT_OK)
}

// ===== remove =====

#[derive(serde::Serialize)]
struct RunLog<'a> {
    method: &'a str,
    lambda: f64,
    beta: f64,
    epsilon: f64,
    residual: f64,
    outer_iters: usize,
    wall_seconds: f64,
    converged: bool,
    seed: Option<u64>,
    with_mc: bool,
}

fn resolve_lambda(
    flag: Option<&str>,
    file: &CliConfig,
    d: usize,
    n: usize,
) -> Result<f64, CliError> {
    let auto = || {
        analysis::lambda_star(d, n).map_err(|e| {
            usage(format!(
                "cannot pick lambda automatically ({e}); pass --lambda <value>"
            ))
        })
    };
    let check = |v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(usage(format!("lambda must be positive and finite, got {v}")))
        }
    };
    match flag {
        None => match file.lambda {
            Some(v) => check(v),
            None => auto(),
        },
        Some("auto") => auto(),
        Some("default") => Ok((d as f64).sqrt().recip()),
        Some(s) => s
            .parse::<f64>()
            .map_err(|_| usage(format!("lambda must be a number, \"auto\" or \"default\", got {s:?}")))
            .and_then(check),
    }
}

fn build_solver_config(
    lambda: f64,
    beta: Option<f64>,
    epsilon: Option<f64>,
    file: &CliConfig,
) -> Result<SolverConfig, CliError> {
    let mut cfg = SolverConfig::new(lambda);
    if let Some(v) = beta.or(file.beta) {
        cfg.beta = v;
    }
    if let Some(v) = epsilon.or(file.epsilon) {
        cfg.epsilon = v;
    }
    if let Some(v) = file.rho {
        cfg.rho = v;
    }
    if let Some(v) = file.mu0_scale {
        cfg.mu0_scale = v;
    }
    if let Some(v) = file.mu_max_factor {
        cfg.mu_max_factor = v;
    }
    if let Some(v) = file.max_outer_iters {
        cfg.max_outer_iters = v;
    }
    if let Some(v) = file.inner_kmax {
        cfg.inner_kmax = v;
    }
    if let Some(v) = file.inner_ftol {
        cfg.inner_ftol = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_remove(args: &RemoveArgs, file: &CliConfig, err: &mut dyn Write) -> Result<i32, CliError> {
    let (d_mat, width, height) = load_stack(&args.stack, args.width.or(file.width))?;
    let lambda = resolve_lambda(args.lambda.as_deref(), file, d_mat.nrows(), d_mat.ncols())?;
    let cfg = build_solver_config(lambda, args.beta, args.epsilon, file)?;
    let method: Method = args.method.into();

    let dec = match method {
        Method::Rpca => solvers::rpca(&d_mat, &cfg)?,
        Method::Atm => solvers::atm(&d_mat, &cfg)?,
        Method::Aatm => solvers::aatm(&d_mat, &cfg)?,
    };
    let mut converged = dec.converged;
    let mut wall_seconds = dec.wall_seconds;
    let completion: Option<Completion> = if args.mc {
        let mask = solvers::cloud_mask(&dec.cloud(), DEFAULT_MASK_GAMMA);
        let alpha = solvers::default_mc_alpha(d_mat.nrows());
        let fill = solvers::matrix_complete(&d_mat, &mask, alpha, DEFAULT_MC_BETA, &cfg)?;
        converged &= fill.converged;
        wall_seconds += fill.wall_seconds;
        Some(fill)
    } else {
        None
    };

    create_dir(&args.out_dir)?;
    imageio::write_matrix(&dec.l, args.out_dir.join("L.lrm"))?;
    let cloud = dec.cloud();
    match (&dec.n, args.split_haze) {
        (Some(haze), true) => {
            imageio::write_matrix(&dec.c, args.out_dir.join("C.lrm"))?;
            imageio::write_matrix(haze, args.out_dir.join("N.lrm"))?;
        }
        _ => imageio::write_matrix(&cloud, args.out_dir.join("C.lrm"))?,
    }
    if let Some(fill) = &completion {
        imageio::write_matrix(&fill.b, args.out_dir.join("B.lrm"))?;
    }

    let recovered = completion.as_ref().map(|f| &f.b).unwrap_or(&dec.l);
    for (i, img) in imageio::matrix_to_stack(recovered, width, height)?.iter().enumerate() {
        let path = args.out_dir.join(format!("recovered_{i:03}.pgm"));
        imageio::save_gray(img, path, BitDepth::Eight)?;
    }
    for (i, img) in imageio::matrix_to_stack(&cloud, width, height)?.iter().enumerate() {
        let path = args.out_dir.join(format!("cloud_{i:03}.pgm"));
        imageio::save_gray(img, path, BitDepth::Eight)?;
    }

    let log = RunLog {
        method: method.name(),
        lambda,
        beta: cfg.beta,
        epsilon: cfg.epsilon,
        residual: dec.residual,
        outer_iters: dec.outer_iters,
        wall_seconds,
        converged,
        seed: None,
        with_mc: args.mc,
    };
    let text = serde_json::to_string_pretty(&log).expect("run log serializes");
    write_json(&args.out_dir.join("run.json"), text + "\n")?;

    if !converged {
        let _ = writeln!(
            err,
            "warning: solver stopped at residual {:.3e} after {} outer iterations \
             without reaching epsilon {:.3e}",
            dec.residual, dec.outer_iters, cfg.epsilon
        );
        if args.strict {
            return Ok(EXIT_NOT_CONVERGED);
        }
    }
    Ok(EXIT_OK)
}

// ===== bounds =====

fn cmd_bounds(args: &BoundsArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let data = match &args.stack {
        Some(path) => Some(imageio::read_matrix(path)?),
        None => None,
    };
    let bounds = analysis::lambda_bounds(args.d, args.n, data.as_ref())
        .map_err(|e| usage(e.to_string()))?;
    emit(out, format_args!("lambda_min={:.3e}", bounds.lambda_min))?;
    emit(
        out,
        format_args!("lambda_max_general={:.3e}", bounds.lambda_max_general),
    )?;
    if let Some(v) = bounds.lambda_max_data {
        emit(out, format_args!("lambda_max_data={v:.3e}"))?;
    }
    if let Some(v) = bounds.lambda_max_cheap {
        emit(out, format_args!("lambda_max_cheap={v:.3e}"))?;
    }
    emit(
        out,
        format_args!("lambda_max_asymptotic={:.3e}", bounds.lambda_max_asymptotic),
    )?;
    emit(
        out,
        format_args!("lambda_max_simplified={:.3e}", bounds.lambda_max_simplified),
    )?;
    if args.n >= 2 {
        let star = analysis::lambda_star(args.d, args.n).map_err(|e| usage(e.to_string()))?;
        emit(out, format_args!("lambda_star={star:.3e}"))?;
    }
    Ok(EXIT_OK)
}

// ===== sweep =====

fn parse_method_list(csv: &str) -> Result<Vec<MethodVariant>, CliError> {
    let variants: Vec<MethodVariant> = csv
        .split(',')
        .map(|part| part.trim().parse::<MethodVariant>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(e.to_string()))?;
    if variants.is_empty() {
        return Err(usage("--methods must name at least one pipeline"));
    }
    Ok(variants)
}

fn cmd_sweep(args: &SweepArgs, file: &CliConfig) -> Result<i32, CliError> {
    let ground = args.ground.load()?;
    let n = args
        .n
        .or(file.n)
        .ok_or_else(|| usage("--n is required (or set n in the config file)"))?;
    let methods_csv = args
        .methods
        .clone()
        .or_else(|| file.methods.clone())
        .ok_or_else(|| usage("--methods is required (or set methods in the config file)"))?;
    let methods = parse_method_list(&methods_csv)?;
    let count = args.grid_count.or(file.grid_count).unwrap_or(DEFAULT_GRID_COUNT);
    let d = ground.width() * ground.height();
    let lambda_grid = eval::default_lambda_grid(d, count).map_err(|e| usage(e.to_string()))?;
    let repeats = args.repeats.or(file.repeats).unwrap_or(5);
    let base_seed = args.knobs.seed.or(file.seed).unwrap_or(0);
    let sim_cfg = build_sim_config(&ground, &args.knobs, file);

    let spec = TrialSpec {
        ground_truth: ground,
        n,
        sim: sim_cfg,
        methods,
        lambda_grid,
        repeats,
        base_seed,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let report = eval::run_sweep(&spec)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    eval::export_report(&report, &args.out)?;
    Ok(EXIT_OK)
}

// ===== eval =====

/// Binary cloud indicator (1 = cloud) from a continuous cloud layer, using
/// the same deviation threshold the completion mask uses.
fn cloud_indicator(c: &Mat) -> Mat {
    let omega = solvers::cloud_mask(c, DEFAULT_MASK_GAMMA).omega;
    omega.map(|trusted| 1.0 - trusted)
}

fn load_images_or_matrix(path: &Path, width: usize, height: usize) -> Result<Vec<GrayImage>, CliError> {
    if path.is_dir() {
        let mut images = Vec::new();
        for file in list_images(path)? {
            images.push(imageio::load_gray(&file)?);
        }
        Ok(images)
    } else {
        let mat = imageio::read_matrix(path)?;
        Ok(imageio::matrix_to_stack(&mat, width, height)?)
    }
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let truth = imageio::load_gray(&args.truth)?;
    let truth_mat = truth.to_matrix();
    let recovered = load_images_or_matrix(&args.recovered, truth.width(), truth.height())?;
    for img in &recovered {
        let r = eval::recovery_error(&img.to_matrix(), &truth_mat)?;
        emit(out, format_args!("r={r:.6e}"))?;
    }
    if let (Some(est_path), Some(true_path)) = (&args.cloud_est, &args.cloud_true) {
        let est = imageio::read_matrix(est_path)?;
        let truth_clouds = load_images_or_matrix(true_path, truth.width(), truth.height())?;
        let true_mat = imageio::stack_to_matrix(&truth_clouds)?;
        let iou = eval::mask_iou(&cloud_indicator(&est), &cloud_indicator(&true_mat))?;
        emit(out, format_args!("iou={iou:.6e}"))?;
    }
    Ok(EXIT_OK)
}

// ===== Tests =====
