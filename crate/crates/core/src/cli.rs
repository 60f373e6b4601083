//! Command-line front end.
//!
//! Every subcommand reads and writes the crate's file formats under `--out`.
//! Exit codes: 0 success, 2 usage, 3 data format, 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::angledist::{load_pmf, random_piecewise_pmf, save_pmf, Pmf};
use crate::baselines::{admm_tv_traced, em_reconstruct, AdmmConfig, EmConfig, EmInit};
use crate::critic::save_checkpoint;
use crate::dataset::{synthesize, Noise};
use crate::error::{Error, Result};
use crate::image::{load_image, random_piecewise_image, save_image, save_pgm, shepp_logan, Image};
use crate::metrics::evaluate;
use crate::plot;
use crate::projector::{fbp_with, load_sinogram, save_sinogram, AngleGrid, FbpWindow};
use crate::trainer::{save_history, train_with, Control, GroundTruth, PmfMode, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "uvtomo", version, about = "Unknown-view tomography: recover an image and its angle distribution")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON file with optional "train", "admm" and "em" blocks.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a test image.
    GenPhantom(PhantomArgs),
    /// Project an image at random angles into a sinogram file.
    GenDataset(DatasetArgs),
    /// Adversarial reconstruction of image and PMF.
    Train(TrainArgs),
    /// Filtered backprojection from labeled lines.
    Fbp(FbpArgs),
    /// TV-regularized ADMM from labeled lines.
    Admm(DataArgs),
    /// EM over latent angles.
    Em(EmArgs),
    /// PSNR / CC / PMF distance after alignment.
    Eval(EvalArgs),
    /// SVG / PGM figures.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PhantomKind {
    SheppLogan,
    Random,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, value_enum, default_value = "shepp-logan")]
    pub kind: PhantomKind,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    /// Shapes in a random phantom.
    #[arg(long, default_value_t = 6)]
    pub n_shapes: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PmfKind {
    Uniform,
    Piecewise,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Image file; a Shepp-Logan phantom of side `--d` when absent.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long, default_value_t = 120)]
    pub n_theta: usize,
    #[arg(long = "lines", default_value_t = 20_000)]
    pub n_lines: usize,
    /// Signal-to-noise ratio; "inf" for clean lines.
    #[arg(long, conflicts_with = "sigma")]
    pub snr: Option<f64>,
    /// Noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum, default_value = "piecewise")]
    pub pmf: PmfKind,
    /// PMF file overriding `--pmf`.
    #[arg(long)]
    pub pmf_file: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub n_pieces: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub pmf_mode: Option<PmfMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Ground-truth image, for per-epoch metrics.
    #[arg(long)]
    pub gt_image: Option<PathBuf>,
    /// Ground-truth PMF; required by `--pmf-mode fixed-known`.
    #[arg(long)]
    pub gt_pmf: Option<PathBuf>,
    /// Write a snapshot every this many epochs (0 = never).
    #[arg(long, default_value_t = 0)]
    pub save_every: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct FbpArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "hann")]
    pub window: FbpWindow,
}

#[derive(Debug, Args)]
pub struct EmArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub init: Option<EmInit>,
    #[arg(long)]
    pub gt_image: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Likelihood noise std; defaults to the sinogram's sigma when positive.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub recon: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, requires = "gt_pmf")]
    pub pmf: Option<PathBuf>,
    #[arg(long, requires = "pmf")]
    pub gt_pmf: Option<PathBuf>,
    /// Angle bins for the rotation search; taken from the PMFs when given.
    #[arg(long, default_value_t = 120)]
    pub n_theta: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Loss history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, requires = "gt_pmf")]
    pub pmf: Option<PathBuf>,
    #[arg(long, requires = "pmf")]
    pub gt_pmf: Option<PathBuf>,
    /// Images to tile into one PGM.
    #[arg(long, num_args = 1..)]
    pub images: Vec<PathBuf>,
}

/// Solver settings read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub admm: AdmmConfig,
    pub em: EmConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Precondition(_) | Error::ShapeMismatch(_) => EXIT_USAGE,
        Error::Format { .. } | Error::Io { .. } => EXIT_FORMAT,
        Error::Numerical(_) | Error::UndefinedMetric(_) => EXIT_NUMERICAL,
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Run a parsed command inside a pool of `--threads` workers.
pub fn execute(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let config = FileConfig::load(cli.config.as_deref())?;
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    match &cli.command {
        Command::GenPhantom(a) => gen_phantom(cli, a),
        Command::GenDataset(a) => gen_dataset(cli, a),
        Command::Train(a) => cmd_train(cli, a, config.train),
        Command::Fbp(a) => cmd_fbp(cli, a),
        Command::Admm(a) => cmd_admm(cli, a, &config.admm),
        Command::Em(a) => cmd_em(cli, a, config.em),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Plot(a) => cmd_plot(cli, a),
    }
}

fn save_image_pair(img: &Image, dir: &Path, stem: &str) -> Result<()> {
    save_image(img, dir.join(format!("{stem}.uvim")))?;
    save_pgm(img, dir.join(format!("{stem}.pgm")))
}

fn gen_phantom(cli: &Cli, a: &PhantomArgs) -> Result<()> {
    let img = match a.kind {
        PhantomKind::SheppLogan => shepp_logan(a.d)?,
        PhantomKind::Random => random_piecewise_image(a.d, a.n_shapes, cli.seed)?,
    };
    save_image_pair(&img, &cli.out, "phantom")?;
    println!("wrote {}", cli.out.join("phantom.uvim").display());
    Ok(())
}

fn gen_dataset(cli: &Cli, a: &DatasetArgs) -> Result<()> {
    let img = match &a.image {
        Some(p) => load_image(p)?,
        None => shepp_logan(a.d)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let pmf = match (&a.pmf_file, a.pmf) {
        (Some(p), _) => load_pmf(p)?,
        (None, PmfKind::Uniform) => Pmf::uniform(a.n_theta),
        (None, PmfKind::Piecewise) => random_piecewise_pmf(a.n_theta, a.n_pieces, &mut rng)?,
    };
    let noise = match (a.snr, a.sigma) {
        (Some(s), _) => Noise::Snr(s),
        (None, Some(s)) => Noise::Sigma(s),
        (None, None) => Noise::None,
    };
    let set = synthesize(&img, &pmf, a.n_lines, noise, &mut rng)?;
    save_sinogram(&set, cli.out.join("sinogram.uvtg"))?;
    save_image_pair(&img, &cli.out, "gt_image")?;
    save_pmf(&pmf, cli.out.join("gt_pmf.csv"))?;
    println!(
        "wrote {} lines of length {} over {} bins, sigma {}",
        set.len(),
        set.d(),
        set.n_theta,
        set.sigma
    );
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs, mut cfg: TrainConfig) -> Result<()> {
    let data = load_sinogram(&a.data)?;
    cfg.seed = cli.seed;
    if let Some(m) = a.pmf_mode {
        cfg.pmf_mode = m;
    }
    if let Some(e) = a.epochs {
        cfg.n_epochs = e;
    }
    let gt_pmf = a.gt_pmf.as_ref().map(load_pmf).transpose()?;
    let gt_image = a.gt_image.as_ref().map(load_image).transpose()?;
    if cfg.pmf_mode == PmfMode::FixedKnown && gt_pmf.is_none() {
        return Err(Error::InvalidArgument("--pmf-mode fixed-known needs --gt-pmf".into()));
    }
    let ground_truth = match (&gt_image, &gt_pmf) {
        (Some(image), Some(pmf)) => Some(GroundTruth { image, pmf }),
        _ => None,
    };
    let snapshots = cli.out.join("snapshots");
    if a.save_every > 0 {
        fs::create_dir_all(&snapshots).map_err(|e| Error::io(&snapshots, e))?;
    }
    let out = train_with(&data, &cfg, gt_pmf.as_ref(), ground_truth, |rec, state| {
        if ground_truth.is_some() {
            println!(
                "epoch {:>4}  critic {:>10.5}  gen {:>10.5}  psnr {:>7.3}  cc {:>6.4}  tv {:>6.4}",
                rec.epoch,
                rec.critic_loss,
                rec.gen_loss,
                rec.psnr.unwrap_or(f64::NAN),
                rec.cc.unwrap_or(f64::NAN),
                rec.tv_dist_to_gt.unwrap_or(f64::NAN)
            );
        }
        if a.save_every > 0 && rec.epoch % a.save_every == 0 {
            save_image(&state.image(), snapshots.join(format!("image_{:04}.uvim", rec.epoch)))?;
            save_pmf(&state.pmf(), snapshots.join(format!("pmf_{:04}.csv", rec.epoch)))?;
        }
        Ok(Control::Continue)
    })?;
    save_image_pair(&out.image, &cli.out, "image")?;
    save_pmf(&out.pmf, cli.out.join("pmf.csv"))?;
    save_checkpoint(&out.state.critic, cli.out.join("critic.uvck"))?;
    save_history(&out.history, cli.out.join("history.csv"))?;
    println!("wrote {}", cli.out.display());
    Ok(())
}

fn cmd_fbp(cli: &Cli, a: &FbpArgs) -> Result<()> {
    let data = load_sinogram(&a.data)?;
    let img = fbp_with(&data, &AngleGrid::new(data.n_theta)?, a.window)?;
    save_image_pair(&img, &cli.out, "fbp")
}

fn cmd_admm(cli: &Cli, a: &DataArgs, cfg: &AdmmConfig) -> Result<()> {
    let data = load_sinogram(&a.data)?;
    let res = admm_tv_traced(&data, cfg)?;
    save_image_pair(&res.image, &cli.out, "admm")?;
    let mut trace = String::from("iteration,objective\n");
    for (i, v) in res.objective.iter().enumerate() {
        trace.push_str(&format!("{},{v}\n", i + 1));
    }
    plot::write_text(cli.out.join("admm_trace.csv"), &trace)
}

fn cmd_em(cli: &Cli, a: &EmArgs, mut cfg: EmConfig) -> Result<()> {
    let data = load_sinogram(&a.data)?;
    cfg.seed = cli.seed;
    if let Some(init) = a.init {
        cfg.init = init;
    }
    if let Some(n) = a.iters {
        cfg.n_iters = n;
    }
    match a.sigma {
        Some(s) => cfg.sigma = s,
        None if data.sigma > 0.0 => cfg.sigma = data.sigma,
        None => {}
    }
    let gt = a.gt_image.as_ref().map(load_image).transpose()?;
    let grid = AngleGrid::new(data.n_theta)?;
    let res = em_reconstruct(&data, &grid, &cfg, gt.as_ref())?;
    save_image_pair(&res.image, &cli.out, "em")?;
    save_pmf(&res.pmf, cli.out.join("em_pmf.csv"))?;
    let mut trace = String::from("iteration,log_likelihood,q_before,q_after\n");
    for (i, ll) in res.log_likelihood.iter().enumerate() {
        let q0 = res.q_before.get(i).map(|v| v.to_string()).unwrap_or_default();
        let q1 = res.q_after.get(i).map(|v| v.to_string()).unwrap_or_default();
        trace.push_str(&format!("{i},{ll},{q0},{q1}\n"));
    }
    plot::write_text(cli.out.join("em_trace.csv"), &trace)
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let recon = load_image(&a.recon)?;
    let gt = load_image(&a.gt)?;
    let pmfs = match (&a.pmf, &a.gt_pmf) {
        (Some(p), Some(q)) => Some((load_pmf(p)?, load_pmf(q)?)),
        _ => None,
    };
    let n_theta = pmfs.as_ref().map_or(a.n_theta, |(_, q)| q.len());
    let report = evaluate(&recon, &gt, pmfs.as_ref().map(|(p, q)| (p, q)), n_theta)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    plot::write_text(cli.out.join("eval.json"), &json)
}

fn read_history(path: &Path) -> Result<Vec<crate::trainer::EpochRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

fn cmd_plot(cli: &Cli, a: &PlotArgs) -> Result<()> {
    let mut wrote = false;
    if let Some(h) = &a.history {
        plot::write_text(cli.out.join("losses.svg"), &plot::loss_curves_svg(&read_history(h)?))?;
        wrote = true;
    }
    if let (Some(p), Some(q)) = (&a.pmf, &a.gt_pmf) {
        let svg = plot::pmf_overlay_svg(&load_pmf(q)?, &load_pmf(p)?)?;
        plot::write_text(cli.out.join("pmf.svg"), &svg)?;
        wrote = true;
    }
    if !a.images.is_empty() {
        let imgs = a.images.iter().map(load_image).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Image> = imgs.iter().collect();
        plot::write_bytes(cli.out.join("images.pgm"), &plot::image_grid_pgm(&refs, 4)?)?;
        wrote = true;
    }
    if !wrote {
        return Err(Error::InvalidArgument("nothing to plot: pass --history, --pmf/--gt-pmf or --images".into()));
    }
    Ok(())
}
