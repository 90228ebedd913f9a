use std::path::PathBuf;

use clap::Args;
use hdrsr_core::error::{Error, Result};
use hdrsr_core::image::{
    gamma_map, read_hdr_image, read_ldr_image, rgb_to_ycbcr, write_hdr_image, write_ldr_image,
    PixelRange, RasterImage,
};
use hdrsr_core::pipeline::{infer as run_infer, linear_stretch, PipelineConfig};
use hdrsr_core::refnet::{build_refnet, load_weights, save_weights, RefNet, RefNetConfig};
use hdrsr_core::retinex::{bound_reflectance, decompose as run_decompose};
use hdrsr_core::tensor::gradcheck::{check_all_layers, GRADCHECK_TOLERANCE};
use hdrsr_core::training::{prepare_dataset, train as run_train, DatasetOptions, PatchStore, TrainConfig, TrainMode};

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    input: PathBuf,
    /// Generator weights; defaults to `weights_path` from the config file.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out_hdr: PathBuf,
    #[arg(long)]
    out_ldr: PathBuf,
    /// `key=value` overrides of the pipeline defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_illum: PathBuf,
    #[arg(long)]
    out_refl: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    ldr_dir: PathBuf,
    #[arg(long)]
    hdr_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Patch store written by `prepare-data`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "basic")]
    mode: TrainMode,
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output weight file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    mu: f64,
    /// Generator width; the default is the full-size network.
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    unet_depth: Option<usize>,
    #[arg(long, default_value_t = 64)]
    disc_base: usize,
    #[arg(long, default_value_t = 500)]
    checkpoint_every: usize,
    /// Per-step loss report; defaults to `<out>.csv`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    unet_depth: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct StretchArgs {
    #[arg(long)]
    input: PathBuf,
    /// Display peak luminance in nits.
    #[arg(long)]
    peak: f64,
    #[arg(long)]
    out: PathBuf,
}

fn pipeline_config(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_file(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn generator_config(base: Option<usize>, depth: Option<usize>) -> RefNetConfig {
    match (base, depth) {
        (None, None) => RefNetConfig::default(),
        (b, d) => RefNetConfig::small(
            b.unwrap_or(hdrsr_core::refnet::DEFAULT_BASE_CHANNELS),
            d.unwrap_or(hdrsr_core::refnet::DEFAULT_UNET_DEPTH),
        ),
    }
}

/// Builds the generator whose architecture matches a weight file and loads
/// the weights into it.
pub fn load_generator(path: &PathBuf) -> Result<RefNet> {
    let params = load_weights(path)?;
    let config = RefNetConfig::infer_from_params(&params)?;
    let mut net = build_refnet(&config, 0)?;
    net.network.load_params(params)?;
    Ok(net)
}

pub fn infer(args: InferArgs) -> Result<()> {
    let config = pipeline_config(args.config.as_ref())?;
    let weights = args
        .weights
        .or_else(|| config.weights_path.clone())
        .ok_or_else(|| Error::Config("no weights given (--weights or weights_path)".into()))?;
    let net = load_generator(&weights)?;
    let input = read_ldr_image(&args.input)?;
    let out = run_infer(&input, &net, &config)?;
    write_hdr_image(&out.hdr, &args.out_hdr)?;
    write_ldr_image(&out.ldr, &args.out_ldr)?;
    Ok(())
}

pub fn decompose(args: DecomposeArgs) -> Result<()> {
    let config = pipeline_config(args.config.as_ref())?;
    let input = read_ldr_image(&args.input)?;
    let luma = if input.channels() == 3 { rgb_to_ycbcr(&input)?.0 } else { input.channel(0) };
    let linear = gamma_map(&luma.map(|v| v.clamp(0.0, 1.0)), config.gamma_linearize)?;
    let parts = run_decompose(&linear, &config.wls)?;
    let illum = gamma_map(&parts.illumination, 1.0 / config.gamma_linearize)?.map(|v| v.clamp(0.0, 1.0));
    let refl = bound_reflectance(&parts.reflectance).map(|t| ((t + 1.0) / 2.0).clamp(0.0, 1.0));
    write_ldr_image(&RasterImage::from_planes(&[&illum], PixelRange::Ldr)?, &args.out_illum)?;
    write_ldr_image(&RasterImage::from_planes(&[&refl], PixelRange::Ldr)?, &args.out_refl)?;
    Ok(())
}

pub fn prepare(args: PrepareArgs) -> Result<()> {
    let mut options = DatasetOptions::default();
    if let Some(t) = args.threads {
        options.threads = t.max(1);
    }
    let (store, report) = prepare_dataset(&args.ldr_dir, &args.hdr_dir, &options)?;
    for stem in &report.skipped {
        eprintln!("warning: {stem} has no partner image, skipped");
    }
    for stem in &report.tonemapped {
        eprintln!("warning: {stem} tonemapped from linear .hdr with the Reinhard operator");
    }
    for stem in &report.cropped {
        eprintln!("warning: {stem} cropped to even dimensions");
    }
    if store.is_empty() {
        return Err(Error::Data("no patch pairs extracted".into()));
    }
    store.save(&args.out)?;
    println!("{} patch pairs from {} images -> {}", store.len(), store.sources().len(), args.out.display());
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let store = PatchStore::load(&args.data)?;
    let config = TrainConfig {
        batch_size: args.batch_size,
        total_steps: args.steps,
        mu: args.mu,
        seed: args.seed,
        mode: args.mode,
        checkpoint_every: args.checkpoint_every,
        generator: generator_config(args.base_channels, args.unet_depth),
        discriminator_base: args.disc_base,
        ..TrainConfig::default()
    };
    let report = run_train(&config, &store, &args.out)?;
    let csv = args.report.unwrap_or_else(|| {
        let mut s = args.out.clone().into_os_string();
        s.push(".csv");
        s.into()
    });
    report.write_csv(&csv)?;
    if let Some(last) = report.steps.last() {
        println!("step {} loss_recon {:.6}", last.step, last.loss_recon);
    }
    println!("weights -> {}, report -> {}", args.out.display(), csv.display());
    Ok(())
}

pub fn gradcheck(args: GradcheckArgs) -> Result<()> {
    let reports = check_all_layers(args.seed)?;
    let mut worst = 0.0f64;
    for r in &reports {
        println!(
            "{:<22} coords {:>5}  max rel err {:.3e}  {}",
            r.name,
            r.coordinates,
            r.max_relative_error,
            if r.passed() { "ok" } else { "FAIL" }
        );
        worst = worst.max(r.max_relative_error);
    }
    println!("max relative error {worst:.3e}");
    if worst > GRADCHECK_TOLERANCE {
        return Err(Error::Numerical(format!(
            "gradient check failed: {worst:.3e} > {GRADCHECK_TOLERANCE:e}"
        )));
    }
    Ok(())
}

pub fn init_weights(args: InitArgs) -> Result<()> {
    let net = build_refnet(&generator_config(args.base_channels, args.unet_depth), args.seed)?;
    save_weights(net.network.params(), &args.out)?;
    println!("{} parameters -> {}", net.parameter_count(), args.out.display());
    Ok(())
}

pub fn stretch(args: StretchArgs) -> Result<()> {
    let hdr = read_hdr_image(&args.input)?;
    let out = linear_stretch(&hdr, args.peak)?;
    write_hdr_image(&out.image, &args.out)?;
    println!("peak {} nits -> {}", out.peak_nits, args.out.display());
    Ok(())
}
