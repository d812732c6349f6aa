use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sds_core::bandga::{run_ga, select_gene_bands, GaConfig};
use sds_core::classifiers::ClassifierKind;
use sds_core::cnn::{self, TrainConfig};
use sds_core::dataset::{read_dataset, write_dataset};
use sds_core::eval::{fit_pipeline, run_cv, CvConfig};
use sds_core::hsio::{parse_any, parse_envi_bil, write_hsc};
use sds_core::preprocess::{
    central_spectrum, encode_png, preprocess_raw, rgb_composite, trim_bands, BinSpec, CalibrationPair, TrimSpec,
    BINNED_BANDS, DEFAULT_EPSILON, DEFAULT_RGB_BANDS,
};
use sds_core::synth::{generate, SynthSpec};
use sds_core::{Cube, HyperCube, Stage};
use sds_service::ServiceConfig;
use serde_json::json;

#[derive(Parser)]
#[command(name = "sdsleaf", version, about = "Hyperspectral soybean leaf SDS classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flat-field, bin, resize and trim a raw 348-band cube.
    Preprocess(PreprocessArgs),
    /// Print the central-pixel spectrum of a cube.
    Spectrum {
        #[arg(long)]
        cube: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write an RGB preview of a trimmed (or binned) cube.
    Preview {
        #[arg(long)]
        cube: PathBuf,
        #[arg(long)]
        png: PathBuf,
    },
    /// Train the feature-extractor CNN on selected bands.
    TrainCnn(TrainCnnArgs),
    /// Search for informative bands with the genetic algorithm.
    GaSelect(GaArgs),
    /// Stratified k-fold evaluation of CNN features with classical classifiers.
    Eval(EvalArgs),
    /// Write a synthetic labelled dataset.
    Synth(SynthArgs),
    /// Fit a servable CNN + classifier bundle on a whole dataset.
    TrainModel(TrainModelArgs),
    /// Run the HTTP diagnosis service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    white: PathBuf,
    #[arg(long)]
    dark: PathBuf,
    /// Spectral bin width.
    #[arg(long, default_value_t = 3)]
    ks: usize,
    #[arg(long, default_value = "125x100", value_parser = parse_frame)]
    resize: (usize, usize),
    #[arg(long, default_value = "6,9", value_parser = parse_trim)]
    trim: (usize, usize),
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainCnnArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "21,32,60,79,97")]
    bands: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
}

#[derive(Args)]
struct GaArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 12)]
    pop: usize,
    #[arg(long, default_value_t = 8)]
    gens: usize,
    #[arg(long, default_value_t = 0.7)]
    cx: f64,
    #[arg(long, default_value_t = 0.2)]
    r#mut: f64,
    #[arg(long, default_value_t = 3)]
    tourn: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// A `ga-select` JSON file, or a comma-separated band list.
    #[arg(long, default_value = "21,32,60,79,97")]
    bands: String,
    /// `all` or a comma-separated list of classifier names.
    #[arg(long, default_value = "all")]
    kinds: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Per (fold, kind, class) rows.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Samples per class.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value = "21,32,60,79,97")]
    bands: String,
    #[arg(long, default_value_t = 0.15)]
    delta: f64,
    #[arg(long, default_value_t = 0.02)]
    sigma: f64,
    #[arg(long, default_value = "16x16", value_parser = parse_frame)]
    frame: (usize, usize),
    #[arg(long, default_value_t = 3)]
    radius: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainModelArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "21,32,60,79,97")]
    bands: String,
    #[arg(long, default_value = "random-forest")]
    kind: ClassifierKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bundle path; ignored with `--register`.
    #[arg(long, required_unless_present = "register")]
    out: Option<PathBuf>,
    /// Store the bundle next to this manifest and add it as `--id`.
    #[arg(long, requires = "id")]
    register: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
}

#[derive(Args)]
struct ServeArgs {
    /// Model manifest, or a directory holding `models.json`.
    #[arg(long, env = "SDSLEAF_MODELS")]
    models: Option<PathBuf>,
    #[arg(long, env = "SDSLEAF_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "SDSLEAF_HOST", default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Upload size limit in MiB.
    #[arg(long, default_value_t = 512)]
    max_upload: usize,
    /// Cubes kept in memory.
    #[arg(long, default_value_t = 64)]
    cache: usize,
    /// Where evicted cubes are written; without it they are dropped.
    #[arg(long)]
    spill_dir: Option<PathBuf>,
}

fn parse_frame(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or("expected ROWSxCOLS")?;
    let r: usize = r.trim().parse().map_err(|e| format!("{e}"))?;
    let c: usize = c.trim().parse().map_err(|e| format!("{e}"))?;
    if r == 0 || c == 0 {
        return Err("frame must be non-empty".into());
    }
    Ok((r, c))
}

fn parse_trim(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected FRONT,BACK")?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

fn parse_bands(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"))).collect()
}

/// A band list given inline or as a JSON file with a `genes` array (or a
/// bare array).
fn load_bands(arg: &str) -> Result<Vec<usize>> {
    let path = Path::new(arg);
    if !path.exists() {
        return parse_bands(arg).map_err(|e| anyhow!("bad band list: {e}"));
    }
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(path)?)?;
    let genes = v.get("genes").unwrap_or(&v);
    serde_json::from_value(genes.clone()).with_context(|| format!("{}: no band list", path.display()))
}

/// HSC, MAT v5, or ENVI BIL (given either the `.hdr` or the payload whose
/// header sits alongside).
fn read_cube(path: &Path) -> Result<Cube> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let envi_pair = if ext == "hdr" {
        let payload = ["bil", "raw", "img", ""]
            .iter()
            .map(|e| path.with_extension(e))
            .find(|p| p.exists() && p != path)
            .ok_or_else(|| anyhow!("{}: no payload next to header", path.display()))?;
        Some((path.to_path_buf(), payload))
    } else {
        let hdr = path.with_extension("hdr");
        hdr.exists().then(|| (hdr, path.to_path_buf()))
    };
    if let Some((hdr, payload)) = envi_pair {
        let text = std::fs::read_to_string(&hdr).with_context(|| hdr.display().to_string())?;
        let bytes = std::fs::read(&payload).with_context(|| payload.display().to_string())?;
        return parse_envi_bil(&text, &bytes).with_context(|| payload.display().to_string());
    }
    let bytes = std::fs::read(path).with_context(|| path.display().to_string())?;
    Ok(parse_any(&bytes).with_context(|| path.display().to_string())?.1)
}

fn as_raw(c: Cube) -> Result<Cube> {
    let (r, cl, b) = c.dims();
    let wl = c.wavelengths_nm().map(<[f64]>::to_vec);
    Ok(HyperCube::new(r, cl, b, c.into_data(), wl, Stage::Raw)?)
}

fn trimmed(cube: Cube) -> Result<Cube> {
    Ok(if cube.bands() == BINNED_BANDS { trim_bands(&cube, TrimSpec::default())? } else { cube })
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| path.display().to_string())
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let raw = as_raw(read_cube(&a.raw)?)?;
    let cal = CalibrationPair::new(as_raw(read_cube(&a.white)?)?, as_raw(read_cube(&a.dark)?)?)?;
    let bin = BinSpec { spectral_factor: a.ks, spatial_target: a.resize };
    let trim = TrimSpec { drop_front: a.trim.0, drop_back: a.trim.1 };
    let out = preprocess_raw(&raw, &cal, bin, trim, DEFAULT_EPSILON as f32)?;
    if out.degenerate > 0 {
        log::warn!("{} voxels had white == dark and were set to 0", out.degenerate);
    }
    std::fs::write(&a.out, write_hsc(&out.cube))?;
    let (r, c, b) = out.cube.dims();
    println!("{}: {r}x{c}x{b}", a.out.display());
    Ok(())
}

fn spectrum(cube: &Path, as_json: bool) -> Result<()> {
    let s = central_spectrum(&trimmed(read_cube(cube)?)?);
    let wl = s.wavelengths_nm.unwrap_or_else(sds_core::preprocess::trimmed_wavelengths);
    if as_json {
        println!("{}", json!({"row": s.row, "col": s.col, "wavelengths_nm": wl, "reflectance": s.reflectance}));
    } else {
        let mut out = std::io::stdout().lock();
        writeln!(out, "# pixel ({}, {})", s.row, s.col)?;
        for (w, r) in wl.iter().zip(&s.reflectance) {
            writeln!(out, "{w:.2}\t{r:.6}")?;
        }
    }
    Ok(())
}

fn preview(cube: &Path, png: &Path) -> Result<()> {
    let img = rgb_composite(&trimmed(read_cube(cube)?)?, DEFAULT_RGB_BANDS)?;
    std::fs::write(png, encode_png(&img))?;
    println!("{}: {}x{}", png.display(), img.cols, img.rows);
    Ok(())
}

fn train_cnn(a: TrainCnnArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let subset = select_gene_bands(&data, &load_bands(&a.bands)?)?;
    let cfg = TrainConfig { max_epochs: a.epochs, seed: a.seed, ..TrainConfig::default() };
    let out = cnn::train(&subset, &cfg)?;
    std::fs::write(&a.out, cnn::write_cnn1(&out.model))?;
    let h = &out.history;
    println!(
        "{}: best epoch {} val loss {:.4} val acc {:.3}",
        a.out.display(),
        h.best_epoch,
        h.best_val_loss,
        h.best_val_accuracy
    );
    Ok(())
}

fn ga_select(a: GaArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let cfg = GaConfig {
        population: a.pop,
        generations: a.gens,
        crossover_prob: a.cx,
        mutation_prob: a.r#mut,
        tournament_size: a.tourn,
        seed: a.seed,
        ..GaConfig::default()
    };
    let res = run_ga(&data, &cfg)?;
    let v = json!({
        "genes": res.best.genes(),
        "wavelengths_nm": res.wavelengths_nm(),
        "fitness": res.best.fitness(),
        "history": res.history,
    });
    write_json(&a.out, &v)?;
    println!("{}: bands {:?} fitness {:?}", a.out.display(), res.best.genes(), res.best.fitness());
    Ok(())
}

fn parse_kinds(s: &str) -> Result<Vec<ClassifierKind>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(ClassifierKind::ALL.to_vec());
    }
    s.split(',').map(|k| k.trim().parse::<ClassifierKind>().map_err(Into::into)).collect()
}

fn eval(a: EvalArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let bands = load_bands(&a.bands)?;
    let cfg = CvConfig { folds: a.folds, seed: a.seed, ..CvConfig::default() };
    let report = run_cv(&data, &bands, &parse_kinds(&a.kinds)?, &cfg)?;
    report.save(&a.out, a.csv.as_deref())?;
    print!("{report}");
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_per_class: a.n,
        dims: a.frame,
        signal_bands: load_bands(&a.bands)?,
        signal_delta: a.delta,
        noise_sigma: a.sigma,
        blob_radius: a.radius,
        seed: a.seed,
        ..SynthSpec::default()
    };
    let samples = generate(&spec)?;
    let paths = write_dataset(&a.out, &samples)?;
    println!("{}: {} cubes", a.out.display(), paths.len());
    Ok(())
}

fn train_model(a: TrainModelArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let bands = load_bands(&a.bands)?;
    let cfg = TrainConfig { seed: a.seed, ..TrainConfig::default() };
    let pipeline = fit_pipeline(&data, &bands, a.kind, &cfg)?;
    match (&a.register, &a.id, &a.out) {
        (Some(manifest), Some(id), _) => {
            let e = sds_service::register_pipeline(manifest, id, &pipeline)?;
            println!("registered {} ({}) sha256 {}", e.model_id, e.kind, e.sha256);
        }
        (None, _, Some(out)) => {
            std::fs::write(out, pipeline.to_bytes())?;
            println!("{}: {} on bands {:?}", out.display(), a.kind, bands);
        }
        _ => bail!("give --out or --register with --id"),
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let manifest = a.models.map(|p| if p.is_dir() { p.join("models.json") } else { p });
    let config = ServiceConfig {
        max_upload_bytes: a.max_upload.saturating_mul(1 << 20),
        cube_capacity: a.cache,
        spill_dir: a.spill_dir,
        ..ServiceConfig::default()
    };
    if let Some(dir) = &config.spill_dir {
        std::fs::create_dir_all(dir)?;
    }
    let addr = SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(sds_service::serve(addr, manifest, config))?;
    Ok(())
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, rec| {
            // Request lines are already JSON; everything else gets a level tag.
            if rec.target() == "sds_service::api" {
                writeln!(buf, "{}", rec.args())
            } else {
                writeln!(buf, "[{} {}] {}", rec.level(), rec.target(), rec.args())
            }
        })
        .init();
}

fn main() -> Result<()> {
    init_logging();
    match Cli::parse().command {
        Command::Preprocess(a) => preprocess(a),
        Command::Spectrum { cube, json } => spectrum(&cube, json),
        Command::Preview { cube, png } => preview(&cube, &png),
        Command::TrainCnn(a) => train_cnn(a),
        Command::GaSelect(a) => ga_select(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::TrainModel(a) => train_model(a),
        Command::Serve(a) => serve(a),
    }
}
