use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use gensss_core::bench::{emit_chart_data, run_benchmark_suite, write_synthetic_suite};
use gensss_core::factor::factored_payload_bytes;
use gensss_core::ga::{write_history_csv, FitnessReport, GaConfig};
use gensss_core::material::{
    check_k_rule, load_material_archive, save_material_archive, synthesize_with, MaterialDescriptor, MaterialType,
    Pattern, SyntheticSpec, DEFAULT_ALBEDO,
};
use gensss_core::pipeline::{compress_with_ga, MaterialLibrary};
use gensss_core::render::scene_file::SceneFile;
use gensss_core::render::{build_preview_scene, render, write_image, ImageFormat, RenderReport};
use gensss_service::config::ServiceConfig;
use gensss_service::preview::{preparer, preview_seed, run_preview, select_entry};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gensss", version, about = "Compress, render and benchmark factored subsurface-scattering materials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one synthetic material archive.
    Synth(SynthArgs),
    /// Write the 16-material synthetic benchmark suite.
    SynthSuite {
        #[arg(long)]
        out: PathBuf,
        /// Samples per material (a perfect square >= 16).
        #[arg(long, default_value_t = 64)]
        n: usize,
    },
    /// GA-tune and factor a material archive; prints the fitness report as JSON.
    Compress(CompressArgs),
    /// Render a scene file or the preview scene; writes PNG, PFM and report JSON.
    Render(RenderArgs),
    /// Render every material in a directory and write chart CSVs.
    Bench(BenchArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    pattern: Pattern,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    name: String,
    #[arg(long = "type", default_value = "Heterogeneous")]
    material_type: MaterialType,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Per-channel albedo as r,g,b.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    albedo: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompressArgs {
    /// Material archive (.gpss).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    k: usize,
    /// GA settings (TOML or JSON); defaults otherwise.
    #[arg(long)]
    ga_config: Option<PathBuf>,
    /// Factored archive to write (.gpsf).
    #[arg(long)]
    out: PathBuf,
    /// Accept any rank in 1..=n instead of only 1, 5 and 10.
    #[arg(long)]
    allow_any_k: bool,
    /// Optional CSV of per-generation best and mean error.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct RenderOverrides {
    #[arg(long)]
    spp: Option<usize>,
    #[arg(long)]
    irradiance_samples: Option<usize>,
    /// Gather radius in meters; omit to sum every irradiance point.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Args)]
struct RenderArgs {
    /// JSON scene file.
    #[arg(long, conflicts_with = "preview", required_unless_present = "preview")]
    scene: Option<PathBuf>,
    /// Material name to show in the preview scene.
    #[arg(long)]
    preview: Option<String>,
    /// Material type, needed when a name exists as both types.
    #[arg(long = "type")]
    material_type: Option<MaterialType>,
    /// Rank; defaults to the material's own K.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    material_dir: Option<PathBuf>,
    /// Defaults to the per-(material, type, K) preview seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    overrides: RenderOverrides,
    /// Output prefix; writes <out>.png, <out>.pfm and <out>.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    materials: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write one PNG per material under <out>/images.
    #[arg(long)]
    images: bool,
    #[command(flatten)]
    overrides: RenderOverrides,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    material_dir: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

/// Bad input that should exit 2 like a clap usage error.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

/// Every failed run prints one line on stderr that starts with `error: ` and
/// carries a JSON object with `kind` and `message`.
fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("GENSSS_LOG").unwrap_or_else(|_| "info".into()))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let (kind, code) = if e.downcast_ref::<UsageError>().is_some() { ("usage", 2) } else { ("failure", 1) };
            let line = serde_json::json!({ "kind": kind, "message": error_chain(&e) });
            eprintln!("error: {line}");
            ExitCode::from(code)
        }
    }
}

/// The error and its causes joined by `: `, skipping causes whose text an
/// outer message already includes.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::SynthSuite { out, n } => {
            let paths = write_synthetic_suite(&out, n)?;
            println!("{}", serde_json::to_string_pretty(&paths)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Compress(a) => compress(a),
        Command::Render(a) => render_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve(a),
    }
}

fn synth(a: SynthArgs) -> anyhow::Result<ExitCode> {
    let albedo = match a.albedo.as_deref() {
        Some([r, g, b]) => [*r, *g, *b],
        Some(_) => return Err(UsageError("--albedo takes exactly three values".into()).into()),
        None => DEFAULT_ALBEDO,
    };
    check_k_rule(a.material_type, a.k).map_err(|e| UsageError(e.to_string()))?;
    let (samples, transport) = synthesize_with(a.n, &SyntheticSpec { pattern: a.pattern, seed: a.seed, albedo })?;
    let d = MaterialDescriptor { name: a.name, material_type: a.material_type, k_parameter: a.k, source: None, dipole_params: None };
    let bytes = save_material_archive(&d, &samples, &transport, &a.out)?;
    println!("{}", serde_json::json!({ "output": a.out, "bytes": bytes }));
    Ok(ExitCode::SUCCESS)
}

fn load_ga_config(path: Option<&Path>) -> anyhow::Result<GaConfig> {
    let Some(p) = path else { return Ok(GaConfig::default()) };
    let text = std::fs::read_to_string(p).with_context(|| format!("reading GA config {}", p.display()))?;
    let cfg: GaConfig = if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text)?
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct CompressOutput {
    #[serde(flatten)]
    fitness: FitnessReport,
    k: usize,
    rho: [f64; 3],
    generations: usize,
    output: PathBuf,
    bytes: u64,
}

fn compress(a: CompressArgs) -> anyhow::Result<ExitCode> {
    if !a.allow_any_k && !gensss_core::material::ALLOWED_K.contains(&a.k) {
        return Err(UsageError(format!("K must be one of 1, 5 or 10 (got {}); pass --allow-any-k to override", a.k)).into());
    }
    let ga = load_ga_config(a.ga_config.as_deref())?;
    let archive = load_material_archive(&a.input)?;
    if !a.allow_any_k {
        check_k_rule(archive.descriptor.material_type, a.k).map_err(|e| UsageError(e.to_string()))?;
    }
    let c = compress_with_ga(&archive.transport, a.k, &ga)?;
    let bytes = c.bssrdf.save(&a.out)?;
    debug_assert_eq!(bytes, c.bssrdf.storage_bytes());
    if let Some(h) = &a.history {
        let f = std::fs::File::create(h).with_context(|| format!("creating {}", h.display()))?;
        write_history_csv(&c.evolution.history, f)?;
    }
    let out = CompressOutput {
        fitness: c.fitness,
        k: a.k,
        rho: c.bssrdf.params().rho,
        generations: c.evolution.history.len(),
        output: a.out,
        bytes,
    };
    tracing::debug!(payload = factored_payload_bytes(a.k, c.bssrdf.n_i(), c.bssrdf.n_o()), "factored payload");
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(ExitCode::SUCCESS)
}

fn apply_overrides(cfg: &mut ServiceConfig, o: &RenderOverrides) {
    if let Some(v) = o.spp {
        cfg.render.samples_per_pixel = v;
    }
    if let Some(v) = o.irradiance_samples {
        cfg.render.irradiance_sample_count = v;
    }
    if o.radius.is_some() {
        cfg.render.gather_truncation_radius = o.radius;
    }
    if let Some(v) = o.threads {
        cfg.render.thread_count = v;
    }
    if let Some(v) = o.width.or(o.height) {
        cfg.preview_size = v;
    }
}

fn write_outputs(report: &RenderReport, out: &Path) -> anyhow::Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let with_ext = |ext: &str| {
        let mut p = out.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    write_image(&report.image, with_ext(".png"), ImageFormat::Png8Srgb)?;
    write_image(&report.image, with_ext(".pfm"), ImageFormat::PfmLinear)?;
    std::fs::write(with_ext(".json"), serde_json::to_vec_pretty(report)?)?;
    Ok(())
}

fn render_cmd(a: RenderArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = ServiceConfig::load(a.config.as_deref())?;
    if let Some(d) = a.material_dir {
        cfg.material_dir = d;
    }
    apply_overrides(&mut cfg, &a.overrides);
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let library = MaterialLibrary::scan(&cfg.material_dir)?;

    let scene_file = a.scene.as_deref().map(SceneFile::load).transpose()?;
    let name = match (&a.preview, &scene_file) {
        (Some(n), _) => n.clone(),
        (None, Some(f)) => f.material.clone().ok_or_else(|| UsageError("scene file names no material".into()))?,
        (None, None) => bail!(UsageError("pass --scene or --preview".into())),
    };
    let entry = select_entry(&library, &name, a.material_type).map_err(|e| UsageError(e.to_string()))?;
    let k = a.k.unwrap_or(entry.descriptor.k_parameter);
    check_k_rule(entry.descriptor.material_type, k).map_err(|e| UsageError(e.to_string()))?;
    let seed = a.seed.unwrap_or_else(|| preview_seed(&name, entry.descriptor.material_type, k));

    let report = match scene_file {
        None => run_preview(entry, k, seed, &cfg, None)?.report,
        Some(f) => {
            let prepared = preparer(&cfg).prepare(entry, k)?;
            let mut scene = f.into_scene(Some(prepared.material))?;
            if let Some(w) = a.overrides.width {
                scene.camera.width = w;
            }
            if let Some(h) = a.overrides.height {
                scene.camera.height = h;
            }
            render(&scene, &cfg.render, seed, None)?
        }
    };
    write_outputs(&report, &a.out)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn bench(a: BenchArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = ServiceConfig::load(a.config.as_deref())?;
    apply_overrides(&mut cfg, &a.overrides);
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let library = MaterialLibrary::scan(&a.materials)?;
    for (path, why) in &library.rejected {
        tracing::warn!(path = %path.display(), %why, "skipping unreadable material");
    }
    let mut scene = build_preview_scene(None);
    scene.camera.width = cfg.preview_size;
    scene.camera.height = cfg.preview_size;
    let images = a.images.then(|| a.out.join("images"));
    let records = run_benchmark_suite(library.entries(), &preparer(&cfg), &scene, &cfg.render, a.seed, images.as_deref());
    emit_chart_data(&records, &a.out)?;
    let ok = records.iter().filter(|r| r.is_ok()).count();
    for r in records.iter().filter(|r| !r.is_ok()) {
        tracing::warn!(material = %r.material, error = r.error.as_deref().unwrap_or(""), "benchmark entry failed");
    }
    println!("{}", serde_json::json!({ "records": records.len(), "succeeded": ok, "out": a.out }));
    if ok == 0 {
        let message = format!("no material rendered successfully ({} found)", records.len());
        eprintln!("error: {}", serde_json::json!({ "kind": "bench_failed", "message": message }));
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(a: ServeArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = ServiceConfig::load(a.config.as_deref())?;
    if let Some(b) = a.bind {
        cfg.bind = b;
    }
    if let Some(d) = a.material_dir {
        cfg.material_dir = d;
    }
    if let Some(d) = a.data_dir {
        cfg.data_dir = d;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let bind = cfg.bind.clone();
        let state = gensss_service::api::AppState::start(cfg)?;
        let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
        tracing::info!(address = %listener.local_addr()?, materials = state.library.entries().len(), "serving");
        axum::serve(listener, gensss_service::api::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}
