//! Subcommands of the `relume` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::render::{relight_pfm, relight_png, RelightRequest};
use crate::service::{serve, ServiceState};
use relume::detail::{train_dictionary, DictionaryConfig, PatchDictionary};
use relume::eval::{
    build_synthetic, default_corpus, imse, ingest_external_shape, load_mit_object, run_protocol, smooth_corpus,
    synth_object, DepthMap, ProtocolCase, ProtocolConfig, WeightMode, CORPUS_IMAGES, CORPUS_SIZE,
};
use relume::io::{self, Transfer};
use relume::lighting::LightSpec;
use relume::relight::{build_model, final_composite, load_model, save_model, BuildConfig, ObjectModel, Weights};
use relume::shape::{export_mesh, Focal};
use relume::{Error, LinearImage};

#[derive(Debug, Parser)]
#[command(name = "relume", version, about = "Relightable object models from single image fragments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a model directory from a fragment and its matte.
    Build(BuildArgs),
    /// Render a model under a light record.
    Relight(RelightArgs),
    /// Serve a model to the studio over HTTP.
    Serve(ServeArgs),
    /// Composite a rendered object into a target photograph.
    Composite(CompositeArgs),
    /// Export the base shape of a model as an OBJ mesh.
    Mesh(MeshArgs),
    /// Run the re-rendering error protocol on synthetic objects.
    Eval(EvalArgs),
    /// Train a patch dictionary on synthetic smooth shading.
    TrainDict(TrainArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Fragment image (PNG or PFM).
    #[arg(long)]
    pub image: PathBuf,
    /// Matte (PNG; alpha channel if present, otherwise grey level).
    #[arg(long)]
    pub mask: PathBuf,
    /// Output model directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Trained dictionary (PFM with JSON sidecar). Trained on the fly when absent.
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Override the dictionary's sparsity weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// JSON build configuration; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Treat PNG code values as linear instead of sRGB.
    #[arg(long)]
    pub linear: bool,
}

#[derive(Debug, Args)]
pub struct RelightArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Light record (JSON). Defaults to the model's fitted light.
    #[arg(long)]
    pub light: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub wp: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub wg: f64,
    /// Display multiplier applied before sRGB encoding (PNG only).
    #[arg(long, default_value_t = 1.0)]
    pub exposure: f64,
    /// Output `.png` (sRGB, clamped) or `.pfm` (raw linear).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Directory of built studio assets to serve under `/`.
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompositeArgs {
    /// Photograph the object is inserted into.
    #[arg(long)]
    pub target: PathBuf,
    /// Rendered scene with the object.
    #[arg(long = "with")]
    pub with_object: PathBuf,
    /// Rendered scene without the object.
    #[arg(long)]
    pub without: PathBuf,
    /// Object matte in the rendered scene.
    #[arg(long)]
    pub matte: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub linear: bool,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `ortho` or a camera position `x,y,z` in pixel units.
    #[arg(long, default_value = "ortho")]
    pub focal: String,
    /// Depth of the back extrusion at the centre of the silhouette.
    #[arg(long, default_value_t = 0.0)]
    pub extrude: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, default_value_t = 5)]
    pub objects: u64,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, default_value_t = 20)]
    pub lights: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Base shape of the evaluated models: `sfc` or `truth`.
    #[arg(long, default_value = "sfc")]
    pub shape: String,
    /// Comma-separated weight modes.
    #[arg(long, default_value = "oracle,regress,default,coarse")]
    pub modes: String,
    /// Write one JSON record per line here.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Write the text table here instead of standard output.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Instead of synthetic objects, decompose every object directory under
    /// this path (diffuse.png, shading.png, mask.png) and score the shading.
    #[arg(long)]
    pub mit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub atoms: usize,
    #[arg(long, default_value_t = 12)]
    pub patch: usize,
    #[arg(long, default_value_t = 4)]
    pub stride: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 20)]
    pub alternations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training images in the synthetic corpus.
    #[arg(long, default_value_t = CORPUS_IMAGES)]
    pub images: usize,
    #[arg(long, default_value_t = CORPUS_SIZE)]
    pub size: usize,
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Compute(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Compute(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Compute(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn existing(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

fn write_file(path: &Path, bytes: &[u8]) -> Outcome {
    fs::write(path, bytes).map_err(|e| Error::io(path, e).into())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e).into())
}

fn load_rgb(path: &Path, linear: bool) -> Result<LinearImage, Failure> {
    let img = io::load_image(path, if linear { Transfer::Linear } else { Transfer::Srgb })?;
    match img.channels() {
        3 => Ok(img),
        1 => {
            let data = img.as_slice().iter().flat_map(|&v| [v; 3]).collect();
            Ok(LinearImage::from_vec(img.width(), img.height(), 3, data)?)
        }
        c => Err(Error::mismatch(format!("{} has {c} channels", path.display())).into()),
    }
}

fn dictionary(path: Option<&Path>, lambda: Option<f64>) -> Result<PatchDictionary, Failure> {
    let dict = match path {
        Some(p) => {
            existing(p, "dictionary")?;
            PatchDictionary::load(p)?
        }
        None => {
            eprintln!("no dictionary given; training the default one");
            relume::eval::train_default_dictionary(&DictionaryConfig::default())?.0
        }
    };
    Ok(match lambda {
        Some(l) => dict.with_lambda(l)?,
        None => dict,
    })
}

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Relight(a) => cmd_relight(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Composite(a) => cmd_composite(a),
        Command::Mesh(a) => cmd_mesh(a),
        Command::Eval(a) => cmd_eval(a),
        Command::TrainDict(a) => cmd_train_dict(a),
    }
}

/// Human-readable summary of a freshly built model.
pub fn build_summary(model: &ObjectModel, dir: &Path) -> String {
    let m = &model.metadata;
    let mut s = String::new();
    let _ = writeln!(s, "model written to {}", dir.display());
    let _ = writeln!(s, "size {}x{}, {} pixels in the matte", m.width, m.height, m.area);
    let _ = writeln!(
        s,
        "light fit rmse {:.6} -> {:.6} after {} iterations{}",
        m.fit_initial_rmse,
        m.fit_final_rmse,
        m.fit_iterations,
        if m.fit_converged { "" } else { " (not converged)" }
    );
    let r = &m.layer_rms;
    let _ = writeln!(
        s,
        "layer rms: albedo {:.6}, shading {:.6}, sp {:.6}, sg {:.6}",
        r.albedo, r.shading, r.sp, r.sg
    );
    s
}

fn cmd_build(a: BuildArgs) -> Outcome {
    existing(&a.image, "image")?;
    existing(&a.mask, "mask")?;
    let config: BuildConfig = match &a.config {
        Some(p) => {
            existing(p, "config")?;
            serde_json::from_str(&read_text(p)?).map_err(|e| Failure::Usage(format!("config: {e}")))?
        }
        None => BuildConfig::default(),
    };
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let dict = dictionary(a.dict.as_deref(), a.lambda)?;
    let image = load_rgb(&a.image, a.linear)?;
    let matte = io::load_mask(&a.mask)?;
    let (mut model, _) = build_model(&image, &matte, &dict, &config)?;
    model.metadata.source = a.image.file_name().and_then(|n| n.to_str()).map(String::from);
    save_model(&model, &a.out)?;
    print!("{}", build_summary(&model, &a.out));
    Ok(())
}

fn load_existing_model(dir: &Path) -> Result<ObjectModel, Failure> {
    existing(dir, "model directory")?;
    Ok(load_model(dir)?)
}

fn cmd_relight(a: RelightArgs) -> Outcome {
    let ext = extension(&a.out);
    if ext != "png" && ext != "pfm" {
        return Err(Failure::Usage(format!("output {} must end in .png or .pfm", a.out.display())));
    }
    let model = load_existing_model(&a.model)?;
    let light = match &a.light {
        Some(p) => {
            existing(p, "light record")?;
            LightSpec::from_json(&read_text(p)?).map_err(|e| Failure::Usage(e.to_string()))?
        }
        None => model.fitted_spec(),
    };
    let req = RelightRequest::new(light, Weights::new(a.wp, a.wg), a.exposure).map_err(|e| Failure::Usage(e.to_string()))?;
    let bytes = if ext == "png" { relight_png(&model, &req)? } else { relight_pfm(&model, &req)? };
    write_file(&a.out, &bytes)
}

fn cmd_serve(a: ServeArgs) -> Outcome {
    let model = load_existing_model(&a.model)?;
    if let Some(dir) = &a.assets {
        existing(dir, "assets directory")?;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    let addr = std::net::SocketAddr::new(a.host, a.port);
    runtime
        .block_on(serve(ServiceState { model, assets: a.assets }, addr))
        .map_err(|e| Error::io(format!("{addr}"), e).into())
}

fn cmd_composite(a: CompositeArgs) -> Outcome {
    for (p, what) in [(&a.target, "target"), (&a.with_object, "render"), (&a.without, "render"), (&a.matte, "matte")] {
        existing(p, what)?;
    }
    let ext = extension(&a.out);
    if ext != "png" && ext != "pfm" {
        return Err(Failure::Usage(format!("output {} must end in .png or .pfm", a.out.display())));
    }
    let t = load_rgb(&a.target, a.linear)?;
    let r = load_rgb(&a.with_object, a.linear)?;
    let e = load_rgb(&a.without, a.linear)?;
    let m = io::load_mask(&a.matte)?;
    let out = final_composite(&t, &r, &e, &m)?;
    let bytes = if ext == "png" { io::encode_png_srgb(&out, 1.0)? } else { io::encode_pfm(&out)? };
    write_file(&a.out, &bytes)
}

/// Parses `ortho` or `x,y,z`.
pub fn parse_focal(s: &str) -> Result<Focal, Failure> {
    if s == "ortho" {
        return Ok(Focal::Orthographic);
    }
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("focal point `{s}` is not `ortho` or `x,y,z`")))?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Focal::Point([x, y, z])),
        _ => Err(Failure::Usage(format!("focal point `{s}` is not `ortho` or `x,y,z`"))),
    }
}

fn cmd_mesh(a: MeshArgs) -> Outcome {
    let focal = parse_focal(&a.focal)?;
    if !(a.extrude >= 0.0 && a.extrude.is_finite()) {
        return Err(Failure::Usage("extrude must be a non-negative number".into()));
    }
    let model = load_existing_model(&a.model)?;
    let mesh = export_mesh(&model.height, &model.mask, focal, a.extrude)?;
    write_file(&a.out, mesh.to_obj().as_bytes())?;
    let (v, e, f) = mesh.counts();
    println!("{v} vertices, {e} edges, {f} faces written to {}", a.out.display());
    Ok(())
}

fn parse_modes(s: &str) -> Result<Vec<WeightMode>, Failure> {
    s.split(',')
        .map(|m| m.trim().parse::<WeightMode>().map_err(|e| Failure::Usage(e.to_string())))
        .collect()
}

fn cmd_eval(a: EvalArgs) -> Outcome {
    let modes = parse_modes(&a.modes)?;
    if a.shape != "sfc" && a.shape != "truth" {
        return Err(Failure::Usage(format!("shape must be `sfc` or `truth`, got `{}`", a.shape)));
    }
    if let Some(dir) = &a.mit {
        existing(dir, "dataset directory")?;
        let dict = dictionary(a.dict.as_deref(), None)?;
        return eval_mit(dir, &dict, a.table.as_deref());
    }
    if a.size < relume::eval::MIN_SIZE || a.objects == 0 || a.lights == 0 {
        return Err(Failure::Usage(format!(
            "need at least one object and light and size >= {}",
            relume::eval::MIN_SIZE
        )));
    }
    let dict = dictionary(a.dict.as_deref(), None)?;
    let objects = (0..a.objects)
        .map(|s| synth_object(s, a.size))
        .collect::<relume::Result<Vec<_>>>()?;
    let mut models = Vec::with_capacity(objects.len());
    for o in &objects {
        let (m, _) = build_synthetic(o, &dict, &BuildConfig::default())?;
        models.push(if a.shape == "truth" { ingest_external_shape(&m, &DepthMap::from(&o.height))? } else { m });
    }
    let names: Vec<String> = objects.iter().map(|o| format!("synthetic-{}", o.seed)).collect();
    let cases: Vec<ProtocolCase<'_>> = (0..objects.len())
        .map(|i| ProtocolCase {
            name: &names[i],
            model: &models[i],
            truth: &objects[i],
        })
        .collect();
    let config = ProtocolConfig {
        seed: a.seed,
        lights: a.lights,
        modes,
        ..ProtocolConfig::default()
    };
    let report = run_protocol(&cases, &config)?;
    if let Some(p) = &a.records {
        write_file(p, report.to_jsonl().as_bytes())?;
    }
    match &a.table {
        Some(p) => write_file(p, report.to_table().as_bytes()),
        None => {
            print!("{}", report.to_table());
            Ok(())
        }
    }
}

fn eval_mit(dir: &Path, dict: &PatchDictionary, table: Option<&Path>) -> Outcome {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("diffuse.png").exists())
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Failure::Usage(format!("no object directories under {}", dir.display())));
    }
    let mut out = String::new();
    let _ = writeln!(out, "{:<20} {:>10} {:>12}", "object", "k", "shading imse");
    let mut total = 0.0;
    for p in &entries {
        let o = load_mit_object(p)?;
        let (model, _) = build_model(&o.diffuse, &o.mask, dict, &BuildConfig::default())?;
        let (k, e) = imse(&o.shading, &model.shading, &model.mask)?;
        total += e;
        let _ = writeln!(out, "{:<20} {:>10.4} {:>12.6e}", o.name, k, e);
    }
    let _ = writeln!(out, "\nmean shading imse over {} objects: {:.6e}", entries.len(), total / entries.len() as f64);
    match table {
        Some(t) => write_file(t, out.as_bytes()),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn cmd_train_dict(a: TrainArgs) -> Outcome {
    let config = DictionaryConfig {
        atom_count: a.atoms,
        patch_size: a.patch,
        stride: a.stride,
        lambda: a.lambda,
        alternations: a.alternations,
        seed: a.seed,
        ..DictionaryConfig::default()
    };
    if a.atoms == 0 || a.patch < 2 || a.stride == 0 || a.lambda.is_nan() || a.lambda <= 0.0 || a.images == 0 {
        return Err(Failure::Usage("atoms, patch, stride, lambda and images must be positive".into()));
    }
    if a.size < relume::eval::MIN_SIZE {
        return Err(Failure::Usage(format!("corpus size must be at least {}", relume::eval::MIN_SIZE)));
    }
    let corpus = if a.images == CORPUS_IMAGES && a.size == CORPUS_SIZE {
        default_corpus(a.seed)?
    } else {
        smooth_corpus(a.seed, a.images, a.size)?
    };
    let (dict, report) = train_dictionary(&corpus, &config)?;
    dict.save(&a.out)?;
    let first = report.objective.first().copied().unwrap_or(f64::NAN);
    let last = report.objective.last().copied().unwrap_or(f64::NAN);
    println!(
        "{} atoms from {} patches; objective {:.4} -> {:.4}; {} atoms reseeded; {} alternations used per-atom updates",
        dict.atom_count(),
        report.patches,
        first,
        last,
        report.reseeded,
        report.safeguarded
    );
    Ok(())
}
