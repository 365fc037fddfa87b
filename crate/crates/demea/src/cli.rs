//! Command-line front end: hierarchy building, synthetic data, training,
//! encode/decode round trips, latent-space operations, and gradient checks.
//!
//! Progress goes to standard error; machine-readable results go to files.
//! Exit codes: 0 success, 1 verification failure, 2 usage or input error.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::edl::bind_skinning;
use crate::gradcheck::{self, CheckOptions, Scope};
use crate::hierarchy::io::{build_supports, load_hierarchy, save_hierarchy, LoadedHierarchy};
use crate::hierarchy::{build_hierarchy, extract_graph};
use crate::latent::{interpolate, smooth, transfer, LatentSequence};
use crate::mesh::{load_mesh, save_mesh};
use crate::model::{
    generate_node_fields, push_through_deformation, train, write_loss_csv, ModelConfig,
    ModelError, ModelSession, SyntheticSpec, TrainOptions, TrainingVariant,
};

#[derive(Parser)]
#[command(
    name = "demea",
    version,
    about = "Mesh autoencoder with an embedded-deformation decoder"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a multi-resolution hierarchy and deformation graph from a mesh.
    BuildHierarchy(BuildHierarchyArgs),
    /// Generate synthetic deformations of a hierarchy's template mesh.
    Synth(SynthArgs),
    /// Train the autoencoder on a dataset directory.
    Train(TrainArgs),
    /// Encode a mesh and decode it back, reporting reconstruction error.
    Roundtrip(RoundtripArgs),
    /// Operate on saved latent codes.
    Latent(LatentArgs),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct BuildHierarchyArgs {
    /// Template mesh (OBJ).
    mesh: PathBuf,
    /// Number of deformation-graph nodes; must equal one of the level counts.
    #[arg(long)]
    graph_nodes: usize,
    /// Vertex count per level, finest first (the first must match the mesh).
    #[arg(long, value_delimiter = ',', required = true)]
    levels: Vec<usize>,
    /// Fixed spiral length for all levels (default: per-level 2-ring cover).
    #[arg(long)]
    spiral_length: Option<usize>,
    /// Output directory for the artifact set.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Dataset directory; must contain a `hierarchy/` artifact set. Samples
    /// are written here as sample_NNN.obj.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = SyntheticSpec::default().samples)]
    samples: usize,
    /// Sinusoidal basis fields shared by the dataset; samples mix them with
    /// random coefficients.
    #[arg(long, default_value_t = SyntheticSpec::default().waves)]
    waves: usize,
    /// Euler-angle amplitude in radians.
    #[arg(long, default_value_t = SyntheticSpec::default().angle_scale)]
    angle_scale: f64,
    /// Translation amplitude as a fraction of the bounding-box diagonal.
    #[arg(long, default_value_t = SyntheticSpec::default().translation_scale)]
    translation_scale: f64,
    /// Spatial wavelength multiplier; larger values give smoother fields.
    #[arg(long, default_value_t = SyntheticSpec::default().smoothness)]
    smoothness: f64,
    #[arg(long, default_value_t = SyntheticSpec::default().seed)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Model configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory: `hierarchy/` plus sample_*.obj files.
    #[arg(long)]
    data: PathBuf,
    /// Output directory: checkpoint, loss CSV, resolved config, hierarchy copy.
    #[arg(long)]
    out: PathBuf,
    /// Override the training variant from the config.
    #[arg(long, value_enum)]
    variant: Option<CliVariant>,
    /// Log the batch loss every N optimizer steps.
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Args)]
struct RoundtripArgs {
    /// Input mesh (OBJ) with the template's topology.
    mesh: PathBuf,
    /// Checkpoint file; its directory must hold config.json and hierarchy/.
    #[arg(long)]
    ckpt: PathBuf,
    /// Reconstructed mesh path (OBJ). A JSON error report is written next
    /// to it with extension .report.json.
    #[arg(long)]
    out: PathBuf,
    /// Also write the latent code as a one-row CSV.
    #[arg(long)]
    latent_out: Option<PathBuf>,
}

#[derive(Args)]
struct LatentArgs {
    #[command(subcommand)]
    op: LatentOp,
}

#[derive(Subcommand)]
enum LatentOp {
    /// Blend two codes over a list of interpolation weights.
    Interpolate(InterpolateArgs),
    /// Re-anchor a code sequence onto a new first frame.
    Transfer(TransferArgs),
    /// Exponential smoothing along a code sequence.
    Smooth(SmoothArgs),
}

#[derive(Args)]
struct InterpolateArgs {
    /// CSV whose first row is the source code.
    #[arg(long)]
    source: PathBuf,
    /// CSV whose first row is the target code.
    #[arg(long)]
    target: PathBuf,
    /// Interpolation weights in [0, 1].
    #[arg(long, value_delimiter = ',', required = true)]
    alphas: Vec<f64>,
    #[command(flatten)]
    io: LatentIo,
}

#[derive(Args)]
struct TransferArgs {
    /// CSV holding the code sequence, one code per row.
    #[arg(long)]
    sequence: PathBuf,
    /// CSV whose first row is the new first-frame code.
    #[arg(long)]
    target_first: PathBuf,
    #[command(flatten)]
    io: LatentIo,
}

#[derive(Args)]
struct SmoothArgs {
    /// CSV holding the code sequence, one code per row.
    #[arg(long)]
    sequence: PathBuf,
    /// Blend factor in [0, 1]; 1 keeps the sequence unchanged.
    #[arg(long)]
    alpha: f64,
    #[command(flatten)]
    io: LatentIo,
}

#[derive(Args)]
struct LatentIo {
    /// Output CSV for the resulting codes.
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint used to decode the resulting codes to meshes.
    #[arg(long, requires = "decode_prefix")]
    ckpt: Option<PathBuf>,
    /// Path prefix for decoded OBJ files (<prefix>NNN.obj).
    #[arg(long, requires = "ckpt")]
    decode_prefix: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Gradient family to verify.
    #[arg(long, value_enum)]
    scope: CliScope,
    /// Base seed for the random instances.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random instances per scope.
    #[arg(long, default_value_t = gradcheck::DEFAULT_SEEDS)]
    seeds: usize,
    /// Negative control: corrupt one analytic partial and expect FAIL.
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliVariant {
    #[value(name = "EDL", alias = "edl")]
    Edl,
    #[value(name = "GL", alias = "gl")]
    Gl,
    #[value(name = "LP", alias = "lp")]
    Lp,
}

impl From<CliVariant> for TrainingVariant {
    fn from(v: CliVariant) -> TrainingVariant {
        match v {
            CliVariant::Edl => TrainingVariant::Edl,
            CliVariant::Gl => TrainingVariant::Gl,
            CliVariant::Lp => TrainingVariant::Lp,
        }
    }
}

/// Scopes exposed on the command line; `fc` covers the dense layer, the
/// activation, and both losses.
#[derive(Clone, Copy, ValueEnum)]
enum CliScope {
    Edl,
    Spiral,
    Spectral,
    Fc,
    End2end,
}

impl CliScope {
    fn scopes(self) -> &'static [Scope] {
        match self {
            CliScope::Edl => &[Scope::Edl],
            CliScope::Spiral => &[Scope::Spiral],
            CliScope::Spectral => &[Scope::Spectral],
            CliScope::Fc => &[Scope::Fc, Scope::Elu, Scope::Losses],
            CliScope::End2end => &[Scope::End2End],
        }
    }
}

/// Inputs and outputs of a run, recorded verbatim alongside the artifacts.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    args: Vec<String>,
    config: Option<String>,
    data: Option<String>,
    out: Option<String>,
    seed: Option<u64>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            args: std::env::args().collect(),
            config: None,
            data: None,
            out: None,
            seed: None,
        }
    }

    fn write(&self, path: &Path) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| input(path.display(), e))
    }
}

struct Failure {
    code: i32,
    message: String,
}

fn input<C: Display, E: Display>(context: C, error: E) -> Failure {
    Failure { code: 2, message: format!("{context}: {error}") }
}

fn model_failure(e: ModelError) -> Failure {
    let code = match e {
        ModelError::Config(_)
        | ModelError::Dataset(_)
        | ModelError::Io { .. }
        | ModelError::Format { .. } => 2,
        _ => 1,
    };
    Failure { code, message: e.to_string() }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Parses arguments, runs one command, and returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    configure_threads();
    let result = match cli.command {
        Command::BuildHierarchy(args) => cmd_build_hierarchy(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Roundtrip(args) => cmd_roundtrip(args),
        Command::Latent(args) => cmd_latent(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// DEMEA_THREADS caps the global worker pool; default is the hardware count.
fn configure_threads() {
    if let Ok(raw) = std::env::var("DEMEA_THREADS") {
        match raw.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid DEMEA_THREADS value {raw:?}"),
        }
    }
}

fn cmd_build_hierarchy(args: BuildHierarchyArgs) -> Result<i32, Failure> {
    let mesh = load_mesh(&args.mesh).map_err(|e| input(args.mesh.display(), e))?;
    let graph = extract_graph(&mesh, args.graph_nodes)
        .map_err(|e| input("graph extraction", e))?;
    let hierarchy = build_hierarchy(&mesh, &graph, &args.levels)
        .map_err(|e| input("hierarchy construction", e))?;
    let supports = build_supports(&hierarchy, args.spiral_length);
    save_hierarchy(&args.out, &hierarchy, &graph, &supports)
        .map_err(|e| input(args.out.display(), e))?;

    let mut manifest = RunManifest::new("build-hierarchy");
    manifest.out = Some(path_str(&args.out));
    manifest.write(&args.out.join("run_manifest.json"))?;

    println!("level  vertices  faces  spiral");
    for (k, level) in hierarchy.levels().iter().enumerate() {
        println!(
            "{:<5}  {:<8}  {:<5}  {}",
            k,
            level.vertex_count(),
            level.mesh().faces().len(),
            supports.spirals[k].length()
        );
    }
    println!(
        "graph level {}: {} nodes",
        hierarchy.graph_level(),
        graph.node_count()
    );
    eprintln!("hierarchy written to {}", args.out.display());
    Ok(0)
}

fn load_dataset_hierarchy(data: &Path) -> Result<LoadedHierarchy, Failure> {
    let dir = data.join("hierarchy");
    if !dir.is_dir() {
        return Err(Failure {
            code: 2,
            message: format!("{}: no hierarchy/ directory", data.display()),
        });
    }
    load_hierarchy(&dir).map_err(|e| input(dir.display(), e))
}

fn cmd_synth(args: SynthArgs) -> Result<i32, Failure> {
    let loaded = load_dataset_hierarchy(&args.data)?;
    let template = loaded.hierarchy.level(0).mesh().clone();
    let binding = bind_skinning(&template, &loaded.graph, loaded.hierarchy.graph_level())
        .map_err(|e| input("skinning", e))?;
    let spec = SyntheticSpec {
        samples: args.samples,
        waves: args.waves,
        angle_scale: args.angle_scale,
        translation_scale: args.translation_scale,
        smoothness: args.smoothness,
        seed: args.seed,
    };
    let fields = generate_node_fields(&template, &loaded.graph, &spec);
    let samples = push_through_deformation(&template, &loaded.graph, &binding, &fields)
        .map_err(model_failure)?;
    for (i, vertices) in samples.iter().enumerate() {
        let mesh = template
            .with_vertices(vertices.clone())
            .map_err(|e| input("sample mesh", e))?;
        let path = args.data.join(format!("sample_{i:03}.obj"));
        save_mesh(&mesh, &path).map_err(|e| input(path.display(), e))?;
    }

    let mut manifest = RunManifest::new("synth");
    manifest.data = Some(path_str(&args.data));
    manifest.seed = Some(args.seed);
    manifest.write(&args.data.join("synth_manifest.json"))?;
    eprintln!("{} samples written to {}", samples.len(), args.data.display());
    Ok(0)
}

fn sorted_samples(data: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = std::fs::read_dir(data).map_err(|e| input(data.display(), e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("sample_") && n.ends_with(".obj"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure {
            code: 2,
            message: format!("{}: no sample_*.obj files", data.display()),
        });
    }
    Ok(paths)
}

fn copy_hierarchy(src: &Path, dst: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dst).map_err(|e| input(dst.display(), e))?;
    let entries = std::fs::read_dir(src).map_err(|e| input(src.display(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| input(src.display(), e))?;
        let from = entry.path();
        if from.is_file() {
            let to = dst.join(entry.file_name());
            std::fs::copy(&from, &to).map_err(|e| input(to.display(), e))?;
        }
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<i32, Failure> {
    let mut config =
        ModelConfig::from_json_file(&args.config).map_err(model_failure)?;
    if let Some(variant) = args.variant {
        config.training_variant = variant.into();
    }
    let loaded = load_dataset_hierarchy(&args.data)?;
    let sample_paths = sorted_samples(&args.data)?;
    let mut dataset = Vec::with_capacity(sample_paths.len());
    for path in &sample_paths {
        let mesh = load_mesh(path).map_err(|e| input(path.display(), e))?;
        dataset.push(mesh.vertices().to_vec());
    }

    std::fs::create_dir_all(&args.out).map_err(|e| input(args.out.display(), e))?;
    let mut session =
        ModelSession::new(config.clone(), loaded.hierarchy, loaded.graph, loaded.supports)
            .map_err(model_failure)?;
    eprintln!(
        "training {} samples, variant {:?}, latent {}, seed {}",
        dataset.len(),
        config.training_variant,
        config.latent_dim,
        config.seed
    );
    let options = TrainOptions {
        checkpoint_dir: Some(args.out.clone()),
        log_every: Some(args.log_every),
    };
    let outcome = train(&mut session, &dataset, &options).map_err(model_failure)?;

    write_loss_csv(args.out.join("loss.csv"), &outcome.history).map_err(model_failure)?;
    config.to_json_file(args.out.join("config.json")).map_err(model_failure)?;
    copy_hierarchy(&args.data.join("hierarchy"), &args.out.join("hierarchy"))?;
    let mut manifest = RunManifest::new("train");
    manifest.config = Some(path_str(&args.config));
    manifest.data = Some(path_str(&args.data));
    manifest.out = Some(path_str(&args.out));
    manifest.seed = Some(config.seed);
    manifest.write(&args.out.join("run_manifest.json"))?;

    eprintln!(
        "final loss {:.6e} after {} steps; model written to {}",
        outcome.final_loss,
        outcome.history.len(),
        args.out.display()
    );
    Ok(0)
}

/// Rebuilds a session from a checkpoint file whose directory holds the
/// resolved config.json and the hierarchy/ artifact set.
fn load_session(ckpt: &Path) -> Result<ModelSession, Failure> {
    let dir = ckpt.parent().unwrap_or_else(|| Path::new("."));
    let config =
        ModelConfig::from_json_file(dir.join("config.json")).map_err(model_failure)?;
    let loaded = load_dataset_hierarchy(dir)?;
    let mut session =
        ModelSession::new(config, loaded.hierarchy, loaded.graph, loaded.supports)
            .map_err(model_failure)?;
    session.load_params(ckpt).map_err(model_failure)?;
    Ok(session)
}

#[derive(Serialize)]
struct RoundtripReport {
    manifest: RunManifest,
    vertex_count: usize,
    mean_per_vertex_error: f64,
    max_per_vertex_error: f64,
}

fn cmd_roundtrip(args: RoundtripArgs) -> Result<i32, Failure> {
    let session = load_session(&args.ckpt)?;
    let mesh = load_mesh(&args.mesh).map_err(|e| input(args.mesh.display(), e))?;
    let (code, reconstructed) =
        session.roundtrip(mesh.vertices()).map_err(model_failure)?;

    let out_mesh = session
        .template()
        .with_vertices(reconstructed.clone())
        .map_err(|e| input("reconstruction", e))?;
    save_mesh(&out_mesh, &args.out).map_err(|e| input(args.out.display(), e))?;
    if let Some(latent_out) = &args.latent_out {
        let codes = LatentSequence::new(vec![code]).map_err(|e| input("latent code", e))?;
        codes.to_csv_file(latent_out).map_err(|e| input(latent_out.display(), e))?;
    }

    let n = mesh.vertex_count();
    let mut mean = 0.0;
    let mut max = 0.0f64;
    for (a, b) in reconstructed.iter().zip(mesh.vertices()) {
        let d = (a - b).norm();
        mean += d;
        max = max.max(d);
    }
    mean /= n as f64;

    let mut manifest = RunManifest::new("roundtrip");
    manifest.out = Some(path_str(&args.out));
    let report = RoundtripReport {
        manifest,
        vertex_count: n,
        mean_per_vertex_error: mean,
        max_per_vertex_error: max,
    };
    let report_path = args.out.with_extension("report.json");
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    std::fs::write(&report_path, text).map_err(|e| input(report_path.display(), e))?;

    eprintln!("mean per-vertex error {mean:.6e} over {n} vertices");
    Ok(0)
}

fn first_code(path: &Path) -> Result<Vec<f64>, Failure> {
    let sequence = LatentSequence::from_csv_file(path).map_err(|e| input(path.display(), e))?;
    sequence
        .codes()
        .first()
        .cloned()
        .ok_or_else(|| Failure { code: 2, message: format!("{}: empty CSV", path.display()) })
}

fn cmd_latent(args: LatentArgs) -> Result<i32, Failure> {
    let (io, result, name) = match &args.op {
        LatentOp::Interpolate(op) => {
            let source = first_code(&op.source)?;
            let target = first_code(&op.target)?;
            let mut codes = Vec::with_capacity(op.alphas.len());
            for &alpha in &op.alphas {
                codes.push(
                    interpolate(&source, &target, alpha)
                        .map_err(|e| input("interpolate", e))?,
                );
            }
            let sequence =
                LatentSequence::new(codes).map_err(|e| input("interpolate", e))?;
            (&op.io, sequence, "latent-interpolate")
        }
        LatentOp::Transfer(op) => {
            let sequence = LatentSequence::from_csv_file(&op.sequence)
                .map_err(|e| input(op.sequence.display(), e))?;
            let target_first = first_code(&op.target_first)?;
            let result =
                transfer(&sequence, &target_first).map_err(|e| input("transfer", e))?;
            (&op.io, result, "latent-transfer")
        }
        LatentOp::Smooth(op) => {
            let sequence = LatentSequence::from_csv_file(&op.sequence)
                .map_err(|e| input(op.sequence.display(), e))?;
            let result = smooth(&sequence, op.alpha).map_err(|e| input("smooth", e))?;
            (&op.io, result, "latent-smooth")
        }
    };

    result.to_csv_file(&io.out).map_err(|e| input(io.out.display(), e))?;
    if let (Some(ckpt), Some(prefix)) = (&io.ckpt, &io.decode_prefix) {
        let session = load_session(ckpt)?;
        if let Some(parent) = prefix.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| input(parent.display(), e))?;
            }
        }
        for (i, code) in result.codes().iter().enumerate() {
            let vertices = session.reconstruct(code).map_err(model_failure)?;
            let mesh = session
                .template()
                .with_vertices(vertices)
                .map_err(|e| input("decode", e))?;
            let path = PathBuf::from(format!("{}{i:03}.obj", prefix.display()));
            save_mesh(&mesh, &path).map_err(|e| input(path.display(), e))?;
        }
        eprintln!("{} meshes decoded to {}*.obj", result.len(), prefix.display());
    }

    let mut manifest = RunManifest::new(name);
    manifest.out = Some(path_str(&io.out));
    manifest.write(&io.out.with_extension("manifest.json"))?;
    eprintln!("{} codes written to {}", result.len(), io.out.display());
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<i32, Failure> {
    let options = CheckOptions {
        seeds: args.seeds,
        base_seed: args.seed,
        corrupt: args.corrupt,
    };
    let mut all_passed = true;
    for &scope in args.scope.scopes() {
        let report = gradcheck::run_scope(scope, &options);
        println!("{}", report.summary_line());
        all_passed &= report.passed();
    }
    Ok(if all_passed { 0 } else { 1 })
}
