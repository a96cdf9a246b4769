use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use voxfill::config::PipelineConfig;
use voxfill::mesh::extract_isosurface;
use voxfill::model::{Conditioning, HeadMode, Layout, Task, TrainConfig};
use voxfill::pipeline::Pipeline;
use voxfill::volume::read_grid;

#[derive(Parser)]
#[command(name = "voxfill", version, about = "Hierarchical scene completion from partial scans")]
struct Cli {
    /// TOML config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the root seed and the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding every stage's artifacts.
    #[arg(long, global = true, default_value = "work")]
    work_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as TOML.
    Config,
    /// Generate procedural rooms (OBJ plus JSON sidecar).
    GenScenes,
    /// Plan virtual camera trajectories.
    Scan,
    /// Fuse rendered depth into TSDF grids at every level.
    Fuse,
    /// Compute ground-truth TDF and label grids.
    MakeGt,
    /// Select training crops and write the corpus manifest.
    BuildCorpus,
    /// Train the model hierarchy, one level at a time.
    Train(TrainArgs),
    /// Complete the held-out scenes.
    Infer(TrainArgs),
    /// Score held-out predictions; prints the metric table.
    Eval(TrainArgs),
    /// Write meshes of held-out predictions, or of one grid file.
    ExportMesh(ExportArgs),
    /// Compare whole-scene inference against independent blocks.
    SeamDemo {
        #[command(flatten)]
        train: TrainArgs,
        /// Held-out scene name; defaults to the first one.
        #[arg(long)]
        scene: Option<String>,
    },
    /// Every stage from scene generation to evaluation.
    Run(TrainArgs),
}

#[derive(Args, Default)]
struct TrainArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long, value_enum)]
    conditioning: Option<ConditioningArg>,
    /// Quantization bins for a probabilistic head (8, 16, 32 or 256).
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Hierarchical,
    FineOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Joint,
    SemanticOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConditioningArg {
    Predicted,
    GroundTruth,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// A TDF grid file to mesh instead of the held-out predictions.
    #[arg(long, requires = "out")]
    tdf: Option<PathBuf>,
    /// Label grid used to color the mesh.
    #[arg(long, requires = "tdf")]
    labels: Option<PathBuf>,
    /// Output mesh (.obj or .ply) for --tdf, or a directory otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl TrainArgs {
    fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut t = base.clone();
        if let Some(s) = self.steps {
            t.steps = s;
        }
        if let Some(l) = self.layout {
            t.layout = match l {
                LayoutArg::Hierarchical => Layout::Hierarchical,
                LayoutArg::FineOnly => Layout::FineOnly,
            };
        }
        if let Some(k) = self.task {
            t.task = match k {
                TaskArg::Joint => Task::Joint,
                TaskArg::SemanticOnly => Task::SemanticOnly,
            };
        }
        if let Some(c) = self.conditioning {
            t.conditioning = match c {
                ConditioningArg::Predicted => Conditioning::Predicted,
                ConditioningArg::GroundTruth => Conditioning::GroundTruth,
            };
        }
        if let Some(bins) = self.bins {
            t.head = HeadMode::Probabilistic { bins };
        }
        t
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    let base = cfg.train.clone();
    let pipeline = Pipeline::new(cfg, &cli.work_dir)?;
    match &cli.command {
        Command::Config => print!("{}", pipeline.config().to_toml()?),
        Command::GenScenes => report_dir(pipeline.gen_scenes()?),
        Command::Scan => report_dir(pipeline.scan()?),
        Command::Fuse => report_dir(pipeline.fuse()?),
        Command::MakeGt => report_dir(pipeline.make_gt()?),
        Command::BuildCorpus => report_dir(pipeline.build_corpus()?),
        Command::Train(a) => report_dir(pipeline.train(&a.apply(&base))?),
        Command::Infer(a) => report_dir(pipeline.infer(&a.apply(&base))?),
        Command::Eval(a) => print!("{}", pipeline.evaluate(&a.apply(&base))?.to_text()),
        Command::ExportMesh(a) => export_mesh(&pipeline, a, &base)?,
        Command::SeamDemo { train, scene } => {
            let r = pipeline.seam_demo(&train.apply(&base), scene.as_deref())?;
            println!("scene = {}", r.scene);
            println!("block_size = {}", r.block_size);
            println!("seam.full = {:.6}", r.full_score);
            println!("seam.blocks = {:.6}", r.block_score);
            println!("seam.ratio = {:.3}", r.ratio());
            println!("passes.full = {}", r.full_passes);
            println!("passes.blocks = {}", r.block_passes);
        }
        Command::Run(a) => {
            let train = a.apply(&base);
            pipeline.gen_scenes()?;
            pipeline.scan()?;
            pipeline.fuse()?;
            pipeline.make_gt()?;
            pipeline.build_corpus()?;
            pipeline.train(&train)?;
            pipeline.infer(&train)?;
            print!("{}", pipeline.evaluate(&train)?.to_text());
        }
    }
    Ok(())
}

fn report_dir(dir: PathBuf) {
    println!("{}", dir.display());
}

fn export_mesh(pipeline: &Pipeline, a: &ExportArgs, base: &TrainConfig) -> Result<()> {
    let iso = pipeline.config().eval.mesh_iso;
    if let Some(tdf_path) = &a.tdf {
        let out = a.out.as_ref().context("--out is required with --tdf")?;
        let tdf = read_grid(tdf_path)?.into_distance()?;
        let labels = a.labels.as_ref().map(|p| read_grid(p).and_then(|g| g.into_labels())).transpose()?;
        let mesh = extract_isosurface(&tdf, labels.as_ref(), iso)?;
        mesh.write(out)?;
        info!("{} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());
        println!("{}", out.display());
        return Ok(());
    }
    let out = a.out.clone().unwrap_or_else(|| pipeline.work_dir().join("meshes"));
    for path in pipeline.export_meshes(&a.train.apply(base), &out)? {
        println!("{}", path.display());
    }
    Ok(())
}
