use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mdf", version, about = "Genotype-conditional diffusion toolkit for histology patches")]
pub struct Cli {
    /// Log filter for stderr (error, warn, info, debug, trace); RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tile annotated slides into labeled patches and write a manifest.
    MakeDataset(MakeDatasetArgs),
    /// Transfer an image to the stain basis of a target image.
    StainNormalize(StainArgs),
    /// Train a conditional denoiser and write a checkpoint.
    Train(TrainArgs),
    /// Draw samples for one label from a checkpoint.
    Sample(SampleArgs),
    /// Compute feature embeddings for a set of images.
    Embed(EmbedArgs),
    /// Compare real and generated embeddings (IS, FID, sFID, precision, recall).
    Evaluate(EvaluateArgs),
    /// Two-sided Fisher exact test on a 2x2 survey table.
    Survey(SurveyArgs),
    /// Print the effective run configuration as JSON.
    Config(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Config file to validate and print; defaults are printed without one.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MakeDatasetArgs {
    /// Directory holding one `<slide_id>.ppm` per annotated slide.
    #[arg(long)]
    pub slides: PathBuf,
    /// JSON file with one annotation object or an array of them.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Output directory; receives `manifest.jsonl` and `patches/`.
    #[arg(long)]
    pub out: PathBuf,
    /// Run configuration (the `data` section is used).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for the per-slide subset draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct StainArgs {
    /// Source PPM image.
    #[arg(long)]
    pub input: PathBuf,
    /// Target PPM image whose stain basis is adopted.
    #[arg(long, conflicts_with = "target_model", required_unless_present = "target_model")]
    pub target: Option<PathBuf>,
    /// Previously saved target stain model (JSON) instead of a target image.
    #[arg(long)]
    pub target_model: Option<PathBuf>,
    /// Output PPM path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the fitted target stain model here.
    #[arg(long)]
    pub save_target_model: Option<PathBuf>,
    /// Sparsity weight on the concentrations.
    #[arg(long, default_value_t = mdf_core::stainnorm::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Alternating iterations of the factorization.
    #[arg(long, default_value_t = mdf_core::stainnorm::DEFAULT_ITERS)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ToyTask {
    /// Labels "0" and "1" at (-3, 0) and (3, 0), variance 0.25.
    TwoGaussians,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Simple,
    P2,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration JSON; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train on a built-in toy task.
    #[arg(long, value_enum, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub toy: Option<ToyTask>,
    /// Train on the patches listed in a dataset manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log CSV (`step,loss,weight_scheme`).
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Log the mean loss every this many steps.
    #[arg(long)]
    pub log_every: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleFormat {
    /// PPM images when the checkpoint models images, F32 otherwise.
    Auto,
    Ppm,
    F32,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Label name from the checkpoint's label set.
    #[arg(long)]
    pub label: String,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (F32) or directory (PPM).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SampleFormat::Auto)]
    pub format: SampleFormat,
    /// Add noise on the final reverse step as well.
    #[arg(long)]
    pub final_step_noise: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtractorArg {
    Identity,
    Projection,
    Histogram,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Directory of PPM images (sorted by name) or a manifest file.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long, value_enum, default_value_t = ExtractorArg::Histogram)]
    pub extractor: ExtractorArg,
    /// Output width of the random projection.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Seed of the random projection matrix.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// F32 output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Real-image embeddings (F32).
    #[arg(long)]
    pub real: PathBuf,
    /// Generated-image embeddings (F32).
    #[arg(long)]
    pub gen: PathBuf,
    /// Real embeddings in the spatial feature space, for sFID.
    #[arg(long, requires = "gen_spatial")]
    pub real_spatial: Option<PathBuf>,
    #[arg(long, requires = "real_spatial")]
    pub gen_spatial: Option<PathBuf>,
    /// Class probabilities of the generated images (F32, rows sum to 1), for IS.
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// Neighbourhood size for precision and recall.
    #[arg(long, default_value_t = mdf_core::metrics::DEFAULT_K)]
    pub k: usize,
    /// Standardize features by the real set before the k-NN metrics.
    #[arg(long)]
    pub zscore: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SurveyArgs {
    /// Counts `a,b,c,d` of the table [[a,b],[c,d]] (rows: truth real/synthetic).
    #[arg(long)]
    pub table: String,
}
