use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "equilens",
    version,
    about = "Analyze equivariant latent spaces: orbit distances, invariant projections and a permutation-equivariant graph VAE",
    after_help = "Every command writes <output>.manifest.json next to its primary output."
)]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "EQUILENS_THREADS")]
    pub threads: Option<usize>,

    /// Log level for messages on stderr (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic padded-graph dataset (JSON).
    GenData(GenDataArgs),
    /// Generate rotation-represented latents with classes planted in block norms (CSV).
    GenRot(GenRotArgs),
    /// Train the graph VAE (JSON parameters plus a loss-curve CSV).
    Train(TrainArgs),
    /// Encode graphs to latents: posterior means or samples (CSV).
    Embed(EmbedArgs),
    /// Apply an invariant map to latents (CSV).
    Project(ProjectArgs),
    /// Quotient distances between latent pairs (CSV).
    Dist(DistArgs),
    /// kNN regression (MAE) or classification (macro-F1) per k (CSV).
    Knn(KnnArgs),
    /// First two principal components (CSV and SVG scatter).
    Pca(PcaArgs),
    /// Interpolate between two latents and decode every step (JSON).
    Interpolate(InterpolateArgs),
    /// Mean consecutive Hamming distance along random interpolations (CSV).
    Stability(StabilityArgs),
    /// Run the built-in property checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 600)]
    pub count: usize,
    /// Node slots per graph.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    /// Node categories including the padding category.
    #[arg(long, default_value_t = 4)]
    pub d_a: usize,
    /// Edge categories including "no edge".
    #[arg(long, default_value_t = 3)]
    pub d_e: usize,
    /// Generator spec as JSON; overrides --n, --d-a and --d-e.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long, default_value = "data.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenRotArgs {
    #[arg(long, default_value_t = 500)]
    pub count: usize,
    /// Discretization of the rotation group.
    #[arg(long, default_value_t = 360)]
    pub k: usize,
    /// Block frequencies, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,1,1,2,3")]
    pub freqs: Vec<u32>,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Standard deviation of the per-coordinate noise.
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
    /// Seed of the class templates (shared between train and test sets).
    #[arg(long, default_value_t = 0)]
    pub template_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long, default_value = "rot.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Training configuration as JSON; replaces every hyperparameter flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Channels of every hidden layer.
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    /// Rescale batch gradients to at most this norm.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Epochs over which the KL weight ramps from 0 to 1.
    #[arg(long, default_value_t = 0)]
    pub kl_warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long, default_value = "params.json")]
    pub out: PathBuf,
    /// Loss curve CSV (default: <out stem>.curve.csv).
    #[arg(long, alias = "loss-out")]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedMode {
    /// Posterior means.
    Mean,
    /// One reparameterized sample per graph.
    Sample,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long, alias = "model")]
    pub params: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "mean")]
    pub mode: EmbedMode,
    /// Relabel every latent by its own random permutation.
    #[arg(long)]
    pub permute: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long, default_value = "latents.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProjectionKind {
    Sort,
    Reynolds,
    Partition,
    PoolSum,
    PoolMean,
    PoolMax,
    BlockNorm,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long = "in", alias = "latents")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub kind: ProjectionKind,
    /// Group acting on the latents, e.g. sym:6 or cyc:360:f0,f1,f1 (default sym:<dim>).
    #[arg(long)]
    pub group: Option<String>,
    /// Output dimension of the random linear kinds (default min(dim, 32)).
    #[arg(long)]
    pub out_dim: Option<usize>,
    /// Channels per node position (pooling and partition kinds).
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Tensor order of the input (partition kind).
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Largest group enumerated for Reynolds averaging.
    #[arg(long, default_value_t = equilens::group::DEFAULT_ENUMERATION_CAP)]
    pub cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long, default_value = "projected.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    #[arg(long = "in", alias = "latents")]
    pub input: PathBuf,
    /// Group acting on the latents (default sym:<dim>).
    #[arg(long)]
    pub group: Option<String>,
    /// auto, bruteforce, sorted or rotation.
    #[arg(long, default_value = "auto")]
    pub method: String,
    /// A count of random pairs (0 for every pair) or a CSV with id1,id2 columns.
    #[arg(long, default_value = "100")]
    pub pairs: String,
    #[arg(long, default_value_t = equilens::quotient::DEFAULT_ROTATION_GRID)]
    pub grid: usize,
    #[arg(long, default_value_t = equilens::group::DEFAULT_ENUMERATION_CAP)]
    pub cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long, default_value = "dists.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KnnTask {
    Regress,
    Classify,
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    /// Training latents; also the test pool when --test is absent.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Fraction of shuffled rows held out when --test is absent.
    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,
    /// Label column to predict.
    #[arg(long)]
    pub target: String,
    #[arg(long, value_enum, default_value = "regress")]
    pub task: KnnTask,
    /// Neighbor counts: a range such as 1..20 or a comma-separated list.
    #[arg(long, alias = "ks", default_value = "1..10", value_parser = parse_ks)]
    pub k: KList,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long, default_value = "metrics.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[arg(long = "in", alias = "latents")]
    pub input: PathBuf,
    /// Label column used to color the scatter.
    #[arg(long, alias = "color")]
    pub color_by: Option<String>,
    /// Treat the color column as categories (default: integer columns with at most 10 values).
    #[arg(long)]
    pub categorical: Option<bool>,
    #[arg(long, default_value = "PCA")]
    pub title: String,
    /// Scatter plot.
    #[arg(short, long, default_value = "scatter.svg")]
    pub out: PathBuf,
    /// Principal-component coordinates (default: <out stem>.csv).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Equivariant,
    Invariant,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[arg(long, alias = "model")]
    pub params: PathBuf,
    #[arg(long = "in", alias = "latents")]
    pub input: PathBuf,
    /// Endpoint ids `i,j`; row `i` is reached at alpha = 1, row `j` at alpha = 0.
    #[arg(long, value_delimiter = ',', num_args = 1, required = true)]
    pub ids: Vec<u64>,
    #[arg(long, value_enum, default_value = "equivariant")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 25)]
    pub steps: usize,
    #[arg(short, long, default_value = "path.json")]
    pub out: PathBuf,
    /// Hamming distances between consecutive decodes (default: <out stem>_hamming.csv).
    #[arg(long)]
    pub hamming: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StabilityMode {
    Equivariant,
    Invariant,
    Both,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long, alias = "model")]
    pub params: PathBuf,
    #[arg(long = "in", alias = "latents")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: StabilityMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Histogram of per-path means.
    #[arg(short, long, default_value = "hist.csv")]
    pub out: PathBuf,
    /// Per-path means (default: <out stem>.paths.csv).
    #[arg(long)]
    pub paths: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run only these checks (repeatable; default all).
    #[arg(long)]
    pub check: Vec<u8>,
    #[arg(short, long, default_value = "selftest.json")]
    pub out: PathBuf,
}

/// Neighbor counts given on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KList(pub Vec<usize>);

/// Parses `a..b` (inclusive) or a comma-separated list of positive integers.
pub fn parse_ks(s: &str) -> Result<KList, String> {
    let bad = |t: &str| format!("'{t}' is not a positive integer");
    let num = |t: &str| t.trim().parse::<usize>().ok().filter(|&k| k > 0).ok_or_else(|| bad(t));
    let ks = match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(format!("empty range {s}"));
            }
            (a..=b).collect()
        }
        None => s.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
    };
    Ok(KList(ks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_lists() {
        assert_eq!(parse_ks("1..4").unwrap().0, vec![1, 2, 3, 4]);
        assert_eq!(parse_ks("1,5,10").unwrap().0, vec![1, 5, 10]);
        assert_eq!(parse_ks("3").unwrap().0, vec![3]);
        assert!(parse_ks("0..3").is_err());
        assert!(parse_ks("5..2").is_err());
        assert!(parse_ks("a").is_err());
    }

    #[test]
    fn spec_style_invocations_parse() {
        let cli = Cli::try_parse_from(["equilens", "knn", "--train", "a.csv", "--target", "y", "--k", "1..20"]).unwrap();
        match cli.command {
            Command::Knn(a) => assert_eq!(a.k.0.len(), 20),
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["equilens", "interpolate", "--params", "p.json", "--in", "z.csv", "--ids", "3,4"]).unwrap();
        match cli.command {
            Command::Interpolate(a) => assert_eq!(a.ids, vec![3, 4]),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["equilens", "stability", "--params", "p", "--in", "z", "--mode", "both"]).is_ok());
    }
}
