//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::graph::{generate_synthetic, load_tu_dataset, write_tu_dataset, GraphDataset};
use crate::harness::staged::{evaluate_stage, prepare, train_stage};
use crate::harness::{
    read_report, run_experiment, summary_line, write_fold_csv, write_report, write_timings, ExperimentConfig,
    ExperimentResult,
};
use crate::kernels::{KernelSpec, DEFAULT_WL_ITERATIONS};
use crate::neural::TrainConfig;

#[derive(Debug, Parser)]
#[command(name = "kcnn", version, about = "Graph classification with kernel-normalised community patches and a 1D CNN")]
pub struct Cli {
    /// Worker threads for kernel computation and folds (default: all cores)
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the clique-versus-star synthetic dataset in TU format
    SynthGen(SynthArgs),
    /// Extract patches, assign folds and fit embeddings into a work directory
    Prepare {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long)]
        work_dir: PathBuf,
    },
    /// Select hyperparameters and train one model per fold
    Train {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        work_dir: PathBuf,
    },
    /// Score trained models on their test folds and write the report
    Evaluate {
        #[arg(long)]
        work_dir: PathBuf,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Full cross-validated experiment
    Run {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        setup: SetupArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Print the summary of a report, optionally exporting per-fold CSV
    Report {
        input: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of graphs (even, split equally between classes)
    #[arg(long, default_value_t = 1000, value_parser = parse_even_count)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding a TU-format dataset
    #[arg(long)]
    pub dataset_dir: PathBuf,
    /// Dataset name (file prefix); inferred from `*_A.txt` when omitted
    #[arg(long)]
    pub dataset_name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SetupArgs {
    /// Comma-separated kernel channels: sp, wl
    #[arg(long, default_value = "sp", value_parser = parse_channel_list)]
    pub channels: ChannelList,
    /// Weisfeiler-Lehman refinement iterations
    #[arg(long, default_value_t = DEFAULT_WL_ITERATIONS)]
    pub wl_h: usize,
    /// Patch embedding dimension
    #[arg(long, default_value_t = 100, value_parser = positive)]
    pub p: usize,
    #[arg(long, default_value_t = 10, value_parser = at_least_two)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Convolution filters
    #[arg(long, default_value_t = 256, value_parser = positive)]
    pub filters: usize,
    /// Units of the fully connected layer
    #[arg(long, default_value_t = 128, value_parser = positive)]
    pub dense: usize,
    /// Dropout rate of the fully connected layer, in [0, 1)
    #[arg(long, default_value_t = 0.5, value_parser = parse_dropout)]
    pub dropout: f64,
    #[arg(long, default_value_t = 64, value_parser = positive)]
    pub batch_size: usize,
    /// Candidate epoch counts
    #[arg(long, value_delimiter = ',', default_value = "50,100,200", value_parser = positive)]
    pub grid_epochs: Vec<usize>,
    /// Candidate learning rates
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.0001", value_parser = parse_lr)]
    pub grid_lr: Vec<f64>,
    /// Fixed epoch count (replaces the epoch grid)
    #[arg(long, value_parser = positive)]
    pub epochs: Option<usize>,
    /// Fixed learning rate (replaces the learning-rate grid)
    #[arg(long, value_parser = parse_lr)]
    pub lr: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ChannelList(pub Vec<ChannelName>);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelName {
    Sp,
    Wl,
}

fn parse_channel_list(s: &str) -> std::result::Result<ChannelList, String> {
    let mut out = Vec::new();
    for name in s.split(',').map(str::trim) {
        let c = match name.to_ascii_lowercase().as_str() {
            "sp" => ChannelName::Sp,
            "wl" => ChannelName::Wl,
            _ => return Err(format!("unknown channel '{name}'; valid channels: sp, wl")),
        };
        if out.contains(&c) {
            return Err(format!("channel '{name}' given twice"));
        }
        out.push(c);
    }
    Ok(ChannelList(out))
}

fn parse_even_count(s: &str) -> std::result::Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n < 2 || !n.is_multiple_of(2) {
        return Err(format!("count must be even and at least 2, got {n}"));
    }
    Ok(n)
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be positive".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn at_least_two(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 2 => Ok(n),
        Ok(n) => Err(format!("need at least 2 folds, got {n}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_dropout(s: &str) -> std::result::Result<f64, String> {
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(0.0..1.0).contains(&r) {
        return Err(format!("dropout must lie in [0, 1), got {r}"));
    }
    Ok(r)
}

fn parse_lr(s: &str) -> std::result::Result<f64, String> {
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(format!("learning rate must be positive, got {r}"));
    }
    Ok(r)
}

fn infer_dataset_name(dir: &Path) -> Result<String> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix("_A.txt")).map(String::from))
        .collect();
    names.sort();
    match names.as_slice() {
        [one] => Ok(one.clone()),
        [] => Err(Error::MissingFile(dir.join("<NAME>_A.txt"))),
        _ => Err(Error::invalid(format!(
            "several datasets in {}: {}; pick one with --dataset-name",
            dir.display(),
            names.join(", ")
        ))),
    }
}

fn load(data: &DataArgs) -> Result<GraphDataset> {
    let name = match &data.dataset_name {
        Some(n) => n.clone(),
        None => infer_dataset_name(&data.dataset_dir)?,
    };
    load_tu_dataset(&data.dataset_dir, &name)
}

fn experiment_config(dataset: &str, setup: Option<&SetupArgs>, model: Option<&ModelArgs>) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(dataset, vec![KernelSpec::shortest_path()]);
    if let Some(s) = setup {
        config.channels = s
            .channels
            .0
            .iter()
            .map(|c| match c {
                ChannelName::Sp => KernelSpec::shortest_path(),
                ChannelName::Wl => KernelSpec::weisfeiler_lehman(s.wl_h),
            })
            .collect();
        config.p = s.p;
        config.folds = s.folds;
        config.seed = s.seed;
    }
    if let Some(m) = model {
        config.epoch_grid = m.epochs.map_or_else(|| m.grid_epochs.clone(), |e| vec![e]);
        config.lr_grid = m.lr.map_or_else(|| m.grid_lr.clone(), |l| vec![l]);
        config.model = TrainConfig {
            num_filters: m.filters,
            dense_units: m.dense,
            dropout: m.dropout,
            batch_size: m.batch_size,
            epochs: *config.epoch_grid.iter().max().expect("non-empty grid"),
            learning_rate: config.lr_grid[0],
            seed: config.seed,
        };
    }
    config
}

fn write_outputs(result: &ExperimentResult, out: &Path) -> Result<()> {
    write_report(result, out)?;
    write_fold_csv(result, out.with_extension("csv"))?;
    write_timings(result, out)?;
    println!("{}", summary_line(result));
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthGen(args) => {
            let ds = generate_synthetic(args.count, args.seed)?;
            std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
            write_tu_dataset(&ds, &args.out_dir)?;
            let counts: Vec<String> = ds.class_counts().iter().map(|c| c.to_string()).collect();
            println!("{} graphs written to {}, classes {}", ds.len(), args.out_dir.display(), counts.join("/"));
        }
        Command::Prepare { data, setup, work_dir } => {
            let ds = load(&data)?;
            let config = experiment_config(&ds.name, Some(&setup), None);
            prepare(&config, &ds, &work_dir)?;
            println!("prepared {} graphs in {} folds at {}", ds.len(), config.folds, work_dir.display());
        }
        Command::Train { model, work_dir } => {
            let config = experiment_config("", None, Some(&model));
            let full = train_stage(&config, &work_dir)?;
            println!("trained {} folds at {}", full.folds, work_dir.display());
        }
        Command::Evaluate { work_dir, out } => {
            let result = evaluate_stage(&work_dir)?;
            write_outputs(&result, &out)?;
        }
        Command::Run { data, setup, model, out } => {
            let ds = load(&data)?;
            let config = experiment_config(&ds.name, Some(&setup), Some(&model));
            let result = run_experiment(&config, &ds)?;
            write_outputs(&result, &out)?;
        }
        Command::Report { input, csv } => {
            let result = read_report(&input)?;
            for f in &result.folds {
                println!(
                    "fold {:>2}: {:6.2}%  epochs {:>4}  lr {}",
                    f.fold,
                    100.0 * f.test_accuracy,
                    f.chosen.epochs,
                    f.chosen.learning_rate
                );
            }
            if let Some(path) = csv {
                write_fold_csv(&result, path)?;
            }
            println!("{}", summary_line(&result));
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code
/// (0 success, 1 runtime failure, 2 usage error).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Some(n) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global();
    }
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
