use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use forestlr::codegen::emit_source;
use forestlr::eval::model_size_bytes;
use forestlr::experiment::{build_report, read_results, run_experiment, write_atomic, write_report, ExperimentConfig};
use forestlr::refine::{refine_leaves, refine_random_subset, RefineConfig};
use forestlr::{
    synthetic_classification, train_forest, Dataset, Forest, PruneMethod, PruneSelection, Pruner, Subset,
};

#[derive(Parser)]
#[command(name = "forestlr", version, about = "Prune random forests, refine their leaves, measure accuracy against memory")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file, or JSON written by `synth --json`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "label")]
    label: String,
    /// Comma-separated categorical columns.
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        Dataset::load(&self.data, &self.label, &self.categorical)
            .with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic classification dataset.
    Synth {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write JSON instead of CSV.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a forest on the whole dataset.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 256)]
        trees: usize,
        #[arg(long, default_value_t = 64)]
        max_leaves: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select K trees from a forest.
    Prune {
        #[arg(long)]
        forest: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "reduced-error")]
        method: PruneMethod,
        #[arg(long = "k", short = 'K')]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine the leaves of K trees with SGD.
    Refine {
        #[arg(long)]
        forest: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Trees to refine; without it K trees are sampled at random.
        #[arg(long)]
        selection: Option<PathBuf>,
        #[arg(long = "k", short = 'K', default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 128)]
        batch_size: usize,
        #[arg(long)]
        full_batch: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the selection used.
        #[arg(long)]
        selection_out: Option<PathBuf>,
    },
    /// Print accuracy and model size as JSON.
    Eval {
        #[arg(long)]
        forest: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        selection: Option<PathBuf>,
    },
    /// Emit C++ source for a forest and a manifest sidecar.
    Codegen {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        subset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out>.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Run a full experiment grid from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild fronts, APF and ranks from a results file.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_forest(path: &Path) -> Result<Forest> {
    Forest::load(path).with_context(|| format!("loading forest {}", path.display()))
}

fn load_subset(forest: &Forest, path: Option<&Path>) -> Result<Subset> {
    let Some(path) = path else {
        return Ok(forest.all());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let selection = PruneSelection::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    if selection.n_trees() != forest.n_trees() {
        bail!(
            "selection {} was made for {} trees, forest has {}",
            path.display(),
            selection.n_trees(),
            forest.n_trees()
        );
    }
    Ok(selection.subset())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    write_atomic(path, contents.as_ref()).with_context(|| format!("writing {}", path.display()))
}

fn dataset_csv(ds: &Dataset) -> String {
    let mut out = ds.feature_names().join(",");
    out.push_str(",label\n");
    for r in 0..ds.n_rows() {
        for v in ds.row(r) {
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(&ds.class_names()[ds.class(r)]);
        out.push('\n');
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            n,
            d,
            classes,
            noise,
            seed,
            json,
            out,
        } => {
            let ds = synthetic_classification(n, d, classes, noise, seed)?;
            let text = if json { ds.to_json()? } else { dataset_csv(&ds) };
            write(&out, text)
        }
        Command::Train {
            data,
            trees,
            max_leaves,
            seed,
            out,
        } => {
            let ds = data.load()?;
            let forest = train_forest(&ds, &ds.all_rows(), trees, max_leaves, seed)?;
            write(&out, forest.to_json()?)
        }
        Command::Prune {
            forest,
            data,
            method,
            k,
            seed,
            out,
        } => {
            let forest = load_forest(&forest)?;
            let ds = data.load()?;
            let selection = method.prune(&forest, &ds, &ds.all_rows(), k, seed)?;
            write(&out, selection.to_json()?)
        }
        Command::Refine {
            forest,
            data,
            selection,
            k,
            alpha,
            epochs,
            batch_size,
            full_batch,
            seed,
            out,
            selection_out,
        } => {
            let forest = load_forest(&forest)?;
            let ds = data.load()?;
            let rows = ds.all_rows();
            let config = RefineConfig {
                step_size: alpha,
                epochs,
                batch_size,
                full_batch,
                seed,
                ..RefineConfig::default()
            };
            let (refined, used) = match selection {
                Some(path) => {
                    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    let sel = PruneSelection::from_json(&text)?;
                    (refine_leaves(&forest, &sel.subset(), &ds, &rows, &config)?, sel)
                }
                None => refine_random_subset(&forest, &ds, &rows, k, &config)?,
            };
            write(&out, refined.to_json()?)?;
            if let Some(path) = selection_out {
                write(&path, used.to_json()?)?;
            }
            Ok(())
        }
        Command::Eval { forest, data, selection } => {
            let forest = load_forest(&forest)?;
            let ds = data.load()?;
            let subset = load_subset(&forest, selection.as_deref())?;
            let accuracy = forest.accuracy(&subset, &ds, &ds.all_rows())?;
            let size = model_size_bytes(&forest, &subset, ds.n_classes())?;
            let summary = serde_json::json!({
                "accuracy": accuracy,
                "size_bytes": size,
                "trees": subset.len(),
                "nodes": forest.node_count(&subset),
            });
            println!("{summary}");
            Ok(())
        }
        Command::Codegen {
            input,
            subset,
            out,
            manifest,
        } => {
            let forest = load_forest(&input)?;
            let subset = load_subset(&forest, subset.as_deref())?;
            let model = emit_source(&forest, &subset)?;
            let manifest_path = manifest.unwrap_or_else(|| {
                let mut name = out.clone().into_os_string();
                name.push(".manifest.json");
                PathBuf::from(name)
            });
            write(&out, &model.source_text)?;
            write(&manifest_path, serde_json::to_string_pretty(&model.manifest)?)
        }
        Command::Experiment { config, out } => {
            let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if cfg.dataset.path.is_relative() {
                if let Some(dir) = config.parent() {
                    cfg.dataset.path = dir.join(&cfg.dataset.path);
                }
            }
            if let Some(out) = out {
                cfg.output_dir = Some(out);
            }
            if cfg.output_dir.is_none() {
                bail!("no output directory: set `output_dir` in the config or pass --out");
            }
            if cfg.threads.is_none() {
                cfg.threads = cli.threads;
            }
            let outcome = run_experiment(&cfg)?;
            eprintln!(
                "{} result rows, {} base forests",
                outcome.results.len(),
                outcome.forests.len()
            );
            Ok(())
        }
        Command::Report { results, out } => {
            let rows = read_results(&results).with_context(|| format!("reading {}", results.display()))?;
            let report = build_report(&rows)?;
            write_report(&report, &out)?;
            for (method, rank) in &report.ranks {
                println!("{method}\t{rank:.2}");
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon_init(n) {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn rayon_init(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring thread pool")
}
