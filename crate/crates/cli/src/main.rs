use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;
use treecode::pipeline::image::read_pgm;
use treecode::pipeline::model_file::{save_grid, save_pyramid};
use treecode::pipeline::{self, ModelFile, RunConfig};
use treecode::{Error, Result};

/// Structured sparse coding with tree-hashed group selection.
#[derive(Parser)]
#[command(name = "treecode", version)]
struct Cli {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the dictionary, groups and tree hash; write a model file.
    TrainDict(Keys),
    /// Code one image: sparse code grid and pyramid vector files.
    Encode {
        image: PathBuf,
        #[command(flatten)]
        keys: Keys,
    },
    /// Encode a labelled corpus, fit the classifier and report accuracy.
    Classify(Keys),
    /// Multiply counts, tree-vs-OMP throughput and stage timings.
    Bench(Keys),
    /// Print model statistics.
    Inspect {
        #[arg(id = "model_file", value_name = "MODEL")]
        model: Option<PathBuf>,
        #[command(flatten)]
        keys: Keys,
    },
}

/// One flag per configuration key; flags override the config file.
#[derive(Args, Default)]
struct Keys {
    #[arg(long)]
    images: Option<String>,
    #[arg(long)]
    vectors: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long)]
    train_dir: Option<String>,
    #[arg(long)]
    test_dir: Option<String>,
    #[arg(long)]
    atoms: Option<String>,
    #[arg(long)]
    sparsity: Option<String>,
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    depth: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads (0 = all cores); TREECODE_THREADS takes precedence.
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    stop_radius: Option<String>,
    #[arg(long)]
    two_means_iters: Option<String>,
    #[arg(long)]
    update_rule: Option<String>,
    #[arg(long)]
    assignment: Option<String>,
    #[arg(long)]
    max_vectors: Option<String>,
    #[arg(long)]
    splits: Option<String>,
    #[arg(long)]
    train_per_class: Option<String>,
    #[arg(long)]
    coder: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    bench_vectors: Option<String>,
}

impl Keys {
    fn pairs(&self) -> [(&'static str, &Option<String>); 27] {
        [
            ("images", &self.images),
            ("vectors", &self.vectors),
            ("model", &self.model),
            ("output", &self.output),
            ("data_dir", &self.data_dir),
            ("train_dir", &self.train_dir),
            ("test_dir", &self.test_dir),
            ("atoms", &self.atoms),
            ("sparsity", &self.sparsity),
            ("groups", &self.groups),
            ("depth", &self.depth),
            ("iters", &self.iters),
            ("seed", &self.seed),
            ("threads", &self.threads),
            ("lambda", &self.lambda),
            ("stop_radius", &self.stop_radius),
            ("two_means_iters", &self.two_means_iters),
            ("update_rule", &self.update_rule),
            ("assignment", &self.assignment),
            ("max_vectors", &self.max_vectors),
            ("splits", &self.splits),
            ("train_per_class", &self.train_per_class),
            ("coder", &self.coder),
            ("max_iter", &self.max_iter),
            ("tol", &self.tol),
            ("reps", &self.reps),
            ("bench_vectors", &self.bench_vectors),
        ]
    }
}

fn run_config(file: Option<&Path>, keys: &Keys) -> Result<RunConfig> {
    let mut cfg = match file {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for (k, v) in keys.pairs() {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    if let Ok(t) = std::env::var("TREECODE_THREADS") {
        cfg.set("threads", t.trim())
            .map_err(|_| Error::Config(format!("TREECODE_THREADS must be a count, got `{t}`")))?;
    }
    Ok(cfg)
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("`{key}` is required")))
}

fn train_dict(cfg: &RunConfig) -> Result<()> {
    let out_path = require(&cfg.output, "output")?;
    let out = pipeline::train_dict(cfg)?;
    println!("trained on {} vectors", out.n_vectors);
    for (i, e) in out.energy_trace.iter().enumerate() {
        println!("iteration {:>3}  energy {e:.6e}", i + 1);
    }
    println!("wrote {}", out_path.display());
    Ok(())
}

fn encode(cfg: &RunConfig, image: &Path) -> Result<()> {
    let file = ModelFile::load(require(&cfg.model, "model")?)?;
    let model = Arc::new(file.model);
    let coder = pipeline::build_coder(&model, &cfg.coder, cfg.sparsity)?;
    let img = read_pgm(image)?;
    let enc = pipeline::encode_image(coder.as_ref(), &img)?;
    let prefix = cfg
        .output
        .clone()
        .unwrap_or_else(|| image.with_extension(""));
    let grid_path = PathBuf::from(format!("{}.grid.tssc", prefix.display()));
    let pyr_path = PathBuf::from(format!("{}.pyramid.tssc", prefix.display()));
    save_grid(&grid_path, &enc.grid)?;
    save_pyramid(&pyr_path, &enc.pyramid)?;
    println!(
        "{}x{} code grid -> {}",
        enc.grid.width(),
        enc.grid.height(),
        grid_path.display()
    );
    println!(
        "pyramid vector ({} values) -> {}",
        enc.pyramid.len(),
        pyr_path.display()
    );
    Ok(())
}

fn classify(cfg: &RunConfig) -> Result<()> {
    let mut file = ModelFile::load(require(&cfg.model, "model")?)?;
    let report = pipeline::classify_pipeline(cfg, &file)?;
    print!("{}", report.to_csv());
    info!(
        "balanced accuracy {:.4} +- {:.4} over {} splits",
        report.mean,
        report.std,
        report.rows.len()
    );
    if let Some(out) = &cfg.output {
        file.classifier = report.classifier;
        file.save(out)?;
        info!("wrote {}", out.display());
    }
    Ok(())
}

fn bench(cfg: &RunConfig) -> Result<()> {
    let file = ModelFile::load(require(&cfg.model, "model")?)?;
    let report = pipeline::bench(cfg, &file)?;
    print!("{report}");
    Ok(())
}

fn inspect(cfg: &RunConfig, model: Option<&Path>) -> Result<()> {
    let path = match model {
        Some(p) => p,
        None => require(&cfg.model, "model")?,
    };
    let file = ModelFile::load(path)?;
    print!("{}", pipeline::inspect(&file));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let keys = match &cli.command {
        Command::TrainDict(k) | Command::Classify(k) | Command::Bench(k) => k,
        Command::Encode { keys, .. } | Command::Inspect { keys, .. } => keys,
    };
    let cfg = run_config(cli.config.as_deref(), keys)?;
    let pool = pipeline::thread_pool(cfg.threads)?;
    pool.install(|| match &cli.command {
        Command::TrainDict(_) => train_dict(&cfg),
        Command::Encode { image, .. } => encode(&cfg, image),
        Command::Classify(_) => classify(&cfg),
        Command::Bench(_) => bench(&cfg),
        Command::Inspect { model, .. } => inspect(&cfg, model.as_deref()),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_kind() as u8)
        }
    }
}
