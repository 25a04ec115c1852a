//! Subcommands of the `ham` binary. Each `cmd_*` function is callable from
//! tests; `run` parses nothing and only dispatches.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::data::{self, Dataset, SplitPlan, SplitSetting};
use crate::error::{Error, Result};
use crate::evaluation::{self, EvalOptions, EvalResult, EvalTarget};
use crate::model::{self, Checkpoint, HyperParams, ModelError, ModelParams};
use crate::synth::{self, SynthKind, SynthSpec};
use crate::training::{self, TrainOptions, TrainReport};

#[derive(Debug, Parser)]
#[command(
    name = "ham",
    version,
    about = "Sequential recommendation with high-order item associations"
)]
pub struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Split protocol: 80-20-cut, 80-3-cut or 3-los.
    #[arg(long, global = true)]
    pub setting: Option<SplitSetting>,
    /// Seed for initialization and sampling (also the corpus seed of gen-synth).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Remove each user's history from the candidate ranking.
    #[arg(long, global = true)]
    pub exclude_seen: bool,
    /// Measure per-user inference latency during evaluation.
    #[arg(long, global = true)]
    pub bench: bool,
    /// Suppress progress output on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter and remap a raw interaction log into a dataset file.
    Preprocess {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write per-user split boundaries for the configured protocol.
    Split {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train (or grid-search) and keep the best validation checkpoint.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score the test split with a checkpoint.
    Evaluate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Retrain on train+validation with the checkpoint's settings first.
        #[arg(long)]
        retrain: bool,
        /// Comma-separated cutoffs, e.g. 5,10.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Per-user scoring latency on random models of increasing size.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        items: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Generate a synthetic interaction log with planted structure.
    GenSynth {
        #[arg(long, default_value = "markov")]
        kind: SynthKind,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 50)]
        items: usize,
        #[arg(long, default_value_t = 60)]
        length: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 5)]
        preferred: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

/// Dataset size and sparsity, as printed by `ham preprocess`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub interactions_per_user: f64,
    pub users_per_item: f64,
    pub density: f64,
}

impl DatasetSummary {
    pub fn of(ds: &Dataset) -> Self {
        let inter = ds.num_interactions();
        Self {
            users: ds.num_users(),
            items: ds.num_items(),
            interactions: inter,
            interactions_per_user: inter as f64 / ds.num_users() as f64,
            users_per_item: inter as f64 / ds.num_items() as f64,
            density: ds.density(),
        }
    }
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "#users  #items  #intrns  #intrns/u  #u/i  density")?;
        write!(
            f,
            "{}  {}  {}  {:.1}  {:.1}  {:.4}%",
            self.users,
            self.items,
            self.interactions,
            self.interactions_per_user,
            self.users_per_item,
            100.0 * self.density
        )
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn config_line(cfg: &RunConfig) -> String {
    format!("config: {}", serde_json::to_string(&cfg.to_json()).unwrap())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read_from(open(path)?).map_err(|source| Error::Input {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Ok(model::read_checkpoint(open(path)?)?)
}

/// Reads the raw log, preprocesses it and writes the dataset file plus
/// `.users.tsv`, `.items.tsv` id maps and a `.meta.json` sidecar holding
/// the config and summary.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<DatasetSummary> {
    let raw = cfg
        .paths
        .raw_log
        .as_deref()
        .ok_or_else(|| Error::Config("paths.raw_log (or --input) is required".into()))?;
    let input_err = |source| Error::Input {
        path: raw.to_path_buf(),
        source,
    };
    let records = data::parse_interactions(open(raw)?, &cfg.format).map_err(input_err)?;
    let dataset = data::preprocess(&records, &cfg.preprocess).map_err(input_err)?;
    let out = &cfg.paths.dataset;
    let write_err = |e| Error::io(out, e);
    let mut w = create(out)?;
    dataset.write_to(&mut w).map_err(write_err)?;
    w.flush().map_err(write_err)?;
    for (items, suffix) in [(false, ".users.tsv"), (true, ".items.tsv")] {
        let path = with_suffix(out, suffix);
        let mut w = create(&path)?;
        dataset
            .write_id_map(items, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
    }
    let summary = DatasetSummary::of(&dataset);
    let meta = serde_json::json!({ "config": cfg.to_json(), "summary": summary });
    let meta_path = with_suffix(out, ".meta.json");
    let mut w = create(&meta_path)?;
    writeln!(w, "{}", serde_json::to_string_pretty(&meta).unwrap())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&meta_path, e))?;
    Ok(summary)
}

pub fn cmd_split(cfg: &RunConfig) -> Result<SplitPlan> {
    let dataset = load_dataset(&cfg.paths.dataset)?;
    let plan = data::split(&dataset, cfg.setting);
    let path = &cfg.paths.split;
    let mut w = create(path)?;
    writeln!(w, "# {}", config_line(cfg))
        .and_then(|_| plan.write_to(&mut w))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;
    Ok(plan)
}

/// One grid row: the configuration and how it did on validation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub hyper: HyperParams,
    pub report: TrainReport,
}

impl GridRow {
    pub fn best_recall(&self) -> f64 {
        self.report
            .best()
            .map_or(f64::NEG_INFINITY, |b| b.recall_at_10)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub rows: Vec<GridRow>,
    pub best: usize,
    pub params: ModelParams,
}

impl TrainOutcome {
    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }
}

fn hyper_line(h: &HyperParams) -> String {
    format!(
        "hyper: d={} n_h={} n_l={} n_p={} p={} pooling={} ablation={} lambda={} learning_rate={} batch_size={} max_epochs={} validate_every={} seed={} optimizer={}",
        h.d, h.n_h, h.n_l, h.n_p, h.p, h.pooling, h.ablation, h.lambda, h.learning_rate,
        h.batch_size, h.max_epochs, h.validate_every, h.seed, h.optimizer
    )
}

/// Splits, trains every grid combination (or just the base
/// hyperparameters) and keeps the one with the highest validation
/// Recall@10. Writes the checkpoint, the per-epoch report and, in grid
/// mode, a `.grid.csv` summary next to the report.
pub fn cmd_train(cfg: &RunConfig, verbose: bool) -> Result<TrainOutcome> {
    let dataset = load_dataset(&cfg.paths.dataset)?;
    let plan = data::split(&dataset, cfg.setting);
    let combos = match &cfg.grid {
        Some(grid) => grid.combinations(&cfg.hyper),
        None => vec![cfg.hyper.clone()],
    };
    let mut rows: Vec<GridRow> = Vec::new();
    let mut best: Option<(usize, ModelParams)> = None;
    for hyper in combos {
        if let Err(e) = hyper.validate() {
            if cfg.grid.is_none() {
                return Err(e.into());
            }
            if verbose {
                eprintln!("skipping grid point: {e}");
            }
            continue;
        }
        if verbose {
            eprintln!("training {}", hyper_line(&hyper));
        }
        let (params, report) = training::train_with(
            &dataset,
            &plan,
            &hyper,
            TrainOptions {
                include_validation: false,
                verbose,
            },
        )?;
        let row = GridRow { hyper, report };
        let better = match &best {
            None => true,
            Some((i, _)) => row.best_recall() > rows[*i].best_recall(),
        };
        rows.push(row);
        if better {
            best = Some((rows.len() - 1, params));
        }
    }
    let (best, params) = best.ok_or_else(|| Error::Config("no valid grid combination".into()))?;
    let winner = &rows[best];

    let ckpt = Checkpoint {
        hyper: winner.hyper.clone(),
        params,
        epochs: winner.report.best_epoch.unwrap_or(winner.hyper.max_epochs),
        config: cfg.to_json(),
    };
    let path = &cfg.paths.checkpoint;
    let mut w = create(path)?;
    model::write_checkpoint(&ckpt, &mut w)?;

    let header = format!(
        "{}\n{}\nsetting: {}",
        config_line(cfg),
        hyper_line(&winner.hyper),
        cfg.setting
    );
    let path = &cfg.paths.report;
    let mut w = create(path)?;
    winner
        .report
        .write_to(&mut w, &header)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;

    if cfg.grid.is_some() {
        let path = with_suffix(&cfg.paths.report, ".grid.csv");
        let mut w = create(&path)?;
        write_grid(&mut w, cfg, &rows, best).map_err(|e| Error::io(&path, e))?;
    }
    Ok(TrainOutcome {
        params: ckpt.params,
        rows,
        best,
    })
}

fn write_grid<W: Write>(
    mut w: W,
    cfg: &RunConfig,
    rows: &[GridRow],
    best: usize,
) -> std::io::Result<()> {
    writeln!(w, "# {}", config_line(cfg))?;
    writeln!(w, "row,d,n_h,n_l,n_p,p,pooling,ablation,lambda,learning_rate,best_epoch,recall@10,ndcg@10,best")?;
    for (i, r) in rows.iter().enumerate() {
        let h = &r.hyper;
        let (epoch, recall, ndcg) = match r.report.best() {
            Some(b) => (
                b.epoch.to_string(),
                format!("{:.6}", b.recall_at_10),
                format!("{:.6}", b.ndcg_at_10),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{},{},{},{epoch},{recall},{ndcg},{}",
            h.d,
            h.n_h,
            h.n_l,
            h.n_p,
            h.p,
            h.pooling,
            h.ablation,
            h.lambda,
            h.learning_rate,
            u8::from(i == best)
        )?;
    }
    w.flush()
}

/// Loads a checkpoint, optionally retrains on train+validation with its
/// hyperparameters for its recorded epoch count, evaluates the test split
/// and writes `metric,k,value` rows.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    retrain: bool,
    bench: bool,
    verbose: bool,
) -> Result<EvalResult> {
    let dataset = load_dataset(&cfg.paths.dataset)?;
    let ckpt = load_checkpoint(&cfg.paths.checkpoint)?;
    for (what, expected, found) in [
        ("user count", dataset.num_users(), ckpt.params.num_users()),
        ("item count", dataset.num_items(), ckpt.params.num_items()),
        ("embedding dimension", ckpt.hyper.d, ckpt.params.dim()),
    ] {
        if expected != found {
            return Err(ModelError::ShapeMismatch {
                what,
                expected,
                found,
            }
            .into());
        }
    }
    let plan = data::split(&dataset, cfg.setting);
    let mut hyper = ckpt.hyper.clone();
    let params = if retrain {
        hyper.max_epochs = ckpt.epochs.max(1);
        let (params, _) = training::train_with(
            &dataset,
            &plan,
            &hyper,
            TrainOptions {
                include_validation: true,
                verbose,
            },
        )?;
        params
    } else {
        ckpt.params
    };
    let opts = EvalOptions {
        ks: cfg.ks.clone(),
        target: EvalTarget::Test,
        exclude_seen: cfg.exclude_seen,
        measure_latency: bench,
    };
    let result = evaluation::evaluate(&params, &dataset, &plan, &hyper, &opts)?;
    let path = &cfg.paths.metrics;
    let mut w = create(path)?;
    writeln!(w, "# {}", config_line(cfg))
        .and_then(|_| writeln!(w, "# {}", hyper_line(&hyper)))
        .and_then(|_| {
            writeln!(
                w,
                "# setting: {} exclude_seen: {} retrain: {} users: {}",
                cfg.setting, cfg.exclude_seen, retrain, result.num_users_evaluated
            )
        })
        .and_then(|_| writeln!(w, "metric,k,value"))
        .and_then(|_| result.write_machine(&mut w))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;
    Ok(result)
}

/// (items, seconds per user) for each catalogue size.
pub fn cmd_bench(
    items: &[usize],
    hyper: &HyperParams,
    users: usize,
    reps: usize,
) -> Result<Vec<(usize, f64)>> {
    items
        .iter()
        .map(|&n| Ok((n, evaluation::latency_profile(n, hyper, users, 10, reps)?)))
        .collect()
}

pub fn cmd_gen_synth(spec: &SynthSpec, output: &Path) -> Result<usize> {
    let corpus = synth::generate(spec);
    let mut w = create(output)?;
    synth::write_log(&corpus.records, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(output, e))?;
    Ok(corpus.records.len())
}

/// Loads the config file (or defaults) and applies global flag overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.setting {
        cfg.setting = s;
    }
    if let Some(seed) = cli.seed {
        cfg.hyper.seed = seed;
    }
    cfg.exclude_seen |= cli.exclude_seen;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli)?;
    let verbose = !cli.quiet;
    match cli.command {
        Command::Preprocess { input, output } => {
            if let Some(p) = input {
                cfg.paths.raw_log = Some(p);
            }
            if let Some(p) = output {
                cfg.paths.dataset = p;
            }
            let summary = cmd_preprocess(&cfg)?;
            println!("{summary}");
        }
        Command::Split { dataset, output } => {
            if let Some(p) = dataset {
                cfg.paths.dataset = p;
            }
            if let Some(p) = output {
                cfg.paths.split = p;
            }
            let plan = cmd_split(&cfg)?;
            println!(
                "wrote {} user splits ({}) to {}",
                plan.bounds.len(),
                cfg.setting,
                cfg.paths.split.display()
            );
        }
        Command::Train {
            dataset,
            checkpoint,
            report,
            epochs,
        } => {
            if let Some(p) = dataset {
                cfg.paths.dataset = p;
            }
            if let Some(p) = checkpoint {
                cfg.paths.checkpoint = p;
            }
            if let Some(p) = report {
                cfg.paths.report = p;
            }
            if let Some(e) = epochs {
                cfg.hyper.max_epochs = e;
            }
            let outcome = cmd_train(&cfg, verbose)?;
            let best = outcome.best_row();
            println!("{}", hyper_line(&best.hyper));
            match best.report.best() {
                Some(b) => println!(
                    "best epoch {}: validation recall@10 {:.4} ndcg@10 {:.4}",
                    b.epoch, b.recall_at_10, b.ndcg_at_10
                ),
                None => println!("no validation checkpoints"),
            }
        }
        Command::Evaluate {
            dataset,
            checkpoint,
            output,
            retrain,
            ks,
        } => {
            if let Some(p) = dataset {
                cfg.paths.dataset = p;
            }
            if let Some(p) = checkpoint {
                cfg.paths.checkpoint = p;
            }
            if let Some(p) = output {
                cfg.paths.metrics = p;
            }
            if let Some(ks) = ks {
                cfg.ks = ks;
            }
            cfg.check()?;
            let result = cmd_evaluate(&cfg, retrain, cli.bench, verbose)?;
            print!("{}", result.table());
        }
        Command::Bench {
            items,
            dim,
            users,
            reps,
        } => {
            let hyper = HyperParams {
                d: dim,
                ..cfg.hyper.clone()
            };
            hyper.validate()?;
            println!("items,latency_s,latency_per_item_s");
            for (n, secs) in cmd_bench(&items, &hyper, users, reps)? {
                println!(
                    "{n},{},{}",
                    evaluation::format_latency(secs),
                    evaluation::format_latency(secs / n as f64)
                );
            }
        }
        Command::GenSynth {
            kind,
            users,
            items,
            length,
            noise,
            preferred,
            output,
        } => {
            let spec = SynthSpec {
                kind,
                users,
                items,
                length,
                noise,
                preferred,
                seed: cli.seed.unwrap_or(SynthSpec::default().seed),
            };
            let n = cmd_gen_synth(&spec, &output)?;
            println!("wrote {n} interactions to {}", output.display());
        }
    }
    Ok(())
}
