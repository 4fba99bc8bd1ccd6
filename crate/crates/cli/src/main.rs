use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sgq::config::PipelineConfig;
use sgq::gatekeeper::{GateConfig, GatePolicy};
use sgq::pipeline::{self, labels_dir_for, EvalSplit, RunLayout, RunLock};
use sgq::{Category, Error, Result};

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "sgq", version, about = "Secure-graphic capture quality benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate graphics, prints and captures into <run>/dataset.
    Gen {
        #[arg(long)]
        config: PathBuf,
        /// Run directory; defaults to paths.run_dir from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute oracle scores and freeze tau; writes <run>/labels.
    Label {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Fit one model on the in-domain train split.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: String,
        /// Defaults to <run>/models.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a test split and write the pAUC report, curves and plots.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Model artifact JSON.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Evaluate even if the model was trained under another config.
        #[arg(long)]
        force: bool,
        /// Defaults to <run>/reports/eval.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train probes on a frozen CNN backbone and compare with full training.
    ProbeSweep {
        #[arg(long)]
        dataset: PathBuf,
        /// Dataset holding the cross-domain test split; defaults to --dataset.
        #[arg(long)]
        cross: Option<PathBuf>,
        /// CNN artifact JSON or raw checkpoint.
        #[arg(long)]
        backbone: PathBuf,
        /// Defaults to <run>/reports/probe_sweep.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay the in-domain test sessions through a scorer and a gate.
    StreamSim {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Acceptance threshold; defaults to the config value, then tau.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Window length for best-in-window.
        #[arg(long, default_value_t = 3)]
        window: usize,
        /// Defaults to <run>/reports/stream.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge every evaluation report under a directory into table1.csv.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// gen, label, train, eval, probe-sweep, stream-sim and report in one go.
    RunAll {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Test,
    Cross,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    FirstAbove,
    BestOfSession,
    BestInWindow,
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.dataset.seed = seed;
    }
    Ok(cfg)
}

fn run_dir(out: Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf> {
    out.or_else(|| cfg.paths.run_dir.clone())
        .ok_or_else(|| Error::Config("no run directory: pass --out or set paths.run_dir".into()))
}

fn run_of(dataset: &Path) -> PathBuf {
    dataset.parent().unwrap_or(Path::new(".")).to_path_buf()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let run = run_dir(out, &cfg)?;
            let _lock = RunLock::acquire(&run)?;
            let dataset = RunLayout::new(&run).dataset();
            let manifest = pipeline::gen(&cfg, &dataset)?;
            let hash = pipeline::file_sha256(&dataset.join("manifest.jsonl"))?;
            println!("{} frames in {}", manifest.entries.len(), dataset.display());
            println!("manifest sha256 {hash}");
        }
        Command::Label { dataset } => {
            let _lock = RunLock::acquire(&run_of(&dataset))?;
            let labels = pipeline::label(&dataset, &labels_dir_for(&dataset))?;
            println!("{} frames labeled, tau = {}", labels.samples.len(), labels.tau());
        }
        Command::Train { dataset, model, out } => {
            let run = run_of(&dataset);
            let _lock = RunLock::acquire(&run)?;
            let (ds, labels) = pipeline::open_labeled(&dataset, &labels_dir_for(&dataset))?;
            let dir = out.unwrap_or_else(|| RunLayout::new(&run).models());
            pipeline::train_model(&ds, &labels, &model, &dir)?;
            println!("{}", dir.join(format!("{model}.json")).display());
        }
        Command::Eval {
            dataset,
            model,
            split,
            force,
            out,
        } => {
            let run = run_of(&dataset);
            let _lock = RunLock::acquire(&run)?;
            let (ds, labels) = pipeline::open_labeled(&dataset, &labels_dir_for(&dataset))?;
            let split = match split {
                SplitArg::Test => EvalSplit::Test,
                SplitArg::Cross => EvalSplit::Cross,
            };
            let dir = out.unwrap_or_else(|| RunLayout::new(&run).eval_reports());
            let e = pipeline::eval(&ds, &labels, &model, split, &dir, force)?;
            let r = &e.report;
            println!(
                "{} {} ({}): fnmr delta {:.4}, isrr delta {:.4}",
                r.model_id, r.split, r.domain_id, r.fnmr_delta, r.isrr_delta
            );
        }
        Command::ProbeSweep {
            dataset,
            cross,
            backbone,
            out,
        } => {
            let run = run_of(&dataset);
            let _lock = RunLock::acquire(&run)?;
            let (ds, labels) = pipeline::open_labeled(&dataset, &labels_dir_for(&dataset))?;
            let cross = match cross {
                Some(c) if c != dataset => Some(pipeline::open_labeled(&c, &labels_dir_for(&c))?),
                _ => None,
            };
            let net = pipeline::load_backbone(&backbone)?;
            let dir = out.unwrap_or_else(|| RunLayout::new(&run).reports().join("probe_sweep"));
            let result = pipeline::probe_sweep_cmd(&ds, &labels, cross.as_ref().map(|(d, l)| (d, l)), &net, &dir)?;
            print!("{}", sgq::probe::sweep_csv(&result.rows));
        }
        Command::StreamSim {
            dataset,
            model,
            sigma,
            policy,
            window,
            out,
        } => {
            let run = run_of(&dataset);
            let _lock = RunLock::acquire(&run)?;
            let (ds, labels) = pipeline::open_labeled(&dataset, &labels_dir_for(&dataset))?;
            let default = pipeline::default_gate(&ds.config, &labels);
            let gate = GateConfig {
                sigma: sigma.unwrap_or(default.sigma),
                policy: match policy {
                    None => default.policy,
                    Some(PolicyArg::FirstAbove) => GatePolicy::FirstAbove,
                    Some(PolicyArg::BestOfSession) => GatePolicy::BestOfSession,
                    Some(PolicyArg::BestInWindow) => GatePolicy::BestInWindow { w: window },
                },
            };
            if !gate.sigma.is_finite() {
                return Err(Error::Config("sigma must be finite".into()));
            }
            let dir = out.unwrap_or_else(|| RunLayout::new(&run).reports().join("stream"));
            let (report, _) = pipeline::stream_sim(&ds, &labels, &model, gate, &dir)?;
            let accepted = report.sessions.iter().filter(|s| s.selected.is_some()).count();
            println!(
                "{accepted}/{} sessions accepted a frame at sigma {}",
                report.sessions.len(),
                report.sigma
            );
        }
        Command::Report { dir } => {
            print!("{}", pipeline::report(&dir)?);
        }
        Command::RunAll { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let run = run_dir(out, &cfg)?;
            pipeline::run_all(&cfg, &run, &|line| eprintln!("{line}"))?;
            print!("{}", std::fs::read_to_string(RunLayout::new(&run).reports().join("table1.csv")).unwrap_or_default());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        Category::Config => 2,
        Category::Data => 3,
        Category::Numeric => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e.category() {
                Category::Config => "config",
                Category::Data => "data",
                Category::Numeric => "numeric",
            };
            eprintln!("error ({kind}): {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
