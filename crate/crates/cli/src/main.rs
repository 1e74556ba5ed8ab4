use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ivsnet_core::data::{load_dataset, load_videos, Split};
use ivsnet_core::detect::{read_detections, read_ground_truth, write_detections};
use ivsnet_core::eval::{evaluate, write_eval_csv, EvalTable};
use ivsnet_core::experiment::{
    cmd_report, cmd_run, detect_videos, gradcheck_suite, stage_gen_data, stage_train, write_config,
    ExperimentConfig, RunOptions, CONFIG_FILE, DETECTIONS_FILE, EVAL_FILE,
};
use ivsnet_core::losses::{PairLoss, DEFAULT_CONTRASTIVE_MARGIN};
use ivsnet_core::net::{load_checkpoint, Preset};
use ivsnet_core::tensor::tape::Fault;
use ivsnet_core::train::held_out_metrics;
use ivsnet_core::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "ivsnet", version, about = "Siamese 3D ConvNet temporal action detection on synthetic video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the labelled clip set and the untrimmed evaluation videos.
    GenData(Common),
    /// Train a model on a generated clip set.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory [default: <out>/dataset].
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run proposals, classification and NMS over generated videos.
    Detect {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory [default: <out>/checkpoint].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Video directory [default: <out>/videos].
        #[arg(long)]
        videos: Option<PathBuf>,
    },
    /// Score detections against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        /// [default: <out>/detections.jsonl]
        #[arg(long)]
        detections: Option<PathBuf>,
        /// [default: <out>/videos/ground_truth.jsonl]
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Check every backward rule against central finite differences.
    Gradcheck {
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// gen-data, train, detect and eval in one go.
    Run {
        #[command(flatten)]
        common: Common,
        /// Train once per lambda in the sweep and write lambda_sweep.csv.
        #[arg(long)]
        sweep_lambda: bool,
        /// Train with the verification and the contrastive loss and write
        /// loss_comparison.csv.
        #[arg(long)]
        compare_losses: bool,
    },
    /// Merge the eval.csv of several runs and plot them.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    /// Margin of the contrastive loss.
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Tiny,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Verification,
    Contrastive,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    ConvBackward,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(p) = self.preset {
            cfg.preset = match p {
                PresetArg::Tiny => Preset::Tiny,
                PresetArg::Full => Preset::Full,
            };
        }
        if let Some(l) = self.lambda {
            cfg.train.lambda = l;
        }
        if let Some(n) = self.iterations {
            cfg.train.iterations = n;
        }
        let margin = match (self.margin, cfg.train.pair_loss) {
            (Some(m), _) => m,
            (None, PairLoss::Contrastive { margin }) => margin,
            (None, PairLoss::Verification) => DEFAULT_CONTRASTIVE_MARGIN,
        };
        match self.loss {
            Some(LossArg::Verification) => cfg.train.pair_loss = PairLoss::Verification,
            Some(LossArg::Contrastive) => cfg.train.pair_loss = PairLoss::Contrastive { margin },
            None => {
                if let PairLoss::Contrastive { .. } = cfg.train.pair_loss {
                    cfg.train.pair_loss = PairLoss::Contrastive { margin };
                }
            }
        }
        let cfg = cfg.resolved();
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create_out(cfg: &ExperimentConfig) -> Result<&Path> {
    let out = cfg.output_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    Ok(out)
}

fn print_table(table: &EvalTable) {
    print!("{}", table.to_csv());
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::GenData(common) => {
            let cfg = common.config()?;
            let out = create_out(&cfg)?;
            write_config(&out.join(CONFIG_FILE), &cfg)?;
            let (dataset, videos) = stage_gen_data(&cfg, out)?;
            println!(
                "wrote {} clips to {} and {} videos to {}",
                dataset.clips.len(),
                out.join("dataset").display(),
                videos.len(),
                out.join("videos").display()
            );
        }
        Command::Train { common, data } => {
            let cfg = common.config()?;
            let out = create_out(&cfg)?;
            let data_dir = data.unwrap_or_else(|| out.join("dataset"));
            let dataset = load_dataset(&data_dir)?;
            let every = (cfg.train.iterations / 10).max(1);
            let outcome = stage_train(&cfg, &cfg.train, &dataset, out, |r| {
                if r.iteration % every == 0 || r.iteration + 1 == cfg.train.iterations {
                    println!(
                        "iter {:>5}  L_I1 {:.4}  L_I2 {:.4}  L_V {:.4}  L {:.4}  pair_acc {:.3}",
                        r.iteration, r.ident_1, r.ident_2, r.pair, r.total, r.pair_accuracy
                    );
                }
            })?;
            let m = held_out_metrics(&outcome.model, &dataset.split(Split::Test), cfg.train.pair_loss)?;
            println!(
                "held-out identification accuracy {:.4}, pair accuracy {:.4}",
                m.identification_accuracy, m.pair_accuracy
            );
        }
        Command::Detect {
            common,
            checkpoint,
            videos,
        } => {
            let cfg = common.config()?;
            let out = create_out(&cfg)?;
            let model = load_checkpoint(&checkpoint.unwrap_or_else(|| out.join("checkpoint")))?;
            let videos = load_videos(&videos.unwrap_or_else(|| out.join("videos")))?;
            let dets = detect_videos(&cfg, &model, &videos)?;
            let path = out.join(DETECTIONS_FILE);
            write_detections(&path, &dets)?;
            println!("wrote {} detections to {}", dets.len(), path.display());
        }
        Command::Eval {
            common,
            detections,
            ground_truth,
        } => {
            let cfg = common.config()?;
            let out = create_out(&cfg)?;
            let dets = read_detections(&detections.unwrap_or_else(|| out.join(DETECTIONS_FILE)))?;
            let gt = read_ground_truth(&ground_truth.unwrap_or_else(|| out.join("videos/ground_truth.jsonl")))?;
            let result = evaluate(&dets, &gt, &cfg.eval_thresholds)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            write_eval_csv(&out.join(EVAL_FILE), &result)?;
            print_table(&EvalTable::from_result(&result));
        }
        Command::Gradcheck { inject_fault } => {
            let fault = inject_fault.map(|FaultArg::ConvBackward| Fault::ConvBackward);
            let items = gradcheck_suite(fault)?;
            for item in &items {
                println!("{}", item.line());
            }
            if items.iter().any(|i| !i.passed()) {
                eprintln!("gradient check failed");
                return Ok(exit_code(ErrorKind::Numerical));
            }
        }
        Command::Run {
            common,
            sweep_lambda,
            compare_losses,
        } => {
            let cfg = common.config()?;
            let report = cmd_run(
                &cfg,
                RunOptions {
                    sweep_lambda,
                    compare_losses,
                },
            )?;
            for v in &report.variants {
                println!(
                    "{:<14} identification {:.4}  pair {:.4}  mAP@{:?}",
                    v.label,
                    v.held_out.identification_accuracy,
                    v.held_out.pair_accuracy,
                    v.eval.per_threshold.iter().map(|t| (t.threshold, (t.map * 1e4).round() / 1e4)).collect::<Vec<_>>()
                );
            }
            println!("artifacts in {}", report.out_dir.display());
        }
        Command::Report { runs, out } => {
            let report = cmd_report(&runs, &out)?;
            print!("{}", report.table);
            for f in &report.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(kind: ErrorKind) -> ExitCode {
    ExitCode::from(match kind {
        ErrorKind::Config => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 4,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.kind())
        }
    }
}
