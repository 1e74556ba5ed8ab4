use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use crate::data::{
    generate_synthetic_dataset, generate_videos, save_dataset, save_videos, Dataset, Split, UntrimmedVideo,
};
use crate::detect::{classify_proposals, generate_proposals, nms, write_detections, Detection};
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_eval_csv, EvalResult, EvalTable};
use crate::losses::{PairLoss, DEFAULT_CONTRASTIVE_MARGIN};
use crate::net::{save_checkpoint, SiameseModel};
use crate::train::{held_out_metrics, train_with, HeldOutMetrics, LogRow, TrainConfig, TrainingOutcome};

pub const FAILED_MARKER: &str = "FAILED";
pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "training_log.csv";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const EVAL_FILE: &str = "eval.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const LAMBDA_SWEEP_FILE: &str = "lambda_sweep.csv";
pub const LOSS_COMPARISON_FILE: &str = "loss_comparison.csv";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Train once per entry of `lambda_sweep` instead of a single run.
    pub sweep_lambda: bool,
    /// Train once with the verification loss and once with the contrastive loss.
    pub compare_losses: bool,
}

/// Outcome of one train -> detect -> eval pass.
#[derive(Debug, Clone)]
pub struct VariantResult {
    pub label: String,
    pub dir: PathBuf,
    pub train: TrainConfig,
    pub held_out: HeldOutMetrics,
    pub eval: EvalResult,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub variants: Vec<VariantResult>,
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_config(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(cfg).expect("config serializes") + "\n"))
}

/// Generates the clip set and untrimmed videos and writes them to
/// `dir/dataset` and `dir/videos`.
pub fn stage_gen_data(cfg: &ExperimentConfig, dir: &Path) -> Result<(Dataset, Vec<UntrimmedVideo>)> {
    let dataset = generate_synthetic_dataset(&cfg.dataset)?;
    let videos = generate_videos(&cfg.dataset, &cfg.videos)?;
    save_dataset(&dir.join("dataset"), &dataset)?;
    save_videos(&dir.join("videos"), &cfg.videos, &videos)?;
    Ok((dataset, videos))
}

/// Trains a freshly built model and writes `dir/checkpoint` and the log.
pub fn stage_train<F: FnMut(&LogRow)>(
    cfg: &ExperimentConfig,
    train_cfg: &TrainConfig,
    dataset: &Dataset,
    dir: &Path,
    observe: F,
) -> Result<TrainingOutcome> {
    create_dir(dir)?;
    let data = if cfg.shuffle_train_labels {
        dataset.with_shuffled_train_labels(cfg.seed)
    } else {
        dataset.clone()
    };
    let model = SiameseModel::build(cfg.network())?;
    let outcome = train_with(model, &data, train_cfg, observe)?;
    save_checkpoint(&dir.join("checkpoint"), &outcome.model)?;
    outcome.log.write_csv(&dir.join(LOG_FILE))?;
    Ok(outcome)
}

/// Sliding-window proposals, classification and NMS over every video.
pub fn detect_videos(cfg: &ExperimentConfig, model: &SiameseModel, videos: &[UntrimmedVideo]) -> Result<Vec<Detection>> {
    let mut all = Vec::new();
    for v in videos {
        let proposals = generate_proposals(v.total_length(), &cfg.proposals.windows, cfg.proposals.stride_fraction)?;
        all.extend(classify_proposals(model, v, &proposals)?);
    }
    nms(&all, cfg.nms_threshold)
}

pub fn stage_detect(
    cfg: &ExperimentConfig,
    model: &SiameseModel,
    videos: &[UntrimmedVideo],
    dir: &Path,
) -> Result<Vec<Detection>> {
    let dets = detect_videos(cfg, model, videos)?;
    write_detections(&dir.join(DETECTIONS_FILE), &dets)?;
    Ok(dets)
}

pub fn stage_eval(
    cfg: &ExperimentConfig,
    detections: &[Detection],
    videos: &[UntrimmedVideo],
    dir: &Path,
) -> Result<EvalResult> {
    let gt: Vec<_> = videos.iter().flat_map(|v| v.ground_truth.iter().cloned()).collect();
    let result = evaluate(detections, &gt, &cfg.eval_thresholds)?;
    write_eval_csv(&dir.join(EVAL_FILE), &result)?;
    Ok(result)
}

fn threshold_header(thresholds: &[f64]) -> String {
    thresholds.iter().map(|t| format!(",{t}")).collect()
}

fn map_columns(eval: &EvalResult) -> (Vec<f64>, Vec<f64>) {
    let table = EvalTable::from_result(eval);
    let maps = table.map_row().expect("tables always end with mAP").to_vec();
    (table.thresholds, maps)
}

fn loss_name(loss: PairLoss) -> &'static str {
    match loss {
        PairLoss::Verification => "verification",
        PairLoss::Contrastive { .. } => "contrastive",
    }
}

/// `run,pair_loss,lambda,identification_accuracy,pair_accuracy` followed by
/// one mAP column per threshold.
pub fn summary_csv(variants: &[VariantResult]) -> String {
    let mut out = String::from("run,pair_loss,lambda,identification_accuracy,pair_accuracy");
    if let Some(first) = variants.first() {
        out.push_str(&threshold_header(&map_columns(&first.eval).0));
    }
    out.push('\n');
    for v in variants {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6}",
            v.label,
            loss_name(v.train.pair_loss),
            v.train.lambda,
            v.held_out.identification_accuracy,
            v.held_out.pair_accuracy
        ));
        for m in map_columns(&v.eval).1 {
            out.push_str(&format!(",{m:.6}"));
        }
        out.push('\n');
    }
    out
}

/// A `key,threshold...` table with one mAP row per variant.
pub fn comparison_csv(key: &str, variants: &[VariantResult], row_key: impl Fn(&VariantResult) -> String) -> String {
    let mut out = String::from(key);
    if let Some(first) = variants.first() {
        out.push_str(&threshold_header(&map_columns(&first.eval).0));
    }
    out.push('\n');
    for v in variants {
        out.push_str(&row_key(v));
        for m in map_columns(&v.eval).1 {
            out.push_str(&format!(",{m:.6}"));
        }
        out.push('\n');
    }
    out
}

fn run_variant(
    cfg: &ExperimentConfig,
    label: String,
    train_cfg: TrainConfig,
    dataset: &Dataset,
    videos: &[UntrimmedVideo],
    dir: &Path,
) -> Result<VariantResult> {
    let outcome = stage_train(cfg, &train_cfg, dataset, dir, |_| {}).map_err(|e| e.in_stage("train"))?;
    let test = dataset.split(Split::Test);
    let held_out = held_out_metrics(&outcome.model, &test, train_cfg.pair_loss).map_err(|e| e.in_stage("train"))?;
    let dets = stage_detect(cfg, &outcome.model, videos, dir).map_err(|e| e.in_stage("detect"))?;
    let eval = stage_eval(cfg, &dets, videos, dir).map_err(|e| e.in_stage("eval"))?;
    let result = VariantResult {
        label,
        dir: dir.to_path_buf(),
        train: train_cfg,
        held_out,
        eval,
    };
    write_text(&dir.join(SUMMARY_FILE), &summary_csv(std::slice::from_ref(&result))).map_err(|e| e.in_stage("eval"))?;
    Ok(result)
}

fn lambda_label(lambda: f64) -> String {
    format!("lambda_{lambda}")
}

fn run_all(cfg: &ExperimentConfig, options: RunOptions, out: &Path) -> Result<Vec<VariantResult>> {
    let (dataset, videos) = stage_gen_data(cfg, out).map_err(|e| e.in_stage("gen-data"))?;
    let mut variants = Vec::new();
    if !options.sweep_lambda && !options.compare_losses {
        variants.push(run_variant(cfg, "main".into(), cfg.train.clone(), &dataset, &videos, out)?);
        return Ok(variants);
    }
    if options.sweep_lambda {
        let mut sweep = Vec::new();
        for &lambda in &cfg.lambda_sweep {
            let label = lambda_label(lambda);
            let t = TrainConfig {
                lambda,
                ..cfg.train.clone()
            };
            let dir = out.join("runs").join(&label);
            sweep.push(run_variant(cfg, label, t, &dataset, &videos, &dir)?);
        }
        write_text(
            &out.join(LAMBDA_SWEEP_FILE),
            &comparison_csv("lambda", &sweep, |v| v.train.lambda.to_string()),
        )
        .map_err(|e| e.in_stage("report"))?;
        variants.extend(sweep);
    }
    if options.compare_losses {
        let margin = match cfg.train.pair_loss {
            PairLoss::Contrastive { margin } => margin,
            PairLoss::Verification => DEFAULT_CONTRASTIVE_MARGIN,
        };
        let mut cmp = Vec::new();
        for loss in [PairLoss::Verification, PairLoss::Contrastive { margin }] {
            let label = loss_name(loss).to_string();
            let t = TrainConfig {
                pair_loss: loss,
                ..cfg.train.clone()
            };
            let dir = out.join("runs").join(&label);
            cmp.push(run_variant(cfg, label, t, &dataset, &videos, &dir)?);
        }
        write_text(
            &out.join(LOSS_COMPARISON_FILE),
            &comparison_csv("loss", &cmp, |v| v.label.clone()),
        )
        .map_err(|e| e.in_stage("report"))?;
        variants.extend(cmp);
    }
    Ok(variants)
}

/// Runs the full protocol under `cfg.output_dir`.
///
/// Writes `config.json` (resolved), the dataset and videos, then per variant
/// a checkpoint, training log, detections, `eval.csv` and `summary.csv`.
/// On failure a `FAILED` file names the stage and error and the partial
/// artifacts are left in place.
pub fn cmd_run(cfg: &ExperimentConfig, options: RunOptions) -> Result<RunReport> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    create_dir(&out)?;
    let marker = out.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    write_config(&out.join(CONFIG_FILE), &cfg)?;
    match run_all(&cfg, options, &out) {
        Ok(variants) => {
            write_text(&out.join(SUMMARY_FILE), &summary_csv(&variants))?;
            Ok(RunReport { out_dir: out, variants })
        }
        Err(e) => {
            let _ = write_text(&marker, &format!("{e}\n"));
            Err(e)
        }
    }
}
