use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fcn_cascade::bbox::BBox;
use fcn_cascade::cascade::{load_model, load_stages, run_cascade, save_stage, CascadeModel, ModelManifest};
use fcn_cascade::eval::{adapt_box_for_ellipse_eval, evaluate, ScoredBox};
use fcn_cascade::io::config::AppConfig;
use fcn_cascade::io::pnm::encode_score_map_pgm;
use fcn_cascade::io::{curve_csv, format_detections, list_images, read_annotations, read_dataset, read_image, write_atomic, write_dataset};
use fcn_cascade::nn::NetworkSpec;
use fcn_cascade::trainer::{
    calibrate_proposals, calibrate_stage, split_validation, synth_dataset, train_stage1, train_verify_stage, Calibration,
    PriorStages,
};
use fcn_cascade::{Error, Result};
use log::info;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "fcn-cascade", version, about = "Multi-scale FCN cascade face detector")]
struct Cli {
    /// JSON configuration file; unset fields keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic annotated dataset.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one cascade stage and calibrate its threshold.
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        stage: u8,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out_model: Option<PathBuf>,
    },
    /// Run the cascade on one image or a directory of images.
    Detect {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, conflicts_with = "dir", required_unless_present = "dir")]
        image: Option<PathBuf>,
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Detections file, one `image x y w h confidence` line per box.
        #[arg(long)]
        out: PathBuf,
        /// Directory receiving a 16-bit PGM score map per image.
        #[arg(long)]
        dump_scoremap: Option<PathBuf>,
        /// Also write the stage-1 proposals, scored by box score.
        #[arg(long)]
        proposals: Option<PathBuf>,
        /// JSON lines with the per-stage box counts of every image.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        stage2_threshold: Option<f64>,
        #[arg(long)]
        stage3_threshold: Option<f64>,
    },
    /// Score a detections file against annotations.
    Eval {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        ann: PathBuf,
        /// Adjust detections for ellipse-annotated ground truth.
        #[arg(long)]
        fddb_adapt: bool,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// Writes `<prefix>_pr.csv`, `<prefix>_roc.csv` and `<prefix>_summary.json`.
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Recalibrate all thresholds of a trained model on validation data.
    Calibrate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        target_recall: Option<f64>,
        /// Write the configuration with the calibrated thresholds here.
        #[arg(long)]
        write_config: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ChannelMismatch { .. }
        | Error::InputTooSmall { .. }
        | Error::InvalidLayer { .. }
        | Error::InvalidNetwork(_)
        | Error::ShapeMismatch(_)
        | Error::EmptyPyramid
        | Error::Divergence { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = AppConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth { seed, count, out } => synth(&cfg, seed, count, &out.unwrap_or_else(|| cfg.paths.data.clone())),
        Command::Train { stage, data, out_model } => train(
            &cfg,
            stage as usize,
            &data.unwrap_or_else(|| cfg.paths.data.clone()),
            &out_model.unwrap_or_else(|| cfg.paths.model.clone()),
        ),
        Command::Detect {
            model,
            image,
            dir,
            out,
            dump_scoremap,
            proposals,
            stats,
            stage2_threshold,
            stage3_threshold,
        } => {
            let mut m = load_model(&model.unwrap_or_else(|| cfg.paths.model.clone()))?;
            if let Some(t) = stage2_threshold {
                m.thresholds.stage2 = t;
            }
            if let Some(t) = stage3_threshold {
                m.thresholds.stage3 = t;
            }
            m.validate()?;
            let inputs = match (image, dir) {
                (Some(p), _) => vec![(stem(&p), p)],
                (None, Some(d)) => list_images(&d)?,
                (None, None) => unreachable!("clap requires one input"),
            };
            let outputs = DetectOutputs {
                detections: &out,
                scoremaps: dump_scoremap.as_deref(),
                proposals: proposals.as_deref(),
                stats: stats.as_deref(),
            };
            detect(&m, &inputs, &outputs)
        }
        Command::Eval {
            dets,
            ann,
            fddb_adapt,
            iou,
            out_prefix,
        } => eval(&dets, &ann, fddb_adapt, iou, &out_prefix),
        Command::Calibrate {
            model,
            data,
            target_recall,
            write_config,
        } => calibrate(
            &cfg,
            &model.unwrap_or_else(|| cfg.paths.model.clone()),
            &data.unwrap_or_else(|| cfg.paths.data.clone()),
            target_recall.unwrap_or(cfg.train.target_recall),
            write_config.as_deref(),
        ),
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn synth(cfg: &AppConfig, seed: u64, count: usize, out: &Path) -> Result<()> {
    let (annotated, backgrounds) = synth_dataset(seed, count, &cfg.synth);
    write_dataset(out, &annotated, &backgrounds)?;
    info!("wrote {} images and {} backgrounds to {}", annotated.len(), backgrounds.len(), out.display());
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn train(cfg: &AppConfig, stage: usize, data: &Path, model_dir: &Path) -> Result<()> {
    let (annotated, backgrounds) = read_dataset(data)?;
    let (train_set, val_set) = split_validation(&annotated, cfg.train.validation_fraction);
    info!("stage{stage}: {} training images, {} validation images", train_set.len(), val_set.len());
    let target = cfg.train.target_recall;

    let (net, log, calibration) = if stage == 1 {
        let outcome = train_stage1(train_set, &backgrounds, &cfg.train.stage1)?;
        let cal = calibrate_proposals(&outcome.net, val_set, &cfg.pyramid, &cfg.proposal, target)?;
        save_stage(model_dir, 1, &outcome.net, |m| {
            m.pyramid = cfg.pyramid.clone();
            m.proposal = cfg.proposal.clone();
            m.proposal.threshold = cal.capped(cfg.proposal.threshold);
            m.verify = cfg.verify.clone();
            m.thresholds = cfg.thresholds;
        })?;
        (outcome.net, outcome.log, cal)
    } else {
        let (manifest, nets) = load_stages(model_dir)?;
        let stage1 = nets.get(&1).ok_or_else(|| Error::MissingStage("stage1".into()))?;
        let stage2 = if stage == 3 {
            let net = nets.get(&2).ok_or_else(|| Error::MissingStage("stage2".into()))?;
            Some((net, manifest.thresholds.stage2))
        } else {
            None
        };
        let prior = PriorStages {
            stage1,
            stage2,
            pyramid: &manifest.pyramid,
            proposal: &manifest.proposal,
            verify: &manifest.verify,
        };
        let outcome = train_verify_stage(stage, &prior, train_set, &backgrounds, &cfg.train)?;
        let cal = calibrate_stage(&outcome.net, &prior, val_set, target)?;
        save_stage(model_dir, stage, &outcome.net, |m| {
            if stage == 2 {
                m.thresholds.stage2 = cal.capped(cfg.thresholds.stage2);
            } else {
                m.thresholds.stage3 = cal.capped(cfg.thresholds.stage3);
            }
        })?;
        (outcome.net, outcome.log, cal)
    };
    info!(
        "stage{stage}: calibrated threshold {:.6}, validation recall {:.4} (reachable {:.4})",
        calibration.threshold, calibration.recall, calibration.reachable
    );
    // mining rounds restart the epoch counter, so rows are numbered in run order
    let mut csv = String::from("epoch,loss,train_acc\n");
    for (i, e) in log.iter().enumerate() {
        csv.push_str(&format!("{i},{},{}\n", e.loss, e.train_acc));
    }
    write_atomic(&model_dir.join(format!("stage{stage}_log.csv")), csv.as_bytes())?;
    write_json(
        &model_dir.join(format!("stage{stage}_log.json")),
        &json!({ "network": net.name, "epochs": log, "calibration": calibration }),
    )
}

struct DetectOutputs<'a> {
    detections: &'a Path,
    scoremaps: Option<&'a Path>,
    proposals: Option<&'a Path>,
    stats: Option<&'a Path>,
}

fn detect(model: &CascadeModel, inputs: &[(String, PathBuf)], out: &DetectOutputs<'_>) -> Result<()> {
    if let Some(dir) = out.scoremaps {
        std::fs::create_dir_all(dir).map_err(|e| Error::Path {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    let (mut dets_text, mut props_text, mut stats_text) = (String::new(), String::new(), String::new());
    for (id, path) in inputs {
        let image = read_image(path)?;
        let run = run_cascade(&image, model)?;
        let dets: Vec<ScoredBox> = run
            .output
            .detections
            .iter()
            .map(|d| ScoredBox {
                bbox: d.bbox,
                confidence: d.confidence,
            })
            .collect();
        dets_text.push_str(&format_detections(id, &dets));
        let props: Vec<ScoredBox> = run
            .proposals
            .iter()
            .map(|p| ScoredBox {
                bbox: p.bbox,
                confidence: p.omega,
            })
            .collect();
        props_text.push_str(&format_detections(id, &props));
        stats_text.push_str(&json!({ "image": id, "stage_counts": run.output.stage_counts }).to_string());
        stats_text.push('\n');
        if let Some(dir) = out.scoremaps {
            write_atomic(&dir.join(format!("{id}.pgm")), &encode_score_map_pgm(&run.score_map))?;
        }
        info!("{id}: stage counts {:?}", run.output.stage_counts);
    }
    write_atomic(out.detections, dets_text.as_bytes())?;
    if let Some(p) = out.proposals {
        write_atomic(p, props_text.as_bytes())?;
    }
    if let Some(p) = out.stats {
        write_atomic(p, stats_text.as_bytes())?;
    }
    Ok(())
}

fn eval(dets_path: &Path, ann: &Path, fddb_adapt: bool, iou: f64, prefix: &Path) -> Result<()> {
    if !(iou > 0.0 && iou <= 1.0) {
        return Err(Error::Config(format!("IoU threshold {iou} must be in (0, 1]")));
    }
    let text = std::fs::read_to_string(dets_path).map_err(|e| Error::Path {
        path: dets_path.to_path_buf(),
        source: e,
    })?;
    let mut dets = fcn_cascade::io::parse_detections(&text)?;
    if fddb_adapt {
        for d in dets.values_mut().flatten() {
            d.bbox = adapt_box_for_ellipse_eval(&d.bbox, None, false);
        }
    }
    let gts: BTreeMap<String, Vec<BBox>> = read_annotations(ann)?.into_iter().map(|r| (r.image.clone(), r.bboxes())).collect();
    let (pr, roc, summary) = evaluate(&dets, &gts, iou);
    let with_suffix = |suffix: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    write_atomic(&with_suffix("_pr.csv"), curve_csv(&pr).as_bytes())?;
    write_atomic(&with_suffix("_roc.csv"), curve_csv(&roc).as_bytes())?;
    let value = serde_json::to_value(&summary)?;
    write_json(&with_suffix("_summary.json"), &value)?;
    println!("{}", serde_json::to_string(&value)?);
    Ok(())
}

fn calibrate(cfg: &AppConfig, model_dir: &Path, data: &Path, target: f64, write_config: Option<&Path>) -> Result<()> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Config(format!("target recall {target} must be in (0, 1]")));
    }
    let model = load_model(model_dir)?;
    let (annotated, _) = read_dataset(data)?;
    let (_, val_set) = split_validation(&annotated, cfg.train.validation_fraction);
    let omega = calibrate_proposals(&model.stage1, val_set, &model.pyramid, &model.proposal, target)?;
    let mut proposal = model.proposal.clone();
    proposal.threshold = omega.capped(cfg.proposal.threshold);
    let verify_cal = |net: &NetworkSpec, stage2: Option<(&NetworkSpec, f64)>| -> Result<Calibration> {
        let prior = PriorStages {
            stage1: &model.stage1,
            stage2,
            pyramid: &model.pyramid,
            proposal: &proposal,
            verify: &model.verify,
        };
        calibrate_stage(net, &prior, val_set, target)
    };
    let s2 = verify_cal(&model.stage2, None)?;
    let stage2_threshold = s2.capped(cfg.thresholds.stage2);
    let s3 = verify_cal(&model.stage3, Some((&model.stage2, stage2_threshold)))?;

    let mut manifest = ModelManifest::read(model_dir)?;
    manifest.proposal = proposal.clone();
    manifest.thresholds.stage2 = stage2_threshold;
    manifest.thresholds.stage3 = s3.capped(cfg.thresholds.stage3);
    manifest.write(model_dir)?;
    if let Some(path) = write_config {
        let mut out = cfg.clone();
        out.proposal = proposal;
        out.thresholds = manifest.thresholds;
        write_json(path, &serde_json::to_value(&out)?)?;
    }
    println!(
        "{}",
        json!({ "proposal": omega, "stage2": s2, "stage3": s3 })
    );
    Ok(())
}
