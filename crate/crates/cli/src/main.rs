//! `gazeattn` command-line interface: synthetic data generation, training
//! and evaluation. Progress goes to stderr, results to files.

mod font;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};
use gazeattn::backbone::{clip_input, Mode};
use gazeattn::checkpoint::Checkpoint;
use gazeattn::config::{RunConfig, KEYS};
use gazeattn::dataset::{louo_folds, synth_generate, window_indices, Clip, ClipWindow, Dataset, Trial};
use gazeattn::evaluation::{evaluate_fold, format_timeline_csv, FoldResult, Results, TrialResult};
use gazeattn::gaze_supervision::{heatmap_volume, temporal_gaze_indices};
use gazeattn::training::{train, TrainSink, CHECKPOINT_FILE};
use gazeattn::Error;

/// Resolved configuration written next to every run's outputs.
const CONFIG_FILE: &str = "config.txt";
const RESULTS_FILE: &str = "results.json";

const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

/// Invocation errors that clap cannot detect on its own.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn config_args() -> Vec<Arg> {
    let mut args = vec![Arg::new("config")
        .long("config")
        .value_name("FILE")
        .help("key = value configuration file; flags override it")];
    for key in KEYS {
        args.push(
            Arg::new(*key)
                .long(key.replace('_', "-"))
                .value_name("VALUE")
                .help(format!("Override config key {key}")),
        );
    }
    args
}

fn cli() -> Command {
    Command::new("gazeattn")
        .about("Gaze-guided attention for video gesture recognition")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("synth")
                .about("Generate the synthetic surrogate dataset")
                .args(config_args()),
        )
        .subcommand(
            Command::new("train")
                .about("Train one leave-one-user-out fold, or every fold with --fold all")
                .args(config_args())
                .arg(
                    Arg::new("no-attention")
                        .long("no-attention")
                        .action(ArgAction::SetTrue)
                        .help("Disable gaze supervision (lambda_attn = 0)"),
                ),
        )
        .subcommand(
            Command::new("eval")
                .about("Evaluate trained folds and write results, timelines and plots")
                .args(config_args())
                .arg(
                    Arg::new("run")
                        .long("run")
                        .value_name("DIR")
                        .help("Output directory of a train run; results go to --out, default <DIR>/eval"),
                )
                .arg(
                    Arg::new("trials")
                        .long("trials")
                        .value_name("IDS")
                        .help("Comma-separated trial ids to evaluate instead of the held-out user's"),
                )
                .arg(
                    Arg::new("plot-timeline")
                        .long("plot-timeline")
                        .action(ArgAction::SetTrue)
                        .help("Render a ground truth / prediction ribbon per trial"),
                )
                .arg(
                    Arg::new("plot-attn")
                        .long("plot-attn")
                        .action(ArgAction::SetTrue)
                        .help("Render gaze and attention overlays per trial"),
                ),
        )
}

/// Defaults, then the config file, then flags.
fn resolve_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {p}"))?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, cfg.to_text()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| usage(format!("--{flag} is required")))
}

fn cmd_synth(m: &ArgMatches) -> Result<()> {
    let cfg = resolve_config(m)?;
    let out = required(&cfg.out, "out")?;
    let summary = synth_generate(&cfg.synth, out)?;
    write_config(out, &cfg)?;
    println!("trials {}", summary.trials);
    println!("frames {}", summary.frames);
    for (label, n) in &summary.class_frames {
        println!("{label} {n}");
    }
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let data = required(&cfg.data, "data")?;
    let ds = Dataset::load(data).with_context(|| format!("loading dataset {}", data.display()))?;
    Ok(ds.subsample(cfg.eval_fps)?)
}

fn fold_dir(out: &Path, user: &str) -> PathBuf {
    out.join(format!("fold_{user}"))
}

fn cmd_train(m: &ArgMatches) -> Result<()> {
    let mut cfg = resolve_config(m)?;
    if m.get_flag("no-attention") {
        cfg.train.lambda_attn = 0.0;
    }
    let out = required(&cfg.out, "out")?.to_path_buf();
    let ds = load_dataset(&cfg)?;
    let users: Vec<&str> = ds.trials.iter().map(|t| t.user_id.as_str()).collect();
    let folds = louo_folds(&users, None, cfg.strict_louo)?;
    let selected: Vec<_> = folds
        .iter()
        .filter(|f| cfg.fold == "all" || f.test_user == cfg.fold)
        .collect();
    if selected.is_empty() {
        return Err(Error::Validation(format!("no fold for user {:?}", cfg.fold)).into());
    }
    write_config(&out, &cfg)?;
    for fold in selected {
        let dir = fold_dir(&out, &fold.test_user);
        let mut fold_cfg = cfg.clone();
        fold_cfg.fold = fold.test_user.clone();
        write_config(&dir, &fold_cfg)?;
        let trials: Vec<&Trial> = fold.train.iter().map(|&i| &ds.trials[i]).collect();
        eprintln!(
            "fold {}: {} training trials, {} iterations",
            fold.test_user,
            trials.len(),
            fold_cfg.train.total_iters
        );
        let sink = TrainSink {
            dir: dir.clone(),
            progress_every: 50,
        };
        let outcome =
            train(&trials, &fold_cfg, Some(&sink)).with_context(|| format!("training fold {}", fold.test_user))?;
        if let Some(last) = outcome.log.last() {
            eprintln!("fold {}: final loss {:.4}", fold.test_user, last.total);
        }
    }
    Ok(())
}

fn trained_folds(run: &Path, only: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(run).with_context(|| format!("reading {}", run.display()))? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(user) = name.strip_prefix("fold_") {
            let ckpt = entry.path().join(CHECKPOINT_FILE);
            if ckpt.is_file() && (only == "all" || only == user) {
                found.push((user.to_string(), ckpt));
            }
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Validation(format!("no trained fold matching {only:?} in {}", run.display())).into());
    }
    Ok(found)
}

fn cmd_eval(m: &ArgMatches) -> Result<()> {
    let cfg = resolve_config(m)?;
    let run = m
        .get_one::<String>("run")
        .map(PathBuf::from)
        .ok_or_else(|| usage("--run is required"))?;
    let out = cfg.out.clone().unwrap_or_else(|| run.join("eval"));
    let ds = load_dataset(&cfg)?;
    let override_ids: Option<Vec<String>> = m.get_one::<String>("trials").map(|s| {
        s.split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect()
    });
    write_config(&out, &cfg)?;

    let mut folds: Vec<FoldResult> = Vec::new();
    for (user, ckpt_path) in trained_folds(&run, &cfg.fold)? {
        let ckpt = Checkpoint::load(&ckpt_path)?;
        let model_cfg = ckpt.run_config()?;
        let model = ckpt.restore_model::<f32>()?;
        let tests: Vec<&Trial> = match &override_ids {
            Some(ids) => ids
                .iter()
                .map(|id| {
                    ds.trial(id)
                        .ok_or_else(|| Error::Validation(format!("unknown trial {id}")))
                })
                .collect::<Result<_, _>>()?,
            None => ds.trials.iter().filter(|t| t.user_id == user).collect(),
        };
        eprintln!("fold {user}: evaluating {} trials", tests.len());
        let result = evaluate_fold(&model, &user, &tests, &model_cfg.heatmap)?;
        let fold_out = out.join("timelines").join(format!("fold_{user}"));
        fs::create_dir_all(&fold_out)?;
        for tr in &result.trials {
            fs::write(
                fold_out.join(format!("{}.csv", tr.trial_id)),
                format_timeline_csv(&tr.gt, &tr.pred)?,
            )?;
        }
        let plot_dir = out.join("plots").join(format!("fold_{user}"));
        if m.get_flag("plot-timeline") || m.get_flag("plot-attn") {
            fs::create_dir_all(&plot_dir)?;
        }
        for (tr, trial) in result.trials.iter().zip(&tests) {
            if m.get_flag("plot-timeline") {
                save_png(
                    &plot::timeline_ribbon(&tr.gt, &tr.pred),
                    &plot_dir.join(format!("{}_timeline.png", tr.trial_id)),
                )?;
            }
            if m.get_flag("plot-attn") {
                let img = attention_plot(&model, &model_cfg, trial, tr)?;
                save_png(&img, &plot_dir.join(format!("{}_attention.png", tr.trial_id)))?;
            }
        }
        eprintln!(
            "fold {user}: accuracy {:.2} f1 {:.2} edit {:.2}",
            result.accuracy, result.f1, result.edit
        );
        folds.push(result);
    }
    let results = Results::new(folds);
    let path = out.join(RESULTS_FILE);
    fs::write(&path, results.to_json()?).with_context(|| format!("writing {}", path.display()))?;
    if let Some(agg) = &results.aggregate {
        for (name, ms) in [("accuracy", agg.accuracy), ("f1", agg.f1), ("edit", agg.edit)] {
            match ms.std {
                Some(sd) => println!("{name} {:.2} +- {:.2}", ms.mean, sd),
                None => println!("{name} {:.2}", ms.mean),
            }
        }
    }
    Ok(())
}

fn save_png(img: &image::RgbImage, path: &Path) -> Result<()> {
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

/// Overlays for the window ending at the middle labeled frame of a trial.
fn attention_plot(
    model: &gazeattn::backbone::I3d<f32>,
    cfg: &RunConfig,
    trial: &Trial,
    result: &TrialResult,
) -> Result<image::RgbImage> {
    let labeled: Vec<usize> = (0..result.gt.len()).filter(|&i| result.gt[i].is_labeled()).collect();
    let end = labeled[labeled.len() / 2];
    let window = ClipWindow {
        end_frame: end,
        label: result.gt[end],
        frame_indices: window_indices(end, cfg.backbone.clip_len),
    };
    let clip = Clip::extract(trial, &window);
    let out = model.forward(clip_input::<f32>(clip.frames.view()).view(), Mode::Eval)?;
    let dims = out.attention.dim();
    let (fw, fh) = (trial.frames.width(), trial.frames.height());
    let heat = heatmap_volume::<f32>(&clip.gaze, fw, fh, dims, &cfg.heatmap)?.values;
    let frames: Vec<Vec<u8>> = temporal_gaze_indices(clip.len(), dims.0)?
        .into_iter()
        .map(|k| trial.frames.frame(window.frame_indices[k]).iter().copied().collect())
        .collect();
    let gaze_maps: Vec<Vec<f32>> = heat.outer_iter().map(|m| m.iter().copied().collect()).collect();
    let attn_maps: Vec<Vec<f32>> = out
        .attention
        .outer_iter()
        .map(|m| m.iter().copied().collect())
        .collect();
    let gaze_row: Vec<plot::Overlay<'_>> = frames
        .iter()
        .zip(&gaze_maps)
        .map(|(f, m)| plot::Overlay { frame: f, map: m })
        .collect();
    let attn_row: Vec<plot::Overlay<'_>> = frames
        .iter()
        .zip(&attn_maps)
        .map(|(f, m)| plot::Overlay { frame: f, map: m })
        .collect();
    Ok(plot::attention_grid((fh, fw), (dims.1, dims.2), &gaze_row, &attn_row))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match err.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(e) if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match matches.subcommand() {
        Some(("synth", m)) => cmd_synth(m),
        Some(("train", m)) => cmd_train(m),
        Some(("eval", m)) => cmd_eval(m),
        _ => unreachable!("subcommand is required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_config_key_is_a_flag() {
        let cmd = cli();
        let train = cmd.find_subcommand("train").unwrap();
        for key in KEYS {
            assert!(train.get_arguments().any(|a| a.get_id() == *key), "{key}");
        }
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, "iters = 5\nlr = 0.05\n").unwrap();
        let m = cli()
            .try_get_matches_from(["gazeattn", "train", "--config", path.to_str().unwrap(), "--iters", "9"])
            .unwrap();
        let cfg = resolve_config(m.subcommand_matches("train").unwrap()).unwrap();
        assert_eq!(cfg.train.total_iters, 9);
        assert_eq!(cfg.train.lr0, 0.05);
    }

    #[test]
    fn exit_codes_by_class() {
        assert_eq!(exit_code(&usage("x")), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Config("x".into()).into()), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::NonFinite("x".into()).into()), EXIT_RUNTIME);
        let wrapped = anyhow::Error::from(Error::Validation("x".into())).context("outer");
        assert_eq!(exit_code(&wrapped), EXIT_VALIDATION);
    }
}
