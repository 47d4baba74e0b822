use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
synth_users = 2
synth_trials_per_user = 1
synth_width = 16
synth_height = 16
synth_segments_per_class = 1
synth_min_segment = 8
synth_max_segment = 12
clip_len = 4
width = 16
height = 16
stem_channels = 4
stem_stride = 1x2x2
stage_channels = 6,8
stage_strides = 1x1x1,2x2x2
attention_stage = 1
attention_widths = 2,3,2,2,2,3
batch_size = 4
iters = 3
lr = 0.05
strict_louo = false
";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazeattn"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("tiny.txt"), TINY).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> String {
        self.dir.path().join(rel).to_string_lossy().into_owned()
    }

    fn synth(&self) -> String {
        let data = self.path("data");
        ok(&["synth", "--config", &self.path("tiny.txt"), "--out", &data]);
        data
    }
}

fn log_rows(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn synth_is_reproducible_and_summarized() {
    let ws = Workspace::new();
    let cfg = ws.path("tiny.txt");
    let a = ok(&["synth", "--config", &cfg, "--out", &ws.path("a")]);
    let first = tree(Path::new(&ws.path("a")));
    fs::remove_dir_all(ws.path("a")).unwrap();
    ok(&["synth", "--config", &cfg, "--out", &ws.path("a")]);
    assert_eq!(first, tree(Path::new(&ws.path("a"))));

    let stdout = String::from_utf8(a.stdout).unwrap();
    let mut reported = BTreeMap::new();
    for line in stdout.lines() {
        let (k, v) = line.split_once(' ').unwrap();
        reported.insert(k.to_string(), v.parse::<usize>().unwrap());
    }
    assert_eq!(reported["trials"], 2);
    let mut recount = BTreeMap::<String, usize>::new();
    for user in ["Suturing_B001", "Suturing_C001"] {
        let text = fs::read_to_string(Path::new(&ws.path("a")).join(user).join("transcription.txt")).unwrap();
        for line in text.lines() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let n = f[1].parse::<usize>().unwrap() - f[0].parse::<usize>().unwrap() + 1;
            *recount.entry(f[2].to_string()).or_default() += n;
        }
    }
    for (label, n) in recount {
        assert_eq!(reported[&label], n, "{label}");
    }
}

#[test]
fn missing_out_is_a_usage_error() {
    let out = run(&["synth", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
    assert_eq!(run(&["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn invalid_values_are_validation_errors() {
    let ws = Workspace::new();
    let out = run(&["synth", "--out", &ws.path("d"), "--synth-classes", "0"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["synth", "--out", &ws.path("d"), "--dropout", "abc"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_writes_log_checkpoint_and_resolved_config() {
    let ws = Workspace::new();
    let data = ws.synth();
    let cfg = ws.path("tiny.txt");
    let out = ws.path("run");
    ok(&["train", "--config", &cfg, "--data", &data, "--out", &out, "--fold", "B"]);
    let fold = Path::new(&out).join("fold_B");
    assert_eq!(log_rows(&fold.join("train_log.jsonl")).len(), 3);
    assert!(fold.join("checkpoint.bin").is_file());
    assert!(Path::new(&out).join("config.txt").is_file());

    // Rerunning from the written config reproduces the checkpoint.
    let first = fs::read(fold.join("checkpoint.bin")).unwrap();
    let resolved = ws.path("resolved.txt");
    fs::copy(fold.join("config.txt"), &resolved).unwrap();
    fs::remove_dir_all(&out).unwrap();
    ok(&["train", "--config", &resolved]);
    assert_eq!(first, fs::read(fold.join("checkpoint.bin")).unwrap());
}

#[test]
fn no_attention_zeroes_the_attention_loss() {
    let ws = Workspace::new();
    let data = ws.synth();
    let out = ws.path("run");
    ok(&[
        "train",
        "--config",
        &ws.path("tiny.txt"),
        "--data",
        &data,
        "--out",
        &out,
        "--fold",
        "C",
        "--no-attention",
    ]);
    let rows = log_rows(&Path::new(&out).join("fold_C").join("train_log.jsonl"));
    assert!(rows.iter().all(|r| r["attn_loss"].as_f64() == Some(0.0)));
    let cfg = fs::read_to_string(Path::new(&out).join("config.txt")).unwrap();
    assert!(cfg.lines().any(|l| l.replace(' ', "") == "lambda_attn=0"));
}

#[test]
fn divergence_exits_with_a_runtime_error() {
    let ws = Workspace::new();
    let data = ws.synth();
    let out = run(&[
        "train",
        "--config",
        &ws.path("tiny.txt"),
        "--data",
        &data,
        "--out",
        &ws.path("run"),
        "--fold",
        "B",
        "--lr",
        "1e30",
        "--iters",
        "50",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn eval_writes_results_timelines_and_plots() {
    let ws = Workspace::new();
    let data = ws.synth();
    let cfg = ws.path("tiny.txt");
    let run_dir = ws.path("run");
    ok(&[
        "train", "--config", &cfg, "--data", &data, "--out", &run_dir, "--fold", "all", "--iters", "20",
    ]);

    let own = ws.path("own");
    ok(&[
        "eval",
        "--config",
        &cfg,
        "--data",
        &data,
        "--run",
        &run_dir,
        "--out",
        &own,
        "--fold",
        "B",
        "--trials",
        "Suturing_C001",
        "--plot-timeline",
        "--plot-attn",
    ]);
    let results: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&own).join("results.json")).unwrap()).unwrap();
    let fold = &results["folds"][0];
    for metric in ["accuracy", "f1", "edit"] {
        let v = fold[metric].as_f64().unwrap();
        assert!(v > 0.0 && v <= 100.0, "{metric} {v}");
    }
    let plots = Path::new(&own).join("plots").join("fold_B");
    for name in ["Suturing_C001_timeline.png", "Suturing_C001_attention.png"] {
        assert!(fs::metadata(plots.join(name)).unwrap().len() > 0, "{name}");
    }
    let csv = fs::read_to_string(Path::new(&own).join("timelines/fold_B/Suturing_C001.csv")).unwrap();
    assert!(csv.starts_with("frame,gt,pred\n"));

    ok(&["eval", "--config", &cfg, "--data", &data, "--run", &run_dir]);
    let text = fs::read_to_string(Path::new(&run_dir).join("eval").join("results.json")).unwrap();
    let results: serde_json::Value = serde_json::from_str(&text).unwrap();
    let folds = results["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 2);
    let accs: Vec<f64> = folds.iter().map(|f| f["accuracy"].as_f64().unwrap()).collect();
    let mean = (accs[0] + accs[1]) / 2.0;
    let sd = ((accs[0] - mean).powi(2) + (accs[1] - mean).powi(2)).sqrt();
    let agg = &results["aggregate"]["accuracy"];
    assert!((agg["mean"].as_f64().unwrap() - mean).abs() < 1e-9);
    assert!((agg["std"].as_f64().unwrap() - sd).abs() < 1e-9);
}
