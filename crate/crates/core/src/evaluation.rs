//! Frame accuracy, macro F1 and segmental edit score, per-trial prediction
//! timelines and leave-one-user-out aggregation.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::attention_mass_in_disk;
use crate::backbone::{argmax, clip_input, I3d, Mode};
use crate::dataset::{window_indices, Clip, ClipWindow, GestureLabel, GestureTimeline, Trial};
use crate::error::{Error, Result};
use crate::gaze_supervision::{grid_gaze, HeatmapConfig};
use crate::real::Real;

fn check_lengths(pred: &[GestureLabel], gt: &[GestureLabel]) -> Result<usize> {
    if pred.len() != gt.len() {
        return Err(Error::Validation(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let labeled = gt.iter().filter(|g| g.is_labeled()).count();
    if labeled == 0 {
        return Err(Error::UndefinedScore("ground truth has no labeled frames".into()));
    }
    Ok(labeled)
}

/// Percentage of labeled ground-truth frames predicted correctly.
pub fn frame_accuracy(pred: &[GestureLabel], gt: &[GestureLabel]) -> Result<f64> {
    let labeled = check_lengths(pred, gt)?;
    let correct = pred.iter().zip(gt).filter(|(p, g)| g.is_labeled() && p == g).count();
    Ok(100.0 * correct as f64 / labeled as f64)
}

/// Per-class F1 averaged over the classes present in the ground truth.
///
/// Frames with unlabeled ground truth are ignored; a class with no true
/// positives contributes 0.
pub fn macro_f1(pred: &[GestureLabel], gt: &[GestureLabel]) -> Result<f64> {
    check_lengths(pred, gt)?;
    let classes: BTreeSet<GestureLabel> = gt.iter().copied().filter(|g| g.is_labeled()).collect();
    let mut sum = 0.0;
    for &c in &classes {
        let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
        for (&p, &g) in pred.iter().zip(gt) {
            if !g.is_labeled() {
                continue;
            }
            match (p == c, g == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
        if tp > 0 {
            sum += f1_of(tp as f64 / (tp + fp) as f64, tp as f64 / (tp + fneg) as f64);
        }
    }
    Ok(100.0 * sum / classes.len() as f64)
}

fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Labels of the maximal runs of a timeline, without unlabeled runs.
pub fn rle_segments(timeline: &[GestureLabel]) -> Vec<GestureLabel> {
    let mut out: Vec<GestureLabel> = Vec::new();
    let mut prev = None;
    for &l in timeline {
        if prev != Some(l) && l.is_labeled() {
            out.push(l);
        }
        prev = Some(l);
    }
    out
}

/// Unit-cost edit distance.
pub fn levenshtein<L: PartialEq>(a: &[L], b: &[L]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// Segmental edit score in `[0, 100]`.
pub fn edit_score(pred: &[GestureLabel], gt: &[GestureLabel]) -> f64 {
    let p = rle_segments(pred);
    let g = rle_segments(gt);
    let denom = p.len().max(g.len()).max(1) as f64;
    (100.0 * (1.0 - levenshtein(&p, &g) as f64 / denom)).clamp(0.0, 100.0)
}

/// Metrics of one evaluated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: String,
    pub accuracy: f64,
    pub f1: f64,
    pub edit: f64,
    /// Mean share of attention inside the gaze disk over all scored windows.
    pub gaze_mass: f64,
    #[serde(skip)]
    pub gt: GestureTimeline,
    #[serde(skip)]
    pub pred: GestureTimeline,
}

/// Unweighted means of the per-trial metrics of one held-out user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_user: String,
    pub accuracy: f64,
    pub f1: f64,
    pub edit: f64,
    pub gaze_mass: f64,
    pub trials: Vec<TrialResult>,
}

impl FoldResult {
    pub fn from_trials(test_user: impl Into<String>, trials: Vec<TrialResult>) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::Validation("fold has no test trials".into()));
        }
        let n = trials.len() as f64;
        let mean = |f: fn(&TrialResult) -> f64| trials.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            test_user: test_user.into(),
            accuracy: mean(|t| t.accuracy),
            f1: mean(|t| t.f1),
            edit: mean(|t| t.edit),
            gaze_mass: mean(|t| t.gaze_mass),
            trials,
        })
    }
}

/// Per-frame predictions of a trial and the mean gaze-disk attention mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPrediction {
    /// Unlabeled wherever the ground truth is unlabeled.
    pub timeline: GestureTimeline,
    pub gaze_mass: f64,
}

/// Predicts every labeled frame from the window that ends at it.
///
/// `gaze_radius` is in attention-grid cells.
pub fn predict_trial<T: Real>(model: &I3d<T>, trial: &Trial, gaze_radius: f64) -> Result<TrialPrediction> {
    let clip_len = model.config.clip_len;
    let attn_dims = model.config.attention_dims()?;
    let gt = trial.timeline();
    let scored: Vec<Result<(GestureLabel, f64)>> = gt
        .par_iter()
        .enumerate()
        .map(|(t, &label)| {
            if !label.is_labeled() {
                return Ok((GestureLabel::Unlabeled, f64::NAN));
            }
            let window = ClipWindow {
                end_frame: t,
                label,
                frame_indices: window_indices(t, clip_len),
            };
            let clip = Clip::extract(trial, &window);
            let out = model.forward(clip_input::<T>(clip.frames.view()).view(), Mode::Eval)?;
            let class = argmax(out.logits.view());
            let pred = GestureLabel::from_class_index(class)
                .ok_or_else(|| Error::Validation(format!("model predicts class {class} outside the vocabulary")))?;
            let gaze = grid_gaze(&clip.gaze, trial.frames.width(), trial.frames.height(), attn_dims)?;
            Ok((pred, attention_mass_in_disk(out.attention.view(), &gaze, gaze_radius)))
        })
        .collect();
    let mut timeline = Vec::with_capacity(gt.len());
    let (mut mass, mut n) = (0.0, 0usize);
    for r in scored {
        let (p, m) = r?;
        timeline.push(p);
        if p.is_labeled() {
            mass += m;
            n += 1;
        }
    }
    Ok(TrialPrediction {
        timeline,
        gaze_mass: if n == 0 { 0.0 } else { mass / n as f64 },
    })
}

/// Scores one trial.
pub fn evaluate_trial<T: Real>(model: &I3d<T>, trial: &Trial, heatmap: &HeatmapConfig) -> Result<TrialResult> {
    let gt = trial.timeline();
    let p = predict_trial(model, trial, 2.0 * heatmap.sigma)?;
    Ok(TrialResult {
        trial_id: trial.trial_id.clone(),
        accuracy: frame_accuracy(&p.timeline, &gt)?,
        f1: macro_f1(&p.timeline, &gt)?,
        edit: edit_score(&p.timeline, &gt),
        gaze_mass: p.gaze_mass,
        gt,
        pred: p.timeline,
    })
}

/// Scores the held-out trials of one fold. Trials must already be at the
/// evaluation frame rate.
pub fn evaluate_fold<T: Real>(
    model: &I3d<T>,
    test_user: &str,
    test_trials: &[&Trial],
    heatmap: &HeatmapConfig,
) -> Result<FoldResult> {
    let trials = test_trials
        .iter()
        .map(|t| evaluate_trial(model, t, heatmap))
        .collect::<Result<Vec<_>>>()?;
    FoldResult::from_trials(test_user, trials)
}

/// Mean and sample standard deviation of one metric across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Absent with fewer than two folds.
    pub std: Option<f64>,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std =
            (values.len() >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub folds: usize,
    pub accuracy: MeanStd,
    pub f1: MeanStd,
    pub edit: MeanStd,
}

fn aggregate(folds: &[FoldResult]) -> Aggregate {
    let col = |f: fn(&FoldResult) -> f64| folds.iter().map(f).collect::<Vec<_>>();
    Aggregate {
        folds: folds.len(),
        accuracy: MeanStd::of(&col(|f| f.accuracy)),
        f1: MeanStd::of(&col(|f| f.f1)),
        edit: MeanStd::of(&col(|f| f.edit)),
    }
}

/// Cross-fold mean and sample standard deviation of every metric.
pub fn aggregate_louo(folds: &[FoldResult]) -> Result<Aggregate> {
    if folds.len() < 2 {
        return Err(Error::Validation(format!(
            "standard deviation needs at least 2 folds, got {}",
            folds.len()
        )));
    }
    Ok(aggregate(folds))
}

/// Contents of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub folds: Vec<FoldResult>,
    /// Means only (no std) when fewer than two folds were evaluated.
    pub aggregate: Option<Aggregate>,
}

impl Results {
    pub fn new(folds: Vec<FoldResult>) -> Self {
        let aggregate = (!folds.is_empty()).then(|| aggregate(&folds));
        Self { folds, aggregate }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Header of a timeline CSV.
pub const TIMELINE_HEADER: &str = "frame,gt,pred";

pub fn format_timeline_csv(gt: &[GestureLabel], pred: &[GestureLabel]) -> Result<String> {
    if gt.len() != pred.len() {
        return Err(Error::Validation(format!(
            "timeline lengths differ: gt {} pred {}",
            gt.len(),
            pred.len()
        )));
    }
    let mut s = String::from(TIMELINE_HEADER);
    s.push('\n');
    for (i, (g, p)) in gt.iter().zip(pred).enumerate() {
        writeln!(s, "{i},{g},{p}").expect("write to string");
    }
    Ok(s)
}

/// Parses a timeline CSV into `(gt, pred)`. Frames must be consecutive
/// from 0.
pub fn parse_timeline_csv(text: &str) -> Result<(GestureTimeline, GestureTimeline)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TIMELINE_HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header {TIMELINE_HEADER:?}"))),
    }
    let (mut gt, mut pred) = (Vec::new(), Vec::new());
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [frame, g, p] = fields[..] else {
            return Err(Error::parse(i + 1, "expected 3 fields"));
        };
        let frame: usize = frame
            .trim()
            .parse()
            .map_err(|_| Error::parse(i + 1, "bad frame index"))?;
        if frame != gt.len() {
            return Err(Error::parse(i + 1, format!("expected frame {}, got {frame}", gt.len())));
        }
        gt.push(
            g.trim()
                .parse()
                .map_err(|e: Error| Error::parse(i + 1, e.to_string()))?,
        );
        pred.push(
            p.trim()
                .parse()
                .map_err(|e: Error| Error::parse(i + 1, e.to_string()))?,
        );
    }
    Ok((gt, pred))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use GestureLabel::*;

    fn lev_oracle(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = lev_oracle(ra, rb) + usize::from(x != y);
                sub.min(lev_oracle(ra, b) + 1).min(lev_oracle(a, rb) + 1)
            }
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 0.005
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(frame_accuracy(&[G1, G1, G2, G3], &[G1, G2, G2, G3]).unwrap(), 75.0);
        assert_eq!(frame_accuracy(&[G4; 5], &[G4; 5]).unwrap(), 100.0);
        assert!(matches!(
            frame_accuracy(&[G1, G1], &[Unlabeled, Unlabeled]),
            Err(Error::UndefinedScore(_))
        ));
        assert!(matches!(frame_accuracy(&[G1], &[G1, G1]), Err(Error::Validation(_))));
        assert_eq!(frame_accuracy(&[G2, G1, G1], &[Unlabeled, G1, G1]).unwrap(), 100.0);
    }

    #[test]
    fn f1_harmonic_mean() {
        assert!(close(100.0 * f1_of(0.8, 0.6), 68.57));
        assert_eq!(f1_of(0.0, 0.0), 0.0);
        // G1: tp 12, fp 3, fn 8 -> P 0.8, R 0.6. G2 is never hit.
        let mut gt = vec![G1; 20];
        gt.extend([G2; 3]);
        let mut pred = vec![G1; 12];
        pred.extend([G4; 8]);
        pred.extend([G1; 3]);
        assert!(close(macro_f1(&pred, &gt).unwrap(), 68.57 / 2.0));
    }

    #[test]
    fn f1_matches_direct_tally() {
        // G1 perfect; G2 has P = 1, R = 1/3.
        let gt = [G1, G1, G1, G1, G2, G2, G2, G2, G2, G2];
        let pred = [G1, G1, G1, G1, G2, G2, G4, G4, G4, G4];
        let tally = |c: GestureLabel| {
            let tp = pred.iter().zip(&gt).filter(|(p, g)| **p == c && **g == c).count() as f64;
            let pp = pred.iter().filter(|p| **p == c).count() as f64;
            let gp = gt.iter().filter(|g| **g == c).count() as f64;
            2.0 * (tp / pp) * (tp / gp) / (tp / pp + tp / gp)
        };
        assert_eq!(tally(G1), 1.0);
        assert!((tally(G2) - 0.5).abs() < 1e-12);
        assert!(close(macro_f1(&pred, &gt).unwrap(), 75.0));
        assert_eq!(macro_f1(&gt, &gt).unwrap(), 100.0);
    }

    #[test]
    fn rle_examples() {
        assert_eq!(rle_segments(&[G1, G1, G2, G2, G2, G1]), vec![G1, G2, G1]);
        assert_eq!(rle_segments(&[]), vec![]);
        assert_eq!(rle_segments(&[Unlabeled, G1, Unlabeled]), vec![G1]);
        assert_eq!(rle_segments(&[G1, Unlabeled, G1]), vec![G1, G1]);
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein(&[G1, G2, G3], &[G1, G3]), 1);
        assert_eq!(levenshtein::<GestureLabel>(&[], &[G1, G2]), 2);
        assert_eq!(levenshtein(&[G5, G2], &[G5, G2]), 0);
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
    }

    #[test]
    fn edit_examples() {
        assert!(close(edit_score(&[G1, G3], &[G1, G2, G3]), 66.67));
        assert_eq!(edit_score(&[G1, G1, G2], &[G1, G2, G2]), 100.0);
        assert_eq!(edit_score(&[], &[]), 100.0);
        assert!(edit_score(&[G1, G4, G2], &[G1, G1, G2]) < 100.0);
    }

    #[test]
    fn aggregate_examples() {
        let fold = |u: &str, a: f64| FoldResult {
            test_user: u.into(),
            accuracy: a,
            f1: a,
            edit: a,
            gaze_mass: 0.0,
            trials: vec![],
        };
        let agg = aggregate_louo(&[fold("B", 80.0), fold("C", 90.0)]).unwrap();
        assert_eq!(agg.accuracy.mean, 85.0);
        assert!((agg.accuracy.std.unwrap() - 7.0711).abs() < 1e-4);
        let same = aggregate_louo(&[fold("B", 70.0), fold("C", 70.0), fold("D", 70.0)]).unwrap();
        assert_eq!(same.edit.std, Some(0.0));
        assert!(matches!(aggregate_louo(&[fold("B", 1.0)]), Err(Error::Validation(_))));
        let r = Results::new(vec![fold("B", 60.0)]);
        assert_eq!(
            r.aggregate.as_ref().unwrap().accuracy,
            MeanStd { mean: 60.0, std: None }
        );
        assert_eq!(Results::from_json(&r.to_json().unwrap()).unwrap(), r);
    }

    #[test]
    fn fold_is_unweighted_trial_mean() {
        let t = |id: &str, gt: Vec<GestureLabel>, pred: Vec<GestureLabel>| TrialResult {
            trial_id: id.into(),
            accuracy: frame_accuracy(&pred, &gt).unwrap(),
            f1: macro_f1(&pred, &gt).unwrap(),
            edit: edit_score(&pred, &gt),
            gaze_mass: 0.0,
            gt,
            pred,
        };
        // 4 frames at 50% and 2 frames at 100%: unweighted mean is 75, frame-weighted would be 66.7.
        let a = t("a", vec![G1, G1, G2, G2], vec![G1, G2, G2, G1]);
        let b = t("b", vec![G3, G3], vec![G3, G3]);
        let f = FoldResult::from_trials("B", vec![a, b]).unwrap();
        assert_eq!(f.accuracy, 75.0);
        assert_eq!(f.edit, (edit_score(&[G1, G2, G2, G1], &[G1, G1, G2, G2]) + 100.0) / 2.0);
    }

    #[test]
    fn timeline_csv_round_trip() {
        let gt = vec![Unlabeled, G1, G1, G11];
        let pred = vec![Unlabeled, G1, G2, G11];
        let text = format_timeline_csv(&gt, &pred).unwrap();
        assert!(text.starts_with("frame,gt,pred\n0,U,U\n"));
        assert_eq!(parse_timeline_csv(&text).unwrap(), (gt, pred));
        assert!(parse_timeline_csv("frame,gt,pred\n1,G1,G1\n").is_err());
        assert!(parse_timeline_csv("frame,gt\n").is_err());
        assert!(parse_timeline_csv("frame,gt,pred\n0,G7,G1\n").is_err());
    }

    fn seq(max: usize) -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..4, 0..=max)
    }

    fn labels(max: usize) -> impl Strategy<Value = Vec<GestureLabel>> {
        prop::collection::vec(0usize..5, 1..=max).prop_map(|v| {
            v.into_iter()
                .map(|i| GestureLabel::from_class_index(i).unwrap_or(Unlabeled))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn levenshtein_matches_oracle(a in seq(7), b in seq(7)) {
            prop_assert_eq!(levenshtein(&a, &b), lev_oracle(&a, &b));
        }

        #[test]
        fn levenshtein_is_a_metric(a in seq(8), b in seq(8), c in seq(8)) {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }

        #[test]
        fn scores_are_bounded(pair in (1usize..30).prop_flat_map(|n| (labels(n), labels(n)))
            .prop_filter("same length", |(a, b)| a.len() == b.len())) {
            let (pred, gt) = pair;
            prop_assert!((0.0..=100.0).contains(&edit_score(&pred, &gt)));
            if gt.iter().any(|g| g.is_labeled()) {
                let acc = frame_accuracy(&pred, &gt).unwrap();
                let f1 = macro_f1(&pred, &gt).unwrap();
                prop_assert!((0.0..=100.0).contains(&acc));
                prop_assert!((0.0..=100.0).contains(&f1));
                prop_assert_eq!(frame_accuracy(&gt, &gt).unwrap(), 100.0);
                prop_assert_eq!(macro_f1(&gt, &gt).unwrap(), 100.0);
                prop_assert_eq!(edit_score(&gt, &gt), 100.0);
            }
        }

        #[test]
        fn relabeling_invariance(pred in labels(25), gt in labels(25), shift in 1usize..10) {
            let n = pred.len().min(gt.len());
            let (pred, gt) = (&pred[..n], &gt[..n]);
            let relabel = |v: &[GestureLabel]| -> Vec<GestureLabel> {
                v.iter()
                    .map(|l| match l.class_index() {
                        Some(i) => GestureLabel::from_class_index((i + shift) % 10).unwrap(),
                        None => Unlabeled,
                    })
                    .collect()
            };
            let (rp, rg) = (relabel(pred), relabel(gt));
            prop_assert_eq!(edit_score(pred, gt), edit_score(&rp, &rg));
            if gt.iter().any(|g| g.is_labeled()) {
                prop_assert_eq!(frame_accuracy(pred, gt).unwrap(), frame_accuracy(&rp, &rg).unwrap());
                prop_assert!((macro_f1(pred, gt).unwrap() - macro_f1(&rp, &rg).unwrap()).abs() < 1e-9);
            }
        }
    }
}
