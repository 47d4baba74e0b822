//! Trials, annotations, gaze tracks, sliding windows and LOUO folds.

mod folds;
mod frames;
mod gaze;
mod gesture;
mod synth;
mod transcription;
mod trial;
mod windows;

pub use folds::{louo_folds, Fold, LOUO_USERS};
pub use frames::{FrameManifest, Frames, RAW_FRAMES_FILE, RAW_MANIFEST_FILE};
pub use gaze::{format_gaze_csv, parse_gaze_csv, GazeTrack};
pub use gesture::{GestureLabel, GestureTimeline, NUM_GESTURES};
pub use synth::{synth_dataset, synth_generate, user_ids, SynthConfig, SynthSummary};
pub use transcription::{
    format_transcription, parse_transcription, segments_from_timeline, timeline_from_segments, validate_segments,
    Segment,
};
pub use trial::{
    format_trial_index, load_trial, parse_trial_index, subsample_timeline, Dataset, Trial, TrialIndexEntry, GAZE_FILE,
    PNG_FRAMES_DIR, TRANSCRIPTION_FILE, TRIAL_INDEX_FILE,
};
pub use windows::{clips, make_windows, window_indices, Clip, ClipWindow};
