use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::gesture::{GestureLabel, GestureTimeline};
use crate::error::{Error, Result};

/// Inclusive frame range `[start_frame, end_frame]` carrying one gesture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub label: GestureLabel,
}

impl Segment {
    pub fn new(start_frame: usize, end_frame: usize, label: GestureLabel) -> Self {
        Self {
            start_frame,
            end_frame,
            label,
        }
    }
}

/// Parses "start end Gk" lines. Blank lines are skipped; the result is
/// sorted by start frame and checked for overlaps.
pub fn parse_transcription(text: &str) -> Result<Vec<Segment>> {
    let mut segments = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [start, end, label] = fields[..] else {
            return Err(Error::parse(
                lineno,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        };
        let start: usize = start
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad start frame {start:?}")))?;
        let end: usize = end
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad end frame {end:?}")))?;
        if end < start {
            return Err(Error::parse(
                lineno,
                format!("end frame {end} precedes start frame {start}"),
            ));
        }
        let label: GestureLabel = label
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad gesture {label:?}")))?;
        if !label.is_labeled() {
            return Err(Error::parse(lineno, "segments must carry a gesture label"));
        }
        segments.push(Segment::new(start, end, label));
    }
    segments.sort_by_key(|s| s.start_frame);
    validate_segments(&segments)?;
    Ok(segments)
}

pub fn validate_segments(segments: &[Segment]) -> Result<()> {
    for pair in segments.windows(2) {
        if pair[1].start_frame <= pair[0].end_frame {
            return Err(Error::Validation(format!(
                "segments {}-{} and {}-{} overlap",
                pair[0].start_frame, pair[0].end_frame, pair[1].start_frame, pair[1].end_frame
            )));
        }
    }
    Ok(())
}

pub fn format_transcription(segments: &[Segment]) -> String {
    let mut out = String::new();
    for s in segments {
        let _ = writeln!(out, "{} {} {}", s.start_frame, s.end_frame, s.label);
    }
    out
}

/// Per-frame labels; frames outside every segment are `Unlabeled`.
pub fn timeline_from_segments(segments: &[Segment], num_frames: usize) -> Result<GestureTimeline> {
    validate_segments(segments)?;
    let mut timeline = vec![GestureLabel::Unlabeled; num_frames];
    for s in segments {
        if s.end_frame >= num_frames {
            return Err(Error::Validation(format!(
                "segment {}-{} exceeds trial length {num_frames}",
                s.start_frame, s.end_frame
            )));
        }
        timeline[s.start_frame..=s.end_frame].fill(s.label);
    }
    Ok(timeline)
}

/// Run-length encodes a timeline into segments, skipping unlabeled runs.
pub fn segments_from_timeline(timeline: &[GestureLabel]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (f, &label) in timeline.iter().enumerate() {
        if !label.is_labeled() {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.label == label && last.end_frame + 1 == f => last.end_frame = f,
            _ => out.push(Segment::new(f, f, label)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use GestureLabel::*;

    #[test]
    fn parses_jigsaws_lines() {
        let segs = parse_transcription("0 117 G1\n118 406 G5").unwrap();
        assert_eq!(segs, vec![Segment::new(0, 117, G1), Segment::new(118, 406, G5)]);
        assert!(parse_transcription("").unwrap().is_empty());
        // trailing whitespace as found in the public release
        assert_eq!(
            parse_transcription("  3 9 G11 \n\n").unwrap(),
            vec![Segment::new(3, 9, G11)]
        );
    }

    #[test]
    fn reports_errors_with_line_numbers() {
        assert!(matches!(
            parse_transcription("5 3 G1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_transcription("0 1 G1\n2 x G2"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_transcription("0 1 G7"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse_transcription("0 1"), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_transcription("0 5 G1\n4 9 G2"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let segs = parse_transcription("10 12 G2\n0 4 G1").unwrap();
        assert_eq!(segs[0].start_frame, 0);
    }

    #[test]
    fn timeline_examples() {
        let u = Unlabeled;
        assert_eq!(
            timeline_from_segments(&[Segment::new(0, 2, G1)], 5).unwrap(),
            vec![G1, G1, G1, u, u]
        );
        assert_eq!(timeline_from_segments(&[], 3).unwrap(), vec![u, u, u]);
        assert_eq!(
            timeline_from_segments(&[Segment::new(0, 1, G1), Segment::new(2, 3, G2)], 4).unwrap(),
            vec![G1, G1, G2, G2]
        );
        assert!(matches!(
            timeline_from_segments(&[Segment::new(0, 5, G1)], 5),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn format_round_trips() {
        let segs = vec![Segment::new(0, 3, G2), Segment::new(7, 20, G10)];
        assert_eq!(parse_transcription(&format_transcription(&segs)).unwrap(), segs);
    }
}
