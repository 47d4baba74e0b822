#![no_main]

use gazeattn::dataset::{format_transcription, parse_transcription, timeline_from_segments};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(segments) = parse_transcription(text) else {
        return;
    };
    let again = parse_transcription(&format_transcription(&segments)).expect("formatted output parses");
    assert_eq!(segments, again);
    if let Some(last) = segments.last() {
        if last.end_frame < 1 << 16 {
            let timeline = timeline_from_segments(&segments, last.end_frame + 1).expect("segments fit");
            assert_eq!(timeline.len(), last.end_frame + 1);
        }
    }
});
