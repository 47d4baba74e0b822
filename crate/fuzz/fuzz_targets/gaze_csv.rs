#![no_main]

use gazeattn::dataset::{format_gaze_csv, parse_gaze_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(track) = parse_gaze_csv(text, 64, 48) else {
        return;
    };
    for &(x, y) in &track.points {
        assert!((0.0..=63.0).contains(&x) && (0.0..=47.0).contains(&y));
    }
    let once = parse_gaze_csv(&format_gaze_csv(&track), 64, 48).expect("formatted output parses");
    let twice = parse_gaze_csv(&format_gaze_csv(&once), 64, 48).expect("formatted output parses");
    assert_eq!(once, twice);
});
