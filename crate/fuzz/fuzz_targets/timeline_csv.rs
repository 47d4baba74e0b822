#![no_main]

use gazeattn::evaluation::{format_timeline_csv, parse_timeline_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok((gt, pred)) = parse_timeline_csv(text) else {
        return;
    };
    let formatted = format_timeline_csv(&gt, &pred).expect("equal lengths");
    assert_eq!(
        parse_timeline_csv(&formatted).expect("formatted output parses"),
        (gt, pred)
    );
});
