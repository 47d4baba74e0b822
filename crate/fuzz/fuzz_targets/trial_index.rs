#![no_main]

use gazeattn::dataset::{format_trial_index, parse_trial_index};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(entries) = parse_trial_index(text) else { return };
    assert_eq!(
        parse_trial_index(&format_trial_index(&entries)).expect("formatted output parses"),
        entries
    );
});
