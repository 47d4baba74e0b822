#![no_main]

use gazeattn::config::RunConfig;
use gazeattn::kv::{format_kv, parse_kv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(map) = parse_kv(text) {
        let again =
            parse_kv(&format_kv(map.iter().map(|(k, v)| (k.as_str(), v.clone())))).expect("formatted output parses");
        assert_eq!(map, again);
    }
    if let Ok(cfg) = RunConfig::from_text(text) {
        assert_eq!(
            RunConfig::from_text(&cfg.to_text()).expect("formatted output parses"),
            cfg
        );
    }
});
