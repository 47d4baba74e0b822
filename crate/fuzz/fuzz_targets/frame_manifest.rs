#![no_main]

use gazeattn::dataset::{FrameManifest, Frames};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let Ok(text) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    let Ok(manifest) = FrameManifest::parse(text) else {
        return;
    };
    assert_eq!(
        FrameManifest::parse(&manifest.format()).expect("formatted output parses"),
        manifest
    );
    let pixels = data.get(split + 1..).unwrap_or_default().to_vec();
    if let Ok(frames) = Frames::from_raw(manifest.clone(), pixels) {
        assert_eq!(frames.manifest(), manifest);
    }
});
