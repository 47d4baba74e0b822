#![no_main]

use gazeattn::checkpoint::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(ckpt) = Checkpoint::decode(data) else { return };
    assert_eq!(
        Checkpoint::decode(&ckpt.encode()).expect("encoded output decodes"),
        ckpt
    );
});
