#![no_main]

use libfuzzer_sys::fuzz_target;
use polydis::chord::{parse_label, parse_label_sequence, progressions_from_symbols};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_label(text);
    let _ = parse_label_sequence(text);
    for beats in [1, 2, 4] {
        let _ = progressions_from_symbols(text, beats);
    }
});
