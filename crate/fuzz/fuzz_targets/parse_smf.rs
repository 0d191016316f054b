#![no_main]

use libfuzzer_sys::fuzz_target;
use polydis::score::{encode_smf, parse_smf, quantize_and_segment};

fuzz_target!(|data: &[u8]| {
    if let Ok(song) = parse_smf(data, "fuzz") {
        // whatever parses must survive segmentation and re-encoding
        let _ = quantize_and_segment(&song, 8);
        let again = parse_smf(&encode_smf(&song), "fuzz").expect("re-encoded song parses");
        assert_eq!(again.note_count(), song.note_count());
    }
});
