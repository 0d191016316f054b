#![no_main]

use libfuzzer_sys::fuzz_target;
use polydis::chord::{ChordMatrix, ChordProgression, CHORD_DIM};
use polydis::BEATS_PER_SEGMENT;

fuzz_target!(|data: &[u8]| {
    if data.len() < CHORD_DIM * BEATS_PER_SEGMENT {
        return;
    }
    let mut m = ChordMatrix::default();
    for (i, &b) in data.iter().take(CHORD_DIM * BEATS_PER_SEGMENT).enumerate() {
        m.bits[i / BEATS_PER_SEGMENT][i % BEATS_PER_SEGMENT] = b;
    }
    if let Ok(p) = ChordProgression::decode_matrix(&m) {
        // silent columns may drop root/bass bits, so compare decoded forms
        assert_eq!(ChordProgression::decode_matrix(&p.encode_matrix()).unwrap(), p);
    }
});
