#![no_main]

use libfuzzer_sys::fuzz_target;
use polydis::score::SongRecord;

fuzz_target!(|data: &[u8]| {
    if let Ok(rec) = SongRecord::from_bytes(data) {
        let back = SongRecord::from_bytes(&rec.to_bytes()).expect("round trip");
        assert_eq!(back, rec);
    }
});
