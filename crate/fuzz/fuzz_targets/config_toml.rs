#![no_main]

use libfuzzer_sys::fuzz_target;
use polydis::arranger::{ArrangerConfig, PairedManifest};
use polydis::trainer::TrainConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = TrainConfig::from_toml(text);
    let _ = ArrangerConfig::from_toml(text);
    let _ = PairedManifest::from_toml(text);
});
