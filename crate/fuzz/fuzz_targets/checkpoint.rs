#![no_main]

use libfuzzer_sys::fuzz_target;
use polydis::arranger::Arranger;
use polydis::nn::Checkpoint;
use polydis::vae::ChordTextureVae;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::from_bytes(data) {
        let _ = ChordTextureVae::from_checkpoint(&ck);
        let _ = Arranger::from_checkpoint(&ck);
    }
});
