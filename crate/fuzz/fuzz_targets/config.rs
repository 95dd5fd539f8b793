#![no_main]

use libfuzzer_sys::fuzz_target;
use sketchreg::experiment::{parse_config, ExperimentConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(c) = parse_config(data) else { return };
    // Typed application may reject values but must not panic.
    let mut cfg = ExperimentConfig::desk_sigma();
    let _ = cfg.apply_config(&c);
});
