#![no_main]

use libfuzzer_sys::fuzz_target;
use miaeval::cli::{parse_settings, SplitSettings, TrainSettings};
use miaeval::eval::ExperimentConfig;
use miaeval::ingest::SplitConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = parse_settings::<ExperimentConfig>(text) {
        let _ = c.validate();
    }
    if let Ok(c) = parse_settings::<SplitConfig>(text) {
        let _ = c.validate();
    }
    let _ = parse_settings::<TrainSettings>(text);
    let _ = parse_settings::<SplitSettings>(text);
});
