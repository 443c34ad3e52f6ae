#![no_main]

use libfuzzer_sys::fuzz_target;
use miaeval::toylm::{NGramModel, BOS};

fuzz_target!(|data: &[u8]| {
    let Ok(model) = NGramModel::read_from(data) else { return };
    let mut buf = Vec::new();
    model.write_to(&mut buf).unwrap();
    assert_eq!(NGramModel::read_from(buf.as_slice()).unwrap(), model);

    let d = model.next_distribution(&[BOS, 97]);
    assert!(d.iter().all(|p| p.is_finite() && *p > 0.0));
    assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
});
