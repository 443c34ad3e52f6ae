#![no_main]

use libfuzzer_sys::fuzz_target;
use miaeval::ingest::{parse_pool, write_pool, ReadMode};

fuzz_target!(|data: &[u8]| {
    let strict = parse_pool(data, ReadMode::Strict);
    let Ok(lenient) = parse_pool(data, ReadMode::Lenient) else {
        // Lenient mode only rejects what strict mode rejects too.
        assert!(strict.is_err());
        return;
    };
    if let Ok(strict) = strict {
        assert!(lenient.skipped.is_empty());
        assert_eq!(strict.pool, lenient.pool);
    }
    let mut buf = Vec::new();
    write_pool(&lenient.pool, &mut buf).unwrap();
    let again = parse_pool(buf.as_slice(), ReadMode::Strict).expect("written pools re-read");
    assert_eq!(again.pool, lenient.pool);
});
