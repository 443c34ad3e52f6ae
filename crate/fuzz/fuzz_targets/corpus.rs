#![no_main]

use libfuzzer_sys::fuzz_target;
use miaeval::ingest::{chunk_documents, parse_documents, Document};

fuzz_target!(|data: &[u8]| {
    let Some((&target, rest)) = data.split_first() else {
        return;
    };
    let text = String::from_utf8_lossy(rest);
    let docs = parse_documents(&text, "f");
    assert!(docs.iter().all(|d| !d.text.trim().is_empty() && !d.text.contains('\n')));

    let whole = [Document::new("w", text.as_ref())];
    let chunks = chunk_documents(&whole, usize::from(target).max(1));
    let words: Vec<&str> = text.split_whitespace().collect();
    let rejoined: Vec<&str> = chunks.iter().flat_map(|c| c.text.split_whitespace()).collect();
    assert_eq!(rejoined, words);
});
