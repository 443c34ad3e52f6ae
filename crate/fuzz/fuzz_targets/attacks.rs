#![no_main]

use libfuzzer_sys::fuzz_target;
use miaeval::attacks::{score_all, Attack, AttackConfig};
use miaeval::eval::auc;
use miaeval::trace::{validate_trace, TokenTrace};

// Input layout: 1 byte k, 1 byte text length, text, then 32-byte groups of
// (logprob, mu, sigma, ref_logprob) as little-endian f64.
fuzz_target!(|data: &[u8]| {
    let [k, tlen, rest @ ..] = data else { return };
    let (text, nums) = rest.split_at(usize::from(*tlen).min(rest.len()));
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().unwrap());
    let groups: Vec<&[u8]> = nums.chunks_exact(32).collect();
    let col = |i: usize| groups.iter().map(|g| f(&g[i * 8..i * 8 + 8])).collect::<Vec<_>>();

    let mut t = TokenTrace::new("x", String::from_utf8_lossy(text), vec![0; groups.len()], col(0));
    t.mu = Some(col(1));
    t.sigma = Some(col(2));
    t.ref_logprob = Some(col(3));
    if !validate_trace(&t).is_empty() {
        return;
    }
    let config = AttackConfig {
        k_fraction: f64::from(*k).max(1.0) / 255.0,
        ..AttackConfig::default()
    };
    let set = score_all(&t, &config);
    for a in Attack::ALL {
        if let Some(s) = set.scores.get(&a) {
            assert!(s.is_finite(), "{a} gave {s}");
        }
    }
    let scores: Vec<f64> = set.scores.values().copied().collect();
    if let Ok(v) = auc(&scores, &t.logprob) {
        assert!((0.0..=1.0).contains(&v));
    }
});
