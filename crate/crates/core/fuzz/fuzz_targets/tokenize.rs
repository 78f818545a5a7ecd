#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    for tok in rsic::metrics::tokenize(&text) {
        assert!(!tok.is_empty());
        assert!(!tok.starts_with('-') && !tok.ends_with('-'));
        assert!(tok.chars().all(|c| c == '-' || c.is_alphanumeric()));
    }
});
