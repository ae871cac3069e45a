#![no_main]

use frpron::transcript::preprocess_text;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let once = preprocess_text(text);
    // Normalization must be idempotent and never introduce double spaces.
    let twice = preprocess_text(once.as_str());
    assert_eq!(once.as_str(), twice.as_str());
    assert!(!once.as_str().contains("  "));
});
