#![no_main]

use frpron::transcript::{parse_lexicon, PhonemeInventory};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let inventory = PhonemeInventory::french_xsampa();
    let _ = parse_lexicon(text, &inventory);
});
