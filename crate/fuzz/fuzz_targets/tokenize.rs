#![no_main]

use frpron::transcript::PhonemeInventory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let inventory = PhonemeInventory::french_xsampa();
    if let Ok(seq) = inventory.tokenize(text) {
        // Accepted chunks must be exactly covered by the returned symbols.
        assert_eq!(seq.symbols().concat(), text);
    }
});
