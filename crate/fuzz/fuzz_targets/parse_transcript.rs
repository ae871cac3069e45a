#![no_main]

use frpron::transcript::{parse_sentence_transcript, PhonemeInventory};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Some((words, phonemes)) = text.split_once('\n') else { return };
    let inventory = PhonemeInventory::french_xsampa();
    if let Ok(t) = parse_sentence_transcript(words, phonemes, &inventory) {
        // Accepted transcripts must survive a serialize/parse round-trip.
        let back =
            parse_sentence_transcript(&t.text_line(), &t.phoneme_line(), &inventory)
                .expect("serialized transcript must reparse");
        assert_eq!(back.text_line(), t.text_line());
        assert_eq!(back.phoneme_line(), t.phoneme_line());
    }
});
