#![no_main]

use frpron::plp::{dump_examples, parse_examples_dump};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(examples) = parse_examples_dump(text) {
        let back = parse_examples_dump(&dump_examples(&examples))
            .expect("dumped examples must reparse");
        assert_eq!(back.len(), examples.len());
    }
});
