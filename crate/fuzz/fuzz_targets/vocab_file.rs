#![no_main]

use frpron::vocab::SymbolTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = SymbolTable::from_file_string(text) {
        let back = SymbolTable::from_file_string(&table.to_file_string())
            .expect("serialized table must reparse");
        assert_eq!(back.hash(), table.hash());
    }
});
