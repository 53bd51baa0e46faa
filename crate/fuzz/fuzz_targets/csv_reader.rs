#![no_main]

use libfuzzer_sys::fuzz_target;
use sbmlab::table::Table;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = Table::parse(text) {
        assert_eq!(Table::parse(&t.to_csv()).unwrap(), t);
    }
});
