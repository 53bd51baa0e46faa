#![no_main]

use libfuzzer_sys::fuzz_target;
use sbmlab::config::{parse_config, render_config};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = parse_config(text) {
        assert_eq!(parse_config(&render_config(&s)).unwrap(), s);
    }
});
