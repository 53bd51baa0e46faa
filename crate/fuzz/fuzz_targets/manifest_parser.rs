#![no_main]

use libfuzzer_sys::fuzz_target;
use sbmlab::manifest::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::parse(text) {
        let text = m.render().unwrap();
        assert_eq!(Manifest::parse(&text).unwrap().render().unwrap(), text);
    }
});
