#![no_main]

use clap::Parser;
use libfuzzer_sys::fuzz_target;
use sbmlab::experiments::resolve_layers;
use sbmlab_cli::Cli;

// NUL-separated argument vector
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let args = std::iter::once("sbmlab").chain(text.split('\0'));
    let Ok(cli) = Cli::try_parse_from(args) else { return };
    if let Ok(flags) = cli.flags() {
        let _ = resolve_layers(vec![], Vec::new(), flags);
    }
});
