//! The INI-style config parser must be total: any byte sequence either
//! parses or returns a structured error, never panics.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mut raw) = coalnet::config::RawConfig::parse(text) {
            // Exercise the downstream validation path too.
            let _ = raw.set("run.seed=1");
            let _ = coalnet::config::ExperimentConfig::from_raw(&raw);
        }
    }
});
