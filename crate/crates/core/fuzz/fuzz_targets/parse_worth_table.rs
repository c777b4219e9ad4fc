//! The `mask,value` worth-table parser must never panic on arbitrary input,
//! and any table it accepts must round-trip through the serializer.

#![no_main]

use libfuzzer_sys::fuzz_target;

use coalnet::coopgame::table;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cf) = table::parse(text) {
            let round = table::parse(&table::to_string(&cf)).expect("round trip");
            assert_eq!(round.n_players(), cf.n_players());
        }
    }
});
