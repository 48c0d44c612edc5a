#![no_main]
use libfuzzer_sys::fuzz_target;
use mlblue::sdp::{parse_triplets, write_triplets};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = parse_triplets(text) {
        let again = parse_triplets(&write_triplets(&p)).expect("dump reparses");
        assert_eq!(p, again);
    }
});
