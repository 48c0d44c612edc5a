#![no_main]
use libfuzzer_sys::fuzz_target;
use mlblue::harness::{parse_reply, parse_request};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(req) = parse_request(text) {
        assert!(req.model >= 1);
    }
    for m in 1..=3 {
        if let Ok(Ok(values)) = parse_reply(text, m) {
            assert_eq!(values.len(), m);
        }
    }
});
