#![no_main]
use libfuzzer_sys::fuzz_target;
use mlblue::mosap::AllocationRecord;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rec) = AllocationRecord::from_json(text) {
        let json = serde_json::to_string(&rec).expect("record serializes");
        let again = AllocationRecord::from_json(&json).expect("record reparses");
        assert_eq!(rec.n.len(), again.n.len());
    }
});
