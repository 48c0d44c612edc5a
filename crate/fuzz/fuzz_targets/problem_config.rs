#![no_main]
use libfuzzer_sys::fuzz_target;
use mlblue::harness::ProblemConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ProblemConfig::from_json(text) {
        let again = ProblemConfig::from_json(&cfg.to_json()).expect("canonical config reparses");
        assert_eq!(cfg, again);
        let _ = cfg.group_set();
        let _ = cfg.auto_denied();
    }
});
