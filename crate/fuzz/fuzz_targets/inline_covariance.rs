#![no_main]
use libfuzzer_sys::fuzz_target;
use mlblue::covariance::{CovarianceStore, Provenance};

fuzz_target!(|data: &[u8]| {
    let Ok(mats) = serde_json::from_slice::<Vec<Vec<Vec<Option<f64>>>>>(data) else { return };
    if let Ok(store) = CovarianceStore::from_partial(&mats, Provenance::Exact) {
        assert_eq!(store.num_outputs(), mats.len());
    }
});
