#![no_main]

use libfuzzer_sys::fuzz_target;
use tsb_core::io::{dataset_from_json, dataset_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = dataset_from_json(text) {
        let again = dataset_from_json(&dataset_to_json(&ds)).expect("written dataset parses");
        assert_eq!(again, ds);
    }
});
