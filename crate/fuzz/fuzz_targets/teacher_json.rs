#![no_main]

use libfuzzer_sys::fuzz_target;
use tsb_core::io::{teacher_from_json, teacher_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = teacher_from_json(text) {
        let again = teacher_from_json(&teacher_to_json(&t)).expect("written teacher parses");
        assert_eq!(again, t);
    }
});
