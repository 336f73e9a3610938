#![no_main]

use libfuzzer_sys::fuzz_target;
use tsb_core::io::{read_trajectory_csv, write_trajectory_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_trajectory_csv(data) else { return };
    // Rows may hold NaN, so compare the serialized form.
    let mut first = Vec::new();
    write_trajectory_csv(&mut first, &rows).expect("write to memory");
    let reread = read_trajectory_csv(first.as_slice()).expect("written trajectory parses");
    let mut second = Vec::new();
    write_trajectory_csv(&mut second, &reread).expect("write to memory");
    assert_eq!(first, second);
});
