#![no_main]

use libfuzzer_sys::fuzz_target;
use tsb_harness::certify::CertifyDocument;

fuzz_target!(|data: &[u8]| {
    if let Ok(doc) = serde_json::from_slice::<CertifyDocument>(data) {
        let _ = doc.report.as_ref().map(|r| r.satisfies_ndsc(1e-8));
        let text = doc.to_json();
        let again: CertifyDocument = serde_json::from_str(&text).expect("written certificate parses");
        assert_eq!(again.to_json(), text);
    }
});
