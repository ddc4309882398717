#![no_main]
use libfuzzer_sys::fuzz_target;
use presenzia_core::gallery::{parse_gallery_jsonl, Gallery};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if parse_gallery_jsonl(text).is_ok() {
        let g = Gallery::import_jsonl(text).expect("parsed entries import");
        let again = Gallery::import_jsonl(&g.export_jsonl()).unwrap();
        assert_eq!(again.export_jsonl(), g.export_jsonl());
    }
});
