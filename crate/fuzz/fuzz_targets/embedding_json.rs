#![no_main]
use libfuzzer_sys::fuzz_target;
use presenzia_core::Embedding;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(e) = Embedding::from_json(text) {
        assert!((e.norm() - 1.0).abs() < 1e-6);
        assert_eq!(Embedding::from_json(&e.to_json()).unwrap(), e);
    }
});
