#![no_main]
use libfuzzer_sys::fuzz_target;
use presenzia_core::Embedding;

fuzz_target!(|data: &[u8]| {
    if let Ok(e) = Embedding::from_le_bytes(data) {
        assert!((e.norm() - 1.0).abs() < 1e-6);
        let again = Embedding::from_le_bytes(&e.to_le_bytes()).unwrap();
        assert!(presenzia_core::squared_l2_distance(&e, &again) < 1e-10);
    }
});
