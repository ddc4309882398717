#![no_main]
use libfuzzer_sys::fuzz_target;
use presenzia_core::Detection;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = Detection::from_json(text) {
        assert!((0.0..=1.0).contains(&d.probability));
        let again: Detection = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(again, d);
    }
});
