#![no_main]
use libfuzzer_sys::fuzz_target;
use presenzia_core::metric::{calibrate_distances, parse_labeled_pairs_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(samples) = parse_labeled_pairs_jsonl(text) {
        let scored: Vec<(f64, bool)> = samples.iter().map(|s| s.scored()).collect();
        assert!(scored.iter().all(|(d, _)| d.is_finite() && *d >= 0.0));
        if let Ok(r) = calibrate_distances(&scored) {
            assert!((0.0..=1.0).contains(&r.accuracy));
        }
    }
});
