#![no_main]
use libfuzzer_sys::fuzz_target;
use presenzia_core::imaging::{decode_frame, MAX_FRAME_SIDE};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_frame(data) {
        assert!(img.width() >= 1 && img.height() >= 1);
        assert!(img.width() <= MAX_FRAME_SIDE && img.height() <= MAX_FRAME_SIDE);
    }
});
