#![no_main]
use libfuzzer_sys::fuzz_target;
use presenzia_service::config::{parse_config, ConfigFormat};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for format in [ConfigFormat::Toml, ConfigFormat::Json] {
        if let Ok(cfg) = parse_config(text, format) {
            cfg.validate().expect("parsed configs are validated");
        }
    }
});
