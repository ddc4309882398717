#![no_main]
use libfuzzer_sys::fuzz_target;
use presenzia_core::directory::parse_employee_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_employee_csv(text) {
        for r in &records {
            r.validate().expect("parsed records are valid");
        }
    }
});
