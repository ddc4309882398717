#![no_main]
use libfuzzer_sys::fuzz_target;
use presenzia_core::evaluation::{format_pair_list, parse_pair_list};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(pairs) = parse_pair_list(text) {
        let again = parse_pair_list(&format_pair_list(&pairs)).expect("formatted list parses");
        let strip = |ps: &[presenzia_core::evaluation::PairRef]| ps.iter().map(|p| (p.a.clone(), p.b.clone(), p.same)).collect::<Vec<_>>();
        assert_eq!(strip(&pairs), strip(&again));
    }
});
