use presenzia_service::config::{parse_config, ConfigFormat};
use std::path::PathBuf;

#[test]
fn service_config_seeds() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/service_config");
    let mut names = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        let text = std::fs::read_to_string(&p).unwrap();
        let format = if name.starts_with("json") { ConfigFormat::Json } else { ConfigFormat::Toml };
        let r = parse_config(&text, format);
        assert_eq!(r.is_ok(), !matches!(name.as_str(), "unknown_key" | "short_token"), "{name}: {r:?}");
        names.push(name);
    }
    assert!(names.len() >= 4);
}
