//! The published config schema must match the config types.

#[test]
fn published_schema_is_current() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/config.schema.json");
    let expected = ministl::harness::config::schema_json();
    if std::env::var_os("MINISTL_BLESS").is_some() {
        std::fs::write(path, format!("{expected}\n")).unwrap();
    }
    let published = std::fs::read_to_string(path).expect("docs/config.schema.json exists");
    assert_eq!(published.trim_end(), expected, "regenerate with MINISTL_BLESS=1 cargo test --test schema");
}

#[test]
fn shipped_configs_validate() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "yaml") {
            let cfg = ministl::harness::ExperimentConfig::load(&path).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
