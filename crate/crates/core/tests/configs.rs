use std::path::Path;

use wwlab::experiments::ExperimentConfig;

#[test]
fn shipped_configs_parse_and_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let src = std::fs::read_to_string(&path).unwrap();
            let cfg = ExperimentConfig::from_toml(&src).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.resolve().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
