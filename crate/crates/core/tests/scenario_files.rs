//! The TOML files under `scenarios/` are the documented entry points for the
//! CLI. They are generated from `scenario::presets` and must stay in
//! lockstep with it; regenerate with
//! `cargo run -p infoplan --example regen_scenarios` after editing a preset.

use std::collections::BTreeSet;
use std::path::PathBuf;

use infoplan::scenario::{presets, ScenarioConfig};

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn every_preset_has_a_matching_file() {
    for name in presets::NAMES {
        let path = scenarios_dir().join(format!("{name}.toml"));
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| {
            panic!(
                "{} unreadable ({e}); regenerate with \
                 `cargo run -p infoplan --example regen_scenarios`",
                path.display()
            )
        });
        let parsed = ScenarioConfig::from_toml_str(&text)
            .unwrap_or_else(|e| panic!("{} does not parse: {e}", path.display()));
        assert_eq!(
            parsed,
            presets::preset(name).unwrap(),
            "scenarios/{name}.toml drifted from the built-in preset; regenerate it"
        );
    }
}

#[test]
fn no_stray_scenario_files() {
    let on_disk: BTreeSet<String> = std::fs::read_dir(scenarios_dir())
        .expect("scenarios/ exists")
        .map(|entry| entry.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    let expected: BTreeSet<String> = presets::NAMES
        .iter()
        .map(|name| format!("{name}.toml"))
        .collect();
    assert_eq!(on_disk, expected);
}
