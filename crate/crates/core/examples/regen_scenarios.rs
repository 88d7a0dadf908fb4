//! Regenerate the scenario files under `scenarios/` from the built-in
//! presets. Run after editing `scenario::presets`:
//!
//! ```text
//! cargo run -p infoplan --example regen_scenarios
//! ```
//!
//! A test keeps the files and the presets in lockstep, so forgetting this
//! step fails the suite rather than shipping stale files.

use std::path::Path;

use infoplan::scenario::presets;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    std::fs::create_dir_all(&dir)?;
    for name in presets::NAMES {
        let cfg = presets::preset(name).expect("roster names resolve");
        let path = dir.join(format!("{name}.toml"));
        std::fs::write(&path, cfg.to_toml_string())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
