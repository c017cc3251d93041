//! Writes the built-in scenarios as TOML files into the given directory
//! (default `scenarios`).

use istc_core::presets;
use istc_core::scenario::serialize_scenario;

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "scenarios".into());
    std::fs::create_dir_all(&dir)?;
    for s in presets::all() {
        let path = format!("{dir}/{}.toml", s.name);
        std::fs::write(&path, serialize_scenario(&s))?;
        println!("{path}");
    }
    Ok(())
}
