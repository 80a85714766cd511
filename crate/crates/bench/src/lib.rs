//! Shared fixtures for the benchmarks in `benches/`.

use std::path::Path;

use nldelay::{Model, Scenario};

/// Loads a bundled scenario by file stem and builds its model.
pub fn bundled(name: &str) -> (Scenario, Model) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    let scenario = Scenario::load(&path).expect("bundled scenario loads");
    let model = scenario.build().expect("bundled scenario builds");
    (scenario, model)
}
