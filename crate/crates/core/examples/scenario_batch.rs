// Scenario documents driving every mode, run as one batch the way the
// `tendonsim` binary does, with CSV, SVG and summary output per scenario.

use std::path::{Path, PathBuf};

use tendonsim::scenario::{parse_scenario, run, RunReport};

pub const SCENARIOS: [&str; 6] = [
    "regulate.toml",
    "probe.toml",
    "sweep_mu.toml",
    "sweep_gamma.toml",
    "identify.toml",
    "equilibria.toml",
];

pub fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/scenarios")
}

/// Runs every bundled scenario into `out`.
pub fn run_all(out: &Path) -> tendonsim::Result<Vec<RunReport>> {
    let mut reports = Vec::new();
    for file in SCENARIOS {
        let doc = std::fs::read_to_string(scenario_dir().join(file))?;
        let scenario = parse_scenario(&doc)?;
        let report = run(&scenario, &out.join(&scenario.name))?;
        print!("{}", report.summary());
        reports.push(report);
    }
    Ok(reports)
}

pub fn run_example() -> tendonsim::Result<Vec<RunReport>> {
    run_all(&std::env::temp_dir().join("tendonsim-scenarios"))
}

fn main() -> tendonsim::Result<()> {
    run_example().map(|_| ())
}
