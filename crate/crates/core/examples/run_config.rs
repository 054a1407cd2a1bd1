//! Drives an experiment from a TOML config the way the command-line tool does.
//! Pass a config path to run it instead of the built-in one.

use isingcx::experiment::{run, ExperimentConfig};

fn main() -> isingcx::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::from_toml(
            r#"
kind = "fk-relax"
[model]
d = 1
beta = 0.5
h = 0.2
[options]
sizes = [1, 2, 4, 8, 16]
"#,
        )?,
    };
    let report = run(&config)?;
    print!("{}", report.csv()?);
    println!("{}", report.json(&config)?);
    Ok(())
}
