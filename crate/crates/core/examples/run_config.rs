//! Drives a run from a flat TOML configuration, the same way the `bptts`
//! binary does.
//!
//! Usage: `cargo run --release --example run_config [config.toml]`

use bptts::config::{self, RunConfig};

const DEFAULT: &str = r#"
command = "table"
system = "euler"
ics = ["sod", "sod2"]
grids = [64, 128]
baseline = true
"#;

pub fn run_example(args: &[String]) -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = match args.first().cloned() {
        Some(path) => RunConfig::load(path.as_ref())?,
        None => RunConfig::from_toml(DEFAULT)?,
    };
    if cfg.out_dir == RunConfig::default().out_dir {
        cfg.out_dir = std::env::temp_dir().join("bptts_run_config");
    }
    cfg.resolve();
    println!("--- resolved config ---\n{}", cfg.to_toml()?);
    let outcome = config::execute(&cfg)?;
    print!("{}", outcome.summary);
    for f in outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example(&std::env::args().skip(1).collect::<Vec<_>>())
}
