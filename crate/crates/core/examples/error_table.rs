//! Error table of a checkpoint against classical WENO over initial
//! conditions and grid sizes. Without a checkpoint a freshly initialised
//! policy is scored.
//!
//! Usage: `cargo run --release --example error_table [burgers|euler] [checkpoint]`

use bptts::env::System;
use bptts::eval::{self, EvalConfig};
use bptts::ic;
use bptts::policy::{PolicyAgent, PolicyParams};

pub fn run_example(args: &[String]) -> Result<(), Box<dyn std::error::Error>> {
    let mut args = args.iter().cloned();
    let system: System = args.next().as_deref().unwrap_or("burgers").parse()?;
    let params = match args.next() {
        Some(path) => PolicyParams::load(path.as_ref())?,
        None => PolicyParams::init(0),
    };
    let (names, grids): (&[&str], &[usize]) = match system {
        System::Burgers => (&ic::BURGERS_NAMED, &[64, 128]),
        System::Euler => (&["sod", "lax"], &[64, 128]),
    };
    let ics = names.iter().map(|n| ic::named(n)).collect::<Result<Vec<_>, _>>()?;
    let agent = PolicyAgent {
        params: &params,
        normalize: true,
    };
    let rows = eval::error_table(&agent, &ics, grids, &EvalConfig::default())?;
    let show = |v: Option<f64>| v.map_or("diverged".to_string(), |e| format!("{e:.4e}"));
    println!("{:<20}{:>6}{:>14}{:>14}", "ic", "N", "policy", "weno");
    for r in rows {
        println!("{:<20}{:>6}{:>14}{:>14}", r.ic, r.n, show(r.rl_error), show(r.weno_error));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example(&std::env::args().skip(1).collect::<Vec<_>>())
}
