//! Classical WENO5 on the Burgers test problems, scored against the refined
//! reference across grid sizes.
//!
//! Usage: `cargo run --release --example weno_baseline [ic ...]`

use bptts::env::WenoAgent;
use bptts::eval::{self, EvalConfig};
use bptts::ic;

pub fn run_example(args: &[String]) -> Result<(), Box<dyn std::error::Error>> {
    let mut names: Vec<String> = args.to_vec();
    if names.is_empty() {
        names = vec!["standing_sine".into(), "rarefaction".into(), "tophat".into()];
    }
    let grids = [64, 128, 256];
    let cfg = EvalConfig::default();
    println!("{:<20}{:>14}{:>14}{:>14}", "ic", "N=64", "N=128", "N=256");
    for name in &names {
        let spec = ic::named(name)?;
        let rows = eval::error_table(&WenoAgent::default(), &[spec], &grids, &cfg)?;
        print!("{name:<20}");
        for r in &rows {
            match r.weno_error {
                Some(e) => print!("{e:>14.4e}"),
                None => print!("{:>14}", "diverged"),
            }
        }
        println!();
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example(&std::env::args().skip(1).collect::<Vec<_>>())
}
