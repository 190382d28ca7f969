//! Checks the BPTTS gradient against central finite differences.
//!
//! Usage: `cargo run --release --example gradcheck [max_per_group]`

use bptts::gradcheck::{self, GradcheckConfig};

pub fn run_example(args: &[String]) -> Result<(), Box<dyn std::error::Error>> {
    let max_per_group = args.first().cloned().map(|s| s.parse()).transpose()?;
    let cfg = GradcheckConfig {
        max_per_group,
        ..GradcheckConfig::default()
    };
    let t = std::time::Instant::now();
    let report = gradcheck::run(&cfg)?;
    print!("{}", report.render());
    println!("elapsed {:.1}s", t.elapsed().as_secs_f64());
    if !report.passed {
        return Err(format!("gradient check failed, worst relative error {:.3e}", report.max_rel).into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example(&std::env::args().skip(1).collect::<Vec<_>>()) {
        eprintln!("{e}");
        std::process::exit(4);
    }
}
