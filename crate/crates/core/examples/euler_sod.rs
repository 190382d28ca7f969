//! The Sod shock tube with classical WENO: density profile at t = 0.2 and
//! the error against the refined reference.
//!
//! Usage: `cargo run --release --example euler_sod [N]`

use bptts::env::{self, WenoAgent};
use bptts::eval::{self, EvalConfig, Reference};
use bptts::ic;

pub fn run_example(args: &[String]) -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = args.first().cloned().map(|s| s.parse()).transpose()?.unwrap_or(128);
    let sod = ic::named("sod")?;
    let cfg = EvalConfig::default();
    let cmp = eval::compare(&sod, n, &WenoAgent::default(), &cfg, None)?;
    println!(
        "sod N={n}: {} steps to t={}, L2 error {:.4e}",
        cmp.times.len() - 1,
        sod.t_max,
        cmp.final_weno().unwrap_or(f64::NAN)
    );

    let mut reference = Reference::new(&sod, n, &cfg.reference)?;
    let state = reference.advance_to(sod.t_max)?;
    let grid = sod.grid(n)?;
    let x = grid.centers();
    println!("{:>8} {:>10} {:>10} {:>10}", "x", "rho", "u", "p");
    for i in (0..n).step_by(n / 16) {
        let cell = [state.components[0][i], state.components[1][i], state.components[2][i]];
        let [rho, u, p] = env::conserved_to_primitive(cell, env::GAMMA)?;
        println!("{:>8.4} {rho:>10.5} {u:>10.5} {p:>10.5}", x[i]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example(&std::env::args().skip(1).collect::<Vec<_>>())
}
