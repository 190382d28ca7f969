//! Scores a policy and classical WENO on randomly generated Burgers
//! problems and reports the rank correlation of their errors.
//!
//! Usage: `cargo run --release --example random_suite [count] [checkpoint]`

use bptts::eval::{self, EvalConfig};
use bptts::policy::{PolicyAgent, PolicyParams};

pub fn run_example(args: &[String]) -> Result<(), Box<dyn std::error::Error>> {
    let mut args = args.iter().cloned();
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);
    let params = match args.next() {
        Some(path) => PolicyParams::load(path.as_ref())?,
        None => PolicyParams::init(0),
    };
    let agent = PolicyAgent {
        params: &params,
        normalize: true,
    };
    // Grids are capped at 128 cells to keep the example quick.
    let rows = eval::random_suite(&agent, count, 0, &EvalConfig::default(), Some(128))?;
    let mut rl = Vec::new();
    let mut weno = Vec::new();
    for r in &rows {
        match (r.rl_error, r.weno_error) {
            (Some(a), Some(b)) => {
                rl.push(a);
                weno.push(b);
            }
            _ => println!("{:>4} {:<20} N={:<5} diverged", r.index, r.family, r.n),
        }
    }
    println!(
        "{} environments, {} scored, spearman(policy, weno) = {:.4}",
        rows.len(),
        rl.len(),
        eval::spearman(&rl, &weno)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example(&std::env::args().skip(1).collect::<Vec<_>>())
}
