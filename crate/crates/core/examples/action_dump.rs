//! Sub-stencil weights chosen by a policy next to the classical WENO weights
//! at the second-to-last step of a tophat evaluation.
//!
//! Usage: `cargo run --release --example action_dump [checkpoint]`

use bptts::eval::{self, EvalConfig, StepQuery};
use bptts::ic;
use bptts::policy::{PolicyAgent, PolicyParams};

pub fn run_example(args: &[String]) -> Result<(), Box<dyn std::error::Error>> {
    let params = match args.first().cloned() {
        Some(path) => PolicyParams::load(path.as_ref())?,
        None => PolicyParams::init(0),
    };
    let agent = PolicyAgent {
        params: &params,
        normalize: true,
    };
    let tophat = ic::named("tophat")?;
    let dump = eval::action_dump(&tophat, 64, &agent, &EvalConfig::default(), StepQuery::SecondToLast)?;
    println!("step {} at t = {:.5}", dump.step, dump.time);
    println!("{:>8}  {:^26}  {:^26}", "x", "policy w+", "weno w+");
    for r in dump.rows.iter().step_by(4) {
        let fmt = |w: [f64; 3]| format!("{:.3} {:.3} {:.3}", w[0], w[1], w[2]);
        println!("{:>8.4}  {:^26}  {:^26}", r.x, fmt(r.rl_plus), fmt(r.weno_plus));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example(&std::env::args().skip(1).collect::<Vec<_>>())
}
