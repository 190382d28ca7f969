//! Records a small expression on the tape, pulls gradients back through it,
//! and compares them with central differences.
//!
//! Usage: `cargo run --release --example autodiff`

use bptts::tape::Tape;
use bptts::Real;

// Generic over the scalar so the same code runs on plain f64 for the
// finite-difference side.
fn f<T: Real>(x: T, y: T) -> T {
    let a = (x * y).relu() + x.square().sqrt();
    let b = (y - 0.5).abs().max(x / y);
    (a * b).exp() - x
}

pub fn run_example(_args: &[String]) -> Result<(), Box<dyn std::error::Error>> {
    let (x0, y0) = (0.7, 1.3);
    let tape = Tape::new();
    let x = tape.leaf(x0, true)?;
    let y = tape.leaf(y0, true)?;
    let out = f(x, y);
    let grads = tape.backward(out)?;
    println!("f({x0}, {y0}) = {:.12}   ({} nodes)", out.value(), tape.len());

    let h = 1e-6;
    let fd_x = (f(x0 + h, y0) - f(x0 - h, y0)) / (2.0 * h);
    let fd_y = (f(x0, y0 + h) - f(x0, y0 - h)) / (2.0 * h);
    let gx = grads.wrt(x).unwrap_or(0.0);
    let gy = grads.wrt(y).unwrap_or(0.0);
    println!("df/dx tape {gx:.10}  fd {fd_x:.10}");
    println!("df/dy tape {gy:.10}  fd {fd_y:.10}");
    for (kind, count) in tape.kind_histogram() {
        println!("  {kind:>6} x{count}");
    }
    if (gx - fd_x).abs() > 1e-6 || (gy - fd_y).abs() > 1e-6 {
        return Err("tape gradient disagrees with finite differences".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example(&std::env::args().skip(1).collect::<Vec<_>>())
}
