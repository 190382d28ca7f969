use bptts::tape::{forward_rule, local_partials, OpKind, Tape};
use bptts::Real;
use proptest::prelude::*;

/// A small random program over two inputs. Each instruction combines two
/// earlier registers with one of the smooth binary/unary operations.
#[derive(Debug, Clone)]
enum Ins {
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    DivSafe(usize, usize),
    Exp(usize),
    SqrtSafe(usize),
    Square(usize),
    Scale(usize, f64),
}

fn ins() -> impl Strategy<Value = Ins> {
    let r = 0usize..64;
    prop_oneof![
        (r.clone(), r.clone()).prop_map(|(a, b)| Ins::Add(a, b)),
        (r.clone(), r.clone()).prop_map(|(a, b)| Ins::Sub(a, b)),
        (r.clone(), r.clone()).prop_map(|(a, b)| Ins::Mul(a, b)),
        (r.clone(), r.clone()).prop_map(|(a, b)| Ins::DivSafe(a, b)),
        r.clone().prop_map(Ins::Exp),
        r.clone().prop_map(Ins::SqrtSafe),
        r.clone().prop_map(Ins::Square),
        (r, -2.0..2.0f64).prop_map(|(a, c)| Ins::Scale(a, c)),
    ]
}

fn run<T: Real>(x: T, y: T, prog: &[Ins]) -> T {
    let mut regs = vec![x, y];
    for i in prog {
        let n = regs.len();
        let g = |k: usize| regs[k % n];
        let v = match *i {
            Ins::Add(a, b) => g(a) + g(b),
            Ins::Sub(a, b) => g(a) - g(b),
            Ins::Mul(a, b) => g(a) * g(b) * 0.5,
            Ins::DivSafe(a, b) => g(a) / (g(b).square() + 1.0),
            Ins::Exp(a) => (g(a) * 0.1).exp(),
            Ins::SqrtSafe(a) => (g(a).square() + 1.0).sqrt(),
            Ins::Square(a) => g(a).square() * 0.25,
            Ins::Scale(a, c) => g(a) * c,
        };
        // Keep magnitudes bounded so finite differences stay meaningful.
        regs.push(v / (v.square() + 1.0).sqrt());
    }
    *regs.last().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_programs_match_central_differences(
        x in -1.5..1.5f64,
        y in -1.5..1.5f64,
        prog in prop::collection::vec(ins(), 1..24),
    ) {
        let tape = Tape::new();
        let (vx, vy) = (tape.leaf(x, true).unwrap(), tape.leaf(y, true).unwrap());
        let out = run(vx, vy, &prog);
        prop_assert_eq!(out.value(), run(x, y, &prog));
        let g = tape.backward(out).unwrap();
        let h = 1e-6;
        let fdx = (run(x + h, y, &prog) - run(x - h, y, &prog)) / (2.0 * h);
        let fdy = (run(x, y + h, &prog) - run(x, y - h, &prog)) / (2.0 * h);
        let (gx, gy) = (g.wrt(vx).unwrap(), g.wrt(vy).unwrap());
        prop_assert!((gx - fdx).abs() <= 1e-7 + 1e-6 * fdx.abs(), "dx {} vs {}", gx, fdx);
        prop_assert!((gy - fdy).abs() <= 1e-7 + 1e-6 * fdy.abs(), "dy {} vs {}", gy, fdy);
    }

    #[test]
    fn gradient_is_linear_in_the_output(
        x in -1.0..1.0f64,
        y in -1.0..1.0f64,
        c in -3.0..3.0f64,
        p in prop::collection::vec(ins(), 1..12),
        q in prop::collection::vec(ins(), 1..12),
    ) {
        let grads = |which: u8| {
            let tape = Tape::new();
            let (vx, vy) = (tape.leaf(x, true).unwrap(), tape.leaf(y, true).unwrap());
            let out = match which {
                0 => run(vx, vy, &p),
                1 => run(vx, vy, &q),
                _ => run(vx, vy, &p) * c + run(vx, vy, &q),
            };
            let g = tape.backward(out).unwrap();
            [g.wrt(vx).unwrap(), g.wrt(vy).unwrap()]
        };
        let (a, b, ab) = (grads(0), grads(1), grads(2));
        for k in 0..2 {
            let want = c * a[k] + b[k];
            prop_assert!((ab[k] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn local_partials_match_forward_differences(
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        aux in -2.0..2.0f64,
        k in 0..OpKind::ELEMENTARY.len(),
    ) {
        let kind = OpKind::ELEMENTARY[k];
        prop_assume!(kind != OpKind::Sum);
        // Stay away from kinks, ties and domain edges.
        let (a, b) = match kind {
            OpKind::Sqrt => (a.abs() + 0.1, b),
            OpKind::Div => (a, if b.abs() < 0.1 { 0.5 } else { b }),
            _ => (a, b),
        };
        prop_assume!(a.abs() > 1e-3 && (a - b).abs() > 1e-3);
        let out = forward_rule(kind, a, b, aux);
        let d = local_partials(kind, a, b, aux, out);
        let d = [d.0, d.1];
        let h = 1e-6;
        let fa = (forward_rule(kind, a + h, b, aux) - forward_rule(kind, a - h, b, aux)) / (2.0 * h);
        prop_assert!((d[0] - fa).abs() <= 1e-6 * (1.0 + fa.abs()), "{} d/da {} vs {}", kind, d[0], fa);
        if kind.arity() == Some(2) {
            let fb = (forward_rule(kind, a, b + h, aux) - forward_rule(kind, a, b - h, aux)) / (2.0 * h);
            prop_assert!((d[1] - fb).abs() <= 1e-6 * (1.0 + fb.abs()), "{} d/db {} vs {}", kind, d[1], fb);
        }
    }

    #[test]
    fn sum_equals_left_fold(vals in prop::collection::vec(-10.0..10.0f64, 1..40)) {
        let tape = Tape::new();
        let leaves: Vec<_> = vals.iter().map(|&v| tape.leaf(v, true).unwrap()).collect();
        let s = tape.sum(&leaves);
        let fold = vals.iter().skip(1).fold(vals[0], |acc, v| acc + v);
        prop_assert_eq!(s.value(), fold);
        let g = tape.backward(s).unwrap();
        for l in &leaves {
            prop_assert_eq!(g.wrt(*l), Some(1.0));
        }
    }
}

#[test]
fn shared_leaf_accumulates_over_many_uses() {
    let tape = Tape::new();
    let x = tape.leaf(1.1, true).unwrap();
    let mut acc = x;
    for _ in 0..9 {
        acc = acc * x;
    }
    let g = tape.backward(acc).unwrap();
    // d/dx x^10 = 10 x^9
    let want = 10.0 * 1.1f64.powi(9);
    assert!((g.wrt(x).unwrap() - want).abs() < 1e-12 * want);
}

#[test]
fn operands_precede_consumers() {
    let tape = Tape::new();
    let x = tape.leaf(0.3, true).unwrap();
    let y = (x * x).exp() + x.relu();
    assert!(y.value().is_finite());
    let g = tape.backward(y).unwrap();
    assert_eq!(g.nodes_visited(), tape.len());
}
