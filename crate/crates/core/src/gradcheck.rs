//! Finite-difference verification of the full BPTTS gradient, plus local
//! checks of every adjoint rule the tape recorded.
//!
//! Relative error with an absolute floor is
//! `max(|a - b| - abs_floor, 0) / max(|a|, |b|)`; an entry passes when it is
//! at most `rel_tol`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::DtMode;
use crate::error::Result;
use crate::eval::ReferenceConfig;
use crate::ic;
use crate::policy::{self, PolicyParams, Shape, INPUTS, OUTPUTS};
use crate::tape::{forward_rule, OpKind, Tape, Var};
use crate::train::{record_into, rollout, Episode, RolloutOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub n: usize,
    pub steps: usize,
    pub dt: f64,
    pub seeds: Vec<u64>,
    pub h: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub hidden: usize,
    /// Check at most this many parameters per group (evenly strided);
    /// `None` checks all of them.
    pub max_per_group: Option<usize>,
    pub options: RolloutOptions,
    /// Sign-flip one adjoint rule before differentiating.
    pub inject: Option<OpKind>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            n: 16,
            steps: 5,
            dt: 0.0004,
            seeds: vec![0, 1, 2],
            h: 1e-6,
            rel_tol: 1e-6,
            abs_floor: 1e-10,
            hidden: policy::HIDDEN,
            max_per_group: None,
            options: RolloutOptions::default(),
            inject: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub name: &'static str,
    pub checked: usize,
    pub worst_rel: f64,
    pub worst_index: usize,
    pub failures: usize,
    /// Largest `|dR/dθ|` in the group.
    pub max_grad: f64,
    /// Entries with `|dR/dθ| > 1e-8`.
    pub significant: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KindReport {
    pub kind: OpKind,
    pub samples: usize,
    pub worst_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    pub seed: u64,
    pub objective: f64,
    pub groups: Vec<GroupReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub cases: Vec<CaseReport>,
    pub kinds: Vec<KindReport>,
    pub max_rel: f64,
    pub passed: bool,
}

impl GradcheckReport {
    /// Node kind whose local adjoint disagrees most with finite differences.
    pub fn worst_kind(&self) -> Option<&KindReport> {
        self.kinds
            .iter()
            .max_by(|a, b| a.worst_rel.total_cmp(&b.worst_rel))
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.cases {
            s += &format!("seed {} objective {:.6e}\n", c.seed, c.objective);
            for g in &c.groups {
                s += &format!(
                    "  {:<7} checked {:>6}  max |g| {:.2e}  |g|>1e-8: {:>6}  worst rel {:.3e} (param {})  failures {}\n",
                    g.name, g.checked, g.max_grad, g.significant, g.worst_rel, g.worst_index, g.failures
                );
            }
        }
        s += "local adjoint rules:\n";
        for k in &self.kinds {
            s += &format!(
                "  {:<14} samples {:>4}  worst rel {:.3e}\n",
                k.kind.name(),
                k.samples,
                k.worst_rel
            );
        }
        if let Some(k) = self.worst_kind() {
            s += &format!("worst offender: {} ({:.3e})\n", k.kind.name(), k.worst_rel);
        }
        s += &format!(
            "max relative error {:.3e}: {}\n",
            self.max_rel,
            if self.passed { "PASS" } else { "FAIL" }
        );
        s
    }
}

/// Tolerance for the per-kind local adjoint checks.
pub const LOCAL_TOL: f64 = 1e-4;

pub fn rel_err(a: f64, b: f64, abs_floor: f64) -> f64 {
    let d = (a - b).abs() - abs_floor;
    if d <= 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

/// Random parameters with every layer populated (a zero head would leave
/// the hidden layers without gradient).
pub fn random_params(shape: Shape, seed: u64) -> PolicyParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut p = PolicyParams::init_with_shape(shape, seed);
    let head = p.groups()[2].range.clone();
    for v in &mut p.values_mut()[head] {
        *v = rng.random_range(-0.3..0.3);
    }
    for (l, g) in p.groups().into_iter().take(2).enumerate() {
        let biases = g.range.end - shape.dims[l + 1]..g.range.end;
        for v in &mut p.values_mut()[biases] {
            *v = rng.random_range(-0.1..0.1);
        }
    }
    p
}

/// Compares the recorded adjoint rule of each elementary kind with central
/// differences of its forward rule, on values sampled from `tape`.
pub fn check_local_rules(tape: &Tape, per_kind: usize) -> Vec<KindReport> {
    let mut out = Vec::new();
    for kind in OpKind::ELEMENTARY {
        if kind == OpKind::Sum {
            continue;
        }
        let samples = tape.samples(kind, per_kind);
        if samples.is_empty() {
            continue;
        }
        let mut worst: f64 = 0.0;
        for &(a, b, aux, out_v) in &samples {
            let (da, db) = tape.adjoint_rule(kind, a, b, aux, out_v);
            let h = 1e-6 * a.abs().max(1.0);
            // skip points within h of a kink
            let kinked = match kind {
                OpKind::Abs | OpKind::Relu => a.abs() < 2.0 * h,
                OpKind::Min | OpKind::Max => (a - b).abs() < 2.0 * h.max(1e-6 * b.abs()),
                _ => false,
            };
            if kinked {
                continue;
            }
            let fa = (forward_rule(kind, a + h, b, aux) - forward_rule(kind, a - h, b, aux)) / (2.0 * h);
            worst = worst.max(rel_err(da, fa, 1e-7));
            if kind.arity() == Some(2) {
                let hb = 1e-6 * b.abs().max(1.0);
                let fb =
                    (forward_rule(kind, a, b + hb, aux) - forward_rule(kind, a, b - hb, aux)) / (2.0 * hb);
                worst = worst.max(rel_err(db, fb, 1e-7));
            }
        }
        out.push(KindReport {
            kind,
            samples: samples.len(),
            worst_rel: worst,
        });
    }
    let sum_ok = {
        let t = Tape::new();
        t.inject_sign_flip(tape.injected_fault());
        let x = t.leaf(0.5, true).expect("finite");
        let s = t.sum(&[x, x * 2.0]);
        t.backward(s).map(|g| g.get(0)).unwrap_or(f64::NAN)
    };
    out.push(KindReport {
        kind: OpKind::Sum,
        samples: 1,
        worst_rel: rel_err(sum_ok, 3.0, 1e-12),
    });
    out.push(check_mlp_vjp(tape.injected_fault()));
    out
}

/// Pullback of the batched network versus finite differences of its logits.
fn check_mlp_vjp(fault: Option<OpKind>) -> KindReport {
    let shape = Shape::with_hidden(16);
    let params = random_params(shape, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows = 3;
    let x: Vec<[f64; INPUTS]> = (0..rows)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let c: Vec<f64> = (0..rows * OUTPUTS).map(|_| rng.random_range(-1.0..1.0)).collect();

    let tape = Tape::new();
    tape.inject_sign_flip(fault);
    let block = tape.register_block(params.values());
    let feats: Vec<[Var<'_>; INPUTS]> = x
        .iter()
        .map(|r| std::array::from_fn(|k| tape.leaf(r[k], true).expect("finite")))
        .collect();
    let logits = policy::record_logits(&tape, block, &params, &feats).expect("finite logits");
    let terms: Vec<Var<'_>> = logits
        .iter()
        .flatten()
        .zip(&c)
        .map(|(z, ck)| *z * *ck)
        .collect();
    let obj = tape.sum(&terms);
    let g = tape.backward(obj).expect("own root");

    let f = |p: &PolicyParams, x: &[[f64; INPUTS]]| -> f64 {
        p.logits(x)
            .expect("finite")
            .iter()
            .flatten()
            .zip(&c)
            .map(|(z, ck)| z * ck)
            .sum()
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    for i in (0..params.len()).step_by(7) {
        let mut p = params.clone();
        p.values_mut()[i] += h;
        let up = f(&p, &x);
        p.values_mut()[i] -= 2.0 * h;
        let dn = f(&p, &x);
        worst = worst.max(rel_err(g.block(&block)[i], (up - dn) / (2.0 * h), 1e-8));
        samples += 1;
    }
    for r in 0..rows {
        for k in 0..INPUTS {
            let mut xp = x.clone();
            xp[r][k] += h;
            let up = f(&params, &xp);
            xp[r][k] -= 2.0 * h;
            let dn = f(&params, &xp);
            let a = g.wrt(feats[r][k]).expect("trainable");
            worst = worst.max(rel_err(a, (up - dn) / (2.0 * h), 1e-8));
            samples += 1;
        }
    }
    KindReport {
        kind: OpKind::Opaque,
        samples,
        worst_rel: worst,
    }
}

fn strided(range: std::ops::Range<usize>, max: Option<usize>) -> Vec<usize> {
    let len = range.len();
    match max {
        Some(m) if m < len => {
            let stride = len.div_ceil(m);
            range.step_by(stride).collect()
        }
        _ => range.collect(),
    }
}

/// Runs the full check for every configured seed.
pub fn run(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let shape = Shape::with_hidden(cfg.hidden);
    let mut cases = Vec::new();
    let mut kinds: Vec<KindReport> = Vec::new();
    let mut max_rel: f64 = 0.0;
    let mut passed = true;
    for &seed in &cfg.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ic = ic::random_fourier(&mut rng);
        let ep = Episode::new(
            &ic,
            cfg.n,
            DtMode::Fixed(cfg.dt),
            cfg.steps,
            cfg.options.reward,
            &ReferenceConfig::default(),
        )?;
        let params = random_params(shape, seed);

        let (objective, analytic) = {
            let tape = Tape::new();
            tape.inject_sign_flip(cfg.inject);
            let (r, g) = record_into(&tape, &ep, &params, &cfg.options)?;
            let local = check_local_rules(&tape, 64);
            for k in local {
                match kinds.iter_mut().find(|x| x.kind == k.kind) {
                    Some(x) => {
                        x.samples += k.samples;
                        x.worst_rel = x.worst_rel.max(k.worst_rel);
                    }
                    None => kinds.push(k),
                }
            }
            (r.total, g.into_vec())
        };

        let mut groups = Vec::new();
        for g in params.groups() {
            let mut rep = GroupReport {
                name: g.name,
                checked: 0,
                worst_rel: 0.0,
                worst_index: g.range.start,
                failures: 0,
                max_grad: 0.0,
                significant: 0,
            };
            for i in strided(g.range.clone(), cfg.max_per_group) {
                let mut p = params.clone();
                p.values_mut()[i] += cfg.h;
                let up = rollout(&ep, &p, &cfg.options)?.total;
                p.values_mut()[i] = params.values()[i] - cfg.h;
                let dn = rollout(&ep, &p, &cfg.options)?.total;
                let fd = (up - dn) / (2.0 * cfg.h);
                let a = analytic[i];
                let e = rel_err(a, fd, cfg.abs_floor);
                rep.max_grad = rep.max_grad.max(a.abs());
                if a.abs() > 1e-8 {
                    rep.significant += 1;
                }
                if e > cfg.rel_tol {
                    rep.failures += 1;
                    passed = false;
                }
                if e > rep.worst_rel {
                    rep.worst_rel = e;
                    rep.worst_index = i;
                }
                rep.checked += 1;
            }
            max_rel = max_rel.max(rep.worst_rel);
            groups.push(rep);
        }
        cases.push(CaseReport {
            seed,
            objective,
            groups,
        });
    }
    let local_ok = kinds.iter().all(|k| k.worst_rel <= LOCAL_TOL);
    Ok(GradcheckReport {
        cases,
        kinds,
        max_rel,
        passed: passed && local_ok,
    })
}
