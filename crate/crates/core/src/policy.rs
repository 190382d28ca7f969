//! Shared per-interface policy: a 10 -> 128 -> 128 -> 6 ReLU network whose
//! output is split into two 3-way softmaxes (weights for the plus and minus
//! stencils).
//!
//! The network is evaluated for all interfaces of a timestep as one batched
//! matrix product. On a tape the batch becomes a single opaque node whose
//! pullback is written out by hand; the softmax heads are recorded with
//! ordinary scalar operations.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Actions, Agent, Observations};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tape::{OpaqueOp, ParamBlock, Tape, Var};

pub const INPUTS: usize = 10;
pub const OUTPUTS: usize = 6;
pub const HIDDEN: usize = 128;

const MAGIC: &[u8; 8] = b"BPTTSPOL";
const VERSION: u32 = 1;

/// Layer widths `[in, h1, h2, out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub dims: [usize; 4],
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            dims: [INPUTS, HIDDEN, HIDDEN, OUTPUTS],
        }
    }
}

impl Shape {
    pub fn with_hidden(hidden: usize) -> Shape {
        Shape {
            dims: [INPUTS, hidden, hidden, OUTPUTS],
        }
    }

    pub fn num_params(&self) -> usize {
        let d = self.dims;
        (0..3).map(|l| d[l] * d[l + 1] + d[l + 1]).sum()
    }

    /// `(weight offset, bias offset)` of layer `l`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let d = self.dims;
        let mut off = 0;
        for k in 0..l {
            off += d[k] * d[k + 1] + d[k + 1];
        }
        (off, off + d[l] * d[l + 1])
    }
}

/// Flat parameter vector in layer order, weights row-major `(out x in)`
/// followed by biases.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    shape: Shape,
    values: Vec<f64>,
}

/// Index range of one parameter group, for reporting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: &'static str,
    pub range: std::ops::Range<usize>,
}

impl PolicyParams {
    pub fn zeros(shape: Shape) -> PolicyParams {
        PolicyParams {
            shape,
            values: vec![0.0; shape.num_params()],
        }
    }

    /// Glorot-uniform hidden weights, zero biases, zero output layer.
    pub fn init(seed: u64) -> PolicyParams {
        Self::init_with_shape(Shape::default(), seed)
    }

    pub fn init_with_shape(shape: Shape, seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(shape);
        for l in 0..2 {
            let (fan_in, fan_out) = (shape.dims[l], shape.dims[l + 1]);
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w, b) = shape.offsets(l);
            for v in &mut p.values[w..b] {
                *v = rng.random_range(-lim..lim);
            }
        }
        p
    }

    pub fn from_values(shape: Shape, values: Vec<f64>) -> Result<PolicyParams> {
        if values.len() != shape.num_params() {
            return Err(Error::Shape(format!(
                "{} parameters for shape {:?}",
                values.len(),
                shape.dims
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(PolicyParams { shape, values })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn groups(&self) -> Vec<ParamGroup> {
        let names = ["layer1", "layer2", "head"];
        (0..3)
            .map(|l| {
                let (w, _) = self.shape.offsets(l);
                let end = if l == 2 {
                    self.values.len()
                } else {
                    self.shape.offsets(l + 1).0
                };
                ParamGroup {
                    name: names[l],
                    range: w..end,
                }
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.shape.dims.len() as u32).to_le_bytes());
        for d in self.shape.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PolicyParams> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut r = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if r.len() < n {
                return Err(bad("truncated"));
            }
            let (h, t) = r.split_at(n);
            r = t;
            Ok(h)
        };
        if take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        if u32_at(take(4)?) != 4 {
            return Err(bad("expected 4 layer dimensions"));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = u32_at(take(4)?) as usize;
        }
        if dims[0] != INPUTS || dims[3] != OUTPUTS || dims[1] == 0 || dims[2] == 0 {
            return Err(bad(&format!("dimension mismatch {dims:?}")));
        }
        let shape = Shape { dims };
        let n = shape.num_params();
        let body = take(8 * n)?;
        if !take(1).is_err() {
            return Err(bad("trailing bytes"));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        PolicyParams::from_values(shape, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PolicyParams> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn layer_views(shape: Shape, params: &[f64], l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
    let (w, b) = shape.offsets(l);
    let (n_in, n_out) = (shape.dims[l], shape.dims[l + 1]);
    let wv = ArrayView2::from_shape((n_out, n_in), &params[w..b]).expect("weight view");
    let bv = ArrayView1::from(&params[b..b + n_out]);
    (wv, bv)
}

fn dense(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>, relu: bool) -> Array2<f64> {
    let mut h = x.dot(&w.t());
    h += &b;
    if relu {
        h.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
    }
    h
}

/// Hidden activations and logits for a batch of rows.
fn forward_batch(shape: Shape, params: &[f64], x: ArrayView2<f64>) -> [Array2<f64>; 3] {
    let (w1, b1) = layer_views(shape, params, 0);
    let (w2, b2) = layer_views(shape, params, 1);
    let (w3, b3) = layer_views(shape, params, 2);
    let h1 = dense(x, w1, b1, true);
    let h2 = dense(h1.view(), w2, b2, true);
    let z = dense(h2.view(), w3, b3, false);
    [h1, h2, z]
}

/// Pullback of the batched network. Activations are recomputed from the
/// stored inputs rather than kept alive on the tape.
struct MlpBatch {
    shape: Shape,
    x: Array2<f64>,
}

impl OpaqueOp for MlpBatch {
    fn name(&self) -> &'static str {
        "policy-mlp"
    }

    fn backward(&self, params: &[f64], out_adj: &[f64], in_adj: &mut [f64], param_adj: &mut [f64]) {
        let shape = self.shape;
        let rows = self.x.nrows();
        let [h1, h2, _] = forward_batch(shape, params, self.x.view());
        let dz = ArrayView2::from_shape((rows, OUTPUTS), out_adj).expect("adjoint shape");

        let mut grads = Vec::with_capacity(3);
        let (w3, _) = layer_views(shape, params, 2);
        let (w2, _) = layer_views(shape, params, 1);
        let (w1, _) = layer_views(shape, params, 0);

        // layer 3
        grads.push((2, dz.t().dot(&h2), dz.sum_axis(Axis(0))));
        let mut dh2 = dz.dot(&w3);
        dh2.zip_mut_with(&h2, |g, h| {
            if *h <= 0.0 {
                *g = 0.0
            }
        });
        // layer 2
        grads.push((1, dh2.t().dot(&h1), dh2.sum_axis(Axis(0))));
        let mut dh1 = dh2.dot(&w2);
        dh1.zip_mut_with(&h1, |g, h| {
            if *h <= 0.0 {
                *g = 0.0
            }
        });
        // layer 1
        grads.push((0, dh1.t().dot(&self.x), dh1.sum_axis(Axis(0))));
        let dx = dh1.dot(&w1);

        for (l, gw, gb) in grads {
            let (w, b) = shape.offsets(l);
            accumulate(&mut param_adj[w..b], gw.iter());
            accumulate(&mut param_adj[b..b + gb.len()], gb.iter());
        }
        accumulate(in_adj, dx.iter());
    }
}

fn accumulate<'a>(dst: &mut [f64], src: impl Iterator<Item = &'a f64>) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

fn to_matrix(features: &[[f64; INPUTS]]) -> Array2<f64> {
    let flat: Vec<f64> = features.iter().flatten().copied().collect();
    Array2::from_shape_vec((features.len(), INPUTS), flat).expect("feature matrix")
}

/// Softmax of a logit triple. The max shift is treated as a constant.
pub fn softmax3<T: Real>(z: [T; 3]) -> [T; 3] {
    let m = z[0].max(z[1]).max(z[2]).detach();
    let e = [(z[0] - m).exp(), (z[1] - m).exp(), (z[2] - m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

fn heads<T: Real>(logits: &[[T; OUTPUTS]]) -> Actions<T> {
    let (plus, minus) = logits
        .iter()
        .map(|z| (softmax3([z[0], z[1], z[2]]), softmax3([z[3], z[4], z[5]])))
        .unzip();
    Actions { plus, minus }
}

impl PolicyParams {
    /// Raw logits for a batch of feature rows.
    pub fn logits(&self, features: &[[f64; INPUTS]]) -> Result<Vec<[f64; OUTPUTS]>> {
        let x = to_matrix(features);
        let [_, _, z] = forward_batch(self.shape, &self.values, x.view());
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup("non-finite policy activations".into()));
        }
        Ok(z.outer_iter()
            .map(|r| std::array::from_fn(|k| r[k]))
            .collect())
    }

    /// Convex weights for a batch of feature rows.
    pub fn forward(&self, features: &[[f64; INPUTS]]) -> Result<Actions<f64>> {
        Ok(heads(&self.logits(features)?))
    }

    /// Single-row helper.
    pub fn act_one(&self, features: [f64; INPUTS]) -> Result<([f64; 3], [f64; 3])> {
        let a = self.forward(&[features])?;
        Ok((a.plus[0], a.minus[0]))
    }
}

/// The policy as a plain-float agent.
#[derive(Debug, Clone, Copy)]
pub struct PolicyAgent<'p> {
    pub params: &'p PolicyParams,
    pub normalize: bool,
}

impl Agent<f64> for PolicyAgent<'_> {
    fn act(&self, obs: &Observations<f64>) -> Result<Actions<f64>> {
        self.params.forward(&obs.features(self.normalize))
    }
}

/// The policy recorded on a tape, reading its weights from a parameter
/// block registered on that tape.
pub struct TapePolicyAgent<'t, 'p> {
    pub tape: &'t Tape,
    pub block: ParamBlock,
    pub params: &'p PolicyParams,
    pub normalize: bool,
}

impl<'t, 'p> TapePolicyAgent<'t, 'p> {
    pub fn new(tape: &'t Tape, params: &'p PolicyParams, normalize: bool) -> Self {
        let block = tape.register_block(params.values());
        TapePolicyAgent {
            tape,
            block,
            params,
            normalize,
        }
    }
}

/// Records the batched network on `tape` and returns one logit row per
/// feature row. `block` must hold `params` on that tape.
pub fn record_logits<'t>(
    tape: &'t Tape,
    block: ParamBlock,
    params: &PolicyParams,
    feats: &[[Var<'t>; INPUTS]],
) -> Result<Vec<[Var<'t>; OUTPUTS]>> {
    let values: Vec<[f64; INPUTS]> = feats
        .iter()
        .map(|r| std::array::from_fn(|k| r[k].value()))
        .collect();
    let logits = params.logits(&values)?;
    let inputs: Vec<Var<'t>> = feats.iter().flatten().copied().collect();
    let flat: Vec<f64> = logits.iter().flatten().copied().collect();
    let op = MlpBatch {
        shape: params.shape(),
        x: to_matrix(&values),
    };
    let outs = tape.push_opaque(Box::new(op), &inputs, &flat, Some(block));
    Ok(outs
        .chunks_exact(OUTPUTS)
        .map(|c| std::array::from_fn(|k| c[k]))
        .collect())
}

impl<'t> Agent<Var<'t>> for TapePolicyAgent<'t, '_> {
    fn act(&self, obs: &Observations<Var<'t>>) -> Result<Actions<Var<'t>>> {
        let feats = obs.features(self.normalize);
        let rows = record_logits(self.tape, self.block, self.params, &feats)?;
        Ok(heads(&rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count() {
        assert_eq!(Shape::default().num_params(), 18_694);
        assert_eq!(PolicyParams::init(0).len(), 18_694);
    }

    #[test]
    fn fresh_policy_is_uniform() {
        let p = PolicyParams::init(3);
        let (wp, wm) = p.act_one([0.3, -1.0, 0.2, 0.9, 0.1, 1.0, 0.0, -0.5, 0.4, 0.2]).unwrap();
        assert_eq!(wp, [1.0 / 3.0; 3]);
        assert_eq!(wm, [1.0 / 3.0; 3]);
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(PolicyParams::init(7), PolicyParams::init(7));
        assert_ne!(PolicyParams::init(7), PolicyParams::init(8));
        let p = PolicyParams::init(7);
        let lim = (6.0f64 / 138.0).sqrt();
        assert!(p.values()[..1280].iter().all(|v| v.abs() <= lim));
        assert!(p.values()[1280..1408].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut p = PolicyParams::init(1);
        p.values_mut()[18_000] = 0.125;
        let bytes = p.to_bytes();
        let q = PolicyParams::from_bytes(&bytes).unwrap();
        assert_eq!(q, p);
        assert_eq!(q.to_bytes(), bytes);
        assert!(PolicyParams::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(PolicyParams::from_bytes(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(PolicyParams::from_bytes(&bad).is_err());
    }

    #[test]
    fn groups_cover_everything() {
        let p = PolicyParams::init(0);
        let g = p.groups();
        assert_eq!(g[0].range, 0..1408);
        assert_eq!(g[1].range, 1408..1408 + 16512);
        assert_eq!(g[2].range.end, 18_694);
    }
}
