//! Contextual encoder contract and a small from-scratch transformer
//! encoder for desk-scale training.
//!
//! The reference encoder is a post-layer-norm transformer: token, position
//! and segment embeddings feed self-attention blocks with GELU feed-forward
//! layers. Forward caches every intermediate needed for an exact
//! hand-derived backward pass; gradients are checked against finite
//! differences in the test suite. All math is f64 and single-threaded, so
//! runs are bitwise reproducible from the seed.

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelError;
use crate::encoding::EncodedBatch;

const LN_EPS: f64 = 1e-12;
const MASK_BIAS: f64 = -1e9;
const INIT_STD: f64 = 0.02;

/// A trainable contextual encoder.
///
/// `forward_train` returns per-token vectors `[batch, len, hidden]` plus a
/// tape of intermediates; `backward` turns an output gradient into flat
/// parameter gradients laid out like [`Encoder::parameters`].
pub trait Encoder {
    type Tape;

    fn hidden_size(&self) -> usize;

    /// Inference-only forward pass.
    fn encode(&self, batch: &EncodedBatch) -> Result<Array3<f64>, ModelError> {
        Ok(self.forward_train(batch)?.0)
    }

    fn forward_train(&self, batch: &EncodedBatch)
        -> Result<(Array3<f64>, Self::Tape), ModelError>;

    fn backward(&self, tape: &Self::Tape, d_output: &Array3<f64>) -> Vec<f64>;

    /// Flat parameter vector in a fixed layout.
    fn parameters(&self) -> Vec<f64>;

    fn set_parameters(&mut self, flat: &[f64]) -> Result<(), ModelError>;

    fn num_parameters(&self) -> usize;

    /// Human-readable shape string recorded in bundle manifests.
    fn architecture(&self) -> String;
}

/// Shape of a [`ReferenceEncoder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceEncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub feed_forward: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub seed: u64,
}

impl ReferenceEncoderConfig {
    /// Conventional shape: feed-forward 4x hidden, 512 positions.
    pub fn standard(layers: usize, heads: usize, hidden: usize, vocab_size: usize, seed: u64) -> Self {
        ReferenceEncoderConfig {
            layers,
            heads,
            hidden,
            feed_forward: 4 * hidden,
            vocab_size,
            max_positions: 512,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
struct LayerParams {
    wq: Array2<f64>,
    bq: Array1<f64>,
    wk: Array2<f64>,
    bk: Array1<f64>,
    wv: Array2<f64>,
    bv: Array1<f64>,
    wo: Array2<f64>,
    bo: Array1<f64>,
    ln1_gamma: Array1<f64>,
    ln1_beta: Array1<f64>,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    ln2_gamma: Array1<f64>,
    ln2_beta: Array1<f64>,
}

#[derive(Debug, Clone)]
struct EncoderParams {
    tok_emb: Array2<f64>,
    pos_emb: Array2<f64>,
    seg_emb: Array2<f64>,
    ln_emb_gamma: Array1<f64>,
    ln_emb_beta: Array1<f64>,
    layers: Vec<LayerParams>,
}

enum TensorRef<'a> {
    M(&'a Array2<f64>),
    V(&'a Array1<f64>),
}

enum TensorMut<'a> {
    M(&'a mut Array2<f64>),
    V(&'a mut Array1<f64>),
}

impl LayerParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![
            TensorRef::M(&self.wq),
            TensorRef::V(&self.bq),
            TensorRef::M(&self.wk),
            TensorRef::V(&self.bk),
            TensorRef::M(&self.wv),
            TensorRef::V(&self.bv),
            TensorRef::M(&self.wo),
            TensorRef::V(&self.bo),
            TensorRef::V(&self.ln1_gamma),
            TensorRef::V(&self.ln1_beta),
            TensorRef::M(&self.w1),
            TensorRef::V(&self.b1),
            TensorRef::M(&self.w2),
            TensorRef::V(&self.b2),
            TensorRef::V(&self.ln2_gamma),
            TensorRef::V(&self.ln2_beta),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        vec![
            TensorMut::M(&mut self.wq),
            TensorMut::V(&mut self.bq),
            TensorMut::M(&mut self.wk),
            TensorMut::V(&mut self.bk),
            TensorMut::M(&mut self.wv),
            TensorMut::V(&mut self.bv),
            TensorMut::M(&mut self.wo),
            TensorMut::V(&mut self.bo),
            TensorMut::V(&mut self.ln1_gamma),
            TensorMut::V(&mut self.ln1_beta),
            TensorMut::M(&mut self.w1),
            TensorMut::V(&mut self.b1),
            TensorMut::M(&mut self.w2),
            TensorMut::V(&mut self.b2),
            TensorMut::V(&mut self.ln2_gamma),
            TensorMut::V(&mut self.ln2_beta),
        ]
    }
}

impl EncoderParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut all = vec![
            TensorRef::M(&self.tok_emb),
            TensorRef::M(&self.pos_emb),
            TensorRef::M(&self.seg_emb),
            TensorRef::V(&self.ln_emb_gamma),
            TensorRef::V(&self.ln_emb_beta),
        ];
        for layer in &self.layers {
            all.extend(layer.tensors());
        }
        all
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut all = vec![
            TensorMut::M(&mut self.tok_emb),
            TensorMut::M(&mut self.pos_emb),
            TensorMut::M(&mut self.seg_emb),
            TensorMut::V(&mut self.ln_emb_gamma),
            TensorMut::V(&mut self.ln_emb_beta),
        ];
        for layer in &mut self.layers {
            all.extend(layer.tensors_mut());
        }
        all
    }

    fn count(&self) -> usize {
        self.tensors()
            .iter()
            .map(|t| match t {
                TensorRef::M(m) => m.len(),
                TensorRef::V(v) => v.len(),
            })
            .sum()
    }

    fn pack(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        for t in self.tensors() {
            match t {
                TensorRef::M(m) => out.extend(m.iter()),
                TensorRef::V(v) => out.extend(v.iter()),
            }
        }
        out
    }

    fn unpack(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.count() {
            return Err(ModelError::InvalidShape(format!(
                "parameter vector has {} values, encoder expects {}",
                flat.len(),
                self.count()
            )));
        }
        let mut pos = 0;
        for t in self.tensors_mut() {
            match t {
                TensorMut::M(m) => {
                    for x in m.iter_mut() {
                        *x = flat[pos];
                        pos += 1;
                    }
                }
                TensorMut::V(v) => {
                    for x in v.iter_mut() {
                        *x = flat[pos];
                        pos += 1;
                    }
                }
            }
        }
        Ok(())
    }

    fn zeros_like(&self) -> EncoderParams {
        EncoderParams {
            tok_emb: Array2::zeros(self.tok_emb.dim()),
            pos_emb: Array2::zeros(self.pos_emb.dim()),
            seg_emb: Array2::zeros(self.seg_emb.dim()),
            ln_emb_gamma: Array1::zeros(self.ln_emb_gamma.len()),
            ln_emb_beta: Array1::zeros(self.ln_emb_beta.len()),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    wq: Array2::zeros(l.wq.dim()),
                    bq: Array1::zeros(l.bq.len()),
                    wk: Array2::zeros(l.wk.dim()),
                    bk: Array1::zeros(l.bk.len()),
                    wv: Array2::zeros(l.wv.dim()),
                    bv: Array1::zeros(l.bv.len()),
                    wo: Array2::zeros(l.wo.dim()),
                    bo: Array1::zeros(l.bo.len()),
                    ln1_gamma: Array1::zeros(l.ln1_gamma.len()),
                    ln1_beta: Array1::zeros(l.ln1_beta.len()),
                    w1: Array2::zeros(l.w1.dim()),
                    b1: Array1::zeros(l.b1.len()),
                    w2: Array2::zeros(l.w2.dim()),
                    b2: Array1::zeros(l.b2.len()),
                    ln2_gamma: Array1::zeros(l.ln2_gamma.len()),
                    ln2_beta: Array1::zeros(l.ln2_beta.len()),
                })
                .collect(),
        }
    }
}

/// Per-row layer normalization cache: normalized values and 1/std.
struct LnCache {
    v_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn ln_forward(x: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let mu = x.mean_axis(Axis(1)).expect("non-empty rows");
    let centered = x - &mu.clone().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).mean_axis(Axis(1)).expect("non-empty rows");
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let v_hat = &centered * &inv_std.clone().insert_axis(Axis(1));
    let mut y = &v_hat * gamma;
    y += beta;
    (y, LnCache { v_hat, inv_std })
}

fn ln_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gamma: &Array1<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let dgamma = (dy * &cache.v_hat).sum_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0));
    let dv_hat = dy * gamma;
    let m1 = dv_hat.mean_axis(Axis(1)).expect("non-empty rows");
    let m2 = (&dv_hat * &cache.v_hat)
        .mean_axis(Axis(1))
        .expect("non-empty rows");
    let dx = (&dv_hat - &m1.insert_axis(Axis(1)) - &cache.v_hat * &m2.insert_axis(Axis(1)))
        * &cache.inv_std.clone().insert_axis(Axis(1));
    (dx, dgamma, dbeta)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu_forward(x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let tanh_u = x.mapv(|v| (GELU_C * (v + GELU_A * v * v * v)).tanh());
    let y = 0.5 * x * &tanh_u.mapv(|t| 1.0 + t);
    (y, tanh_u)
}

fn gelu_backward(dy: &Array2<f64>, x: &Array2<f64>, tanh_u: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx)
        .and(x)
        .and(tanh_u)
        .for_each(|d, &v, &t| {
            let sech2 = 1.0 - t * t;
            let du = GELU_C * (1.0 + 3.0 * GELU_A * v * v);
            *d *= 0.5 * (1.0 + t) + 0.5 * v * sech2 * du;
        });
    dx
}

fn softmax_rows_inplace(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

struct LayerTape {
    x_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// One attention matrix per (instance, head), row-major in heads.
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
    ln1: LnCache,
    x_mid: Array2<f64>,
    ffn_pre: Array2<f64>,
    tanh_u: Array2<f64>,
    ffn_act: Array2<f64>,
    ln2: LnCache,
}

/// Forward intermediates for one batch.
pub struct ReferenceTape {
    batch_size: usize,
    seq_len: usize,
    token_ids: Vec<u32>,
    segments: Vec<u8>,
    emb_ln: LnCache,
    layers: Vec<LayerTape>,
}

/// The from-scratch transformer encoder.
#[derive(Debug, Clone)]
pub struct ReferenceEncoder {
    config: ReferenceEncoderConfig,
    params: EncoderParams,
}

impl ReferenceEncoder {
    pub fn new(config: ReferenceEncoderConfig) -> Result<Self, ModelError> {
        if config.layers == 0 || config.heads == 0 || config.hidden == 0 {
            return Err(ModelError::InvalidShape(
                "layers, heads, and hidden size must be positive".into(),
            ));
        }
        if !config.hidden.is_multiple_of(config.heads) {
            return Err(ModelError::InvalidShape(format!(
                "hidden size {} is not divisible by {} heads",
                config.hidden, config.heads
            )));
        }
        if config.vocab_size == 0 || config.max_positions == 0 || config.feed_forward == 0 {
            return Err(ModelError::InvalidShape(
                "vocab, positions, and feed-forward sizes must be positive".into(),
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid distribution");
        let mut matrix = |rows: usize, cols: usize| {
            Array2::from_shape_simple_fn((rows, cols), || normal.sample(&mut rng))
        };

        let h = config.hidden;
        let f = config.feed_forward;
        let tok_emb = matrix(config.vocab_size, h);
        let pos_emb = matrix(config.max_positions, h);
        let seg_emb = matrix(2, h);
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                wq: matrix(h, h),
                bq: Array1::zeros(h),
                wk: matrix(h, h),
                bk: Array1::zeros(h),
                wv: matrix(h, h),
                bv: Array1::zeros(h),
                wo: matrix(h, h),
                bo: Array1::zeros(h),
                ln1_gamma: Array1::ones(h),
                ln1_beta: Array1::zeros(h),
                w1: matrix(h, f),
                b1: Array1::zeros(f),
                w2: matrix(f, h),
                b2: Array1::zeros(h),
                ln2_gamma: Array1::ones(h),
                ln2_beta: Array1::zeros(h),
            })
            .collect();

        Ok(ReferenceEncoder {
            config,
            params: EncoderParams {
                tok_emb,
                pos_emb,
                seg_emb,
                ln_emb_gamma: Array1::ones(h),
                ln_emb_beta: Array1::zeros(h),
                layers,
            },
        })
    }

    pub fn config(&self) -> &ReferenceEncoderConfig {
        &self.config
    }

    /// Flattened batch inputs and the per-column attention bias rows.
    fn embed(&self, batch: &EncodedBatch) -> Result<(Array2<f64>, Vec<Array1<f64>>), ModelError> {
        let b = batch.len();
        let l = batch.padded_len;
        if l > self.config.max_positions {
            return Err(ModelError::InvalidShape(format!(
                "sequence length {} exceeds encoder position table {}",
                l, self.config.max_positions
            )));
        }
        let h = self.config.hidden;
        let mut x = Array2::zeros((b * l, h));
        let mut biases = Vec::with_capacity(b);
        for (bi, ids) in batch.token_ids.iter().enumerate() {
            let mut bias = Array1::zeros(l);
            for (i, &id) in ids.iter().enumerate() {
                if id as usize >= self.config.vocab_size {
                    return Err(ModelError::InvalidShape(format!(
                        "token id {} exceeds encoder vocabulary {}",
                        id, self.config.vocab_size
                    )));
                }
                let seg = batch.segment_flags[bi][i].min(1) as usize;
                let mut row = x.row_mut(bi * l + i);
                row.assign(&self.params.tok_emb.row(id as usize));
                row += &self.params.pos_emb.row(i);
                row += &self.params.seg_emb.row(seg);
                if batch.mask[bi][i] == 0 {
                    bias[i] = MASK_BIAS;
                }
            }
            biases.push(bias);
        }
        Ok((x, biases))
    }
}

impl Encoder for ReferenceEncoder {
    type Tape = ReferenceTape;

    fn hidden_size(&self) -> usize {
        self.config.hidden
    }

    fn forward_train(
        &self,
        batch: &EncodedBatch,
    ) -> Result<(Array3<f64>, Self::Tape), ModelError> {
        let b = batch.len();
        let l = batch.padded_len;
        let h = self.config.hidden;
        let heads = self.config.heads;
        let dk = h / heads;
        let scale = 1.0 / (dk as f64).sqrt();

        let (x0, biases) = self.embed(batch)?;
        let (mut x, emb_ln) = ln_forward(&x0, &self.params.ln_emb_gamma, &self.params.ln_emb_beta);

        let mut layer_tapes = Vec::with_capacity(self.config.layers);
        for layer in &self.params.layers {
            let x_in = x;
            let mut q = x_in.dot(&layer.wq);
            q += &layer.bq;
            let mut k = x_in.dot(&layer.wk);
            k += &layer.bk;
            let mut v = x_in.dot(&layer.wv);
            v += &layer.bv;

            let mut context = Array2::zeros((b * l, h));
            let mut probs = Vec::with_capacity(b * heads);
            for (bi, bias) in biases.iter().enumerate() {
                let rows = bi * l..(bi + 1) * l;
                for head in 0..heads {
                    let cols = head * dk..(head + 1) * dk;
                    let qh = q.slice(s![rows.clone(), cols.clone()]);
                    let kh = k.slice(s![rows.clone(), cols.clone()]);
                    let vh = v.slice(s![rows.clone(), cols.clone()]);
                    let mut scores = qh.dot(&kh.t());
                    scores *= scale;
                    scores += bias;
                    softmax_rows_inplace(&mut scores);
                    let ch = scores.dot(&vh);
                    context
                        .slice_mut(s![rows.clone(), cols.clone()])
                        .assign(&ch);
                    probs.push(scores);
                }
            }

            let mut attn_out = context.dot(&layer.wo);
            attn_out += &layer.bo;
            let res1 = &x_in + &attn_out;
            let (x_mid, ln1) = ln_forward(&res1, &layer.ln1_gamma, &layer.ln1_beta);

            let mut ffn_pre = x_mid.dot(&layer.w1);
            ffn_pre += &layer.b1;
            let (ffn_act, tanh_u) = gelu_forward(&ffn_pre);
            let mut ffn_out = ffn_act.dot(&layer.w2);
            ffn_out += &layer.b2;
            let res2 = &x_mid + &ffn_out;
            let (x_out, ln2) = ln_forward(&res2, &layer.ln2_gamma, &layer.ln2_beta);

            layer_tapes.push(LayerTape {
                x_in,
                q,
                k,
                v,
                probs,
                context,
                ln1,
                x_mid,
                ffn_pre,
                tanh_u,
                ffn_act,
                ln2,
            });
            x = x_out;
        }

        let output = x
            .into_shape_with_order((b, l, h))
            .expect("row-major reshape");
        let tape = ReferenceTape {
            batch_size: b,
            seq_len: l,
            token_ids: batch.token_ids.iter().flatten().copied().collect(),
            segments: batch.segment_flags.iter().flatten().copied().collect(),
            emb_ln,
            layers: layer_tapes,
        };
        Ok((output, tape))
    }

    fn backward(&self, tape: &ReferenceTape, d_output: &Array3<f64>) -> Vec<f64> {
        let b = tape.batch_size;
        let l = tape.seq_len;
        let h = self.config.hidden;
        let heads = self.config.heads;
        let dk = h / heads;
        let scale = 1.0 / (dk as f64).sqrt();

        let mut grads = self.params.zeros_like();
        let mut d = d_output
            .to_owned()
            .into_shape_with_order((b * l, h))
            .expect("row-major reshape");
        for li in (0..self.params.layers.len()).rev() {
            let layer = &self.params.layers[li];
            let lt = &tape.layers[li];
            let gl = &mut grads.layers[li];

            // x_out = LN2(x_mid + ffn_out)
            let (d_res2, dg2, db2) = ln_backward(&d, &lt.ln2, &layer.ln2_gamma);
            gl.ln2_gamma += &dg2;
            gl.ln2_beta += &db2;

            // ffn_out = gelu(x_mid W1 + b1) W2 + b2
            gl.w2 += &lt.ffn_act.t().dot(&d_res2);
            gl.b2 += &d_res2.sum_axis(Axis(0));
            let d_act = d_res2.dot(&layer.w2.t());
            let d_pre = gelu_backward(&d_act, &lt.ffn_pre, &lt.tanh_u);
            gl.w1 += &lt.x_mid.t().dot(&d_pre);
            gl.b1 += &d_pre.sum_axis(Axis(0));
            let d_xmid = d_pre.dot(&layer.w1.t()) + &d_res2;

            // x_mid = LN1(x_in + attn_out)
            let (d_res1, dg1, db1) = ln_backward(&d_xmid, &lt.ln1, &layer.ln1_gamma);
            gl.ln1_gamma += &dg1;
            gl.ln1_beta += &db1;

            // attn_out = context Wo + bo
            gl.wo += &lt.context.t().dot(&d_res1);
            gl.bo += &d_res1.sum_axis(Axis(0));
            let d_context = d_res1.dot(&layer.wo.t());

            let mut dq = Array2::zeros((b * l, h));
            let mut dkm = Array2::zeros((b * l, h));
            let mut dv = Array2::zeros((b * l, h));
            for bi in 0..b {
                let rows = bi * l..(bi + 1) * l;
                for head in 0..heads {
                    let cols = head * dk..(head + 1) * dk;
                    let p = &lt.probs[bi * heads + head];
                    let d_ch = d_context.slice(s![rows.clone(), cols.clone()]);
                    let qh = lt.q.slice(s![rows.clone(), cols.clone()]);
                    let kh = lt.k.slice(s![rows.clone(), cols.clone()]);
                    let vh = lt.v.slice(s![rows.clone(), cols.clone()]);

                    let dp = d_ch.dot(&vh.t());
                    let dvh = p.t().dot(&d_ch);
                    // softmax backward per row
                    let inner = (&dp * p).sum_axis(Axis(1));
                    let ds = p * &(&dp - &inner.insert_axis(Axis(1)));
                    let dqh = ds.dot(&kh) * scale;
                    let dkh = ds.t().dot(&qh) * scale;

                    dq.slice_mut(s![rows.clone(), cols.clone()]).assign(&dqh);
                    dkm.slice_mut(s![rows.clone(), cols.clone()]).assign(&dkh);
                    dv.slice_mut(s![rows.clone(), cols.clone()]).assign(&dvh);
                }
            }

            gl.wq += &lt.x_in.t().dot(&dq);
            gl.bq += &dq.sum_axis(Axis(0));
            gl.wk += &lt.x_in.t().dot(&dkm);
            gl.bk += &dkm.sum_axis(Axis(0));
            gl.wv += &lt.x_in.t().dot(&dv);
            gl.bv += &dv.sum_axis(Axis(0));

            let mut d_xin = dq.dot(&layer.wq.t());
            d_xin += &dkm.dot(&layer.wk.t());
            d_xin += &dv.dot(&layer.wv.t());
            d_xin += &d_res1;
            d = d_xin;
        }

        let (d_x0, dg_emb, db_emb) = ln_backward(&d, &tape.emb_ln, &self.params.ln_emb_gamma);
        grads.ln_emb_gamma += &dg_emb;
        grads.ln_emb_beta += &db_emb;
        for r in 0..b * l {
            let row = d_x0.row(r);
            let id = tape.token_ids[r] as usize;
            let seg = tape.segments[r].min(1) as usize;
            let mut tok = grads.tok_emb.row_mut(id);
            tok += &row;
            let mut pos = grads.pos_emb.row_mut(r % l);
            pos += &row;
            let mut sg = grads.seg_emb.row_mut(seg);
            sg += &row;
        }

        grads.pack()
    }

    fn parameters(&self) -> Vec<f64> {
        self.params.pack()
    }

    fn set_parameters(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        self.params.unpack(flat)
    }

    fn num_parameters(&self) -> usize {
        self.params.count()
    }

    fn architecture(&self) -> String {
        let c = &self.config;
        format!(
            "reference layers={} heads={} hidden={} ff={} vocab={} max_positions={}",
            c.layers, c.heads, c.hidden, c.feed_forward, c.vocab_size, c.max_positions
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{pad_batch, EncodedInstance, MarkerPositions, PairRef};

    fn instance(ids: Vec<u32>, doc: &str) -> EncodedInstance {
        let n = ids.len();
        EncodedInstance {
            token_ids: ids,
            segment_flags: vec![0; n],
            positions: MarkerPositions { cls: 0, s1: 1, e1: 2, s2: 3, e2: n - 1 },
            pair_ref: PairRef {
                doc_id: doc.into(),
                arg1: "T1".into(),
                arg2: "T2".into(),
            },
        }
    }

    fn tiny(seed: u64) -> ReferenceEncoder {
        ReferenceEncoder::new(ReferenceEncoderConfig {
            layers: 2,
            heads: 2,
            hidden: 8,
            feed_forward: 16,
            vocab_size: 32,
            max_positions: 16,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(matches!(
            ReferenceEncoder::new(ReferenceEncoderConfig::standard(2, 3, 32, 100, 13)),
            Err(ModelError::InvalidShape(_))
        ));
        assert!(ReferenceEncoder::new(ReferenceEncoderConfig::standard(2, 2, 32, 100, 13)).is_ok());
    }

    #[test]
    fn output_shape_matches_contract() {
        let enc = tiny(13);
        let batch = pad_batch(
            vec![instance(vec![2, 4, 5, 6, 7], "a"), instance(vec![2, 4, 5, 6, 7, 9, 9], "b")],
            0,
        );
        let out = enc.encode(&batch).unwrap();
        assert_eq!(out.dim(), (2, 7, 8));
    }

    #[test]
    fn seeded_init_is_identical() {
        let a = tiny(13);
        let b = tiny(13);
        assert_eq!(a.parameters(), b.parameters());
        let c = tiny(14);
        assert_ne!(a.parameters(), c.parameters());
    }

    #[test]
    fn parameters_round_trip() {
        let mut enc = tiny(13);
        let mut flat = enc.parameters();
        assert_eq!(flat.len(), enc.num_parameters());
        flat[0] += 1.0;
        enc.set_parameters(&flat).unwrap();
        assert_eq!(enc.parameters()[0], flat[0]);
        assert!(enc.set_parameters(&flat[1..]).is_err());
    }

    #[test]
    fn padding_does_not_change_real_outputs() {
        let enc = tiny(13);
        let inst = instance(vec![2, 4, 5, 6, 7], "a");
        let alone = enc.encode(&pad_batch(vec![inst.clone()], 0)).unwrap();
        let longer = instance(vec![2, 4, 5, 6, 7, 9, 9, 9], "b");
        let padded = enc.encode(&pad_batch(vec![inst, longer], 0)).unwrap();
        for i in 0..5 {
            for j in 0..8 {
                let a = alone[[0, i, j]];
                let p = padded[[0, i, j]];
                assert!((a - p).abs() < 1e-12, "({i},{j}): {a} vs {p}");
            }
        }
    }

    #[test]
    fn token_id_out_of_vocab_rejected() {
        let enc = tiny(13);
        let batch = pad_batch(vec![instance(vec![2, 4, 5, 6, 99], "a")], 0);
        assert!(matches!(enc.encode(&batch), Err(ModelError::InvalidShape(_))));
    }

    #[test]
    fn sequence_longer_than_position_table_rejected() {
        let enc = tiny(13);
        let ids: Vec<u32> = (0..20).map(|i| (i % 8) as u32).collect();
        let batch = pad_batch(vec![instance(ids, "a")], 0);
        assert!(matches!(enc.encode(&batch), Err(ModelError::InvalidShape(_))));
    }
}
