//! The LexEcho head.
//!
//! Pipeline for one text: toy encoder states `H` -> connector
//! `Z = LayerNorm(GELU(H W1 + b1) Wp + bp)` -> decoder logits `Z Eᵀ + b` ->
//! log-saturated, max-pooled English view; in parallel an ECHO row scores each
//! input position to form the source view.
//!
//! [`Forward`] keeps every intermediate so the training code can backpropagate
//! through it. Max-pool subgradients go to the lowest-index row among ties.

mod params;
mod tokenize;

use ndarray::{s, Array1, Array2, Axis};

pub use params::{ConnectorMode, HeadDims, HeadParams, ToyEncoderParams};
pub use tokenize::{toy_tokenize, TokenSeq, Tokenizer};

use crate::error::{Error, Result};
use crate::repr::{DualViewRepr, Namespace, SparseVec, TermKey};

pub use crate::repr::score_pair;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `log(1 + max(x, 0))`.
pub fn logsat(x: f64) -> f64 {
    if x > 0.0 {
        x.ln_1p()
    } else {
        0.0
    }
}

fn logsat_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0 / (1.0 + x)
    } else {
        0.0
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Row `i` is the mean embedding over the window `[i - r, i + r]`, clipped to
/// the sequence.
pub fn toy_encode(seq: &TokenSeq, enc: &ToyEncoderParams) -> Result<Array2<f64>> {
    seq.check_vocab(enc.source_vocab())?;
    let tokens = seq.tokens();
    let n = tokens.len();
    let mut h = Array2::zeros((n, enc.d_l()));
    for i in 0..n {
        let lo = i.saturating_sub(enc.radius);
        let hi = (i + enc.radius).min(n - 1);
        let mut row = h.row_mut(i);
        for &t in &tokens[lo..=hi] {
            row += &enc.embeddings.row(t as usize);
        }
        row /= (hi - lo + 1) as f64;
    }
    Ok(h)
}

fn flat(m: &Array2<f64>) -> &[f64] {
    m.as_slice().expect("head tensors are contiguous")
}

/// `a · w + bias` with `w` stored `k x m`. The head's matrices are tiny, so
/// plain loops over contiguous rows beat a general GEMM here.
fn affine(a: &Array2<f64>, w: &Array2<f64>, bias: Option<&Array1<f64>>) -> Array2<f64> {
    let (n, k) = a.dim();
    let m = w.ncols();
    let (a_s, w_s) = (flat(a), flat(w));
    let mut out = vec![0.0; n * m];
    for (i, row) in out.chunks_exact_mut(m).enumerate() {
        if let Some(b) = bias {
            row.copy_from_slice(b.as_slice().expect("contiguous bias"));
        }
        for t in 0..k {
            let x = a_s[i * k + t];
            if x != 0.0 {
                for (o, &wv) in row.iter_mut().zip(&w_s[t * m..(t + 1) * m]) {
                    *o += x * wv;
                }
            }
        }
    }
    Array2::from_shape_vec((n, m), out).expect("shape matches")
}

/// `a · wᵀ + bias` with `w` stored `m x k`.
fn affine_t(a: &Array2<f64>, w: &Array2<f64>, bias: Option<&Array1<f64>>) -> Array2<f64> {
    let (n, k) = a.dim();
    let m = w.nrows();
    let (a_s, w_s) = (flat(a), flat(w));
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let ar = &a_s[i * k..(i + 1) * k];
        for j in 0..m {
            let dot: f64 = ar.iter().zip(&w_s[j * k..(j + 1) * k]).map(|(x, y)| x * y).sum();
            out.push(dot + bias.map_or(0.0, |b| b[j]));
        }
    }
    Array2::from_shape_vec((n, m), out).expect("shape matches")
}

/// `acc += aᵀ · b`.
fn add_at_b(acc: &mut Array2<f64>, a: &Array2<f64>, b: &Array2<f64>) {
    let (n, k) = a.dim();
    let m = b.ncols();
    let (a_s, b_s) = (flat(a), flat(b));
    let acc_s = acc.as_slice_mut().expect("head tensors are contiguous");
    for i in 0..n {
        let br = &b_s[i * m..(i + 1) * m];
        for t in 0..k {
            let x = a_s[i * k + t];
            if x != 0.0 {
                for (o, &bv) in acc_s[t * m..(t + 1) * m].iter_mut().zip(br) {
                    *o += x * bv;
                }
            }
        }
    }
}

struct ConnectorTrace {
    pre: Array2<f64>,
    act: Array2<f64>,
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn check_cols(context: &'static str, m: &Array2<f64>, expected: usize) -> Result<()> {
    if m.ncols() != expected {
        return Err(Error::Shape {
            context,
            expected: format!("{expected} columns"),
            actual: format!("{} columns", m.ncols()),
        });
    }
    Ok(())
}

fn connector_trace(h: &Array2<f64>, p: &HeadParams) -> Result<(Array2<f64>, Option<ConnectorTrace>)> {
    let dims = p.dims();
    check_cols("connector input", h, dims.d_l)?;
    if p.connector == ConnectorMode::Bypass {
        let mut z = Array2::zeros((h.nrows(), dims.d_e));
        let k = dims.d_l.min(dims.d_e);
        z.slice_mut(s![.., ..k]).assign(&h.slice(s![.., ..k]));
        return Ok((z, None));
    }
    let pre = affine(h, &p.connector_w1, Some(&p.connector_b1));
    let act = pre.mapv(gelu);
    let proj = affine(&act, &p.proj_w, Some(&p.proj_b));
    let d_e = dims.d_e as f64;
    let mut xhat = Array2::zeros(proj.raw_dim());
    let mut rstd = Array1::zeros(proj.nrows());
    for (i, row) in proj.outer_iter().enumerate() {
        let mean = row.sum() / d_e;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d_e;
        let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        rstd[i] = r;
        xhat.row_mut(i).assign(&row.mapv(|x| (x - mean) * r));
    }
    let z = &xhat * &p.ln_gamma + &p.ln_beta;
    Ok((z, Some(ConnectorTrace { pre, act, xhat, rstd })))
}

/// `LayerNorm(GELU(H W1 + b1) Wp + bp)`, or the padded states when the
/// connector is bypassed.
pub fn connector_forward(h: &Array2<f64>, p: &HeadParams) -> Result<Array2<f64>> {
    connector_trace(h, p).map(|(z, _)| z)
}

/// Raw decoder logits `Z Eᵀ + b`, one row per input position.
pub fn decode_logits(z: &Array2<f64>, p: &HeadParams) -> Result<Array2<f64>> {
    check_cols("decoder input", z, p.decoder_e.ncols())?;
    Ok(affine_t(z, &p.decoder_e, Some(&p.decoder_b)))
}

/// Per column, the largest value and the first row attaining it.
fn column_max(m: &Array2<f64>) -> (Array1<f64>, Vec<usize>) {
    let mut best = m.row(0).to_owned();
    let mut arg = vec![0; m.ncols()];
    for (i, row) in m.outer_iter().enumerate().skip(1) {
        for (j, &x) in row.iter().enumerate() {
            if x > best[j] {
                best[j] = x;
                arg[j] = i;
            }
        }
    }
    (best, arg)
}

/// English view: max over positions of log-saturated logits.
pub fn english_view(z: &Array2<f64>, p: &HeadParams) -> Result<SparseVec> {
    let sat = decode_logits(z, p)?.mapv(logsat);
    if sat.nrows() == 0 {
        return Ok(SparseVec::new());
    }
    let pooled = sat.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
    Ok(english_from_pooled(&pooled, true))
}

fn english_from_pooled(pooled: &Array1<f64>, saturated: bool) -> SparseVec {
    let entries = pooled
        .iter()
        .enumerate()
        .map(|(j, &x)| (TermKey::english(j as u32), if saturated { x } else { logsat(x) }))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    SparseVec::from_sorted_unchecked(entries)
}

/// ECHO weights `LogSat(Z e_echo + b_echo)`, one per input position.
pub fn echo_weights(z: &Array2<f64>, p: &HeadParams) -> Result<Array1<f64>> {
    check_cols("echo input", z, p.echo_e.len())?;
    Ok((z.dot(&p.echo_e) + p.echo_b).mapv(logsat))
}

/// Full encoding of one token sequence.
pub fn encode_dual_view(seq: &TokenSeq, enc: &ToyEncoderParams, p: &HeadParams) -> Result<DualViewRepr> {
    Ok(Forward::run(seq, enc, p)?.repr())
}

/// One forward pass with every intermediate retained.
pub struct Forward {
    tokens: Vec<u32>,
    hidden: Array2<f64>,
    trace: Option<ConnectorTrace>,
    z: Array2<f64>,
    logits: Array2<f64>,
    echo_pre: Array1<f64>,
    pooled: Array1<f64>,
    argmax: Vec<usize>,
}

impl Forward {
    pub fn run(seq: &TokenSeq, enc: &ToyEncoderParams, p: &HeadParams) -> Result<Self> {
        seq.check_vocab(p.source_vocab)?;
        let hidden = toy_encode(seq, enc)?;
        let (z, trace) = connector_trace(&hidden, p)?;
        let logits = decode_logits(&z, p)?;
        let echo_pre = z.dot(&p.echo_e) + p.echo_b;
        let (pooled, argmax) = column_max(&logits);
        Ok(Self {
            tokens: seq.tokens().to_vec(),
            hidden,
            trace,
            z,
            logits,
            echo_pre,
            pooled,
            argmax,
        })
    }

    pub fn hidden(&self) -> &Array2<f64> {
        &self.hidden
    }

    pub fn z(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    /// Max-pooled pre-activation logits (the input to the alignment loss).
    pub fn pooled_logits(&self) -> &Array1<f64> {
        &self.pooled
    }

    /// Row that supplied each pooled logit.
    pub fn argmax_rows(&self) -> &[usize] {
        &self.argmax
    }

    pub fn echo_pre(&self) -> &Array1<f64> {
        &self.echo_pre
    }

    pub fn echo_weights(&self) -> Array1<f64> {
        self.echo_pre.mapv(logsat)
    }

    pub fn english_view(&self) -> SparseVec {
        english_from_pooled(&self.pooled, false)
    }

    /// Source position carrying the weight of each distinct source token.
    fn source_winners(&self) -> Vec<(u32, usize)> {
        let mut winners: Vec<(u32, usize)> = Vec::new();
        let mut order: Vec<usize> = (0..self.tokens.len()).collect();
        order.sort_by_key(|&i| (self.tokens[i], i));
        for i in order {
            match winners.last_mut() {
                Some((tok, best)) if *tok == self.tokens[i] => {
                    if self.echo_pre[i] > self.echo_pre[*best] {
                        *best = i;
                    }
                }
                _ => winners.push((self.tokens[i], i)),
            }
        }
        winners
    }

    pub fn source_view(&self) -> SparseVec {
        let entries = self
            .source_winners()
            .into_iter()
            .map(|(tok, i)| (TermKey::source(tok), logsat(self.echo_pre[i])))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        SparseVec::from_sorted_unchecked(entries)
    }

    pub fn repr(&self) -> DualViewRepr {
        DualViewRepr::new(self.english_view(), self.source_view()).expect("views are namespace-pure")
    }

    /// Gradient w.r.t. the logit matrix given a gradient on the pooled logits.
    pub fn route_pooled(&self, d_pooled: &Array1<f64>) -> Array2<f64> {
        let mut d = Array2::zeros(self.logits.raw_dim());
        for (j, &g) in d_pooled.iter().enumerate() {
            d[[self.argmax[j], j]] += g;
        }
        d
    }

    /// Adds the parameter gradient for a gradient on the pooled logits to `acc`.
    pub fn backward_pooled_into(&self, p: &HeadParams, d_pooled: &[f64], acc: &mut HeadParams) {
        let cells: Vec<(usize, usize, f64)> = d_pooled
            .iter()
            .enumerate()
            .filter(|(_, &g)| g != 0.0)
            .map(|(j, &g)| (self.argmax[j], j, g))
            .collect();
        self.backward_cells(p, &cells, &[], acc);
    }

    /// Backpropagates gradients on the representation's weights. Keys absent
    /// from the representation sit at the ReLU clamp and receive nothing.
    pub fn backward_repr(&self, p: &HeadParams, d_weights: &[(TermKey, f64)]) -> HeadParams {
        let mut acc = HeadParams::zeros(p.dims()).with_connector(p.connector);
        self.backward_repr_into(p, d_weights, &mut acc);
        acc
    }

    /// [`Forward::backward_repr`], accumulating into `acc`.
    pub fn backward_repr_into(&self, p: &HeadParams, d_weights: &[(TermKey, f64)], acc: &mut HeadParams) {
        let mut cells = Vec::new();
        let mut echo = Vec::new();
        let winners = self.source_winners();
        for &(key, g) in d_weights {
            if g == 0.0 {
                continue;
            }
            match key.namespace {
                Namespace::English => {
                    let j = key.token_id as usize;
                    if j < self.pooled.len() {
                        let d = g * logsat_grad(self.pooled[j]);
                        if d != 0.0 {
                            cells.push((self.argmax[j], j, d));
                        }
                    }
                }
                Namespace::Source => {
                    if let Ok(k) = winners.binary_search_by_key(&key.token_id, |w| w.0) {
                        let i = winners[k].1;
                        let d = g * logsat_grad(self.echo_pre[i]);
                        if d != 0.0 {
                            echo.push((i, d));
                        }
                    }
                }
            }
        }
        self.backward_cells(p, &cells, &echo, acc);
    }

    /// Parameter gradients given upstream gradients on the logit matrix and on
    /// the ECHO pre-activations.
    pub fn backward(&self, p: &HeadParams, d_logits: &Array2<f64>, d_echo_pre: &Array1<f64>) -> HeadParams {
        let cells: Vec<(usize, usize, f64)> = d_logits
            .indexed_iter()
            .filter(|(_, &g)| g != 0.0)
            .map(|((i, j), &g)| (i, j, g))
            .collect();
        let echo: Vec<(usize, f64)> = d_echo_pre
            .iter()
            .enumerate()
            .filter(|(_, &g)| g != 0.0)
            .map(|(i, &g)| (i, g))
            .collect();
        let mut acc = HeadParams::zeros(p.dims()).with_connector(p.connector);
        self.backward_cells(p, &cells, &echo, &mut acc);
        acc
    }

    /// Core backward pass over sparse upstream gradients: `(row, column, g)`
    /// cells of the logit matrix and `(row, g)` entries of the ECHO logits.
    fn backward_cells(&self, p: &HeadParams, cells: &[(usize, usize, f64)], echo: &[(usize, f64)], acc: &mut HeadParams) {
        let mut d_z = Array2::<f64>::zeros(self.z.raw_dim());
        for &(i, j, g) in cells {
            acc.decoder_e.row_mut(j).scaled_add(g, &self.z.row(i));
            acc.decoder_b[j] += g;
            d_z.row_mut(i).scaled_add(g, &p.decoder_e.row(j));
        }
        for &(i, g) in echo {
            acc.echo_e.scaled_add(g, &self.z.row(i));
            acc.echo_b += g;
            d_z.row_mut(i).scaled_add(g, &p.echo_e);
        }
        let Some(trace) = &self.trace else {
            return;
        };

        acc.ln_gamma += &(&d_z * &trace.xhat).sum_axis(Axis(0));
        acc.ln_beta += &d_z.sum_axis(Axis(0));
        let d_xhat = &d_z * &p.ln_gamma;
        let d_e = d_xhat.ncols() as f64;
        let mut d_proj = Array2::zeros(d_xhat.raw_dim());
        for i in 0..d_xhat.nrows() {
            let dx = d_xhat.row(i);
            let xh = trace.xhat.row(i);
            let mean_dx = dx.sum() / d_e;
            let mean_dx_xh = dx.dot(&xh) / d_e;
            let row = (&dx - mean_dx - &(&xh * mean_dx_xh)) * trace.rstd[i];
            d_proj.row_mut(i).assign(&row);
        }

        add_at_b(&mut acc.proj_w, &trace.act, &d_proj);
        acc.proj_b += &d_proj.sum_axis(Axis(0));
        let d_act = affine_t(&d_proj, &p.proj_w, None);
        let d_pre = &d_act * &trace.pre.mapv(gelu_grad);
        add_at_b(&mut acc.connector_w1, &self.hidden, &d_pre);
        acc.connector_b1 += &d_pre.sum_axis(Axis(0));
    }
}
