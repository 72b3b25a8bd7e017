//! A small pre-pooled transformer encoder over per-cluster slot tokens.
//!
//! A learned summary token is prepended to the valid slots; only the summary
//! token's final state feeds the linear output head. Invalid slots are dropped
//! before the first layer, so their contents never reach the output.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::mlp::{axpy, dot};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerArch {
    pub n_slots: usize,
    pub token_width: usize,
    pub model_width: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_width: usize,
    pub output_dim: usize,
}

impl TransformerArch {
    pub fn new(n_slots: usize, token_width: usize, output_dim: usize) -> Self {
        Self {
            n_slots,
            token_width,
            model_width: 32,
            n_heads: 2,
            n_layers: 2,
            ffn_width: 64,
            output_dim,
        }
    }

    fn layer_size(&self) -> usize {
        let (d, f) = (self.model_width, self.ffn_width);
        4 * (d * d + d) + f * d + f + d * f + d
    }

    fn param_count(&self) -> usize {
        let d = self.model_width;
        d * self.token_width + d + d + self.n_slots * d + self.n_layers * self.layer_size() + self.output_dim * d + self.output_dim
    }
}

#[derive(Debug, Clone, Copy)]
struct Span {
    off: usize,
    len: usize,
}

#[derive(Debug, Clone, Copy)]
struct LayerSpans {
    wq: Span,
    bq: Span,
    wk: Span,
    bk: Span,
    wv: Span,
    bv: Span,
    wo: Span,
    bo: Span,
    w1: Span,
    b1: Span,
    w2: Span,
    b2: Span,
}

#[derive(Debug, Clone)]
struct Layout {
    w_in: Span,
    b_in: Span,
    cls: Span,
    pos: Span,
    layers: Vec<LayerSpans>,
    w_out: Span,
    b_out: Span,
}

impl Layout {
    fn new(a: &TransformerArch) -> Self {
        let mut off = 0;
        let mut take = |len: usize| {
            let s = Span { off, len };
            off += len;
            s
        };
        let (d, f) = (a.model_width, a.ffn_width);
        let w_in = take(d * a.token_width);
        let b_in = take(d);
        let cls = take(d);
        let pos = take(a.n_slots * d);
        let layers = (0..a.n_layers)
            .map(|_| LayerSpans {
                wq: take(d * d),
                bq: take(d),
                wk: take(d * d),
                bk: take(d),
                wv: take(d * d),
                bv: take(d),
                wo: take(d * d),
                bo: take(d),
                w1: take(f * d),
                b1: take(f),
                w2: take(d * f),
                b2: take(d),
            })
            .collect();
        let w_out = take(a.output_dim * d);
        let b_out = take(a.output_dim);
        Self {
            w_in,
            b_in,
            cls,
            pos,
            layers,
            w_out,
            b_out,
        }
    }
}

fn sl(p: &[f64], s: Span) -> &[f64] {
    &p[s.off..s.off + s.len]
}

fn sl_mut(p: &mut [f64], s: Span) -> &mut [f64] {
    &mut p[s.off..s.off + s.len]
}

/// `w` is `out x in` row-major.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    w.chunks_exact(n_in).zip(b).map(|(row, bias)| bias + dot(row, x)).collect()
}

/// Accumulates weight/bias gradients of `y = W x + b` and returns dx.
fn affine_back(w: &[f64], x: &[f64], dy: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
    let n_in = x.len();
    let mut dx = vec![0.0; n_in];
    for (((row, grow), gbias), &d) in w.chunks_exact(n_in).zip(gw.chunks_exact_mut(n_in)).zip(gb.iter_mut()).zip(dy) {
        axpy(d, x, grow);
        *gbias += d;
        axpy(d, row, &mut dx);
    }
    dx
}

#[derive(Debug, Clone)]
pub struct TinyTransformer {
    arch: TransformerArch,
    layout: Layout,
    params: Vec<f64>,
}

struct LayerCache {
    x: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// `[head][query][key]`
    p: Vec<Vec<Vec<f64>>>,
    o: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

pub struct TransformerTrace {
    active: Vec<usize>,
    layers: Vec<LayerCache>,
    last: Vec<f64>,
    output: Vec<f64>,
}

impl TransformerTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl TinyTransformer {
    pub fn new(arch: TransformerArch, seed: u64) -> Self {
        assert!(arch.model_width % arch.n_heads == 0, "heads must divide the model width");
        let layout = Layout::new(&arch);
        let mut params = vec![0.0; arch.param_count()];
        let mut rng = rng::rng_from(seed);
        let mut he = |p: &mut [f64], s: Span, fan_in: usize| {
            let bound = (6.0 / fan_in as f64).sqrt();
            sl_mut(p, s).iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        };
        let d = arch.model_width;
        he(&mut params, layout.w_in, arch.token_width);
        for l in &layout.layers {
            for s in [l.wq, l.wk, l.wv, l.wo, l.w1] {
                he(&mut params, s, d);
            }
            he(&mut params, l.w2, arch.ffn_width);
        }
        he(&mut params, layout.w_out, d);
        let mut rng = rng::stream(seed, 1);
        for s in [layout.cls, layout.pos] {
            sl_mut(&mut params, s).iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
        Self { arch, layout, params }
    }

    pub fn from_parts(arch: TransformerArch, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::InvalidArgument(format!(
                "{} parameters do not fit the transformer architecture",
                params.len()
            )));
        }
        Ok(Self {
            layout: Layout::new(&arch),
            arch,
            params,
        })
    }

    pub fn arch(&self) -> TransformerArch {
        self.arch
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, tokens: &[f64], valid: &[bool]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(tokens, valid)?.output)
    }

    pub fn forward_trace(&self, tokens: &[f64], valid: &[bool]) -> Result<TransformerTrace> {
        let a = &self.arch;
        if valid.len() != a.n_slots || tokens.len() != a.n_slots * a.token_width {
            return Err(Error::InvalidArgument(format!(
                "expected {} tokens of width {}, got {} values and {} flags",
                a.n_slots,
                a.token_width,
                tokens.len(),
                valid.len()
            )));
        }
        let p = &self.params;
        let lay = &self.layout;
        let d = a.model_width;
        let dh = d / a.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let active: Vec<usize> = (0..a.n_slots).filter(|&i| valid[i]).collect();

        let mut x: Vec<Vec<f64>> = Vec::with_capacity(active.len() + 1);
        x.push(sl(p, lay.cls).to_vec());
        for &i in &active {
            let tok = &tokens[i * a.token_width..(i + 1) * a.token_width];
            let mut e = affine(sl(p, lay.w_in), sl(p, lay.b_in), tok);
            for (v, q) in e.iter_mut().zip(&sl(p, lay.pos)[i * d..(i + 1) * d]) {
                *v += q;
            }
            x.push(e);
        }

        let n = x.len();
        let mut layers = Vec::with_capacity(a.n_layers);
        for ls in &lay.layers {
            let q: Vec<Vec<f64>> = x.iter().map(|r| affine(sl(p, ls.wq), sl(p, ls.bq), r)).collect();
            let k: Vec<Vec<f64>> = x.iter().map(|r| affine(sl(p, ls.wk), sl(p, ls.bk), r)).collect();
            let v: Vec<Vec<f64>> = x.iter().map(|r| affine(sl(p, ls.wv), sl(p, ls.bv), r)).collect();
            let mut probs = Vec::with_capacity(a.n_heads);
            let mut o = vec![vec![0.0; d]; n];
            for hd in 0..a.n_heads {
                let r = hd * dh..(hd + 1) * dh;
                let mut ph = Vec::with_capacity(n);
                for qi in 0..n {
                    let scores: Vec<f64> = (0..n).map(|kj| scale * dot(&q[qi][r.clone()], &k[kj][r.clone()])).collect();
                    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                    let z: f64 = e.iter().sum();
                    let row: Vec<f64> = e.into_iter().map(|v| v / z).collect();
                    for (kj, &w) in row.iter().enumerate() {
                        axpy(w, &v[kj][r.clone()], &mut o[qi][r.clone()]);
                    }
                    ph.push(row);
                }
                probs.push(ph);
            }
            let y: Vec<Vec<f64>> = x
                .iter()
                .zip(&o)
                .map(|(xr, or)| {
                    let mut a = affine(sl(p, ls.wo), sl(p, ls.bo), or);
                    a.iter_mut().zip(xr).for_each(|(v, r)| *v += r);
                    a
                })
                .collect();
            let h: Vec<Vec<f64>> = y
                .iter()
                .map(|yr| {
                    let mut h = affine(sl(p, ls.w1), sl(p, ls.b1), yr);
                    h.iter_mut().for_each(|v| *v = v.max(0.0));
                    h
                })
                .collect();
            let next: Vec<Vec<f64>> = y
                .iter()
                .zip(&h)
                .map(|(yr, hr)| {
                    let mut z = affine(sl(p, ls.w2), sl(p, ls.b2), hr);
                    z.iter_mut().zip(yr).for_each(|(v, r)| *v += r);
                    z
                })
                .collect();
            layers.push(LayerCache {
                x: std::mem::replace(&mut x, next),
                q,
                k,
                v,
                p: probs,
                o,
                y,
                h,
            });
        }
        let last = x.swap_remove(0);
        let output = affine(sl(p, lay.w_out), sl(p, lay.b_out), &last);
        Ok(TransformerTrace {
            active,
            layers,
            last,
            output,
        })
    }

    pub fn backward(&self, tokens: &[f64], trace: &TransformerTrace, grad_out: &[f64], grads: &mut [f64]) {
        let a = &self.arch;
        let p = &self.params;
        let lay = &self.layout;
        let d = a.model_width;
        let dh = d / a.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let n = trace.active.len() + 1;

        let (gw, gb) = split2(grads, lay.w_out, lay.b_out);
        let d_last = affine_back(sl(p, lay.w_out), &trace.last, grad_out, gw, gb);
        let mut dx = vec![vec![0.0; d]; n];
        dx[0] = d_last;

        for (ls, c) in lay.layers.iter().zip(&trace.layers).rev() {
            // feed-forward block with residual
            let mut dy = dx.clone();
            for i in 0..n {
                let (gw2, gb2) = split2(grads, ls.w2, ls.b2);
                let mut dh1 = affine_back(sl(p, ls.w2), &c.h[i], &dx[i], gw2, gb2);
                for (g, &hv) in dh1.iter_mut().zip(&c.h[i]) {
                    if hv <= 0.0 {
                        *g = 0.0;
                    }
                }
                let (gw1, gb1) = split2(grads, ls.w1, ls.b1);
                let dyi = affine_back(sl(p, ls.w1), &c.y[i], &dh1, gw1, gb1);
                axpy(1.0, &dyi, &mut dy[i]);
            }
            // attention block with residual
            let mut dxl = dy.clone();
            let mut d_o = Vec::with_capacity(n);
            for i in 0..n {
                let (gwo, gbo) = split2(grads, ls.wo, ls.bo);
                d_o.push(affine_back(sl(p, ls.wo), &c.o[i], &dy[i], gwo, gbo));
            }
            let mut dq = vec![vec![0.0; d]; n];
            let mut dk = vec![vec![0.0; d]; n];
            let mut dv = vec![vec![0.0; d]; n];
            for hd in 0..a.n_heads {
                let r = hd * dh..(hd + 1) * dh;
                for qi in 0..n {
                    let prow = &c.p[hd][qi];
                    let dp: Vec<f64> = (0..n).map(|kj| dot(&d_o[qi][r.clone()], &c.v[kj][r.clone()])).collect();
                    let inner = dot(prow, &dp);
                    for kj in 0..n {
                        axpy(prow[kj], &d_o[qi][r.clone()], &mut dv[kj][r.clone()]);
                        let ds = prow[kj] * (dp[kj] - inner) * scale;
                        if ds != 0.0 {
                            axpy(ds, &c.k[kj][r.clone()], &mut dq[qi][r.clone()]);
                            axpy(ds, &c.q[qi][r.clone()], &mut dk[kj][r.clone()]);
                        }
                    }
                }
            }
            for i in 0..n {
                for (dm, wspan, bspan) in [(&dq[i], ls.wq, ls.bq), (&dk[i], ls.wk, ls.bk), (&dv[i], ls.wv, ls.bv)] {
                    let (gwm, gbm) = split2(grads, wspan, bspan);
                    let dxi = affine_back(sl(p, wspan), &c.x[i], dm, gwm, gbm);
                    axpy(1.0, &dxi, &mut dxl[i]);
                }
            }
            dx = dxl;
        }

        axpy(1.0, &dx[0], sl_mut(grads, lay.cls));
        for (j, &slot) in trace.active.iter().enumerate() {
            let g = &dx[j + 1];
            axpy(1.0, g, &mut sl_mut(grads, lay.pos)[slot * d..(slot + 1) * d]);
            let tok = &tokens[slot * a.token_width..(slot + 1) * a.token_width];
            let (gwi, gbi) = split2(grads, lay.w_in, lay.b_in);
            affine_back(sl(p, lay.w_in), tok, g, gwi, gbi);
        }
    }

    pub fn accumulate<F>(&self, tokens: &[f64], valid: &[bool], grads: &mut [f64], loss_grad: F) -> Result<Vec<f64>>
    where
        F: FnOnce(&[f64]) -> Vec<f64>,
    {
        let trace = self.forward_trace(tokens, valid)?;
        let g = loss_grad(&trace.output);
        self.backward(tokens, &trace, &g, grads);
        Ok(trace.output)
    }
}

/// Two disjoint mutable views; `a` must precede `b` in the buffer.
fn split2(buf: &mut [f64], a: Span, b: Span) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.off + a.len <= b.off);
    let (lo, hi) = buf.split_at_mut(b.off);
    (&mut lo[a.off..a.off + a.len], &mut hi[..b.len])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_tokens_do_not_matter() {
        let arch = TransformerArch::new(4, 3, 4);
        let net = TinyTransformer::new(arch, 5);
        let valid = [true, false, true, false];
        let mut tokens: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let before = net.forward(&tokens, &valid).unwrap();
        for v in &mut tokens[3..6] {
            *v = 1e6;
        }
        for v in &mut tokens[9..12] {
            *v = -42.0;
        }
        assert_eq!(net.forward(&tokens, &valid).unwrap(), before);
    }

    #[test]
    fn empty_sequence_is_finite() {
        let net = TinyTransformer::new(TransformerArch::new(3, 2, 3), 1);
        let out = net.forward(&[0.0; 6], &[false; 3]).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shape_mismatch() {
        let net = TinyTransformer::new(TransformerArch::new(3, 2, 3), 1);
        assert!(net.forward(&[0.0; 5], &[false; 3]).is_err());
    }
}
