use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{
    add_into, col_sum_acc, dot, gelu, gelu_grad, layer_norm, layer_norm_backward, matmul, matmul_at_acc, matmul_bt_acc,
    softmax_prefix,
};
use super::params::{check_shapes, init_params, AttnIdx, FfnIdx, Layout, LnIdx, ParamSet};
use super::{ModelConfig, Scalar};
use crate::error::{Error, Result};

/// Pre-norm encoder-decoder transformer over semantic-ID tokens.
///
/// The encoder reads the flattened history bidirectionally with padding keys masked;
/// the decoder reads `[bos, y_0 .. y_{L-2}]` under a causal mask and cross-attends to
/// the encoder output. Row `i` of the logits scores `y_i`.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub cfg: ModelConfig,
    pub layout: Layout,
    pub params: ParamSet<T>,
}

/// Encoder output reused across decoding steps.
#[derive(Debug, Clone)]
pub struct Memory<T> {
    key_valid: Vec<bool>,
    /// Cross-attention keys and values per decoder layer.
    cross_kv: Vec<(Vec<T>, Vec<T>)>,
}

struct LnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

struct AttnCache<T> {
    xq: Vec<T>,
    /// Key/value source for cross-attention; self-attention reuses `xq`.
    xkv: Option<Vec<T>>,
    nq: usize,
    nk: usize,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    p: Vec<T>,
    o: Vec<T>,
}

struct FfnCache<T> {
    x: Vec<T>,
    pre: Vec<T>,
    act: Vec<T>,
}

struct EncLayerCache<T> {
    ln1: LnCache<T>,
    attn: AttnCache<T>,
    drop1: Option<Vec<T>>,
    ln2: LnCache<T>,
    ffn: FfnCache<T>,
    drop2: Option<Vec<T>>,
}

struct DecLayerCache<T> {
    ln1: LnCache<T>,
    self_attn: AttnCache<T>,
    drop1: Option<Vec<T>>,
    ln2: LnCache<T>,
    cross: AttnCache<T>,
    drop2: Option<Vec<T>>,
    ln3: LnCache<T>,
    ffn: FfnCache<T>,
    drop3: Option<Vec<T>>,
}

/// Activations kept by a training forward pass.
pub struct Trace<T> {
    x: Vec<u32>,
    y_in: Vec<u32>,
    key_valid: Vec<bool>,
    enc_drop: Option<Vec<T>>,
    enc: Vec<EncLayerCache<T>>,
    enc_ln: LnCache<T>,
    mem: Vec<T>,
    dec_drop: Option<Vec<T>>,
    dec: Vec<DecLayerCache<T>>,
    dec_ln: LnCache<T>,
    dec_out: Vec<T>,
}

enum Mask<'a> {
    Keys(&'a [bool]),
    Causal,
}

impl Mask<'_> {
    #[inline]
    fn valid(&self, i: usize, j: usize) -> bool {
        match self {
            Mask::Keys(k) => k[j],
            Mask::Causal => j <= i,
        }
    }
}

fn dropout<T: Scalar>(x: &mut [T], rate: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<T>> {
    let rng = rng?;
    if rate == 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    for (v, &m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

fn apply_mask<T: Scalar>(dx: &[T], mask: &Option<Vec<T>>) -> Vec<T> {
    match mask {
        Some(m) => dx.iter().zip(m).map(|(&a, &b)| a * b).collect(),
        None => dx.to_vec(),
    }
}

impl<T: Scalar> Model<T> {
    /// Seeded initialization from a config.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        let (params, layout) = init_params(cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            layout,
            params,
        })
    }

    pub fn from_params(cfg: &ModelConfig, params: ParamSet<T>) -> Result<Self> {
        cfg.validate()?;
        let layout = check_shapes(cfg, &params)?;
        Ok(Self {
            cfg: cfg.clone(),
            layout,
            params,
        })
    }

    pub fn vocab(&self) -> usize {
        self.cfg.vocab
    }

    fn p(&self, idx: usize) -> &[T] {
        &self.params.data[idx]
    }

    fn check_tokens(&self, x: &[u32], y_in: &[u32], pad: Option<u32>) -> Result<()> {
        if x.is_empty() || x.len() > self.cfg.max_positions {
            return Err(Error::Contract(format!(
                "encoder input of {} tokens (allowed 1..={})",
                x.len(),
                self.cfg.max_positions
            )));
        }
        if y_in.is_empty() || y_in.len() > self.cfg.target_len {
            return Err(Error::Contract(format!(
                "decoder input of {} tokens (allowed 1..={})",
                y_in.len(),
                self.cfg.target_len
            )));
        }
        if let Some(&t) = x.iter().chain(y_in).find(|&&t| t as usize >= self.cfg.vocab) {
            return Err(Error::Contract(format!("token {t} outside vocabulary of {}", self.cfg.vocab)));
        }
        if let Some(pad) = pad {
            if x.iter().all(|&t| t == pad) {
                return Err(Error::Contract("encoder input holds only padding".into()));
            }
        }
        Ok(())
    }

    fn pad_token(&self) -> u32 {
        // specials sit after the code tokens: pad then bos
        (self.cfg.vocab - 2) as u32
    }

    fn embed(&self, tokens: &[u32], pos: usize) -> Vec<T> {
        let d = self.cfg.d_model;
        let tok = self.p(self.layout.tok);
        let posv = self.p(pos);
        let mut h = vec![T::zero(); tokens.len() * d];
        for (i, &t) in tokens.iter().enumerate() {
            let row = &mut h[i * d..(i + 1) * d];
            let e = &tok[t as usize * d..(t as usize + 1) * d];
            let p = &posv[i * d..(i + 1) * d];
            for j in 0..d {
                row[j] = e[j] + p[j];
            }
        }
        h
    }

    fn ln(&self, idx: &LnIdx, x: &[T]) -> (Vec<T>, LnCache<T>) {
        let d = self.cfg.d_model;
        let n = x.len() / d;
        let mut out = vec![T::zero(); x.len()];
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); n];
        layer_norm(x, self.p(idx.g), self.p(idx.b), d, &mut out, &mut xhat, &mut inv_std);
        (out, LnCache { xhat, inv_std })
    }

    fn ln_back(&self, idx: &LnIdx, c: &LnCache<T>, dy: &[T], g: &mut ParamSet<T>) -> Vec<T> {
        let d = self.cfg.d_model;
        let mut dx = vec![T::zero(); dy.len()];
        let (dg, db) = pair_mut(&mut g.data, idx.g, idx.b);
        layer_norm_backward(dy, &c.xhat, &c.inv_std, self.p(idx.g), d, dg, db, &mut dx);
        dx
    }

    fn attn(&self, a: &AttnIdx, xq: Vec<T>, xkv: Option<&[T]>, mask: Mask) -> (Vec<T>, AttnCache<T>) {
        let (k, v) = self.kv(a, xkv.unwrap_or(&xq));
        let (out, q, p, o) = self.attend(a, &xq, &k, &v, mask);
        let d = self.cfg.d_model;
        let cache = AttnCache {
            nq: xq.len() / d,
            nk: k.len() / d,
            xq,
            xkv: xkv.map(<[T]>::to_vec),
            q,
            k,
            v,
            p,
            o,
        };
        (out, cache)
    }

    fn kv(&self, a: &AttnIdx, src: &[T]) -> (Vec<T>, Vec<T>) {
        let d = self.cfg.d_model;
        let nk = src.len() / d;
        let mut k = vec![T::zero(); nk * d];
        let mut v = vec![T::zero(); nk * d];
        matmul(src, self.p(a.wk), Some(self.p(a.bk)), nk, d, d, &mut k);
        matmul(src, self.p(a.wv), Some(self.p(a.bv)), nk, d, d, &mut v);
        (k, v)
    }

    /// Returns the output projection together with `q`, the attention weights and the
    /// pre-projection output.
    #[allow(clippy::type_complexity)]
    fn attend(&self, a: &AttnIdx, xq: &[T], k: &[T], v: &[T], mask: Mask) -> (Vec<T>, Vec<T>, Vec<T>, Vec<T>) {
        let d = self.cfg.d_model;
        let heads = self.cfg.heads;
        let dh = self.cfg.head_dim();
        let nq = xq.len() / d;
        let nk = k.len() / d;
        let mut q = vec![T::zero(); nq * d];
        matmul(xq, self.p(a.wq), Some(self.p(a.bq)), nq, d, d, &mut q);
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut p = vec![T::zero(); heads * nq * nk];
        let mut o = vec![T::zero(); nq * d];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..nq {
                let qi = &q[i * d + off..i * d + off + dh];
                let row = &mut p[(h * nq + i) * nk..(h * nq + i + 1) * nk];
                for (j, s) in row.iter_mut().enumerate() {
                    if mask.valid(i, j) {
                        *s = dot(qi, &k[j * d + off..j * d + off + dh]) * scale;
                    }
                }
                softmax_prefix(row, |j| mask.valid(i, j));
                let oi = &mut o[i * d + off..i * d + off + dh];
                for (j, &pj) in row.iter().enumerate() {
                    if pj != T::zero() {
                        for (ov, &vv) in oi.iter_mut().zip(&v[j * d + off..j * d + off + dh]) {
                            *ov += pj * vv;
                        }
                    }
                }
            }
        }
        let mut out = vec![T::zero(); nq * d];
        matmul(&o, self.p(a.wo), Some(self.p(a.bo)), nq, d, d, &mut out);
        (out, q, p, o)
    }

    /// Returns `(d xq, d xkv)`; for self-attention the caller sums them.
    fn attn_back(&self, a: &AttnIdx, c: &AttnCache<T>, dout: &[T], g: &mut ParamSet<T>) -> (Vec<T>, Vec<T>) {
        let d = self.cfg.d_model;
        let heads = self.cfg.heads;
        let dh = self.cfg.head_dim();
        let (nq, nk) = (c.nq, c.nk);
        matmul_at_acc(&c.o, dout, nq, d, d, &mut g.data[a.wo]);
        col_sum_acc(dout, d, &mut g.data[a.bo]);
        let mut d_o = vec![T::zero(); nq * d];
        matmul_bt_acc(dout, self.p(a.wo), nq, d, d, &mut d_o);
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut dq = vec![T::zero(); nq * d];
        let mut dk = vec![T::zero(); nk * d];
        let mut dv = vec![T::zero(); nk * d];
        let mut dp = vec![T::zero(); nk];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..nq {
                let prow = &c.p[(h * nq + i) * nk..(h * nq + i + 1) * nk];
                let doi = &d_o[i * d + off..i * d + off + dh];
                let mut s = T::zero();
                for j in 0..nk {
                    if prow[j] != T::zero() {
                        dp[j] = dot(doi, &c.v[j * d + off..j * d + off + dh]);
                        s += prow[j] * dp[j];
                    }
                }
                let qi = &c.q[i * d + off..i * d + off + dh];
                for j in 0..nk {
                    let pj = prow[j];
                    if pj == T::zero() {
                        continue;
                    }
                    let ds = pj * (dp[j] - s) * scale;
                    let kj = j * d + off;
                    for t in 0..dh {
                        dv[kj + t] += pj * doi[t];
                        dq[i * d + off + t] += ds * c.k[kj + t];
                        dk[kj + t] += ds * qi[t];
                    }
                }
            }
        }
        let src = c.xkv.as_deref().unwrap_or(&c.xq);
        matmul_at_acc(&c.xq, &dq, nq, d, d, &mut g.data[a.wq]);
        col_sum_acc(&dq, d, &mut g.data[a.bq]);
        matmul_at_acc(src, &dk, nk, d, d, &mut g.data[a.wk]);
        col_sum_acc(&dk, d, &mut g.data[a.bk]);
        matmul_at_acc(src, &dv, nk, d, d, &mut g.data[a.wv]);
        col_sum_acc(&dv, d, &mut g.data[a.bv]);
        let mut dxq = vec![T::zero(); nq * d];
        matmul_bt_acc(&dq, self.p(a.wq), nq, d, d, &mut dxq);
        let mut dxkv = vec![T::zero(); nk * d];
        matmul_bt_acc(&dk, self.p(a.wk), nk, d, d, &mut dxkv);
        matmul_bt_acc(&dv, self.p(a.wv), nk, d, d, &mut dxkv);
        (dxq, dxkv)
    }

    fn ffn(&self, f: &FfnIdx, x: Vec<T>) -> (Vec<T>, FfnCache<T>) {
        let d = self.cfg.d_model;
        let ff = self.cfg.d_ff;
        let n = x.len() / d;
        let mut pre = vec![T::zero(); n * ff];
        matmul(&x, self.p(f.w1), Some(self.p(f.b1)), n, d, ff, &mut pre);
        let act: Vec<T> = pre.iter().map(|&z| gelu(z)).collect();
        let mut out = vec![T::zero(); n * d];
        matmul(&act, self.p(f.w2), Some(self.p(f.b2)), n, ff, d, &mut out);
        (out, FfnCache { x, pre, act })
    }

    fn ffn_back(&self, f: &FfnIdx, c: &FfnCache<T>, dout: &[T], g: &mut ParamSet<T>) -> Vec<T> {
        let d = self.cfg.d_model;
        let ff = self.cfg.d_ff;
        let n = dout.len() / d;
        matmul_at_acc(&c.act, dout, n, ff, d, &mut g.data[f.w2]);
        col_sum_acc(dout, d, &mut g.data[f.b2]);
        let mut dpre = vec![T::zero(); n * ff];
        matmul_bt_acc(dout, self.p(f.w2), n, d, ff, &mut dpre);
        for (dz, &z) in dpre.iter_mut().zip(&c.pre) {
            *dz *= gelu_grad(z);
        }
        matmul_at_acc(&c.x, &dpre, n, d, ff, &mut g.data[f.w1]);
        col_sum_acc(&dpre, ff, &mut g.data[f.b1]);
        let mut dx = vec![T::zero(); n * d];
        matmul_bt_acc(&dpre, self.p(f.w1), n, ff, d, &mut dx);
        dx
    }

    #[allow(clippy::type_complexity)]
    fn run_encoder(
        &self,
        x: &[u32],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Vec<T>, Vec<bool>, Option<Vec<T>>, Vec<EncLayerCache<T>>, LnCache<T>) {
        let rate = self.cfg.dropout;
        let pad = self.pad_token();
        let key_valid: Vec<bool> = x.iter().map(|&t| t != pad).collect();
        let mut h = self.embed(x, self.layout.enc_pos);
        let enc_drop = dropout(&mut h, rate, rng.as_deref_mut());
        let mut caches = Vec::with_capacity(self.layout.enc.len());
        for l in &self.layout.enc {
            let (a_in, ln1) = self.ln(&l.ln1, &h);
            let (mut a_out, attn) = self.attn(&l.attn, a_in, None, Mask::Keys(&key_valid));
            let drop1 = dropout(&mut a_out, rate, rng.as_deref_mut());
            add_into(&mut h, &a_out);
            let (f_in, ln2) = self.ln(&l.ln2, &h);
            let (mut f_out, ffn) = self.ffn(&l.ffn, f_in);
            let drop2 = dropout(&mut f_out, rate, rng.as_deref_mut());
            add_into(&mut h, &f_out);
            caches.push(EncLayerCache {
                ln1,
                attn,
                drop1,
                ln2,
                ffn,
                drop2,
            });
        }
        let (mem, enc_ln) = self.ln(&self.layout.enc_ln, &h);
        (mem, key_valid, enc_drop, caches, enc_ln)
    }

    #[allow(clippy::type_complexity)]
    fn run_decoder(
        &self,
        mem: &[T],
        key_valid: &[bool],
        y_in: &[u32],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Vec<T>, Option<Vec<T>>, Vec<DecLayerCache<T>>, LnCache<T>) {
        let rate = self.cfg.dropout;
        let mut h = self.embed(y_in, self.layout.dec_pos);
        let dec_drop = dropout(&mut h, rate, rng.as_deref_mut());
        let mut caches = Vec::with_capacity(self.layout.dec.len());
        for l in &self.layout.dec {
            let (a_in, ln1) = self.ln(&l.ln1, &h);
            let (mut a_out, self_attn) = self.attn(&l.self_attn, a_in, None, Mask::Causal);
            let drop1 = dropout(&mut a_out, rate, rng.as_deref_mut());
            add_into(&mut h, &a_out);
            let (c_in, ln2) = self.ln(&l.ln2, &h);
            let (mut c_out, cross) = self.attn(&l.cross, c_in, Some(mem), Mask::Keys(key_valid));
            let drop2 = dropout(&mut c_out, rate, rng.as_deref_mut());
            add_into(&mut h, &c_out);
            let (f_in, ln3) = self.ln(&l.ln3, &h);
            let (mut f_out, ffn) = self.ffn(&l.ffn, f_in);
            let drop3 = dropout(&mut f_out, rate, rng.as_deref_mut());
            add_into(&mut h, &f_out);
            caches.push(DecLayerCache {
                ln1,
                self_attn,
                drop1,
                ln2,
                cross,
                drop2,
                ln3,
                ffn,
                drop3,
            });
        }
        let (out, dec_ln) = self.ln(&self.layout.dec_ln, &h);
        (out, dec_drop, caches, dec_ln)
    }

    fn project(&self, h: &[T]) -> Vec<T> {
        let d = self.cfg.d_model;
        let v = self.cfg.vocab;
        let n = h.len() / d;
        let mut logits = vec![T::zero(); n * v];
        match self.layout.out_w {
            Some(w) => matmul(h, self.p(w), Some(self.p(self.layout.out_b)), n, d, v, &mut logits),
            None => {
                for row in logits.chunks_exact_mut(v) {
                    row.copy_from_slice(self.p(self.layout.out_b));
                }
                matmul_bt_acc(h, self.p(self.layout.tok), n, d, v, &mut logits);
            }
        }
        logits
    }

    /// Teacher-forced logits `[|y_in|, vocab]` plus the activations for
    /// [`Model::backward`]. Dropout is active only when an RNG is supplied.
    pub fn forward(&self, x: &[u32], y_in: &[u32], mut rng: Option<&mut ChaCha8Rng>) -> Result<(Vec<T>, Trace<T>)> {
        self.check_tokens(x, y_in, Some(self.pad_token()))?;
        let (mem, key_valid, enc_drop, enc, enc_ln) = self.run_encoder(x, rng.as_deref_mut());
        let (dec_out, dec_drop, dec, dec_ln) = self.run_decoder(&mem, &key_valid, y_in, rng);
        let logits = self.project(&dec_out);
        Ok((
            logits,
            Trace {
                x: x.to_vec(),
                y_in: y_in.to_vec(),
                key_valid,
                enc_drop,
                enc,
                enc_ln,
                mem,
                dec_drop,
                dec,
                dec_ln,
                dec_out,
            },
        ))
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, x: &[u32], y_in: &[u32]) -> Result<Vec<T>> {
        self.forward(x, y_in, None).map(|(l, _)| l)
    }

    pub fn encode(&self, x: &[u32]) -> Result<Memory<T>> {
        self.check_tokens(x, &[0], Some(self.pad_token()))?;
        let (mem, key_valid, ..) = self.run_encoder(x, None);
        let cross_kv = self.layout.dec.iter().map(|l| self.kv(&l.cross, &mem)).collect();
        Ok(Memory { key_valid, cross_kv })
    }

    /// Logits of the next token after the decoder input `y_in`.
    ///
    /// Matches the last row of [`Model::logits`] exactly.
    pub fn next_logits(&self, memory: &Memory<T>, y_in: &[u32]) -> Vec<T> {
        let mut h = self.embed(y_in, self.layout.dec_pos);
        for (l, (k, v)) in self.layout.dec.iter().zip(&memory.cross_kv) {
            let (a_in, _) = self.ln(&l.ln1, &h);
            let (a_out, _) = self.attn(&l.self_attn, a_in, None, Mask::Causal);
            add_into(&mut h, &a_out);
            let (c_in, _) = self.ln(&l.ln2, &h);
            let (c_out, ..) = self.attend(&l.cross, &c_in, k, v, Mask::Keys(&memory.key_valid));
            add_into(&mut h, &c_out);
            let (f_in, _) = self.ln(&l.ln3, &h);
            let (f_out, _) = self.ffn(&l.ffn, f_in);
            add_into(&mut h, &f_out);
        }
        let (out, _) = self.ln(&self.layout.dec_ln, &h);
        let d = self.cfg.d_model;
        self.project(&out[out.len() - d..])
    }

    /// Accumulates into `grads` the gradient of a loss whose logit gradient is `dlogits`.
    pub fn backward(&self, tr: &Trace<T>, dlogits: &[T], grads: &mut ParamSet<T>) {
        let d = self.cfg.d_model;
        let v = self.cfg.vocab;
        let n_dec = tr.y_in.len();
        let lay = &self.layout;
        col_sum_acc(dlogits, v, &mut grads.data[lay.out_b]);
        let mut dh_out = vec![T::zero(); n_dec * d];
        match lay.out_w {
            Some(w) => {
                matmul_at_acc(&tr.dec_out, dlogits, n_dec, d, v, &mut grads.data[w]);
                matmul_bt_acc(dlogits, self.p(w), n_dec, v, d, &mut dh_out);
            }
            None => {
                matmul_at_acc(dlogits, &tr.dec_out, n_dec, v, d, &mut grads.data[lay.tok]);
                matmul(dlogits, self.p(lay.tok), None, n_dec, v, d, &mut dh_out);
            }
        }
        let mut dh = self.ln_back(&lay.dec_ln, &tr.dec_ln, &dh_out, grads);
        let mut dmem = vec![T::zero(); tr.mem.len()];
        for (l, c) in lay.dec.iter().zip(&tr.dec).rev() {
            let db = apply_mask(&dh, &c.drop3);
            let df = self.ffn_back(&l.ffn, &c.ffn, &db, grads);
            add_into(&mut dh, &self.ln_back(&l.ln3, &c.ln3, &df, grads));

            let db = apply_mask(&dh, &c.drop2);
            let (dq, dkv) = self.attn_back(&l.cross, &c.cross, &db, grads);
            add_into(&mut dmem, &dkv);
            add_into(&mut dh, &self.ln_back(&l.ln2, &c.ln2, &dq, grads));

            let db = apply_mask(&dh, &c.drop1);
            let (mut dq, dkv) = self.attn_back(&l.self_attn, &c.self_attn, &db, grads);
            add_into(&mut dq, &dkv);
            add_into(&mut dh, &self.ln_back(&l.ln1, &c.ln1, &dq, grads));
        }
        let demb = apply_mask(&dh, &tr.dec_drop);
        self.embed_back(&tr.y_in, lay.dec_pos, &demb, grads);

        let mut dh = self.ln_back(&lay.enc_ln, &tr.enc_ln, &dmem, grads);
        for (l, c) in lay.enc.iter().zip(&tr.enc).rev() {
            let db = apply_mask(&dh, &c.drop2);
            let df = self.ffn_back(&l.ffn, &c.ffn, &db, grads);
            add_into(&mut dh, &self.ln_back(&l.ln2, &c.ln2, &df, grads));

            let db = apply_mask(&dh, &c.drop1);
            let (mut dq, dkv) = self.attn_back(&l.attn, &c.attn, &db, grads);
            add_into(&mut dq, &dkv);
            add_into(&mut dh, &self.ln_back(&l.ln1, &c.ln1, &dq, grads));
        }
        let demb = apply_mask(&dh, &tr.enc_drop);
        self.embed_back(&tr.x, lay.enc_pos, &demb, grads);
        debug_assert_eq!(tr.key_valid.len(), tr.x.len());
    }

    fn embed_back(&self, tokens: &[u32], pos: usize, demb: &[T], grads: &mut ParamSet<T>) {
        let d = self.cfg.d_model;
        let tok = self.layout.tok;
        for (i, &t) in tokens.iter().enumerate() {
            let row = &demb[i * d..(i + 1) * d];
            add_into(&mut grads.data[tok][t as usize * d..(t as usize + 1) * d], row);
            add_into(&mut grads.data[pos][i * d..(i + 1) * d], row);
        }
    }
}

fn pair_mut<T>(v: &mut [Vec<T>], a: usize, b: usize) -> (&mut [T], &mut [T]) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

/// Decoder input for teacher forcing: `bos` followed by all but the last target token.
pub fn teacher_input(bos: u32, y: &[u32]) -> Vec<u32> {
    std::iter::once(bos).chain(y[..y.len().saturating_sub(1)].iter().copied()).collect()
}
