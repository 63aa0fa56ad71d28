use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, Scalar};
use crate::error::{Error, Result};

/// Named dense tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub data: Vec<Vec<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(Vec::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            shapes: self.shapes.clone(),
            data: self.data.iter().map(|t| vec![T::zero(); t.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|t| t.fill(T::zero()));
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().flatten().for_each(|x| *x *= s);
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// First tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.names
            .iter()
            .zip(&self.data)
            .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(n, _)| n.as_str())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            shapes: self.shapes.clone(),
            data: self.data.iter().map(|t| t.iter().map(|x| U::of(x.f64())).collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LnIdx {
    pub g: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AttnIdx {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct FfnIdx {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EncLayerIdx {
    pub ln1: LnIdx,
    pub attn: AttnIdx,
    pub ln2: LnIdx,
    pub ffn: FfnIdx,
}

#[derive(Debug, Clone, Copy)]
pub struct DecLayerIdx {
    pub ln1: LnIdx,
    pub self_attn: AttnIdx,
    pub ln2: LnIdx,
    pub cross: AttnIdx,
    pub ln3: LnIdx,
    pub ffn: FfnIdx,
}

/// Tensor indices into a [`ParamSet`] built for a config.
#[derive(Debug, Clone)]
pub struct Layout {
    pub tok: usize,
    pub enc_pos: usize,
    pub dec_pos: usize,
    pub enc: Vec<EncLayerIdx>,
    pub enc_ln: LnIdx,
    pub dec: Vec<DecLayerIdx>,
    pub dec_ln: LnIdx,
    pub out_w: Option<usize>,
    pub out_b: usize,
}

#[derive(Clone, Copy)]
enum Init {
    Uniform(f64),
    Zeros,
    Ones,
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    inits: Vec<Init>,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.names.push(name);
        self.shapes.push(shape);
        self.inits.push(init);
        self.names.len() - 1
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> (usize, usize) {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = self.push(format!("{prefix}.w"), vec![fan_in, fan_out], Init::Uniform(a));
        let b = self.push(format!("{prefix}.b"), vec![fan_out], Init::Zeros);
        (w, b)
    }

    fn ln(&mut self, prefix: &str, d: usize) -> LnIdx {
        LnIdx {
            g: self.push(format!("{prefix}.g"), vec![d], Init::Ones),
            b: self.push(format!("{prefix}.b"), vec![d], Init::Zeros),
        }
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnIdx {
        let (wq, bq) = self.linear(&format!("{prefix}.q"), d, d);
        let (wk, bk) = self.linear(&format!("{prefix}.k"), d, d);
        let (wv, bv) = self.linear(&format!("{prefix}.v"), d, d);
        let (wo, bo) = self.linear(&format!("{prefix}.o"), d, d);
        AttnIdx {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize) -> FfnIdx {
        let (w1, b1) = self.linear(&format!("{prefix}.fc1"), d, f);
        let (w2, b2) = self.linear(&format!("{prefix}.fc2"), f, d);
        FfnIdx { w1, b1, w2, b2 }
    }
}

/// Builds the tensor layout for a config together with each tensor's init rule.
fn plan(cfg: &ModelConfig) -> (Builder, Layout) {
    let (d, f, v) = (cfg.d_model, cfg.d_ff, cfg.vocab);
    let mut b = Builder {
        names: Vec::new(),
        shapes: Vec::new(),
        inits: Vec::new(),
    };
    let emb_a = (3.0 / d as f64).sqrt();
    let tok = b.push("tok_emb".into(), vec![v, d], Init::Uniform(emb_a));
    let enc_pos = b.push("enc_pos".into(), vec![cfg.max_positions, d], Init::Uniform(0.5 * emb_a));
    let dec_pos = b.push("dec_pos".into(), vec![cfg.target_len, d], Init::Uniform(0.5 * emb_a));
    let enc = (0..cfg.enc_layers)
        .map(|l| {
            let p = format!("enc.{l}");
            EncLayerIdx {
                ln1: b.ln(&format!("{p}.ln1"), d),
                attn: b.attn(&format!("{p}.attn"), d),
                ln2: b.ln(&format!("{p}.ln2"), d),
                ffn: b.ffn(&format!("{p}.ffn"), d, f),
            }
        })
        .collect();
    let enc_ln = b.ln("enc.ln_f", d);
    let dec = (0..cfg.dec_layers)
        .map(|l| {
            let p = format!("dec.{l}");
            DecLayerIdx {
                ln1: b.ln(&format!("{p}.ln1"), d),
                self_attn: b.attn(&format!("{p}.self"), d),
                ln2: b.ln(&format!("{p}.ln2"), d),
                cross: b.attn(&format!("{p}.cross"), d),
                ln3: b.ln(&format!("{p}.ln3"), d),
                ffn: b.ffn(&format!("{p}.ffn"), d, f),
            }
        })
        .collect();
    let dec_ln = b.ln("dec.ln_f", d);
    let out_w = (!cfg.tie_embeddings).then(|| {
        let a = (6.0 / (d + v) as f64).sqrt();
        b.push("out.w".into(), vec![d, v], Init::Uniform(a))
    });
    let out_b = b.push("out.b".into(), vec![v], Init::Zeros);
    let layout = Layout {
        tok,
        enc_pos,
        dec_pos,
        enc,
        enc_ln,
        dec,
        dec_ln,
        out_w,
        out_b,
    };
    (b, layout)
}

pub fn layout(cfg: &ModelConfig) -> Layout {
    plan(cfg).1
}

/// Seeded initialization: uniform `±sqrt(6 / (fan_in + fan_out))` for projections,
/// `±sqrt(3 / d)` for token embeddings (half that for positions), zero biases and unit
/// layer-norm gains.
pub fn init_params<T: Scalar>(cfg: &ModelConfig) -> Result<(ParamSet<T>, Layout)> {
    cfg.validate()?;
    let (b, layout) = plan(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let data = b
        .shapes
        .iter()
        .zip(&b.inits)
        .map(|(shape, init)| {
            let n: usize = shape.iter().product();
            match *init {
                Init::Zeros => vec![T::zero(); n],
                Init::Ones => vec![T::one(); n],
                Init::Uniform(a) => (0..n).map(|_| T::of(rng.random_range(-a..a))).collect(),
            }
        })
        .collect();
    let params = ParamSet {
        names: b.names,
        shapes: b.shapes,
        data,
    };
    if params.count() != cfg.param_count() {
        return Err(Error::Contract(format!(
            "layout holds {} parameters, formula gives {}",
            params.count(),
            cfg.param_count()
        )));
    }
    Ok((params, layout))
}

/// Checks that stored tensors match the layout a config implies.
pub fn check_shapes<T: Scalar>(cfg: &ModelConfig, params: &ParamSet<T>) -> Result<Layout> {
    let (b, layout) = plan(cfg);
    if b.names != params.names || b.shapes != params.shapes {
        return Err(Error::Format("checkpoint tensors do not match the model config".into()));
    }
    for (name, (shape, t)) in params.names.iter().zip(params.shapes.iter().zip(&params.data)) {
        if shape.iter().product::<usize>() != t.len() {
            return Err(Error::Format(format!("tensor {name} has {} values for shape {shape:?}", t.len())));
        }
    }
    Ok(layout)
}
