//! Dense helpers and the masked multi-head graph attention layer.
//!
//! All routines work on the compacted set of valid nodes; `neighbours[i]`
//! lists the compact indices node `i` attends to (self included).

use crate::Scalar;

pub(crate) const LEAKY_SLOPE: f64 = 0.2;

/// `out[i, :] = x[i, :] · w + b` for `n` rows.
pub(crate) fn linear<T: Scalar>(x: &[T], n: usize, w: &[T], b: Option<&[T]>, d_in: usize, d_out: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * d_out];
    for i in 0..n {
        let row = &mut out[i * d_out..(i + 1) * d_out];
        if let Some(b) = b {
            row.copy_from_slice(b);
        }
        for k in 0..d_in {
            let a = x[i * d_in + k];
            if a == T::zero() {
                continue;
            }
            let wk = &w[k * d_out..(k + 1) * d_out];
            for (o, &wv) in row.iter_mut().zip(wk) {
                *o += a * wv;
            }
        }
    }
    out
}

/// Accumulates `dw += xᵀ · dy`, `db += Σ dy` and returns `dx = dy · wᵀ`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    n: usize,
    w: &[T],
    dw: &mut [T],
    db: Option<&mut [T]>,
    d_in: usize,
    d_out: usize,
    want_dx: bool,
) -> Vec<T> {
    for i in 0..n {
        let dyi = &dy[i * d_out..(i + 1) * d_out];
        for k in 0..d_in {
            let a = x[i * d_in + k];
            if a == T::zero() {
                continue;
            }
            let dwk = &mut dw[k * d_out..(k + 1) * d_out];
            for (g, &d) in dwk.iter_mut().zip(dyi) {
                *g += a * d;
            }
        }
    }
    if let Some(db) = db {
        for i in 0..n {
            for (g, &d) in db.iter_mut().zip(&dy[i * d_out..(i + 1) * d_out]) {
                *g += d;
            }
        }
    }
    if !want_dx {
        return Vec::new();
    }
    let mut dx = vec![T::zero(); n * d_in];
    for i in 0..n {
        let dyi = &dy[i * d_out..(i + 1) * d_out];
        for k in 0..d_in {
            let wk = &w[k * d_out..(k + 1) * d_out];
            dx[i * d_in + k] = wk.iter().zip(dyi).map(|(&a, &b)| a * b).sum();
        }
    }
    dx
}

pub(crate) fn elu<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        v.exp() - T::one()
    }
}

pub(crate) fn elu_grad<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else {
        v.exp()
    }
}

fn leaky<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        v * T::from_f64(LEAKY_SLOPE).unwrap()
    }
}

fn leaky_grad<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else {
        T::from_f64(LEAKY_SLOPE).unwrap()
    }
}

/// Parameters of one attention layer, borrowed from [`crate::ModelParams`].
pub(crate) struct AttentionWeights<'a, T> {
    pub w: &'a [T],
    pub att_src: &'a [T],
    pub att_dst: &'a [T],
    pub bias: &'a [T],
    pub heads: usize,
    pub head_dim: usize,
    pub d_in: usize,
}

pub(crate) struct AttentionGrads<'a, T> {
    pub w: &'a mut [T],
    pub att_src: &'a mut [T],
    pub att_dst: &'a mut [T],
    pub bias: &'a mut [T],
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionCache<T> {
    /// Layer input (already dropped out), `n x d_in`.
    pub input: Vec<T>,
    /// Projected features, `n x heads*head_dim`.
    pub z: Vec<T>,
    /// Pre-LeakyReLU logits per node, laid out `[head][neighbour]`.
    pub logits: Vec<Vec<T>>,
    /// Attention coefficients, same layout as `logits`.
    pub alpha: Vec<Vec<T>>,
    /// Aggregated pre-activation output, `n x heads*head_dim`.
    pub agg: Vec<T>,
}

/// Masked additive attention followed by ELU. Returns the cache; the layer
/// output is `elu(cache.agg)`.
pub(crate) fn attention_forward<T: Scalar>(
    p: &AttentionWeights<'_, T>,
    input: Vec<T>,
    neighbours: &[Vec<usize>],
) -> AttentionCache<T> {
    let n = neighbours.len();
    let width = p.heads * p.head_dim;
    let z = linear(&input, n, p.w, None, p.d_in, width);

    // per-node source / destination scores, n x heads
    let mut s_src = vec![T::zero(); n * p.heads];
    let mut s_dst = vec![T::zero(); n * p.heads];
    for i in 0..n {
        for h in 0..p.heads {
            let zi = &z[i * width + h * p.head_dim..i * width + (h + 1) * p.head_dim];
            let a_s = &p.att_src[h * p.head_dim..(h + 1) * p.head_dim];
            let a_d = &p.att_dst[h * p.head_dim..(h + 1) * p.head_dim];
            s_src[i * p.heads + h] = zi.iter().zip(a_s).map(|(&a, &b)| a * b).sum();
            s_dst[i * p.heads + h] = zi.iter().zip(a_d).map(|(&a, &b)| a * b).sum();
        }
    }

    let mut logits = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut agg = vec![T::zero(); n * width];
    for i in 0..n {
        let deg = neighbours[i].len();
        let mut lg = vec![T::zero(); p.heads * deg];
        let mut al = vec![T::zero(); p.heads * deg];
        for h in 0..p.heads {
            let mut max = T::neg_infinity();
            for (t, &j) in neighbours[i].iter().enumerate() {
                let raw = s_dst[i * p.heads + h] + s_src[j * p.heads + h];
                lg[h * deg + t] = raw;
                let e = leaky(raw);
                al[h * deg + t] = e;
                if e > max {
                    max = e;
                }
            }
            let mut total = T::zero();
            for t in 0..deg {
                let e = (al[h * deg + t] - max).exp();
                al[h * deg + t] = e;
                total += e;
            }
            for t in 0..deg {
                al[h * deg + t] = al[h * deg + t] / total;
            }
            let out = &mut agg[i * width + h * p.head_dim..i * width + (h + 1) * p.head_dim];
            out.copy_from_slice(&p.bias[h * p.head_dim..(h + 1) * p.head_dim]);
            for (t, &j) in neighbours[i].iter().enumerate() {
                let a = al[h * deg + t];
                let zj = &z[j * width + h * p.head_dim..j * width + (h + 1) * p.head_dim];
                for (o, &v) in out.iter_mut().zip(zj) {
                    *o += a * v;
                }
            }
        }
        logits.push(lg);
        alpha.push(al);
    }
    AttentionCache { input, z, logits, alpha, agg }
}

/// Back-propagates `d_agg` (gradient w.r.t. the pre-ELU aggregate) through the
/// layer, accumulating parameter gradients. Returns the input gradient when
/// requested.
pub(crate) fn attention_backward<T: Scalar>(
    p: &AttentionWeights<'_, T>,
    g: &mut AttentionGrads<'_, T>,
    cache: &AttentionCache<T>,
    neighbours: &[Vec<usize>],
    d_agg: &[T],
    want_dx: bool,
) -> Vec<T> {
    let n = neighbours.len();
    let width = p.heads * p.head_dim;
    let hd = p.head_dim;
    let z = &cache.z;
    let mut dz = vec![T::zero(); n * width];
    let mut ds_src = vec![T::zero(); n * p.heads];
    let mut ds_dst = vec![T::zero(); n * p.heads];

    for i in 0..n {
        let deg = neighbours[i].len();
        for h in 0..p.heads {
            let dout = &d_agg[i * width + h * hd..i * width + (h + 1) * hd];
            for (b, &d) in g.bias[h * hd..(h + 1) * hd].iter_mut().zip(dout) {
                *b += d;
            }
            // dα_ij = dout_i · z_j ; dz_j += α_ij dout_i
            let mut dalpha = vec![T::zero(); deg];
            for (t, &j) in neighbours[i].iter().enumerate() {
                let a = cache.alpha[i][h * deg + t];
                let zj = &z[j * width + h * hd..j * width + (h + 1) * hd];
                dalpha[t] = zj.iter().zip(dout).map(|(&x, &y)| x * y).sum();
                let dzj = &mut dz[j * width + h * hd..j * width + (h + 1) * hd];
                for (o, &d) in dzj.iter_mut().zip(dout) {
                    *o += a * d;
                }
            }
            // softmax backward then LeakyReLU backward
            let weighted: T = (0..deg).map(|t| cache.alpha[i][h * deg + t] * dalpha[t]).sum();
            for (t, &j) in neighbours[i].iter().enumerate() {
                let a = cache.alpha[i][h * deg + t];
                let de = a * (dalpha[t] - weighted);
                let draw = de * leaky_grad(cache.logits[i][h * deg + t]);
                ds_dst[i * p.heads + h] += draw;
                ds_src[j * p.heads + h] += draw;
            }
        }
    }

    // scores s = a · z
    for i in 0..n {
        for h in 0..p.heads {
            let zi = &z[i * width + h * hd..i * width + (h + 1) * hd];
            let gs = ds_src[i * p.heads + h];
            let gd = ds_dst[i * p.heads + h];
            for c in 0..hd {
                g.att_src[h * hd + c] += gs * zi[c];
                g.att_dst[h * hd + c] += gd * zi[c];
            }
            let dzi = &mut dz[i * width + h * hd..i * width + (h + 1) * hd];
            for c in 0..hd {
                dzi[c] += gs * p.att_src[h * hd + c] + gd * p.att_dst[h * hd + c];
            }
        }
    }

    linear_backward(&cache.input, &dz, n, p.w, g.w, None, p.d_in, width, want_dx)
}
