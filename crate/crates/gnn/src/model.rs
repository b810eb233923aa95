use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::layer::{
    attention_backward, attention_forward, elu, elu_grad, linear, linear_backward, AttentionCache,
    AttentionGrads, AttentionWeights,
};
use crate::{GnnError, ModelParams, PaddedGraph, QValues, Result, Scalar};

/// Intermediates of one forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    arch: crate::Architecture,
    /// Padded slot of each compact node.
    slots: Vec<usize>,
    neighbours: Vec<Vec<usize>>,
    x: Vec<T>,
    mask_embed: Option<Vec<T>>,
    gat1: AttentionCache<T>,
    mask_gat1: Option<Vec<T>>,
    gat2: AttentionCache<T>,
    mask_gat2: Option<Vec<T>>,
    hidden_pre: Vec<T>,
    mask_hidden: Option<Vec<T>>,
    hidden_out: Vec<T>,
}

/// Attention coefficients of one node for one head, keyed by padded slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRow<T> {
    pub layer: usize,
    pub head: usize,
    pub node: usize,
    pub weights: Vec<(usize, T)>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Attention rows of both GAT layers for every valid node.
    pub fn attention(&self) -> Vec<AttentionRow<T>> {
        let mut rows = Vec::new();
        for (layer, cache, heads) in [(1, &self.gat1, self.arch.heads), (2, &self.gat2, 1)] {
            for (i, nbrs) in self.neighbours.iter().enumerate() {
                let deg = nbrs.len();
                for head in 0..heads {
                    rows.push(AttentionRow {
                        layer,
                        head,
                        node: self.slots[i],
                        weights: nbrs
                            .iter()
                            .enumerate()
                            .map(|(t, &j)| (self.slots[j], cache.alpha[i][head * deg + t]))
                            .collect(),
                    });
                }
            }
        }
        rows
    }
}

/// Evaluates the network. Dropout is only active when `training` is set and
/// is driven entirely by `seed`.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    graph: &PaddedGraph<T>,
    training: bool,
    seed: u64,
) -> Result<QValues<T>> {
    forward_cached(params, graph, training, seed).map(|(q, _)| q)
}

pub fn forward_cached<T: Scalar>(
    params: &ModelParams<T>,
    graph: &PaddedGraph<T>,
    training: bool,
    seed: u64,
) -> Result<(QValues<T>, ForwardCache<T>)> {
    let arch = params.arch;
    graph.check(arch.max_nodes, arch.features)?;
    if params.len() != arch.parameter_count() {
        return Err(GnnError::Shape("parameter buffers do not match architecture".into()));
    }
    if arch.embed != arch.gat_out {
        return Err(GnnError::Shape("the residual readout needs embed == gat_out".into()));
    }

    let slots = canonical_order(graph);
    let n = slots.len();
    let mut compact = vec![usize::MAX; arch.max_nodes];
    for (c, &s) in slots.iter().enumerate() {
        compact[s] = c;
    }
    let neighbours: Vec<Vec<usize>> = slots
        .iter()
        .map(|&s| {
            slots
                .iter()
                .filter(|&&t| t == s || graph.adjacent(s, t))
                .map(|&t| compact[t])
                .collect()
        })
        .collect();

    let mut x = Vec::with_capacity(n * arch.features);
    for &s in &slots {
        x.extend_from_slice(graph.row(s));
    }

    let mut dropout = (training && params.dropout > 0.0).then(|| Dropout::new(params.dropout as f64, seed));

    let mut h0 = linear(&x, n, &params.embed_w, Some(&params.embed_b), arch.features, arch.embed);
    let mask_embed = dropout.as_mut().map(|d| d.apply(&mut h0));

    let w1 = gat1_weights(params);
    let gat1 = attention_forward(&w1, h0, &neighbours);
    let mut g1: Vec<T> = gat1.agg.iter().map(|&v| elu(v)).collect();
    let mask_gat1 = dropout.as_mut().map(|d| d.apply(&mut g1));

    let w2 = gat2_weights(params);
    let gat2 = attention_forward(&w2, g1, &neighbours);
    let mut g2: Vec<T> = gat2.agg.iter().map(|&v| elu(v)).collect();
    let mask_gat2 = dropout.as_mut().map(|d| d.apply(&mut g2));
    // residual from the embedding: on a complete neighbourhood attention gives
    // every node the same aggregate, so the readout needs the node's own input
    for (r, &h) in g2.iter_mut().zip(&gat1.input) {
        *r += h;
    }

    let hidden_pre = linear(&g2, n, &params.mlp1_w, Some(&params.mlp1_b), arch.gat_out, arch.hidden);
    let mut hidden_out: Vec<T> = hidden_pre.iter().map(|&v| v.max(T::zero())).collect();
    let mask_hidden = dropout.as_mut().map(|d| d.apply(&mut hidden_out));

    let q = linear(&hidden_out, n, &params.mlp2_w, Some(&params.mlp2_b), arch.hidden, 1);

    let mut values = vec![T::neg_infinity(); arch.max_nodes];
    for (c, &s) in slots.iter().enumerate() {
        values[s] = q[c];
    }
    let cache = ForwardCache {
        arch,
        slots,
        neighbours,
        x,
        mask_embed,
        gat1,
        mask_gat1,
        gat2,
        mask_gat2,
        hidden_pre,
        mask_hidden,
        hidden_out,
    };
    Ok((QValues { values, valid: graph.valid.clone() }, cache))
}

/// Exact gradient of `Σ_k dq[k] · Q[k]` with respect to every parameter.
/// Entries of `dq` at invalid slots are ignored.
pub fn backward<T: Scalar>(params: &ModelParams<T>, cache: &ForwardCache<T>, dq: &[T]) -> Result<ModelParams<T>> {
    let arch = cache.arch;
    if params.arch != arch {
        return Err(GnnError::Shape("cache was produced by a different architecture".into()));
    }
    if dq.len() != arch.max_nodes {
        return Err(GnnError::Shape(format!("upstream gradient has {} slots, expected {}", dq.len(), arch.max_nodes)));
    }
    let n = cache.slots.len();
    let mut grads = ModelParams::zeros(arch);
    grads.dropout = params.dropout;

    let dq_c: Vec<T> = cache.slots.iter().map(|&s| dq[s]).collect();

    // q = hidden_out · mlp2_w + mlp2_b
    let mut d_hidden = linear_backward(
        &cache.hidden_out,
        &dq_c,
        n,
        &params.mlp2_w,
        &mut grads.mlp2_w,
        Some(&mut grads.mlp2_b),
        arch.hidden,
        1,
        true,
    );
    apply_mask(&mut d_hidden, &cache.mask_hidden);
    for (d, &pre) in d_hidden.iter_mut().zip(&cache.hidden_pre) {
        if pre <= T::zero() {
            *d = T::zero();
        }
    }
    let mut readout = post_activation(&cache.gat2.agg, &cache.mask_gat2);
    for (r, &h) in readout.iter_mut().zip(&cache.gat1.input) {
        *r += h;
    }
    let d_readout = linear_backward(
        &readout,
        &d_hidden,
        n,
        &params.mlp1_w,
        &mut grads.mlp1_w,
        Some(&mut grads.mlp1_b),
        arch.gat_out,
        arch.hidden,
        true,
    );
    let mut d_g2 = d_readout.clone();
    apply_mask(&mut d_g2, &cache.mask_gat2);
    for (d, &a) in d_g2.iter_mut().zip(&cache.gat2.agg) {
        *d *= elu_grad(a);
    }

    let w2 = gat2_weights(params);
    let mut d_g1 = {
        let mut g = AttentionGrads {
            w: &mut grads.gat2_w,
            att_src: &mut grads.gat2_att_src,
            att_dst: &mut grads.gat2_att_dst,
            bias: &mut grads.gat2_b,
        };
        attention_backward(&w2, &mut g, &cache.gat2, &cache.neighbours, &d_g2, true)
    };
    apply_mask(&mut d_g1, &cache.mask_gat1);
    for (d, &a) in d_g1.iter_mut().zip(&cache.gat1.agg) {
        *d *= elu_grad(a);
    }

    let w1 = gat1_weights(params);
    let mut d_h0 = {
        let mut g = AttentionGrads {
            w: &mut grads.gat1_w,
            att_src: &mut grads.gat1_att_src,
            att_dst: &mut grads.gat1_att_dst,
            bias: &mut grads.gat1_b,
        };
        attention_backward(&w1, &mut g, &cache.gat1, &cache.neighbours, &d_g1, true)
    };
    for (d, &r) in d_h0.iter_mut().zip(&d_readout) {
        *d += r;
    }
    apply_mask(&mut d_h0, &cache.mask_embed);
    linear_backward(
        &cache.x,
        &d_h0,
        n,
        &params.embed_w,
        &mut grads.embed_w,
        Some(&mut grads.embed_b),
        arch.features,
        arch.embed,
        false,
    );
    Ok(grads)
}

/// Valid slots with the self row first and the rest ordered by feature
/// content. Every reduction then runs in an order that does not depend on
/// which padded slot a neighbour occupies, so permuting neighbour rows
/// permutes the outputs bit for bit.
fn canonical_order<T: Scalar>(graph: &PaddedGraph<T>) -> Vec<usize> {
    let mut slots = graph.valid_indices();
    let key = |s: usize| -> (bool, Vec<u64>) {
        let bits = graph.row(s).iter().map(|v| v.to_f64().unwrap_or(0.0).to_bits()).collect();
        (s != graph.self_index, bits)
    };
    slots.sort_by(|&a, &b| key(a).cmp(&key(b)).then(a.cmp(&b)));
    slots
}

fn gat1_weights<T: Scalar>(p: &ModelParams<T>) -> AttentionWeights<'_, T> {
    AttentionWeights {
        w: &p.gat1_w,
        att_src: &p.gat1_att_src,
        att_dst: &p.gat1_att_dst,
        bias: &p.gat1_b,
        heads: p.arch.heads,
        head_dim: p.arch.head_dim,
        d_in: p.arch.embed,
    }
}

fn gat2_weights<T: Scalar>(p: &ModelParams<T>) -> AttentionWeights<'_, T> {
    AttentionWeights {
        w: &p.gat2_w,
        att_src: &p.gat2_att_src,
        att_dst: &p.gat2_att_dst,
        bias: &p.gat2_b,
        heads: 1,
        head_dim: p.arch.gat_out,
        d_in: p.arch.concat_width(),
    }
}

fn apply_mask<T: Scalar>(values: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(mask) = mask {
        for (v, &m) in values.iter_mut().zip(mask) {
            *v *= m;
        }
    }
}

fn post_activation<T: Scalar>(agg: &[T], mask: &Option<Vec<T>>) -> Vec<T> {
    let mut out: Vec<T> = agg.iter().map(|&v| elu(v)).collect();
    apply_mask(&mut out, mask);
    out
}

/// Inverted dropout with a private seeded stream.
struct Dropout<T> {
    rng: ChaCha8Rng,
    rate: f64,
    scale: T,
}

impl<T: Scalar> Dropout<T> {
    fn new(rate: f64, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            rate,
            scale: T::from_f64(1.0 / (1.0 - rate)).unwrap(),
        }
    }

    fn apply(&mut self, values: &mut [T]) -> Vec<T> {
        let mask: Vec<T> = (0..values.len())
            .map(|_| if self.rng.gen::<f64>() < self.rate { T::zero() } else { self.scale })
            .collect();
        for (v, &m) in values.iter_mut().zip(&mask) {
            *v *= m;
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Architecture;

    fn tiny() -> Architecture {
        Architecture { max_nodes: 4, features: 7, embed: 8, heads: 2, head_dim: 8, gat_out: 8, hidden: 4 }
    }

    fn star(arch: Architecture, n: usize, seed: u64) -> PaddedGraph<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = PaddedGraph::new(arch.max_nodes, arch.features);
        for k in 0..n {
            g.valid[k] = true;
            for v in g.row_mut(k) {
                *v = rng.gen_range(0.0..10.0);
            }
            if k > 0 {
                g.connect(0, k);
            }
        }
        g
    }

    #[test]
    fn self_only_graph_has_single_action() {
        let arch = tiny();
        let p = ModelParams::<f64>::init(arch, 3);
        let g = star(arch, 1, 1);
        let q = forward(&p, &g, false, 0).unwrap();
        assert_eq!(q.valid_count(), 1);
        assert!(q.values[0].is_finite());
        assert!(q.values[1..].iter().all(|v| *v == f64::NEG_INFINITY));
        assert_eq!(q.argmax(), Some(0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let arch = tiny();
        let p = ModelParams::<f64>::init(arch, 3);
        let g = PaddedGraph::<f64>::new(5, 7);
        assert!(matches!(forward(&p, &g, false, 0), Err(GnnError::Shape(_))));
        let mut g = star(arch, 2, 0);
        g.adjacency[1 * arch.max_nodes] = false;
        assert!(matches!(forward(&p, &g, false, 0), Err(GnnError::Shape(_))));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradient() {
        let arch = tiny();
        let p = ModelParams::<f64>::init(arch, 3);
        let g = star(arch, 3, 2);
        let (_, cache) = forward_cached(&p, &g, true, 11).unwrap();
        let grads = backward(&p, &cache, &[0.0; 4]).unwrap();
        assert_eq!(grads.squared_norm(), 0.0);
    }

    #[test]
    fn dropout_is_seeded_and_off_at_inference() {
        let arch = tiny();
        let p = ModelParams::<f64>::init(arch, 3);
        let g = star(arch, 4, 2);
        let a = forward(&p, &g, true, 5).unwrap();
        let b = forward(&p, &g, true, 5).unwrap();
        assert_eq!(a, b);
        let eval1 = forward(&p, &g, false, 5).unwrap();
        let eval2 = forward(&p, &g, false, 99).unwrap();
        assert_eq!(eval1, eval2);
    }
}
