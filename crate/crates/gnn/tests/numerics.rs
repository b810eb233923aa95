use ldtn_gnn::{backward, forward, forward_cached, Architecture, ModelParams, PaddedGraph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> Architecture {
    Architecture { max_nodes: 4, features: 7, embed: 8, heads: 2, head_dim: 8, gat_out: 8, hidden: 4 }
}

/// Star graph around slot 0 with `n` valid rows and random features.
fn random_star(arch: Architecture, n: usize, rng: &mut ChaCha8Rng) -> PaddedGraph<f64> {
    let mut g = PaddedGraph::new(arch.max_nodes, arch.features);
    for k in 0..arch.max_nodes {
        for v in g.row_mut(k) {
            *v = rng.gen_range(0.0..10.0);
        }
    }
    for k in 0..n {
        g.valid[k] = true;
        if k > 0 {
            g.connect(0, k);
        }
    }
    g
}

fn scalar_loss(p: &ModelParams<f64>, g: &PaddedGraph<f64>, dq: &[f64], training: bool, seed: u64) -> f64 {
    let q = forward(p, g, training, seed).unwrap();
    q.values.iter().zip(&q.valid).zip(dq).filter(|((_, &ok), _)| ok).map(|((v, _), d)| v * d).sum()
}

fn relative_error(a: f64, b: f64) -> f64 {
    // Partials below 1e-4 are compared on an absolute 1e-8 scale; the stencil's
    // round-off (~1e-10 on this loss scale) would otherwise dominate the ratio.
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn check_gradients(seed: u64, training: bool) -> f64 {
    let arch = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::<f64>::init(arch, seed);
    // non-zero biases so every tensor is exercised
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    let n = rng.gen_range(1..=arch.max_nodes);
    let g = random_star(arch, n, &mut rng);
    let dq: Vec<f64> = (0..arch.max_nodes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dropout_seed = rng.gen();

    let (_, cache) = forward_cached(&p, &g, training, dropout_seed).unwrap();
    let analytic = backward(&p, &cache, &dq).unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let flat_analytic: Vec<f64> = analytic.iter().copied().collect();
    let mut idx = 0;
    for t in 0..14 {
        let len = p.tensors()[t].len();
        for k in 0..len {
            let orig = p.tensors()[t][k];
            let mut at = |offset: f64| {
                p.tensors_mut()[t][k] = orig + offset;
                scalar_loss(&p, &g, &dq, training, dropout_seed)
            };
            // fourth-order central stencil
            let numeric = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
            p.tensors_mut()[t][k] = orig;
            worst = worst.max(relative_error(flat_analytic[idx], numeric));
            idx += 1;
        }
    }
    worst
}

#[test]
fn gradients_match_central_differences() {
    for seed in 0..20 {
        let err = check_gradients(seed, false);
        eprintln!("seed {seed}: worst relative error {err:e}");
        assert!(err < 1e-4, "seed {seed}: worst relative error {err:e}");
    }
}

#[test]
fn gradients_match_with_fixed_dropout_masks() {
    for seed in 100..105 {
        let err = check_gradients(seed, true);
        assert!(err < 1e-4, "seed {seed}: worst relative error {err:e}");
    }
}

#[test]
fn uniform_features_give_uniform_attention() {
    let arch = tiny();
    let p = ModelParams::<f64>::init(arch, 7);
    let mut g = PaddedGraph::new(arch.max_nodes, arch.features);
    for k in 0..arch.max_nodes {
        g.valid[k] = true;
        g.row_mut(k).iter_mut().for_each(|v| *v = 3.0);
        for j in 0..arch.max_nodes {
            g.connect(k, j);
        }
    }
    let (_, cache) = forward_cached(&p, &g, false, 0).unwrap();
    for row in cache.attention() {
        let deg = row.weights.len() as f64;
        assert_eq!(deg, 4.0);
        for (_, a) in row.weights {
            assert!((a - 1.0 / deg).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_rows_are_normalised() {
    let arch = Architecture::DEFAULT;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = ModelParams::<f64>::init(arch, 5);
    for _ in 0..10 {
        let n = rng.gen_range(1..8);
        let g = random_star(arch, n, &mut rng);
        let (_, cache) = forward_cached(&p, &g, false, 0).unwrap();
        for row in cache.attention() {
            let total: f64 = row.weights.iter().map(|(_, a)| a).sum();
            assert!((total - 1.0).abs() < 1e-6);
            assert!(row.weights.iter().all(|(slot, _)| g.valid[*slot]));
        }
    }
}

#[test]
fn dropout_disabled_gradients_are_deterministic() {
    let arch = tiny();
    let p = ModelParams::<f64>::init(arch, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = random_star(arch, 3, &mut rng);
    let dq = [1.0, -0.5, 0.25, 2.0];
    let (_, c1) = forward_cached(&p, &g, false, 1).unwrap();
    let (_, c2) = forward_cached(&p, &g, false, 2).unwrap();
    assert_eq!(backward(&p, &c1, &dq).unwrap(), backward(&p, &c2, &dq).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn padded_rows_never_change_valid_outputs(seed in any::<u64>(), n in 1usize..4, junk in -50.0f64..50.0) {
        let arch = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ModelParams::<f64>::init(arch, seed);
        let g = random_star(arch, n, &mut rng);
        let mut h = g.clone();
        for k in n..arch.max_nodes {
            h.row_mut(k).iter_mut().for_each(|v| *v = junk);
        }
        for training in [false, true] {
            let a = forward(&p, &g, training, seed).unwrap();
            let b = forward(&p, &h, training, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn permuting_neighbours_permutes_q_values(seed in any::<u64>(), n in 2usize..=4, training in any::<bool>()) {
        let arch = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ModelParams::<f64>::init(arch, seed ^ 1);
        let g = random_star(arch, n, &mut rng);
        // reverse the neighbour slots 1..n
        let perm: Vec<usize> = (0..arch.max_nodes)
            .map(|k| if k >= 1 && k < n { n - k } else { k })
            .collect();
        let mut h = PaddedGraph::new(arch.max_nodes, arch.features);
        h.valid = vec![false; arch.max_nodes];
        for k in 0..arch.max_nodes {
            let src = perm[k];
            h.row_mut(k).copy_from_slice(g.row(src));
            h.valid[k] = g.valid[src];
        }
        for i in 0..arch.max_nodes {
            for j in 0..arch.max_nodes {
                if g.adjacent(perm[i], perm[j]) {
                    h.connect(i, j);
                }
            }
        }
        let a = forward(&p, &g, training, 3).unwrap();
        let b = forward(&p, &h, training, 3).unwrap();
        for k in 0..arch.max_nodes {
            prop_assert_eq!(a.values[perm[k]].to_bits(), b.values[k].to_bits());
            prop_assert_eq!(a.valid[perm[k]], b.valid[k]);
        }
    }
}
