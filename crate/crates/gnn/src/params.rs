use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

/// Fixed layer widths of the Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    /// Padded neighbourhood size; also the width of the action head.
    pub max_nodes: usize,
    /// Per-node input features.
    pub features: usize,
    /// Width of the linear input embedding.
    pub embed: usize,
    /// Attention heads of the first GAT layer.
    pub heads: usize,
    /// Output width of each first-layer head; the layer emits `heads * head_dim`.
    pub head_dim: usize,
    /// Output width of the single-head second GAT layer.
    pub gat_out: usize,
    /// Hidden width of the MLP head.
    pub hidden: usize,
}

impl Architecture {
    /// 7 features, embedding 64, 8 heads of 64 (512 concatenated), second
    /// layer 64, MLP hidden 32, 32 padded slots.
    pub const DEFAULT: Architecture = Architecture {
        max_nodes: 32,
        features: 7,
        embed: 64,
        heads: 8,
        head_dim: 64,
        gat_out: 64,
        hidden: 32,
    };

    pub fn concat_width(&self) -> usize {
        self.heads * self.head_dim
    }

    /// Tensor shapes in serialization order.
    pub fn shapes(&self) -> [(&'static str, usize); 13] {
        let c = self.concat_width();
        [
            ("embed.weight", self.features * self.embed),
            ("embed.bias", self.embed),
            ("gat1.weight", self.embed * c),
            ("gat1.att_src", c),
            ("gat1.att_dst", c),
            ("gat1.bias", c),
            ("gat2.weight", c * self.gat_out),
            ("gat2.att_src", self.gat_out),
            ("gat2.att_dst", self.gat_out),
            ("gat2.bias", self.gat_out),
            ("mlp1.weight", self.gat_out * self.hidden),
            ("mlp1.bias", self.hidden),
            ("mlp2.weight", self.hidden),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.shapes().iter().map(|(_, n)| n).sum::<usize>() + 1
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Weights of the Q-network. The same type doubles as a gradient container.
///
/// Matrices are row-major `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub arch: Architecture,
    pub dropout: f32,
    pub embed_w: Vec<T>,
    pub embed_b: Vec<T>,
    pub gat1_w: Vec<T>,
    pub gat1_att_src: Vec<T>,
    pub gat1_att_dst: Vec<T>,
    pub gat1_b: Vec<T>,
    pub gat2_w: Vec<T>,
    pub gat2_att_src: Vec<T>,
    pub gat2_att_dst: Vec<T>,
    pub gat2_b: Vec<T>,
    pub mlp1_w: Vec<T>,
    pub mlp1_b: Vec<T>,
    pub mlp2_w: Vec<T>,
    pub mlp2_b: Vec<T>,
}

pub const DEFAULT_DROPOUT: f32 = 0.2;

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(arch: Architecture) -> Self {
        let mut tensors = arch.shapes().map(|(_, n)| vec![T::zero(); n]).into_iter();
        let mut next = || tensors.next().expect("shape table");
        Self {
            arch,
            dropout: DEFAULT_DROPOUT,
            embed_w: next(),
            embed_b: next(),
            gat1_w: next(),
            gat1_att_src: next(),
            gat1_att_dst: next(),
            gat1_b: next(),
            gat2_w: next(),
            gat2_att_src: next(),
            gat2_att_dst: next(),
            gat2_b: next(),
            mlp1_w: next(),
            mlp1_b: next(),
            mlp2_w: next(),
            mlp2_b: vec![T::zero()],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(arch);
        let c = arch.concat_width();
        glorot(&mut rng, &mut p.embed_w, arch.features, arch.embed);
        glorot(&mut rng, &mut p.gat1_w, arch.embed, arch.head_dim);
        glorot(&mut rng, &mut p.gat1_att_src, arch.head_dim, 1);
        glorot(&mut rng, &mut p.gat1_att_dst, arch.head_dim, 1);
        glorot(&mut rng, &mut p.gat2_w, c, arch.gat_out);
        glorot(&mut rng, &mut p.gat2_att_src, arch.gat_out, 1);
        glorot(&mut rng, &mut p.gat2_att_dst, arch.gat_out, 1);
        glorot(&mut rng, &mut p.mlp1_w, arch.gat_out, arch.hidden);
        glorot(&mut rng, &mut p.mlp2_w, arch.hidden, 1);
        p
    }

    pub fn with_dropout(mut self, rate: f32) -> Self {
        self.dropout = rate;
        self
    }

    /// All tensors in serialization order.
    pub fn tensors(&self) -> [&[T]; 14] {
        [
            &self.embed_w,
            &self.embed_b,
            &self.gat1_w,
            &self.gat1_att_src,
            &self.gat1_att_dst,
            &self.gat1_b,
            &self.gat2_w,
            &self.gat2_att_src,
            &self.gat2_att_dst,
            &self.gat2_b,
            &self.mlp1_w,
            &self.mlp1_b,
            &self.mlp2_w,
            &self.mlp2_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<T>; 14] {
        [
            &mut self.embed_w,
            &mut self.embed_b,
            &mut self.gat1_w,
            &mut self.gat1_att_src,
            &mut self.gat1_att_dst,
            &mut self.gat1_b,
            &mut self.gat2_w,
            &mut self.gat2_att_src,
            &mut self.gat2_att_dst,
            &mut self.gat2_b,
            &mut self.mlp1_w,
            &mut self.mlp1_b,
            &mut self.mlp2_w,
            &mut self.mlp2_b,
        ]
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.tensors().into_iter().flat_map(|t| t.iter())
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: T, other: &Self) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * *s;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn squared_norm(&self) -> T {
        self.iter().map(|v| *v * *v).sum()
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Converts every weight to another precision.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(self.arch);
        out.dropout = self.dropout;
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::from_f64(s.to_f64().unwrap_or(0.0)).unwrap_or_else(U::zero);
            }
        }
        out
    }
}

fn glorot<T: Scalar>(rng: &mut ChaCha8Rng, values: &mut [T], fan_in: usize, fan_out: usize) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in values {
        *v = T::from_f64(rng.gen_range(-bound..bound)).unwrap();
    }
}
