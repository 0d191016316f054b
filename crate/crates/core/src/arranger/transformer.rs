//! Post-norm Transformer encoder/decoder layers.

use rand::Rng;

use crate::nn::{AttnShape, Graph, LayerNorm, Linear, Mat, ParamStore, Var};

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut R) -> Self {
        Self {
            q: Linear::new(store, &format!("{name}.q"), d, d, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, rng),
            out: Linear::new(store, &format!("{name}.out"), d, d, rng),
            heads,
        }
    }

    /// `x` is `[batch·q_len, d]`, `memory` is `[batch·k_len, d]`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        x: Var,
        memory: Var,
        batch: usize,
        q_len: usize,
        k_len: usize,
        causal: bool,
    ) -> Var {
        let q = self.q.forward(g, x);
        let k = self.k.forward(g, memory);
        let v = self.v.forward(g, memory);
        let a = g.attention(
            q,
            k,
            v,
            AttnShape {
                batch,
                q_len,
                k_len,
                heads: self.heads,
                causal,
            },
        );
        self.out.forward(g, a)
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, ff: usize, rng: &mut R) -> Self {
        Self {
            inner: Linear::new(store, &format!("{name}.inner"), d, ff, rng),
            outer: Linear::new(store, &format!("{name}.outer"), ff, d, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let h = self.inner.forward(g, x);
        let h = g.relu(h);
        self.outer.forward(g, h)
    }
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ff: FeedForward,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        ff: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), d, heads, rng),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d),
            ff: FeedForward::new(store, &format!("{name}.ff"), d, ff, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, batch: usize, len: usize) -> Var {
        let a = self.attn.forward(g, x, x, batch, len, len, false);
        let x = g.add(x, a);
        let x = self.norm1.forward(g, x);
        let f = self.ff.forward(g, x);
        let x = g.add(x, f);
        self.norm2.forward(g, x)
    }
}

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub self_attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ff: FeedForward,
    pub norm3: LayerNorm,
}

impl DecoderLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        ff: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), d, heads, rng),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d),
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross_attn"), d, heads, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d),
            ff: FeedForward::new(store, &format!("{name}.ff"), d, ff, rng),
            norm3: LayerNorm::new(store, &format!("{name}.norm3"), d),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        x: Var,
        memory: Var,
        batch: usize,
        len: usize,
        memory_len: usize,
    ) -> Var {
        let a = self.self_attn.forward(g, x, x, batch, len, len, true);
        let x = g.add(x, a);
        let x = self.norm1.forward(g, x);
        let c = self.cross_attn.forward(g, x, memory, batch, len, memory_len, false);
        let x = g.add(x, c);
        let x = self.norm2.forward(g, x);
        let f = self.ff.forward(g, x);
        let x = g.add(x, f);
        self.norm3.forward(g, x)
    }
}

/// Sinusoidal position codes, `[len, d]`.
pub fn sinusoidal(len: usize, d: usize) -> Mat {
    let mut m = Mat::zeros(len, d);
    for pos in 0..len {
        for i in 0..d {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * freq;
            m.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoidal_codes() {
        let m = sinusoidal(8, 6);
        assert_eq!(m.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!((m.get(3, 0) - 3f64.sin()).abs() < 1e-15);
        assert!((m.get(3, 3) - (3.0 / 10_000f64.powf(2.0 / 6.0)).cos()).abs() < 1e-15);
    }
}
