use rand::Rng;

use super::graph::{Graph, Var};
use super::mat::Mat;
use super::params::{ParamId, ParamStore};

/// `y = x·W + b` with `W` stored as `[in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Self {
            w: store.uniform(format!("{name}.weight"), input, output, bound, rng),
            b: store.uniform(format!("{name}.bias"), 1, output, bound, rng),
            input,
            output,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }
}

/// Gated recurrent unit with (reset, update, candidate) gate order.
#[derive(Clone, Debug)]
pub struct Gru {
    pub wx: ParamId,
    pub bx: ParamId,
    pub wh: ParamId,
    pub bh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            wx: store.uniform(format!("{name}.weight_ih"), input, 3 * hidden, bound, rng),
            bx: store.uniform(format!("{name}.bias_ih"), 1, 3 * hidden, bound, rng),
            wh: store.uniform(format!("{name}.weight_hh"), hidden, 3 * hidden, bound, rng),
            bh: store.uniform(format!("{name}.bias_hh"), 1, 3 * hidden, bound, rng),
            input,
            hidden,
        }
    }

    /// Input projection `x·W_ih + b_ih`, computable for all steps at once.
    pub fn project(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let w = g.param(self.wx);
        let b = g.param(self.bx);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }

    /// One update from a projected input.
    pub fn step(&self, g: &mut Graph<'_>, xp: Var, h: Var) -> Var {
        let w = g.param(self.wh);
        let b = g.param(self.bh);
        let hw = g.matmul(h, w);
        let gh = g.add_row(hw, b);
        g.gru_cell(xp, gh, h)
    }

    /// Runs over `steps` time steps of a time-major input `[steps·batch, in]`.
    /// Returns the hidden state after each step, in time order.
    pub fn run(&self, g: &mut Graph<'_>, x: Var, steps: usize, batch: usize, h0: Var, reverse: bool) -> Vec<Var> {
        let xp = self.project(g, x);
        let mut h = h0;
        let mut states = vec![h0; steps];
        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        for t in order {
            let xt = g.slice_rows(xp, t * batch, batch);
            h = self.step(g, xt, h);
            states[t] = h;
        }
        states
    }
}

/// Forward and backward GRUs over the same sequence.
#[derive(Clone, Debug)]
pub struct BiGru {
    pub fwd: Gru,
    pub bwd: Gru,
}

pub struct BiGruOutput {
    /// Per-step `[fwd ‖ bwd]` states, `[batch, 2H]` each.
    pub states: Vec<Var>,
    /// Final forward state (after the last step) ‖ final backward state
    /// (after the first step).
    pub last: Var,
}

impl BiGru {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            fwd: Gru::new(store, &format!("{name}.fwd"), input, hidden, rng),
            bwd: Gru::new(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn run(&self, g: &mut Graph<'_>, x: Var, steps: usize, batch: usize, h0: Option<(Var, Var)>) -> BiGruOutput {
        let (hf, hb) = h0.unwrap_or_else(|| {
            let z = g.input(Mat::zeros(batch, self.hidden()));
            (z, z)
        });
        let f = self.fwd.run(g, x, steps, batch, hf, false);
        let b = self.bwd.run(g, x, steps, batch, hb, true);
        let states = f.iter().zip(&b).map(|(&a, &c)| g.concat_cols(&[a, c])).collect();
        let last = g.concat_cols(&[f[steps - 1], b[0]]);
        BiGruOutput { states, last }
    }
}

/// Layer normalization with learned gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Mat::filled(1, width, 1.0)),
            bias: store.add(format!("{name}.bias"), Mat::zeros(1, width)),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let n = g.layer_norm(x, 1e-5);
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        let scaled = g.mul_row(n, gain);
        g.add_row(scaled, bias)
    }
}
