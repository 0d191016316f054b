//! Finite-difference checks for every differentiable op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Compares analytic gradients of `f` against central differences for
/// every scalar of every parameter.
fn check(store: &mut ParamStore, f: impl Fn(&mut Graph<'_>) -> Var) {
    let grads = {
        let mut g = Graph::new(store);
        let loss = f(&mut g);
        g.backward(loss)
    };
    let h = 1e-5;
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for k in 0..store.value(id).len() {
            let orig = store.value(id).data[k];
            store.value_mut(id).data[k] = orig + h;
            let up = {
                let mut g = Graph::new(store);
                let l = f(&mut g);
                g.value(l).item()
            };
            store.value_mut(id).data[k] = orig - h;
            let down = {
                let mut g = Graph::new(store);
                let l = f(&mut g);
                g.value(l).item()
            };
            store.value_mut(id).data[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |m| m.data[k]);
            let tol = 1e-6 + 1e-5 * numeric.abs().max(analytic.abs());
            assert!(
                (numeric - analytic).abs() <= tol,
                "param {} [{k}]: numeric {numeric} vs analytic {analytic}",
                store.iter().nth(id.index()).unwrap().name
            );
        }
    }
}

fn rand_param(store: &mut ParamStore, name: &str, r: usize, c: usize, rng: &mut ChaCha8Rng) -> ParamId {
    store.uniform(name, r, c, 1.0, rng)
}

/// Weighted sum with fixed random weights so no gradient is symmetric.
fn readout(g: &mut Graph<'_>, x: Var, seed: u64) -> Var {
    let (r, c) = g.shape(x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.input(Mat::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()));
    let m = g.mul(x, w);
    g.sum(m)
}

#[test]
fn elementwise_and_linear_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let a = rand_param(&mut store, "a", 3, 4, &mut rng);
    let b = rand_param(&mut store, "b", 4, 2, &mut rng);
    let r = rand_param(&mut store, "r", 1, 2, &mut rng);
    let c = rand_param(&mut store, "c", 3, 2, &mut rng);
    check(&mut store, |g| {
        let (a, b, r, c) = (g.param(a), g.param(b), g.param(r), g.param(c));
        let ab = g.matmul(a, b);
        let x = g.add_row(ab, r);
        let y = g.mul_row(x, r);
        let s = g.sigmoid(y);
        let t = g.tanh(c);
        let e = g.exp(t);
        let u = g.relu(x);
        let m = g.mul(s, e);
        let d = g.sub(m, u);
        let k = g.scale(d, 0.7);
        let k = g.add_scalar(k, 0.3);
        let k = g.add(k, c);
        readout(g, k, 9)
    });
}

#[test]
fn structural_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    let a = rand_param(&mut store, "a", 4, 6, &mut rng);
    let b = rand_param(&mut store, "b", 4, 2, &mut rng);
    check(&mut store, |g| {
        let (a, b) = (g.param(a), g.param(b));
        let s = g.slice_cols(a, 1, 3);
        let rws = g.slice_rows(a, 1, 2);
        let rws = g.slice_cols(rws, 0, 5);
        let cc = g.concat_cols(&[s, b]);
        let gr = g.gather_rows(cc, vec![3, 0, 0, 2]);
        let cr = g.concat_rows(&[gr, rws]);
        let ga = g.gather(cr, vec![0, 5, 5, 7, 11, 13, 20, 29], 2, 4);
        let p = g.max_pool_rows(a, 2, 2, 2);
        let l1 = readout(g, ga, 3);
        let l2 = readout(g, p, 4);
        let l3 = readout(g, cr, 5);
        let s1 = g.add(l1, l2);
        g.add(s1, l3)
    });
}

#[test]
fn layer_norm_op() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let a = rand_param(&mut store, "a", 3, 5, &mut rng);
    let ln = LayerNorm::new(&mut store, "ln", 5);
    check(&mut store, |g| {
        let x = g.param(a);
        let y = ln.forward(g, x);
        readout(g, y, 6)
    });
}

#[test]
fn gru_and_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let gru = BiGru::new(&mut store, "gru", 3, 4, &mut rng);
    let head = Linear::new(&mut store, "head", 8, 5, &mut rng);
    let x = rand_param(&mut store, "x", 6, 3, &mut rng);
    check(&mut store, |g| {
        let xv = g.param(x);
        let out = gru.run(g, xv, 3, 2, None);
        let all = g.concat_rows(&out.states);
        let logits = head.forward(g, all);
        let ce = g.cross_entropy(logits, vec![Some(0), None, Some(4), Some(2), Some(1), None]);
        let last = head.forward(g, out.last);
        let targets = (0..10).map(|i| f64::from(i % 2)).collect();
        let mask = (0..10).map(|i| i != 3).collect();
        let bce = g.bce_with_logits(last, targets, Some(mask));
        g.add(ce, bce)
    });
}

#[test]
fn attention_op() {
    for causal in [false, true] {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let q = rand_param(&mut store, "q", 2 * 3, 4, &mut rng);
        let k = rand_param(&mut store, "k", 2 * 3, 4, &mut rng);
        let v = rand_param(&mut store, "v", 2 * 3, 4, &mut rng);
        let shape = AttnShape {
            batch: 2,
            q_len: 3,
            k_len: 3,
            heads: 2,
            causal,
        };
        check(&mut store, |g| {
            let (q, k, v) = (g.param(q), g.param(k), g.param(v));
            let o = g.attention(q, k, v, shape);
            readout(g, o, 7)
        });
    }
}

#[test]
fn cross_entropy_of_uniform_logits() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.input(Mat::zeros(2, 12));
    let l = g.cross_entropy(x, vec![Some(3), Some(11)]);
    assert!((g.value(l).item() - 2.0 * 12f64.ln()).abs() < 1e-12);
    let y = g.input(Mat::zeros(1, 12));
    let b = g.bce_with_logits(y, vec![1.0; 12], None);
    assert!((g.value(b).item() - 12.0 * 2f64.ln()).abs() < 1e-12);
}
