use rand::Rng;

use crate::numerics::ops::LAYER_NORM_EPS;
use crate::numerics::{init, Graph, ParamId, ParamStore, Tensor, Var};
use crate::{Error, Result};

/// 21 left-hand joints followed by 21 right-hand joints.
pub const NUM_TOKENS: usize = 42;

#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub ln1: (ParamId, ParamId),
    pub wq: (ParamId, ParamId),
    pub wk: (ParamId, ParamId),
    pub wv: (ParamId, ParamId),
    pub wo: (ParamId, ParamId),
    pub ln2: (ParamId, ParamId),
    pub ff1: (ParamId, ParamId),
    pub ff2: (ParamId, ParamId),
    pub heads: usize,
}

fn dense(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, gain: f64, rng: &mut impl Rng) -> (ParamId, ParamId) {
    (
        store.add(format!("{name}.w"), init::he(rng, &[fan_in, fan_out], fan_in, gain)),
        store.add(format!("{name}.b"), Tensor::zeros([fan_out])),
    )
}

fn norm(store: &mut ParamStore, name: &str, c: usize) -> (ParamId, ParamId) {
    (
        store.add(format!("{name}.gain"), Tensor::full([c], 1.0)),
        store.add(format!("{name}.bias"), Tensor::zeros([c])),
    )
}

fn apply_dense(g: &mut Graph<'_>, x: Var, (w, b): (ParamId, ParamId)) -> Result<Var> {
    let (w, b) = (g.p(w), g.p(b));
    let y = g.tape.matmul(x, w)?;
    g.tape.add_row_bias(y, b)
}

fn apply_norm(g: &mut Graph<'_>, x: Var, (gain, bias): (ParamId, ParamId)) -> Result<Var> {
    let (gain, bias) = (g.p(gain), g.p(bias));
    g.tape.layer_norm_rows(x, gain, bias, LAYER_NORM_EPS)
}

impl TransformerLayer {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, heads: usize, expansion: usize, rng: &mut impl Rng) -> Self {
        let c = channels;
        TransformerLayer {
            ln1: norm(store, &format!("{name}.ln1"), c),
            wq: dense(store, &format!("{name}.q"), c, c, 0.5, rng),
            wk: dense(store, &format!("{name}.k"), c, c, 0.5, rng),
            wv: dense(store, &format!("{name}.v"), c, c, 0.5, rng),
            wo: dense(store, &format!("{name}.o"), c, c, 0.25, rng),
            ln2: norm(store, &format!("{name}.ln2"), c),
            ff1: dense(store, &format!("{name}.ff1"), c, expansion * c, 1.0, rng),
            ff2: dense(store, &format!("{name}.ff2"), expansion * c, c, 0.25, rng),
            heads,
        }
    }

    /// One pre-norm block over `[n, C]` token rows. Also returns each head's
    /// `[n, n]` attention matrix.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<(Var, Vec<Var>)> {
        let c = g.tape.value(x).dims2()?.1;
        if c % self.heads != 0 {
            return Err(Error::shape("transformer", format!("{c} channels for {} heads", self.heads)));
        }
        let dh = c / self.heads;
        let h = apply_norm(g, x, self.ln1)?;
        let q = apply_dense(g, h, self.wq)?;
        let k = apply_dense(g, h, self.wk)?;
        let v = apply_dense(g, h, self.wv)?;
        let mut outs = Vec::with_capacity(self.heads);
        let mut attn = Vec::with_capacity(self.heads);
        for hd in 0..self.heads {
            let t = &mut g.tape;
            let qh = t.slice_cols(q, hd * dh, (hd + 1) * dh)?;
            let kh = t.slice_cols(k, hd * dh, (hd + 1) * dh)?;
            let vh = t.slice_cols(v, hd * dh, (hd + 1) * dh)?;
            let kt = t.transpose(kh)?;
            let logits = t.matmul(qh, kt)?;
            let logits = t.scale(logits, 1.0 / (dh as f64).sqrt());
            let a = t.softmax_rows(logits)?;
            outs.push(t.matmul(a, vh)?);
            attn.push(a);
        }
        let merged = g.tape.concat_cols(&outs)?;
        let projected = apply_dense(g, merged, self.wo)?;
        let x = g.tape.add(x, projected)?;
        let h = apply_norm(g, x, self.ln2)?;
        let h = apply_dense(g, h, self.ff1)?;
        let h = g.tape.relu(h);
        let h = apply_dense(g, h, self.ff2)?;
        Ok((g.tape.add(x, h)?, attn))
    }
}

/// Learned slot embedding followed by pre-norm self-attention blocks over
/// the 42 joints of both hands.
#[derive(Debug, Clone)]
pub struct TransformerStack {
    pub position: ParamId,
    pub layers: Vec<TransformerLayer>,
}

impl TransformerStack {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        depth: usize,
        heads: usize,
        expansion: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let position = store.add(format!("{name}.position"), init::uniform(rng, &[NUM_TOKENS, channels], 0.02));
        let layers = (0..depth)
            .map(|i| TransformerLayer::new(store, &format!("{name}.{i}"), channels, heads, expansion, rng))
            .collect();
        TransformerStack { position, layers }
    }

    pub fn forward(&self, g: &mut Graph<'_>, tokens: Var) -> Result<Var> {
        Ok(self.forward_with_attention(g, tokens)?.0)
    }

    pub fn forward_with_attention(&self, g: &mut Graph<'_>, tokens: Var) -> Result<(Var, Vec<Var>)> {
        let n = g.tape.value(tokens).dims2()?.0;
        if n != NUM_TOKENS {
            return Err(Error::InvalidInput(format!("transformer expects {NUM_TOKENS} tokens, got {n}")));
        }
        let pos = g.p(self.position);
        let mut x = g.tape.add(tokens, pos)?;
        let mut all = Vec::new();
        for layer in &self.layers {
            let (y, a) = layer.forward(g, x)?;
            x = y;
            all.extend(a);
        }
        Ok((x, all))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stack(c: usize, seed: u64) -> (ParamStore, TransformerStack) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let s = TransformerStack::new(&mut store, "t", c, 2, 2, 2, &mut rng);
        (store, s)
    }

    fn run(store: &ParamStore, s: &TransformerStack, x: &Tensor) -> (Tensor, Vec<Tensor>) {
        let mut g = Graph::new(store, false);
        let xv = g.tape.constant(x.clone());
        let (y, a) = s.forward_with_attention(&mut g, xv).unwrap();
        (g.tape.value(y).clone(), a.iter().map(|v| g.tape.value(*v).clone()).collect())
    }

    #[test]
    fn zero_query_key_gives_uniform_attention() {
        let (mut store, s) = stack(4, 0);
        for l in &s.layers {
            *store.get_mut(l.wq.0) = Tensor::zeros([4, 4]);
            *store.get_mut(l.wk.0) = Tensor::zeros([4, 4]);
        }
        let x = Tensor::from_fn([42, 4], |i| (i as f64).sin());
        let (_, attn) = run(&store, &s, &x);
        for a in attn {
            assert!(a.data().iter().all(|v| (v - 1.0 / 42.0).abs() < 1e-15));
        }
    }

    #[test]
    fn identical_tokens_stay_identical() {
        let (mut store, s) = stack(4, 1);
        *store.get_mut(s.position) = Tensor::zeros([42, 4]);
        let x = Tensor::from_fn([42, 4], |i| [0.3, -1.0, 2.0, 0.5][i % 4]);
        let (y, attn) = run(&store, &s, &x);
        for r in 1..42 {
            assert_eq!(&y.data()[r * 4..r * 4 + 4], &y.data()[..4]);
        }
        for a in attn {
            for r in 0..42 {
                let sum: f64 = a.data()[r * 42..(r + 1) * 42].iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    fn permuted(x: &Tensor, perm: &[usize], c: usize) -> Tensor {
        Tensor::from_fn([42, c], |i| x.data()[perm[i / c] * c + i % c])
    }

    #[test]
    fn permutation_equivariance_only_without_positions() {
        let c = 4;
        let (mut store, s) = stack(c, 2);
        let x = Tensor::from_fn([42, c], |i| (i as f64 * 0.77).sin());
        let perm: Vec<usize> = (0..42).map(|i| (i * 5 + 3) % 42).collect();
        let (y, _) = run(&store, &s, &x);
        let (yp, _) = run(&store, &s, &permuted(&x, &perm, c));
        assert!(permuted(&y, &perm, c).max_abs_diff(&yp) > 1e-6);
        *store.get_mut(s.position) = Tensor::zeros([42, c]);
        let (y, _) = run(&store, &s, &x);
        let (yp, _) = run(&store, &s, &permuted(&x, &perm, c));
        assert!(permuted(&y, &perm, c).max_abs_diff(&yp) < 1e-12);
    }

    #[test]
    fn wrong_token_count_rejected() {
        let (store, s) = stack(4, 3);
        let mut g = Graph::new(&store, false);
        let x = g.tape.constant(Tensor::zeros([21, 4]));
        assert!(matches!(s.forward(&mut g, x), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let (store, s) = stack(8, 4);
        let x = Tensor::from_fn([42, 8], |i| 3.0 * (i as f64 * 0.91).sin());
        let (_, attn) = run(&store, &s, &x);
        assert_eq!(attn.len(), 4);
        for a in attn {
            assert_eq!(a.shape(), &[42, 42]);
            for row in a.data().chunks(42) {
                assert!(row.iter().all(|v| *v > 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
