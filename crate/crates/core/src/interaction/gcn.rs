use std::sync::Arc;

use rand::Rng;

use crate::hand_model::{BONES_21, NUM_JOINTS};
use crate::numerics::{init, Graph, ParamId, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

/// Bone graph of one hand. Every bone contributes an edge in each direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    /// Directed edges `(dst, src)`, grouped by destination.
    edges: Arc<Vec<(usize, usize)>>,
}

impl Default for SkeletonGraph {
    fn default() -> Self {
        Self::hand()
    }
}

impl SkeletonGraph {
    pub fn hand() -> Self {
        let mut edges: Vec<(usize, usize)> = BONES_21.iter().flat_map(|&(p, c)| [(c, p), (p, c)]).collect();
        edges.sort_unstable();
        SkeletonGraph {
            edges: Arc::new(edges),
        }
    }

    pub fn num_nodes(&self) -> usize {
        NUM_JOINTS
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Binary adjacency including self loops.
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let n = self.num_nodes();
        let mut a = vec![vec![false; n]; n];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(d, s) in self.edges.iter() {
            a[d][s] = true;
        }
        a
    }
}

impl Tape {
    /// Dense `n × n` matrix whose row `i` is a softmax of the logits of the
    /// edges arriving at node `i`; zero elsewhere.
    pub fn edge_softmax(&mut self, logits: Var, graph: &SkeletonGraph) -> Result<Var> {
        let edges = Arc::clone(&graph.edges);
        if self.value(logits).len() != edges.len() {
            return Err(Error::shape("edge_softmax", format!("{} logits for {} edges", self.value(logits).len(), edges.len())));
        }
        let n = graph.num_nodes();
        let l = self.value(logits).data();
        let mut out = vec![0.0; n * n];
        let mut start = 0;
        while start < edges.len() {
            let dst = edges[start].0;
            let end = start + edges[start..].iter().take_while(|e| e.0 == dst).count();
            let mx = l[start..end].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = l[start..end].iter().map(|v| (v - mx).exp()).sum();
            for e in start..end {
                out[dst * n + edges[e].1] = (l[e] - mx).exp() / z;
            }
            start = end;
        }
        Ok(self.push(Tensor::new([n, n], out)?, &[logits], move |ctx, g| {
            let Some(s) = g.slot(logits) else { return };
            let y = ctx.out.data();
            let mut start = 0;
            while start < edges.len() {
                let dst = edges[start].0;
                let end = start + edges[start..].iter().take_while(|e| e.0 == dst).count();
                let idx = |e: usize| dst * n + edges[e].1;
                let dot: f64 = (start..end).map(|e| y[idx(e)] * ctx.grad[idx(e)]).sum();
                for e in start..end {
                    s[e] += y[idx(e)] * (ctx.grad[idx(e)] - dot);
                }
                start = end;
            }
        }))
    }
}

/// `y_i = x_i W_s + Σ_{j→i} a_ij x_j W_n + b` over `[21, C]` joint rows,
/// with `a` a learned softmax over each node's incoming bones.
#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub w_self: ParamId,
    pub w_neigh: ParamId,
    pub bias: ParamId,
    pub edge_logits: ParamId,
}

impl GcnLayer {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, graph: &SkeletonGraph, rng: &mut impl Rng) -> Self {
        let c = channels;
        GcnLayer {
            w_self: store.add(format!("{name}.w_self"), init::he(rng, &[c, c], c, 0.5)),
            w_neigh: store.add(format!("{name}.w_neigh"), init::he(rng, &[c, c], c, 0.5)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros([c])),
            edge_logits: store.add(format!("{name}.edge_logits"), Tensor::zeros([graph.edges().len()])),
        }
    }

    /// Pre-activation output.
    pub fn forward(&self, g: &mut Graph<'_>, graph: &SkeletonGraph, x: Var) -> Result<Var> {
        let (ws, wn, b, l) = (g.p(self.w_self), g.p(self.w_neigh), g.p(self.bias), g.p(self.edge_logits));
        let t = &mut g.tape;
        let own = t.matmul(x, ws)?;
        let own = t.add_row_bias(own, b)?;
        let a = t.edge_softmax(l, graph)?;
        let gathered = t.matmul(a, x)?;
        let neigh = t.matmul(gathered, wn)?;
        t.add(own, neigh)
    }
}

/// Residual stack `h ← h + relu(layer(h))`, shared by both hands.
#[derive(Debug, Clone)]
pub struct GcnStack {
    pub graph: SkeletonGraph,
    pub layers: Vec<GcnLayer>,
}

impl GcnStack {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, depth: usize, rng: &mut impl Rng) -> Self {
        let graph = SkeletonGraph::hand();
        let layers = (0..depth)
            .map(|i| GcnLayer::new(store, &format!("{name}.{i}"), channels, &graph, rng))
            .collect();
        GcnStack { graph, layers }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let mut h = x;
        for layer in &self.layers {
            let y = layer.forward(g, &self.graph, h)?;
            let y = g.tape.relu(y);
            h = g.tape.add(h, y)?;
        }
        Ok(h)
    }

    /// Both hands through the same weights; no mixing between them.
    pub fn forward_pair(&self, g: &mut Graph<'_>, left: Var, right: Var) -> Result<(Var, Var)> {
        Ok((self.forward(g, left)?, self.forward(g, right)?))
    }
}
