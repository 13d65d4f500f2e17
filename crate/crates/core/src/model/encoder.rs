use std::rc::Rc;

use crate::graph::{NodeKind, PlanningGraph};
use crate::tensor::{ParamStore, Tape, TensorError, Var};

use super::{Model, ModelError};

/// Final embeddings. `nodes` is `|V| x h` in graph node order; the global
/// node's row, when present, holds the global embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub hidden: usize,
    pub nodes: Vec<f64>,
    pub edges: Vec<f64>,
    pub global: Vec<f64>,
}

impl EncoderOutput {
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.hidden..(i + 1) * self.hidden]
    }

    pub fn edge(&self, i: usize) -> &[f64] {
        &self.edges[i * self.hidden..(i + 1) * self.hidden]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len() / self.hidden
    }
}

/// Encoder values on a tape. `v` holds the non-global nodes; `row_of` maps
/// graph node indices to rows of `v`.
pub(crate) struct TapeEncoding {
    pub v: Var,
    pub e: Var,
    pub g: Var,
    pub row_of: Vec<Option<usize>>,
}

pub(crate) fn linear<'p>(t: &mut Tape<'p>, s: &'p ParamStore, name: &str, x: Var) -> Result<Var, TensorError> {
    let w = t.param(s, &format!("{name}.w"))?;
    let b = t.param(s, &format!("{name}.b"))?;
    let y = t.matmul(x, w)?;
    t.add_row(y, b)
}

pub(crate) fn mlp<'p>(t: &mut Tape<'p>, s: &'p ParamStore, name: &str, x: Var) -> Result<Var, TensorError> {
    let w1 = t.param(s, &format!("{name}.w1"))?;
    let b1 = t.param(s, &format!("{name}.b1"))?;
    let w2 = t.param(s, &format!("{name}.w2"))?;
    let b2 = t.param(s, &format!("{name}.b2"))?;
    let y = t.matmul(x, w1)?;
    let y = t.add_row(y, b1)?;
    let y = t.relu(y);
    let y = t.matmul(y, w2)?;
    t.add_row(y, b2)
}

/// Additive attention of each query over its group of keys.
///
/// `queries` is one row per group, `keys` one row per item; item `j`
/// belongs to group `group[j]` and reads key row `key_row[j]`. Empty groups
/// aggregate to zeros.
#[allow(clippy::too_many_arguments)]
fn attend<'p>(
    t: &mut Tape<'p>,
    s: &'p ParamStore,
    name: &str,
    queries: Var,
    keys: Var,
    key_row: &Rc<[usize]>,
    group: &Rc<[usize]>,
    num_groups: usize,
) -> Result<Var, TensorError> {
    let wq = t.param(s, &format!("{name}.wq"))?;
    let wk = t.param(s, &format!("{name}.wk"))?;
    let u = t.param(s, &format!("{name}.u"))?;
    let q = t.matmul(queries, wq)?;
    let k = t.matmul(keys, wk)?;
    let qj = t.gather_rows(q, group)?;
    let kj = t.gather_rows(k, key_row)?;
    let pre = t.add(qj, kj)?;
    let act = t.tanh(pre);
    let score = t.matmul(act, u)?;
    let w = t.segment_softmax(score, group, num_groups)?;
    let xj = t.gather_rows(keys, key_row)?;
    let weighted = t.scale_rows(xj, w)?;
    t.segment_sum(weighted, group, num_groups)
}

/// Same as [`attend`] for a single query over every key row.
fn attend_all<'p>(t: &mut Tape<'p>, s: &'p ParamStore, name: &str, query: Var, keys: Var) -> Result<Var, TensorError> {
    let n = t.shape(keys).0;
    let rows: Rc<[usize]> = (0..n).collect();
    let zeros: Rc<[usize]> = vec![0; n].into();
    attend(t, s, name, query, keys, &rows, &zeros, 1)
}

fn residual_norm(t: &mut Tape<'_>, x: Var, delta: Var) -> Result<Var, TensorError> {
    let y = t.add(x, delta)?;
    Ok(t.layer_norm(y))
}

pub(crate) fn encode_on_tape<'p>(t: &mut Tape<'p>, model: &'p Model, g: &PlanningGraph) -> Result<TapeEncoding, ModelError> {
    model.check_graph(g)?;
    let s = &model.params;
    let h = model.hidden();
    let dims = g.dims;

    let mut row_of = vec![None; g.nodes.len()];
    let mut feats = Vec::new();
    let mut n = 0;
    for (i, node) in g.nodes.iter().enumerate() {
        if node.kind != NodeKind::Global {
            row_of[i] = Some(n);
            feats.extend_from_slice(&node.feature);
            n += 1;
        }
    }
    let ne = g.edges.len();
    let mut efeats = Vec::with_capacity(ne * dims.edge_dim);
    let mut hub = Vec::with_capacity(ne);
    let mut obj = Vec::with_capacity(ne);
    for e in &g.edges {
        efeats.extend_from_slice(&e.feature);
        hub.push(row_of[e.endpoints.0].expect("edges join non-global nodes"));
        obj.push(row_of[e.endpoints.1].expect("edges join non-global nodes"));
    }
    // Each edge is incident to both endpoints.
    let inc_node: Rc<[usize]> = hub.iter().chain(&obj).copied().collect();
    let inc_edge: Rc<[usize]> = (0..ne).chain(0..ne).collect();
    let hub: Rc<[usize]> = hub.into();
    let obj: Rc<[usize]> = obj.into();

    let x = t.constant(n, dims.node_dim, feats)?;
    let r = t.constant(ne, dims.edge_dim, efeats)?;
    let mut v = linear(t, s, "enc.node_in", x)?;
    let mut e = linear(t, s, "enc.edge_in", r)?;
    let mut gv = t.zeros(1, h);
    let use_global = model.config.ablation.global_node();

    for _ in 0..model.config.layers {
        let g_e = t.broadcast_rows(gv, ne)?;
        let vh = t.gather_rows(v, &hub)?;
        let vo = t.gather_rows(v, &obj)?;
        let ein = t.concat_cols(&[e, vh, vo, g_e])?;
        let de = mlp(t, s, "enc.phi_e", ein)?;
        e = residual_norm(t, e, de)?;

        let agg = attend(t, s, "enc.att_v", v, e, &inc_edge, &inc_node, n)?;
        let g_v = t.broadcast_rows(gv, n)?;
        let vin = t.concat_cols(&[v, agg, g_v])?;
        let dv = mlp(t, s, "enc.phi_v", vin)?;
        v = residual_norm(t, v, dv)?;

        if use_global {
            let an = attend_all(t, s, "enc.att_gv", gv, v)?;
            let ae = attend_all(t, s, "enc.att_ge", gv, e)?;
            let gin = t.concat_cols(&[gv, an, ae])?;
            let dg = mlp(t, s, "enc.phi_g", gin)?;
            gv = residual_norm(t, gv, dg)?;
        }
    }
    Ok(TapeEncoding { v, e, g: gv, row_of })
}

impl Model {
    /// Runs the encoder; a pure function of the graph and parameters.
    pub fn encode(&self, g: &PlanningGraph) -> Result<EncoderOutput, ModelError> {
        let mut t = Tape::new();
        let enc = encode_on_tape(&mut t, self, g)?;
        let h = self.hidden();
        let mut nodes = vec![0.0; g.nodes.len() * h];
        let global = t.value(enc.g).to_vec();
        for (i, r) in enc.row_of.iter().enumerate() {
            let src = match r {
                Some(r) => t.row(enc.v, *r),
                None => &global[..],
            };
            nodes[i * h..(i + 1) * h].copy_from_slice(src);
        }
        Ok(EncoderOutput { hidden: h, nodes, edges: t.value(enc.e).to_vec(), global })
    }
}
