//! Action-centric state graphs.
//!
//! Nodes are objects, state atoms, goal atoms, action schemas and one global
//! node. Node features are `[type(3) | schema(|A|) | predicate(2|P|) | object type(|T|)]`;
//! edge features are `[edge type(2) | argument position(m) | slot position(m) | satisfied predicates(|P|)]`.
//! Edges are undirected and stored as `(hub, object)` where the hub is the
//! predicate or schema node.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pddl::{applicable, Atom, Domain, GroundAction, Instance, ObjectId, SchemaId, State};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("action `{0}` is not applicable in the state")]
    InapplicableAction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Object,
    Predicate,
    ActionSchema,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeRef {
    Object(ObjectId),
    Atom { atom: Atom, goal: bool },
    Schema(SchemaId),
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub kind: NodeKind,
    pub feature: Vec<f64>,
    pub back_ref: NodeRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    /// `(hub, object)`: hub is a predicate or action-schema node.
    pub endpoints: (usize, usize),
    pub feature: Vec<f64>,
}

/// Which optional graph and decoder components are present.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    Full,
    /// No schema nodes and no action-object edges.
    NoActionNodes,
    /// Parameters selected without conditioning on earlier selections.
    NoConditionalDecoding,
    /// No global node; the global vector stays zero.
    NoGlobalNode,
}

impl Ablation {
    pub const ALL: [Ablation; 4] =
        [Ablation::Full, Ablation::NoActionNodes, Ablation::NoConditionalDecoding, Ablation::NoGlobalNode];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoActionNodes => "no-action-nodes",
            Ablation::NoConditionalDecoding => "no-conditional-decoding",
            Ablation::NoGlobalNode => "no-global-node",
        }
    }

    pub fn action_nodes(self) -> bool {
        self != Ablation::NoActionNodes
    }

    pub fn global_node(self) -> bool {
        self != Ablation::NoGlobalNode
    }

    pub fn conditional_decoding(self) -> bool {
        self != Ablation::NoConditionalDecoding
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown ablation `{s}` (expected one of full, no-action-nodes, no-conditional-decoding, no-global-node)"))
    }
}

/// Feature dimensions; a function of the domain only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphDims {
    pub node_dim: usize,
    pub edge_dim: usize,
    pub max_arity: usize,
    pub num_schemas: usize,
    pub num_predicates: usize,
    pub num_types: usize,
}

impl GraphDims {
    fn act_offset(&self) -> usize {
        3
    }

    fn pred_offset(&self) -> usize {
        3 + self.num_schemas
    }

    fn obj_offset(&self) -> usize {
        3 + self.num_schemas + 2 * self.num_predicates
    }
}

/// `d = 3 + |A| + 2|P| + |T|`, `m = max(predicate arity, schema arity)`, `k_e = 2 + m + (m + |P|)`.
pub fn feature_dims(domain: &Domain) -> GraphDims {
    let num_schemas = domain.schemas.len();
    let num_predicates = domain.predicates.len();
    let num_types = domain.types.len();
    let max_arity = domain.max_predicate_arity().max(domain.max_schema_arity());
    GraphDims {
        node_dim: 3 + num_schemas + 2 * num_predicates + num_types,
        edge_dim: 2 + max_arity + max_arity + num_predicates,
        max_arity,
        num_schemas,
        num_predicates,
        num_types,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub dims: GraphDims,
    /// Node index of each object, by object id.
    pub object_nodes: Vec<usize>,
    /// Node index of each schema, by schema id; empty without action nodes.
    pub schema_nodes: Vec<usize>,
    pub global_node: Option<usize>,
}

impl PlanningGraph {
    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Number of predicate-object edges and action-object edges.
    pub fn edge_counts(&self) -> (usize, usize) {
        let act = self.edges.iter().filter(|e| e.feature[1] == 1.0).count();
        (self.edges.len() - act, act)
    }

    /// Relabels nodes: node `i` moves to position `perm[i]`. Edge order is kept.
    pub fn permuted(&self, perm: &[usize]) -> PlanningGraph {
        assert_eq!(perm.len(), self.nodes.len());
        let mut nodes: Vec<Option<GraphNode>> = vec![None; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            nodes[perm[i]] = Some(n.clone());
        }
        PlanningGraph {
            nodes: nodes.into_iter().map(|n| n.expect("perm is a bijection")).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| GraphEdge { endpoints: (perm[e.endpoints.0], perm[e.endpoints.1]), feature: e.feature.clone() })
                .collect(),
            dims: self.dims,
            object_nodes: self.object_nodes.iter().map(|&i| perm[i]).collect(),
            schema_nodes: self.schema_nodes.iter().map(|&i| perm[i]).collect(),
            global_node: self.global_node.map(|g| perm[g]),
        }
    }

    /// Structured dump with stable field names: `dims`, `nodes[]` (`kind`,
    /// `label`, `feature`) and `edges[]` (`endpoints`, `feature`).
    pub fn to_json(&self, domain: &Domain, instance: &Instance) -> serde_json::Value {
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .map(|n| {
                let label = match &n.back_ref {
                    NodeRef::Object(o) => instance.objects[*o].name.clone(),
                    NodeRef::Atom { atom, goal } => {
                        let s = instance.atom_to_string(domain, atom);
                        if *goal { format!("goal{s}") } else { s }
                    }
                    NodeRef::Schema(s) => domain.schemas[*s].name.clone(),
                    NodeRef::Global => "global".into(),
                };
                serde_json::json!({ "kind": n.kind, "label": label, "feature": n.feature })
            })
            .collect();
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| serde_json::json!({ "endpoints": [e.endpoints.0, e.endpoints.1], "feature": e.feature }))
            .collect();
        serde_json::json!({ "dims": self.dims, "nodes": nodes, "edges": edges })
    }
}

fn one_hot_node(dims: &GraphDims, kind_bit: Option<usize>, index: Option<usize>) -> Vec<f64> {
    let mut f = vec![0.0; dims.node_dim];
    if let Some(k) = kind_bit {
        f[k] = 1.0;
    }
    if let Some(i) = index {
        f[i] = 1.0;
    }
    f
}

/// Builds the graph for `state` with the given applicable actions.
///
/// Atoms true in both the state and the goal get two nodes. Action-object
/// edges carry the slot position and the predicates of `state` in which the
/// object occurs; edges with equal endpoints and features are merged.
pub fn build_graph(
    domain: &Domain,
    instance: &Instance,
    state: &State,
    actions: &[&GroundAction],
    ablation: Ablation,
) -> Result<PlanningGraph, GraphError> {
    let dims = feature_dims(domain);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();

    let object_nodes: Vec<usize> = (0..instance.objects.len()).collect();
    for (id, o) in instance.objects.iter().enumerate() {
        nodes.push(GraphNode {
            kind: NodeKind::Object,
            feature: one_hot_node(&dims, Some(0), Some(dims.obj_offset() + o.ty)),
            back_ref: NodeRef::Object(id),
        });
    }

    let pred_edge = |hub: usize, pos: usize, obj: usize, edges: &mut Vec<GraphEdge>| {
        let mut f = vec![0.0; dims.edge_dim];
        f[0] = 1.0;
        f[2 + pos] = 1.0;
        edges.push(GraphEdge { endpoints: (hub, object_nodes[obj]), feature: f });
    };
    for (goal, atoms) in [(false, state.atoms()), (true, instance.goal.as_slice())] {
        for atom in atoms {
            let hub = nodes.len();
            let bit = dims.pred_offset() + atom.pred as usize + if goal { dims.num_predicates } else { 0 };
            nodes.push(GraphNode {
                kind: NodeKind::Predicate,
                feature: one_hot_node(&dims, Some(1), Some(bit)),
                back_ref: NodeRef::Atom { atom: atom.clone(), goal },
            });
            for (pos, &obj) in atom.args.iter().enumerate() {
                pred_edge(hub, pos, obj as usize, &mut edges);
            }
        }
    }

    let mut schema_nodes = Vec::new();
    if ablation.action_nodes() {
        for sid in 0..domain.schemas.len() {
            schema_nodes.push(nodes.len());
            nodes.push(GraphNode {
                kind: NodeKind::ActionSchema,
                feature: one_hot_node(&dims, Some(2), Some(dims.act_offset() + sid)),
                back_ref: NodeRef::Schema(sid),
            });
        }
        // Predicates in which each object occurs in the current state.
        let mut satisfied = vec![vec![0.0; dims.num_predicates]; instance.objects.len()];
        for atom in state.atoms() {
            for &o in &atom.args {
                satisfied[o as usize][atom.pred as usize] = 1.0;
            }
        }
        let mut seen: HashSet<(usize, usize, Vec<u64>)> = HashSet::new();
        for a in actions {
            if !applicable(state, a) {
                return Err(GraphError::InapplicableAction(instance.action_to_string(domain, a)));
            }
            for (slot, &obj) in a.args.iter().enumerate() {
                let mut f = vec![0.0; dims.edge_dim];
                f[1] = 1.0;
                f[2 + dims.max_arity + slot] = 1.0;
                f[2 + 2 * dims.max_arity..].copy_from_slice(&satisfied[obj]);
                let endpoints = (schema_nodes[a.schema], object_nodes[obj]);
                let bits: Vec<u64> = f.iter().map(|x: &f64| x.to_bits()).collect();
                if seen.insert((endpoints.0, endpoints.1, bits)) {
                    edges.push(GraphEdge { endpoints, feature: f });
                }
            }
        }
    }

    let global_node = ablation.global_node().then(|| {
        nodes.push(GraphNode { kind: NodeKind::Global, feature: vec![0.0; dims.node_dim], back_ref: NodeRef::Global });
        nodes.len() - 1
    });

    Ok(PlanningGraph { nodes, edges, dims, object_nodes, schema_nodes, global_node })
}


#[cfg(test)]
mod props {
    use proptest::prelude::*;

    use super::*;
    use crate::pddl::fixtures::*;
    use crate::pddl::{ground_actions, parse_domain, parse_problem};

    /// Multiset of (node feature, sorted incident edge features); invariant under relabelling.
    fn signature(g: &PlanningGraph) -> Vec<(Vec<u64>, Vec<Vec<u64>>)> {
        let bits = |f: &[f64]| f.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let mut sig: Vec<_> = (0..g.nodes.len())
            .map(|i| {
                let mut inc: Vec<_> = g
                    .edges
                    .iter()
                    .filter(|e| e.endpoints.0 == i || e.endpoints.1 == i)
                    .map(|e| bits(&e.feature))
                    .collect();
                inc.sort();
                (bits(&g.nodes[i].feature), inc)
            })
            .collect();
        sig.sort();
        sig
    }

    fn graph(d: &Domain, text: &str) -> PlanningGraph {
        let i = parse_problem(text, d).unwrap();
        let acts = ground_actions(d, &i);
        let app: Vec<_> = acts.iter().filter(|a| applicable(&i.init, a)).collect();
        build_graph(d, &i, &i.init, &app, Ablation::Full).unwrap()
    }

    proptest! {
        #[test]
        fn renaming_objects_gives_isomorphic_graph(names in proptest::sample::subsequence(
            vec!["a", "b", "c", "d", "e", "f", "g", "h"], 3).prop_shuffle()) {
            let d = parse_domain(BLOCKS).unwrap();
            let base = graph(&d, BLOCKS_3);
            let mut renamed = BLOCKS_3.to_string();
            for (k, n) in names.iter().enumerate() {
                renamed = renamed.replace(&format!("o{}", k + 1), &format!("x{n}"));
            }
            let g = graph(&d, &renamed);
            prop_assert_eq!(signature(&base), signature(&g));
        }

        #[test]
        fn permuting_node_order_keeps_signature(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let d = parse_domain(GRIPPER).unwrap();
            let g = graph(&d, GRIPPER_1);
            let mut perm: Vec<usize> = (0..g.nodes.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let p = g.permuted(&perm);
            prop_assert_eq!(signature(&g), signature(&p));
            prop_assert_eq!(p.nodes[p.global_node.unwrap()].kind, NodeKind::Global);
        }
    }

    #[test]
    fn dims_do_not_depend_on_instance() {
        let d = parse_domain(BLOCKS).unwrap();
        let small = graph(&d, BLOCKS_3);
        let big = graph(&d, "(define (problem b) (:domain blocks) (:objects a b c d e f) (:init (handempty) (clear a) (on a b) (on b c) (ontable c) (clear d) (ontable d) (clear e) (on e f) (ontable f)) (:goal (on a d)))");
        assert_eq!(small.dims, big.dims);
        assert!(big.nodes.iter().chain(&small.nodes).all(|n| n.feature.len() == small.dims.node_dim));
        assert!(big.edges.iter().all(|e| e.feature.len() == small.dims.edge_dim));
    }
}
