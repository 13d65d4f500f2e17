//! Graph encoder and autoregressive action decoder.
//!
//! The encoder runs `L` rounds of edge, node and global updates with weights
//! shared across rounds. Each update is `x' = LN(x + MLP([..]))` where MLP is
//! linear-relu-linear of width `h`. Aggregation is additive attention,
//! `score_j = u . tanh(Wq q + Wk x_j)`, softmax over `j`, weighted sum.
//!
//! The decoder is a GRU cell (PyTorch gate layout, `h' = n + z * (h - n)`).
//! The global embedding seeds `h1 = GRU(g, 0)`; the schema is scored by
//! `MLP(h1 * v_a)`, then each parameter slot by `MLP(h_i * v_o)` over all
//! objects, feeding the chosen embedding back through the GRU.

mod decoder;
mod encoder;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_graph, feature_dims, Ablation, GraphDims, GraphError, PlanningGraph};
use crate::pddl::{Domain, GroundAction, Instance, ObjectId, SchemaId, State};
use crate::tensor::{ParamStore, TensorError};

pub use decoder::{DecodedAction, RankedActions};
pub use encoder::EncoderOutput;

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_LAYERS: usize = 9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("hidden size must be at least 1")]
    ZeroHidden,
    #[error("dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("graph has no action-schema nodes but the model scores schema nodes")]
    NoSchemaNodes,
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("unknown schema {0}")]
    UnknownSchema(SchemaId),
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("beam width must be at least 1")]
    ZeroBeam,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: DEFAULT_HIDDEN, layers: DEFAULT_LAYERS, ablation: Ablation::Full }
    }
}

/// Supervision for one state: schema index plus one object per parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupervisionTarget {
    pub schema: SchemaId,
    pub args: Vec<ObjectId>,
}

impl SupervisionTarget {
    pub fn from_action(a: &GroundAction) -> Self {
        SupervisionTarget { schema: a.schema, args: a.args.clone() }
    }

    /// Object targets padded to `max_arity` slots; `None` marks ignored slots.
    pub fn padded(&self, max_arity: usize) -> Vec<Option<ObjectId>> {
        (0..max_arity).map(|i| self.args.get(i).copied()).collect()
    }
}

/// Parameters plus everything needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub dims: GraphDims,
    pub arities: Vec<usize>,
    pub config: ModelConfig,
    pub params: ParamStore,
}

fn mlp_params(s: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, hidden: usize, out: usize) {
    s.insert_xavier(format!("{name}.w1"), input, hidden, rng);
    s.insert_filled(format!("{name}.b1"), &[1, hidden], 0.0);
    s.insert_xavier(format!("{name}.w2"), hidden, out, rng);
    s.insert_filled(format!("{name}.b2"), &[1, out], 0.0);
}

fn attention_params(s: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, h: usize) {
    s.insert_xavier(format!("{name}.wq"), h, h, rng);
    s.insert_xavier(format!("{name}.wk"), h, h, rng);
    s.insert_xavier(format!("{name}.u"), h, 1, rng);
}

/// Allocates and initializes every parameter the configuration uses.
///
/// Weights are Xavier-uniform from a ChaCha stream seeded with `seed`, in a
/// fixed allocation order; biases start at zero. Global-update parameters
/// are absent without the global node, the schema embedding table exists
/// only without action nodes, and the slot-position table only without
/// conditional decoding.
pub fn init_params(dims: &GraphDims, config: &ModelConfig, seed: u64) -> Result<ParamStore, ModelError> {
    let h = config.hidden;
    if h == 0 {
        return Err(ModelError::ZeroHidden);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new(seed);
    s.insert_xavier("enc.node_in.w", dims.node_dim, h, &mut rng);
    s.insert_filled("enc.node_in.b", &[1, h], 0.0);
    s.insert_xavier("enc.edge_in.w", dims.edge_dim, h, &mut rng);
    s.insert_filled("enc.edge_in.b", &[1, h], 0.0);
    mlp_params(&mut s, &mut rng, "enc.phi_e", 4 * h, h, h);
    mlp_params(&mut s, &mut rng, "enc.phi_v", 3 * h, h, h);
    attention_params(&mut s, &mut rng, "enc.att_v", h);
    if config.ablation.global_node() {
        mlp_params(&mut s, &mut rng, "enc.phi_g", 3 * h, h, h);
        attention_params(&mut s, &mut rng, "enc.att_gv", h);
        attention_params(&mut s, &mut rng, "enc.att_ge", h);
    }
    s.insert_xavier("dec.gru.w_ih", h, 3 * h, &mut rng);
    s.insert_filled("dec.gru.b_ih", &[1, 3 * h], 0.0);
    s.insert_xavier("dec.gru.w_hh", h, 3 * h, &mut rng);
    s.insert_filled("dec.gru.b_hh", &[1, 3 * h], 0.0);
    mlp_params(&mut s, &mut rng, "dec.schema", h, h, 1);
    mlp_params(&mut s, &mut rng, "dec.object", h, h, 1);
    if !config.ablation.action_nodes() {
        s.insert_xavier("dec.schema_emb", dims.num_schemas, h, &mut rng);
    }
    if !config.ablation.conditional_decoding() {
        s.insert_xavier("dec.slot_emb", dims.max_arity.max(1), h, &mut rng);
    }
    Ok(s)
}

impl Model {
    pub fn new(domain: &Domain, config: ModelConfig, seed: u64) -> Result<Model, ModelError> {
        let dims = feature_dims(domain);
        let params = init_params(&dims, &config, seed)?;
        Ok(Model { dims, arities: domain.schemas.iter().map(|s| s.arity()).collect(), config, params })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn num_scalars(&self) -> usize {
        self.params.num_scalars()
    }

    /// Fails unless the model was built for a domain with the same shape.
    pub fn check_domain(&self, domain: &Domain) -> Result<(), ModelError> {
        let dims = feature_dims(domain);
        let arities: Vec<usize> = domain.schemas.iter().map(|s| s.arity()).collect();
        if dims != self.dims || arities != self.arities {
            return Err(ModelError::DimensionMismatch {
                expected: format!("{:?} arities {:?}", self.dims, self.arities),
                found: format!("{dims:?} arities {arities:?}"),
            });
        }
        Ok(())
    }

    pub(crate) fn check_graph(&self, g: &PlanningGraph) -> Result<(), ModelError> {
        if g.dims != self.dims {
            return Err(ModelError::DimensionMismatch {
                expected: format!("{:?}", self.dims),
                found: format!("{:?}", g.dims),
            });
        }
        if self.config.ablation.action_nodes() && g.schema_nodes.len() != self.dims.num_schemas {
            return Err(ModelError::NoSchemaNodes);
        }
        Ok(())
    }

    /// Graph for `state` under this model's ablation.
    pub fn graph(
        &self,
        domain: &Domain,
        instance: &Instance,
        state: &State,
        actions: &[&GroundAction],
    ) -> Result<PlanningGraph, ModelError> {
        Ok(build_graph(domain, instance, state, actions, self.config.ablation)?)
    }
}

#[cfg(test)]
mod tests;
