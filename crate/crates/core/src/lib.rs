//! Learned action-ranking policies for classical planning.
//!
//! A planning state is turned into an action-centric graph ([`graph`]), encoded
//! by a message-passing network and decoded into ranked ground actions by a GRU
//! with beam search ([`model`]). Models are trained on labels from an optimal
//! planner ([`search`], [`train`]) and rolled out on larger instances
//! ([`exec`], [`eval`]).

pub mod eval;
pub mod exec;
pub mod generate;
pub mod graph;
pub mod model;
pub mod pddl;
pub mod search;
pub mod tensor;
pub mod train;
