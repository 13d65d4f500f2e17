//! STRIPS + `:typing` planning model.
//!
//! Symbols are case-insensitive and normalized to lower case. Every domain has
//! the root type `object` at type id 0; untyped domains have no other type.
//! Objects of an [`Instance`] are kept sorted by name, so object ids follow
//! lexicographic name order and grounding order is reproducible.

mod ground;
mod parse;
mod print;
pub mod sexpr;
mod state;

use std::collections::HashMap;

use thiserror::Error;

pub use ground::{ground_actions, static_predicates};
pub use parse::{parse_domain, parse_problem};
pub use state::{apply, applicable, is_goal, successor, Atom, GroundAction, State};

pub type TypeId = usize;
pub type PredId = usize;
pub type SchemaId = usize;
pub type ObjectId = usize;

pub const ROOT_TYPE: &str = "object";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PddlError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unsupported PDDL feature: {0}")]
    Unsupported(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("undeclared type `{0}`")]
    UndeclaredType(String),
    #[error("undeclared predicate `{0}`")]
    UndeclaredPredicate(String),
    #[error("undeclared object `{0}`")]
    UndeclaredObject(String),
    #[error("arity mismatch for `{predicate}`: expected {expected} arguments, found {found}")]
    ArityMismatch { predicate: String, expected: usize, found: usize },
    #[error("type mismatch: `{object}` has type `{found}`, expected `{expected}`")]
    TypeMismatch { object: String, expected: String, found: String },
    #[error("action `{action}` is not applicable")]
    NotApplicable { action: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDef {
    pub name: String,
    pub parent: Option<TypeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateDef {
    pub name: String,
    pub param_types: Vec<TypeId>,
}

impl PredicateDef {
    pub fn arity(&self) -> usize {
        self.param_types.len()
    }
}

/// Argument of a lifted atom: a schema parameter or a domain constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(usize),
    Const(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LiftedAtom {
    pub pred: PredId,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: TypeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<Param>,
    pub pre: Vec<LiftedAtom>,
    pub add: Vec<LiftedAtom>,
    pub del: Vec<LiftedAtom>,
}

impl ActionSchema {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    pub requirements: Vec<String>,
    pub types: Vec<TypeDef>,
    pub constants: Vec<(String, TypeId)>,
    pub predicates: Vec<PredicateDef>,
    pub schemas: Vec<ActionSchema>,
}

impl Domain {
    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.types.iter().position(|t| t.name == name)
    }

    pub fn predicate_id(&self, name: &str) -> Option<PredId> {
        self.predicates.iter().position(|p| p.name == name)
    }

    pub fn schema_id(&self, name: &str) -> Option<SchemaId> {
        self.schemas.iter().position(|s| s.name == name)
    }

    /// True when `ty` equals `ancestor` or descends from it.
    pub fn is_subtype(&self, mut ty: TypeId, ancestor: TypeId) -> bool {
        loop {
            if ty == ancestor {
                return true;
            }
            match self.types[ty].parent {
                Some(p) => ty = p,
                None => return false,
            }
        }
    }

    pub fn max_predicate_arity(&self) -> usize {
        self.predicates.iter().map(PredicateDef::arity).max().unwrap_or(0)
    }

    pub fn max_schema_arity(&self) -> usize {
        self.schemas.iter().map(ActionSchema::arity).max().unwrap_or(0)
    }

    /// Pretty-prints the domain as PDDL that parses back to an equal value.
    pub fn to_pddl(&self) -> String {
        print::domain_to_pddl(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectDef {
    pub name: String,
    pub ty: TypeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub name: String,
    pub domain_name: String,
    /// Sorted by name; index is the [`ObjectId`]. Domain constants are included.
    pub objects: Vec<ObjectDef>,
    pub init: State,
    /// Canonically ordered, duplicate-free.
    pub goal: Vec<Atom>,
}

impl Instance {
    pub fn object_id(&self, name: &str) -> Option<ObjectId> {
        self.objects.binary_search_by(|o| o.name.as_str().cmp(name)).ok()
    }

    pub fn object_map(&self) -> HashMap<&str, ObjectId> {
        self.objects.iter().enumerate().map(|(i, o)| (o.name.as_str(), i)).collect()
    }

    pub fn to_pddl(&self, domain: &Domain) -> String {
        print::instance_to_pddl(self, domain)
    }

    pub fn atom_to_string(&self, domain: &Domain, atom: &Atom) -> String {
        let mut s = format!("({}", domain.predicates[atom.pred as usize].name);
        for &a in &atom.args {
            s.push(' ');
            s.push_str(&self.objects[a as usize].name);
        }
        s.push(')');
        s
    }

    /// Formats a ground action as `(name arg1 arg2 ...)`.
    pub fn action_to_string(&self, domain: &Domain, action: &GroundAction) -> String {
        let mut s = format!("({}", domain.schemas[action.schema].name);
        for &a in &action.args {
            s.push(' ');
            s.push_str(&self.objects[a].name);
        }
        s.push(')');
        s
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub const BLOCKS: &str = include_str!("../../domains/blocksworld.pddl");
    pub const BLOCKS_3: &str = include_str!("../../domains/blocksworld-3.pddl");
    pub const GRIPPER: &str = include_str!("../../domains/gripper.pddl");
    pub const GRIPPER_1: &str = include_str!("../../domains/gripper-1.pddl");
    pub const ON_CLEAR: &str = include_str!("../../domains/on-clear.pddl");
    pub const ON_CLEAR_3: &str = include_str!("../../domains/on-clear-3.pddl");

    pub fn load(domain: &str, problem: &str) -> (Domain, Instance) {
        let d = parse_domain(domain).unwrap();
        let i = parse_problem(problem, &d).unwrap();
        (d, i)
    }
}
