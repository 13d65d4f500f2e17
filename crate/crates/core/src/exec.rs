//! Greedy policy rollout with cycle avoidance.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelError};
use crate::pddl::{applicable, ground_actions, is_goal, successor, Domain, GroundAction, Instance, ObjectId, SchemaId, State};
use crate::search::Plan;

pub const DEFAULT_MAX_STEPS: usize = 1000;
pub const DEFAULT_BEAM: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("invalid execution config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecConfig {
    pub max_steps: usize,
    pub beam: usize,
    /// Rank every applicable grounding when the beam offers nothing usable.
    pub fallback: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig { max_steps: DEFAULT_MAX_STEPS, beam: DEFAULT_BEAM, fallback: true }
    }
}

impl ExecConfig {
    pub fn validate(&self) -> Result<(), ExecError> {
        if self.max_steps == 0 {
            return Err(ExecError::Config("max_steps must be at least 1".into()));
        }
        if self.beam == 0 {
            return Err(ExecError::Config("beam must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Solved,
    DeadEnd,
    StepLimit,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Solved => "solved",
            Outcome::DeadEnd => "dead_end",
            Outcome::StepLimit => "step_limit",
        }
    }
}

impl std::str::FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "solved" => Ok(Outcome::Solved),
            "dead_end" => Ok(Outcome::DeadEnd),
            "step_limit" => Ok(Outcome::StepLimit),
            _ => Err(format!("unknown outcome `{s}`")),
        }
    }
}

/// One executed action. `step` counts from 0; `rank` is the 0-based position
/// of the action in the ranking that supplied it (beam, or the exhaustive
/// ranking when `fallback_used`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub state_key: String,
    pub action: String,
    pub rank: usize,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionResult {
    pub outcome: Outcome,
    pub plan: Plan,
    pub steps: usize,
    pub trace: Vec<TraceStep>,
}

impl ExecutionResult {
    /// One JSON object per line.
    pub fn trace_jsonl(&self) -> String {
        self.trace.iter().map(|t| serde_json::to_string(t).expect("trace serializes") + "\n").collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    /// Index into [`PolicyContext::actions`].
    pub action: usize,
    pub rank: usize,
    pub fallback_used: bool,
}

/// Everything a rollout on one instance needs besides the current state.
pub struct PolicyContext<'a> {
    pub domain: &'a Domain,
    pub instance: &'a Instance,
    pub model: &'a Model,
    pub config: ExecConfig,
    pub actions: Vec<GroundAction>,
    index: HashMap<(SchemaId, Vec<ObjectId>), usize>,
}

impl<'a> PolicyContext<'a> {
    pub fn new(domain: &'a Domain, instance: &'a Instance, model: &'a Model, config: ExecConfig) -> Result<Self, ExecError> {
        config.validate()?;
        model.check_domain(domain)?;
        let actions = ground_actions(domain, instance);
        let index = actions.iter().enumerate().map(|(i, a)| ((a.schema, a.args.clone()), i)).collect();
        Ok(PolicyContext { domain, instance, model, config, actions, index })
    }

    /// First decoded grounding that is applicable and leads to an unvisited
    /// state; `None` is a dead end.
    pub fn select(&self, state: &State, visited: &HashSet<State>) -> Result<Option<Selection>, ExecError> {
        let app: Vec<usize> = (0..self.actions.len()).filter(|&i| applicable(state, &self.actions[i])).collect();
        if app.is_empty() {
            return Ok(None);
        }
        let admissible = |i: usize| !visited.contains(&successor(state, &self.actions[i]));
        let refs: Vec<&GroundAction> = app.iter().map(|&i| &self.actions[i]).collect();
        let g = self.model.graph(self.domain, self.instance, state, &refs)?;
        let enc = self.model.encode(&g)?;

        let ranked = self.model.decode_beam(&enc, &g, self.config.beam)?;
        for (rank, d) in ranked.iter().enumerate() {
            let Some(&i) = self.index.get(&(d.schema, d.args.clone())) else { continue };
            if applicable(state, &self.actions[i]) && admissible(i) {
                return Ok(Some(Selection { action: i, rank, fallback_used: false }));
            }
        }
        if !self.config.fallback {
            return Ok(None);
        }
        let order = self.exhaustive_ranking(&enc, &g, &app)?;
        Ok(order
            .into_iter()
            .enumerate()
            .find(|&(_, i)| admissible(i))
            .map(|(rank, i)| Selection { action: i, rank, fallback_used: true }))
    }

    /// Applicable action indices by descending model score; ties keep
    /// grounding order.
    fn exhaustive_ranking(
        &self,
        enc: &crate::model::EncoderOutput,
        g: &crate::graph::PlanningGraph,
        app: &[usize],
    ) -> Result<Vec<usize>, ExecError> {
        let queries: Vec<(SchemaId, &[ObjectId])> =
            app.iter().map(|&i| (self.actions[i].schema, self.actions[i].args.as_slice())).collect();
        let scores = self.model.score_groundings(enc, g, &queries)?;
        let mut order: Vec<usize> = (0..app.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        Ok(order.into_iter().map(|k| app[k]).collect())
    }

    /// Model scores of every applicable action in `state`, best first.
    pub fn rank_all(&self, state: &State) -> Result<Vec<(usize, f64)>, ExecError> {
        let app: Vec<usize> = (0..self.actions.len()).filter(|&i| applicable(state, &self.actions[i])).collect();
        if app.is_empty() {
            return Ok(Vec::new());
        }
        let refs: Vec<&GroundAction> = app.iter().map(|&i| &self.actions[i]).collect();
        let g = self.model.graph(self.domain, self.instance, state, &refs)?;
        let enc = self.model.encode(&g)?;
        let queries: Vec<(SchemaId, &[ObjectId])> =
            app.iter().map(|&i| (self.actions[i].schema, self.actions[i].args.as_slice())).collect();
        let scores = self.model.score_groundings(&enc, &g, &queries)?;
        let order = self.exhaustive_ranking(&enc, &g, &app)?;
        Ok(order.into_iter().map(|i| (i, scores[app.iter().position(|&a| a == i).unwrap()])).collect())
    }

    pub fn run(&self) -> Result<ExecutionResult, ExecError> {
        let mut state = self.instance.init.clone();
        let mut visited = HashSet::from([state.clone()]);
        let mut plan = Plan::default();
        let mut trace = Vec::new();
        let outcome = loop {
            if is_goal(&state, &self.instance.goal) {
                break Outcome::Solved;
            }
            if plan.len() >= self.config.max_steps {
                break Outcome::StepLimit;
            }
            let Some(sel) = self.select(&state, &visited)? else { break Outcome::DeadEnd };
            let a = &self.actions[sel.action];
            trace.push(TraceStep {
                step: plan.len(),
                state_key: state.key_hex(),
                action: self.instance.action_to_string(self.domain, a),
                rank: sel.rank,
                fallback_used: sel.fallback_used,
            });
            state = successor(&state, a);
            visited.insert(state.clone());
            plan.steps.push(a.clone());
        };
        Ok(ExecutionResult { outcome, steps: plan.len(), plan, trace })
    }
}

/// Rolls out `model` from the instance's initial state.
pub fn run_policy(domain: &Domain, instance: &Instance, model: &Model, config: &ExecConfig) -> Result<ExecutionResult, ExecError> {
    PolicyContext::new(domain, instance, model, *config)?.run()
}

/// The action the policy takes in `state` given the visited set.
pub fn select_action<'c>(
    ctx: &'c PolicyContext<'_>,
    state: &State,
    visited: &HashSet<State>,
) -> Result<Option<&'c GroundAction>, ExecError> {
    Ok(ctx.select(state, visited)?.map(|s| &ctx.actions[s.action]))
}

#[cfg(test)]
mod tests;
