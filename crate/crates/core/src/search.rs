//! Forward state-space planners over ground actions.
//!
//! [`solve_optimal`] is breadth-first search (unit costs, so shortest plans);
//! [`solve_satisficing`] is greedy best-first search on the goal-count
//! heuristic and serves as the reference planner for plan quality.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::pddl::{apply, ground_actions, is_goal, successor, Atom, Domain, GroundAction, Instance, State};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("search budget exhausted after {expansions} expansions")]
    BudgetExhausted { expansions: usize },
    #[error("no plan exists: the reachable state space was exhausted")]
    Unsolvable,
    #[error("invalid search budget: {0}")]
    InvalidBudget(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBudget {
    pub max_expansions: usize,
    pub max_seconds: f64,
}

impl SearchBudget {
    pub const fn new(max_expansions: usize, max_seconds: f64) -> Self {
        SearchBudget { max_expansions, max_seconds }
    }

    fn validate(&self) -> Result<(), SearchError> {
        if self.max_expansions == 0 || self.max_seconds.is_nan() || self.max_seconds <= 0.0 {
            return Err(SearchError::InvalidBudget(format!("{self:?}")));
        }
        Ok(())
    }
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { max_expansions: 1_000_000, max_seconds: 60.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Plan {
    pub steps: Vec<GroundAction>,
}

impl Plan {
    pub fn cost(&self) -> usize {
        self.steps.len()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// One action per line, `(name arg1 arg2 ...)`.
    pub fn to_text(&self, domain: &Domain, instance: &Instance) -> String {
        let mut out = String::new();
        for a in &self.steps {
            out.push_str(&instance.action_to_string(domain, a));
            out.push('\n');
        }
        out
    }
}

/// Ground task: the instance's goal plus its full grounding list.
pub struct Task<'a> {
    pub goal: &'a [Atom],
    pub actions: &'a [GroundAction],
}

struct Clock {
    start: Instant,
    limit: Duration,
    expansions: usize,
    max_expansions: usize,
}

impl Clock {
    fn new(b: &SearchBudget) -> Self {
        Clock {
            start: Instant::now(),
            limit: Duration::from_secs_f64(b.max_seconds),
            expansions: 0,
            max_expansions: b.max_expansions,
        }
    }

    fn tick(&mut self) -> Result<(), SearchError> {
        self.expansions += 1;
        let timed_out = self.expansions.is_multiple_of(256) && self.start.elapsed() > self.limit;
        if self.expansions > self.max_expansions || timed_out {
            return Err(SearchError::BudgetExhausted { expansions: self.expansions - 1 });
        }
        Ok(())
    }
}

fn trace_back(parents: &[(usize, usize)], actions: &[GroundAction], mut node: usize) -> Plan {
    let mut steps = Vec::new();
    while node != 0 {
        let (parent, act) = parents[node];
        steps.push(actions[act].clone());
        node = parent;
    }
    steps.reverse();
    Plan { steps }
}

impl Task<'_> {
    pub fn applicable_in<'s>(&'s self, state: &'s State) -> impl Iterator<Item = (usize, &'s GroundAction)> + 's {
        self.actions.iter().enumerate().filter(move |(_, a)| state.contains_all(&a.pre))
    }

    /// Breadth-first search with duplicate detection; shortest plan from `start`.
    pub fn bfs(&self, start: &State, budget: &SearchBudget) -> Result<Plan, SearchError> {
        budget.validate()?;
        if is_goal(start, self.goal) {
            return Ok(Plan::default());
        }
        let mut clock = Clock::new(budget);
        let mut states: Vec<State> = vec![start.clone()];
        let mut parents: Vec<(usize, usize)> = vec![(0, 0)];
        let mut seen: HashMap<State, usize> = HashMap::from([(start.clone(), 0)]);
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            clock.tick()?;
            let state = states[node].clone();
            for (ai, a) in self.applicable_in(&state) {
                let next = successor(&state, a);
                if seen.contains_key(&next) {
                    continue;
                }
                let id = states.len();
                let goal = is_goal(&next, self.goal);
                seen.insert(next.clone(), id);
                states.push(next);
                parents.push((node, ai));
                if goal {
                    return Ok(trace_back(&parents, self.actions, id));
                }
                queue.push_back(id);
            }
        }
        Err(SearchError::Unsolvable)
    }

    /// Greedy best-first search on the number of unsatisfied goal atoms.
    pub fn gbfs(&self, start: &State, budget: &SearchBudget) -> Result<Plan, SearchError> {
        budget.validate()?;
        let h = |s: &State| self.goal.iter().filter(|g| !s.contains(g)).count();
        if h(start) == 0 {
            return Ok(Plan::default());
        }
        let mut clock = Clock::new(budget);
        let mut states: Vec<State> = vec![start.clone()];
        let mut parents: Vec<(usize, usize)> = vec![(0, 0)];
        let mut seen: HashMap<State, usize> = HashMap::from([(start.clone(), 0)]);
        let mut open = BinaryHeap::from([Reverse((h(start), 0usize))]);
        while let Some(Reverse((_, node))) = open.pop() {
            clock.tick()?;
            let state = states[node].clone();
            for (ai, a) in self.applicable_in(&state) {
                let next = successor(&state, a);
                if seen.contains_key(&next) {
                    continue;
                }
                let id = states.len();
                let hn = h(&next);
                seen.insert(next.clone(), id);
                states.push(next);
                parents.push((node, ai));
                if hn == 0 {
                    return Ok(trace_back(&parents, self.actions, id));
                }
                open.push(Reverse((hn, id)));
            }
        }
        Err(SearchError::Unsolvable)
    }

    /// Applicable actions that start some optimal plan from `start`, found by
    /// re-solving from each successor. Empty when `start` satisfies the goal.
    pub fn optimal_first_actions(&self, start: &State, budget: &SearchBudget) -> Result<Vec<GroundAction>, SearchError> {
        let best = self.bfs(start, budget)?.cost();
        if best == 0 {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for (_, a) in self.applicable_in(start) {
            let next = successor(start, a);
            if &next == start {
                continue;
            }
            match self.bfs(&next, budget) {
                Ok(p) if p.cost() + 1 == best => out.push(a.clone()),
                Ok(_) | Err(SearchError::Unsolvable) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

pub fn solve_optimal(domain: &Domain, instance: &Instance, budget: &SearchBudget) -> Result<Plan, SearchError> {
    let actions = ground_actions(domain, instance);
    Task { goal: &instance.goal, actions: &actions }.bfs(&instance.init, budget)
}

pub fn solve_satisficing(domain: &Domain, instance: &Instance, budget: &SearchBudget) -> Result<Plan, SearchError> {
    let actions = ground_actions(domain, instance);
    Task { goal: &instance.goal, actions: &actions }.gbfs(&instance.init, budget)
}

pub fn optimal_first_actions(domain: &Domain, instance: &Instance, budget: &SearchBudget) -> Result<Vec<GroundAction>, SearchError> {
    let actions = ground_actions(domain, instance);
    Task { goal: &instance.goal, actions: &actions }.optimal_first_actions(&instance.init, budget)
}

/// True iff every step is applicable in sequence from the initial state and
/// the final state satisfies the goal.
pub fn validate_plan(_domain: &Domain, instance: &Instance, plan: &Plan) -> bool {
    let mut state = instance.init.clone();
    for step in &plan.steps {
        match apply(&state, step) {
            Ok(next) => state = next,
            Err(_) => return false,
        }
    }
    is_goal(&state, &instance.goal)
}
