use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};

use super::*;
use crate::graph::Ablation;
use crate::model::ModelConfig;
use crate::pddl::fixtures::*;
use crate::pddl::{parse_domain, parse_problem};
use crate::search::{solve_optimal, validate_plan, SearchBudget};
use crate::train::{generate_dataset, train_with, TrainConfig};

pub(crate) const TOGGLE: &str = "(define (domain toggle) (:predicates (p) (q) (r))
  (:action flip :parameters () :precondition (p) :effect (and (q) (not (p))))
  (:action flop :parameters () :precondition (q) :effect (and (p) (not (q)))))";
pub(crate) const TOGGLE_1: &str = "(define (problem toggle-1) (:domain toggle) (:init (p)) (:goal (r)))";

fn jittered(domain: &Domain, seed: u64, ablation: Ablation) -> Model {
    let mut m = Model::new(domain, ModelConfig { hidden: 8, layers: 2, ablation }, seed).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for (_, t) in m.params.iter_mut() {
        t.data.iter_mut().for_each(|x| *x += rng.gen_range(-0.3..0.3));
    }
    m
}

#[test]
fn goal_at_start_is_solved_immediately() {
    let (d, mut i) = load(BLOCKS, BLOCKS_3);
    i.goal = i.init.atoms()[..2].to_vec();
    let m = jittered(&d, 1, Ablation::Full);
    let r = run_policy(&d, &i, &m, &ExecConfig::default()).unwrap();
    assert_eq!((r.outcome, r.steps), (Outcome::Solved, 0));
    assert!(r.plan.is_empty() && r.trace.is_empty());
}

#[test]
fn oscillation_ends_in_dead_end() {
    let (d, i) = load(TOGGLE, TOGGLE_1);
    // Enumerate the reachable space: {p} and {q} only.
    let acts = ground_actions(&d, &i);
    let s1 = successor(&i.init, &acts[0]);
    assert_eq!(successor(&s1, &acts[1]), i.init);
    for ab in Ablation::ALL {
        let m = jittered(&d, 2, ab);
        let r = run_policy(&d, &i, &m, &ExecConfig::default()).unwrap();
        assert_eq!((r.outcome, r.steps), (Outcome::DeadEnd, 1), "{ab:?}");
        assert_eq!(r.trace[0].action, "(flip)");
    }
}

#[test]
fn step_cap_binds_exactly() {
    let (d, i) = load(BLOCKS, BLOCKS_3);
    let m = jittered(&d, 3, Ablation::Full);
    let cfg = ExecConfig { max_steps: 1, ..ExecConfig::default() };
    let r = run_policy(&d, &i, &m, &cfg).unwrap();
    assert_eq!((r.outcome, r.steps), (Outcome::StepLimit, 1));
    assert!(run_policy(&d, &i, &m, &ExecConfig { max_steps: 0, ..cfg }).is_err());
    assert!(run_policy(&d, &i, &m, &ExecConfig { beam: 0, ..cfg }).is_err());
}

#[test]
fn trace_has_unique_states_and_is_deterministic() {
    let d = parse_domain(crate::generate::BLOCKSWORLD_DOMAIN).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for k in 0..4 {
        let i = parse_problem(&crate::generate::blocksworld_problem("p", 4, &mut rng), &d).unwrap();
        let m = jittered(&d, k, Ablation::Full);
        let a = run_policy(&d, &i, &m, &ExecConfig::default()).unwrap();
        let b = run_policy(&d, &i, &m, &ExecConfig::default()).unwrap();
        assert_eq!(a, b);
        let keys: HashSet<&str> = a.trace.iter().map(|t| t.state_key.as_str()).collect();
        assert_eq!(keys.len(), a.trace.len());
        assert_eq!(a.steps, a.plan.len());
        assert!(a.steps <= 1000);
        if a.outcome == Outcome::Solved {
            assert!(validate_plan(&d, &i, &a.plan));
        }
        for (n, line) in a.trace_jsonl().lines().enumerate() {
            let t: TraceStep = serde_json::from_str(line).unwrap();
            assert_eq!(t.step, n);
        }
    }
}

#[test]
fn select_returns_none_when_every_successor_is_visited() {
    let (d, i) = load(BLOCKS, BLOCKS_3);
    let m = jittered(&d, 5, Ablation::Full);
    let ctx = PolicyContext::new(&d, &i, &m, ExecConfig::default()).unwrap();
    let visited: HashSet<State> =
        ctx.actions.iter().filter(|a| applicable(&i.init, a)).map(|a| successor(&i.init, a)).collect();
    assert_eq!(select_action(&ctx, &i.init, &visited).unwrap(), None);
}

#[test]
fn single_applicable_action_is_taken() {
    let (d, i) = load(TOGGLE, TOGGLE_1);
    for seed in 0..5 {
        let m = jittered(&d, seed, Ablation::Full);
        let ctx = PolicyContext::new(&d, &i, &m, ExecConfig { beam: 1, ..ExecConfig::default() }).unwrap();
        let a = select_action(&ctx, &i.init, &HashSet::new()).unwrap().unwrap();
        assert_eq!(d.schemas[a.schema].name, "flip");
    }
}

#[test]
fn fallback_picks_best_admissible_by_score() {
    let d = parse_domain(crate::generate::BLOCKSWORLD_DOMAIN).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    for k in 0..10 {
        let i = parse_problem(&crate::generate::blocksworld_problem("p", 4, &mut rng), &d).unwrap();
        let m = jittered(&d, 10 + k, Ablation::Full);
        let ctx = PolicyContext::new(&d, &i, &m, ExecConfig { beam: 1, ..ExecConfig::default() }).unwrap();
        let s = &i.init;
        let app: Vec<usize> = (0..ctx.actions.len()).filter(|&j| applicable(s, &ctx.actions[j])).collect();
        if app.len() < 3 {
            continue;
        }
        // Block the beam's choice so the exhaustive ranking must be used.
        let first = ctx.select(s, &HashSet::new()).unwrap().unwrap();
        let visited = HashSet::from([successor(s, &ctx.actions[first.action])]);
        let sel = ctx.select(s, &visited).unwrap().unwrap();
        assert!(sel.fallback_used);
        // Oracle: score_grounded on every admissible action.
        let refs: Vec<&GroundAction> = app.iter().map(|&j| &ctx.actions[j]).collect();
        let g = m.graph(&d, &i, s, &refs).unwrap();
        let enc = m.encode(&g).unwrap();
        let best = app
            .iter()
            .filter(|&&j| j != first.action)
            .map(|&j| (m.score_grounded(&enc, &g, ctx.actions[j].schema, &ctx.actions[j].args).unwrap(), j))
            .fold((f64::NEG_INFINITY, usize::MAX), |a, b| if b.0 > a.0 { b } else { a });
        assert_eq!(sel.action, best.1);
        let no_fb = PolicyContext::new(&d, &i, &m, ExecConfig { beam: 1, fallback: false, ..ExecConfig::default() }).unwrap();
        assert_eq!(no_fb.select(s, &visited).unwrap(), None);
        checked += 1;
    }
    assert!(checked >= 3);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let (d, i) = load(BLOCKS, BLOCKS_3);
    let (g, _) = load(GRIPPER, GRIPPER_1);
    let m = jittered(&g, 1, Ablation::Full);
    assert!(matches!(run_policy(&d, &i, &m, &ExecConfig::default()), Err(ExecError::Model(ModelError::DimensionMismatch { .. }))));
}

#[test]
fn overfit_model_solves_the_three_block_instance_optimally() {
    let (d, i) = load(BLOCKS, BLOCKS_3);
    let ds = generate_dataset(&d, std::slice::from_ref(&i), 0, &SearchBudget::default());
    assert_eq!(ds.len(), 2);
    let cfg = TrainConfig {
        lr: 0.005,
        batch: 2,
        max_epochs: 300,
        seed: 1,
        model: ModelConfig { hidden: 16, layers: 2, ablation: Ablation::Full },
    };
    let out = train_with(&d, &ds, &ds, &cfg, |e| if e.val_loss < 1e-3 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
        .unwrap();
    let r = run_policy(&d, &i, &out.checkpoint.model, &ExecConfig::default()).unwrap();
    let opt = solve_optimal(&d, &i, &SearchBudget::default()).unwrap();
    assert_eq!(r.outcome, Outcome::Solved);
    assert_eq!(r.plan, opt);
    assert_eq!(r.steps, 2);
}
