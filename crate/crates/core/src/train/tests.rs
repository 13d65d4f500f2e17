use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::generate::{blocksworld_problem, BLOCKSWORLD_DOMAIN};
use crate::graph::Ablation;
use crate::pddl::fixtures::*;
use crate::pddl::{parse_domain, parse_problem, Instance};
use crate::search::{solve_optimal, SearchBudget, Task};

fn blocks_instances(sizes: &[usize], per_size: usize, seed: u64) -> (Domain, Vec<Instance>) {
    let d = parse_domain(BLOCKSWORLD_DOMAIN).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &n in sizes {
        for k in 0..per_size {
            out.push(parse_problem(&blocksworld_problem(&format!("bw-{n}-{k}"), n, &mut rng), &d).unwrap());
        }
    }
    (d, out)
}

fn small_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        lr: 0.005,
        batch: 4,
        max_epochs: epochs,
        seed: 7,
        model: ModelConfig { hidden: 16, layers: 2, ablation: Ablation::Full },
    }
}

#[test]
fn plan_of_length_n_gives_n_examples() {
    let (d, i) = load(BLOCKS, BLOCKS_3);
    let ds = generate_dataset(&d, std::slice::from_ref(&i), 1, &SearchBudget::default());
    assert_eq!(ds.len(), solve_optimal(&d, &i, &SearchBudget::default()).unwrap().len());
    assert_eq!(ds.provenance.plan_lengths, vec![("blocks-3-tower".to_string(), 2)]);
    assert_eq!(ds.examples[0].state(), &i.init);
}

#[test]
fn example_count_matches_bfs_oracle_and_targets_are_optimal() {
    let (d, insts) = blocks_instances(&[3, 4, 5], 20, 11);
    let budget = SearchBudget::default();
    let ds = generate_dataset(&d, &insts, 5, &budget);
    assert!(ds.provenance.skipped.is_empty());
    let expected: usize = insts.iter().map(|i| solve_optimal(&d, i, &budget).unwrap().len()).sum();
    assert_eq!(ds.len(), expected);
    // Re-verify a sample of targets with the planner.
    for ex in ds.examples.iter().step_by(20) {
        let acts = ground_actions(&d, &ex.instance);
        let task = Task { goal: &ex.instance.goal, actions: &acts };
        let opt = task.optimal_first_actions(ex.state(), &budget).unwrap();
        assert!(opt.iter().any(|a| a.same_grounding(ex.target.schema, &ex.target.args)));
        let count = acts.iter().filter(|a| applicable(ex.state(), a)).count();
        assert_eq!(ex.applicable_actions_count, count);
    }
}

#[test]
fn generation_is_deterministic_and_round_trips() {
    let (d, insts) = blocks_instances(&[3, 4], 3, 2);
    let budget = SearchBudget::default();
    let a = generate_dataset(&d, &insts, 9, &budget);
    let b = generate_dataset(&d, &insts, 9, &budget);
    assert_eq!(a.to_jsonl(&d), b.to_jsonl(&d));

    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    a.save(&pa, &d).unwrap();
    b.save(&pb, &d).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    assert_eq!(std::fs::read(meta_path(&pa)).unwrap(), std::fs::read(meta_path(&pb)).unwrap());
    let back = Dataset::load(&pa, &d).unwrap();
    assert_eq!(back, a);

    let first: serde_json::Value = serde_json::from_str(a.to_jsonl(&d).lines().next().unwrap()).unwrap();
    for key in ["domain_sha", "instance_id", "state_atoms", "goal_atoms", "target_schema", "target_args", "applicable_actions_count"] {
        assert!(first.get(key).is_some(), "{key}");
    }
}

#[test]
fn unsolvable_instances_are_skipped_with_a_report() {
    let (d, mut i) = load(BLOCKS, BLOCKS_3);
    let o1 = i.object_id("o1").unwrap();
    let on = d.predicate_id("on").unwrap();
    i.goal = vec![crate::pddl::Atom::new(on, [o1, o1])];
    let (_, ok) = load(BLOCKS, BLOCKS_3);
    let ds = generate_dataset(&d, &[i, ok], 0, &SearchBudget::default());
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.provenance.skipped.len(), 1);
    assert_eq!(ds.provenance.instances.len(), 2);
}

#[test]
fn bad_records_are_rejected() {
    let (d, i) = load(BLOCKS, BLOCKS_3);
    let ds = generate_dataset(&d, std::slice::from_ref(&i), 0, &SearchBudget::default());
    let line = ds.to_jsonl(&d).lines().next().unwrap().to_string();
    for (from, to) in [("(on o3 o2)", "(on o3)"), ("(on o3 o2)", "(under o3 o2)"), ("(on o3 o2)", "(on o3 o9)"), ("\"unstack\"", "\"fly\"")] {
        let bad = line.replacen(from, to, 1);
        assert_ne!(bad, line);
        assert!(matches!(Dataset::from_jsonl(&bad, &d, Split::Train), Err(DatasetError::Record { line: 1, .. })));
    }
    let (g, _) = load(GRIPPER, GRIPPER_1);
    assert!(Dataset::from_jsonl(&line, &g, Split::Train).is_err());
    assert!(Dataset::from_jsonl("{", &d, Split::Train).is_err());
}

#[test]
fn memorizes_one_example() {
    let (d, i) = load(BLOCKS, BLOCKS_3);
    let mut ds = generate_dataset(&d, std::slice::from_ref(&i), 0, &SearchBudget::default());
    ds.examples.truncate(1);
    let out = train(&d, &ds, &ds, &small_cfg(400)).unwrap();
    let last = out.log.last().unwrap();
    assert!(last.train_loss < 1e-3, "{last:?}");
    assert_eq!(last.val_acc, 1.0);
}

#[test]
fn fixed_seed_gives_identical_curves_and_best_is_minimal() {
    let (d, insts) = blocks_instances(&[3], 4, 3);
    let budget = SearchBudget::default();
    let tr = generate_dataset(&d, &insts[..3], 1, &budget);
    let mut va = generate_dataset(&d, &insts[3..], 1, &budget);
    va.split = Split::Val;
    let a = train(&d, &tr, &va, &small_cfg(15)).unwrap();
    let b = train(&d, &tr, &va, &small_cfg(15)).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.checkpoint, b.checkpoint);
    let best = a.checkpoint.best_val_loss.unwrap();
    assert!(a.log.iter().all(|e| best <= e.val_loss));
    let at = &a.log[a.checkpoint.epoch - 1];
    assert_eq!(at.val_loss, best);
    // The stored weights reproduce the logged validation loss.
    let data = prepare(&d, &a.checkpoint.model, &va.examples).unwrap();
    assert_eq!(evaluate_loss(&a.checkpoint.model, &data).unwrap().0, best);
}

#[test]
fn thread_count_does_not_change_training() {
    let (d, insts) = blocks_instances(&[3], 3, 4);
    let ds = generate_dataset(&d, &insts, 1, &SearchBudget::default());
    let run = |n| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        pool.install(|| train(&d, &ds, &ds, &small_cfg(3)).unwrap())
    };
    assert_eq!(run(1).log, run(3).log);
}

#[test]
fn divergence_and_bad_inputs_are_errors() {
    let (d, i) = load(BLOCKS, BLOCKS_3);
    let ds = generate_dataset(&d, std::slice::from_ref(&i), 0, &SearchBudget::default());
    let cfg = TrainConfig { lr: 1e300, ..small_cfg(20) };
    assert!(matches!(train(&d, &ds, &ds, &cfg), Err(TrainError::Diverged { .. })));

    let empty = Dataset { examples: Vec::new(), ..ds.clone() };
    assert!(matches!(train(&d, &empty, &ds, &small_cfg(1)), Err(TrainError::EmptyDataset(_))));
    assert!(matches!(train(&d, &ds, &empty, &small_cfg(1)), Err(TrainError::EmptyDataset(_))));
    let (g, _) = load(GRIPPER, GRIPPER_1);
    assert!(matches!(train(&g, &ds, &ds, &small_cfg(1)), Err(TrainError::DomainMismatch { .. })));
    for bad in [TrainConfig { lr: 0.0, ..small_cfg(1) }, TrainConfig { batch: 0, ..small_cfg(1) }, small_cfg(0)] {
        assert!(matches!(train(&d, &ds, &ds, &bad), Err(TrainError::InvalidConfig(_))));
    }
    let mut wrong = ds.clone();
    wrong.examples[0].target.args.reverse();
    assert!(matches!(train(&d, &wrong, &ds, &small_cfg(1)), Err(TrainError::InvalidExample { index: 0, .. })));
}

fn trained_checkpoint() -> (Domain, Checkpoint) {
    let (d, i) = load(BLOCKS, BLOCKS_3);
    let ds = generate_dataset(&d, std::slice::from_ref(&i), 0, &SearchBudget::default());
    (d.clone(), train(&d, &ds, &ds, &small_cfg(2)).unwrap().checkpoint)
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let (d, ck) = trained_checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.ckpt");
    ck.save(&p).unwrap();
    let back = Checkpoint::load(&p).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes(), std::fs::read(&p).unwrap());
    assert!(back.model_for(&d).is_ok());
    let fresh = Checkpoint::fresh(&d, Model::new(&d, ModelConfig::default(), 3).unwrap());
    assert_eq!(Checkpoint::from_bytes(&fresh.to_bytes()).unwrap(), fresh);
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let (_, ck) = trained_checkpoint();
    let bytes = ck.to_bytes();
    for cut in [bytes.len() - 1, bytes.len() / 2, 20, 12] {
        assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(CheckpointError::Corrupt(_))), "cut {cut}");
    }
    assert!(matches!(Checkpoint::from_bytes(b"GABAR"), Err(CheckpointError::BadMagic)));
    assert!(matches!(Checkpoint::from_bytes(b"NOTACKPT-at-all-really-long-enough-to-pass"), Err(CheckpointError::BadMagic)));
    let mut flipped = bytes.clone();
    let mid = flipped.len() - 100;
    flipped[mid] ^= 1;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(CheckpointError::Corrupt(_))));
    let mut v2 = bytes.clone();
    v2[9..13].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(Checkpoint::from_bytes(&v2), Err(CheckpointError::Version { found: 2 })));
}

#[test]
fn cross_domain_checkpoint_fails_on_use() {
    let (g, _) = load(GRIPPER, GRIPPER_1);
    let (d, _) = load(BLOCKS, BLOCKS_3);
    let ck = Checkpoint::fresh(&g, Model::new(&g, ModelConfig { hidden: 4, layers: 1, ablation: Ablation::Full }, 0).unwrap());
    let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    assert!(matches!(back.model_for(&d), Err(ModelError::DimensionMismatch { .. })));
}

#[test]
fn header_floats_round_trip_exactly() {
    let (d, _) = load(BLOCKS, BLOCKS_3);
    let mut ck = Checkpoint::fresh(&d, Model::new(&d, ModelConfig { hidden: 4, layers: 1, ablation: Ablation::Full }, 0).unwrap());
    for v in [3.7150755821724757, 0.1 + 0.2, 1e-300, 2.2250738585072014e-308] {
        ck.best_val_loss = Some(v);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.best_val_loss, Some(v));
        assert_eq!(back.to_bytes(), bytes);
    }
}
