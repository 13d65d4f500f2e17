use super::decoder::Decoder;
use super::*;
use crate::graph::NodeKind;
use crate::pddl::fixtures::*;
use crate::pddl::{applicable, ground_actions, parse_domain};
use crate::tensor::finite_diff_grad;

fn setup(dom: &str, prob: &str, config: ModelConfig, seed: u64) -> (Domain, Instance, Model, PlanningGraph, Vec<GroundAction>) {
    let (d, i) = load(dom, prob);
    let m = Model::new(&d, config, seed).unwrap();
    let acts = ground_actions(&d, &i);
    let app: Vec<GroundAction> = acts.into_iter().filter(|a| applicable(&i.init, a)).collect();
    let refs: Vec<&GroundAction> = app.iter().collect();
    let g = m.graph(&d, &i, &i.init, &refs).unwrap();
    (d, i, m, g, app)
}

/// Moves every parameter off its initial value so no relu sits exactly at its kink.
fn jitter(m: &mut Model, seed: u64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for (_, t) in m.params.iter_mut() {
        t.data.iter_mut().for_each(|x| *x += rng.gen_range(-0.2..0.2));
    }
}

fn small(ablation: Ablation) -> ModelConfig {
    ModelConfig { hidden: 5, layers: 2, ablation }
}

/// Parameter count from the layer shapes.
fn expected_count(dims: &GraphDims, h: usize, ablation: Ablation) -> usize {
    let mlp = |i: usize, o: usize| i * h + h + h * o + o;
    let att = 2 * h * h + h;
    let mut n = dims.node_dim * h + h + dims.edge_dim * h + h;
    n += mlp(4 * h, h) + mlp(3 * h, h) + att;
    if ablation.global_node() {
        n += mlp(3 * h, h) + 2 * att;
    }
    n += 2 * (h * 3 * h + 3 * h);
    n += 2 * mlp(h, 1);
    if !ablation.action_nodes() {
        n += dims.num_schemas * h;
    }
    if !ablation.conditional_decoding() {
        n += dims.max_arity.max(1) * h;
    }
    n
}

#[test]
fn parameter_count_closed_form() {
    let d = parse_domain(BLOCKS).unwrap();
    for ab in Ablation::ALL {
        let m = Model::new(&d, ModelConfig { ablation: ab, ..Default::default() }, 0).unwrap();
        assert_eq!(m.num_scalars(), expected_count(&m.dims, 64, ab), "{ab:?}");
    }
    // blocksworld, h = 64, full: d = 18, k_e = 11
    let m = Model::new(&d, ModelConfig::default(), 0).unwrap();
    assert_eq!(m.num_scalars(), 18 * 64 + 64 + 11 * 64 + 64 + 20_608 + 16_512 + 8_256 + 16_512 + 2 * 8_256 + 24_960 + 2 * 4_225);
}

#[test]
fn init_is_seeded_and_rejects_zero_hidden() {
    let d = parse_domain(BLOCKS).unwrap();
    let a = Model::new(&d, ModelConfig::default(), 7).unwrap();
    let b = Model::new(&d, ModelConfig::default(), 7).unwrap();
    let c = Model::new(&d, ModelConfig::default(), 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.params, c.params);
    assert_eq!(Model::new(&d, ModelConfig { hidden: 0, ..Default::default() }, 0), Err(ModelError::ZeroHidden));
}

#[test]
fn zero_parameters_give_zero_embeddings_and_uniform_loss() {
    let (d, i, mut m, g, _) = setup(ON_CLEAR, ON_CLEAR_3, ModelConfig::default(), 1);
    m.params.fill(0.0);
    let enc = m.encode(&g).unwrap();
    assert!(enc.nodes.iter().chain(&enc.edges).chain(&enc.global).all(|x| *x == 0.0));
    let target = SupervisionTarget {
        schema: d.schema_id("unstack").unwrap(),
        args: vec![i.object_id("o3").unwrap(), i.object_id("o2").unwrap()],
    };
    let loss = m.loss(&g, &target).unwrap();
    assert!((loss - (2f64.ln() + 2.0 * 3f64.ln())).abs() < 1e-12, "{loss}");
    assert!((loss - 2.8904).abs() < 1e-4);
}

#[test]
fn tower_graph_embedding_shapes() {
    let (_, _, m, g, _) = setup(ON_CLEAR, ON_CLEAR_3, ModelConfig::default(), 3);
    let enc = m.encode(&g).unwrap();
    assert_eq!(enc.num_nodes(), 10);
    assert_eq!(enc.nodes.len(), 10 * 64);
    assert_eq!(enc.global.len(), 64);
    assert_eq!(enc.node(g.global_node.unwrap()), &enc.global[..]);
    assert!(enc.nodes.iter().all(|x| x.is_finite()));
    assert_eq!(m.encode(&g).unwrap(), enc);
}

#[test]
fn node_permutation_equivariance() {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    for ab in [Ablation::Full, Ablation::NoGlobalNode] {
        let (_, _, m, g, _) = setup(GRIPPER, GRIPPER_1, ModelConfig { ablation: ab, ..Default::default() }, 5);
        let mut perm: Vec<usize> = (0..g.nodes.len()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(9));
        let p = g.permuted(&perm);
        let (a, b) = (m.encode(&g).unwrap(), m.encode(&p).unwrap());
        for (x, y) in a.global.iter().zip(&b.global) {
            assert!((x - y).abs() <= 1e-9);
        }
        for (i, &pi) in perm.iter().enumerate() {
            for (x, y) in a.node(i).iter().zip(b.node(pi)) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
        let (ga, gb) = (m.decode_greedy(&a, &g).unwrap(), m.decode_greedy(&b, &p).unwrap());
        assert!(ga.same_grounding(&gb));
    }
}

#[test]
fn beam_one_is_greedy_and_scores_are_sound() {
    for ab in Ablation::ALL {
        let (_, _, m, g, _) = setup(BLOCKS, BLOCKS_3, ModelConfig { ablation: ab, hidden: 16, layers: 3 }, 11);
        let enc = m.encode(&g).unwrap();
        let greedy = m.decode_greedy(&enc, &g).unwrap();
        let beam = m.decode_beam(&enc, &g, 1).unwrap();
        assert_eq!(beam, vec![greedy.clone()]);
        assert_eq!(m.score_grounded(&enc, &g, greedy.schema, &greedy.args).unwrap(), greedy.log_score);
        for k in [2, 3, 5] {
            let ranked = m.decode_beam(&enc, &g, k).unwrap();
            assert!(ranked.len() <= k);
            assert!(ranked.windows(2).all(|w| w[0].log_score >= w[1].log_score));
            for r in &ranked {
                assert_eq!(r.args.len(), m.arities[r.schema]);
                assert_eq!(m.score_grounded(&enc, &g, r.schema, &r.args).unwrap(), r.log_score);
            }
            assert!(ranked[0].log_score >= greedy.log_score);
        }
    }
}

#[test]
fn wide_beam_finds_exhaustive_best() {
    let (d, i, m, g, _) = setup(BLOCKS, BLOCKS_3, ModelConfig { hidden: 16, layers: 3, ..Default::default() }, 2);
    let enc = m.encode(&g).unwrap();
    let n = i.objects.len();
    let mut all: Vec<(usize, Vec<usize>)> = Vec::new();
    for (sid, s) in d.schemas.iter().enumerate() {
        let mut tuples = vec![vec![]];
        for _ in 0..s.arity() {
            tuples = tuples.into_iter().flat_map(|t: Vec<usize>| (0..n).map(move |o| [t.clone(), vec![o]].concat())).collect();
        }
        all.extend(tuples.into_iter().map(|t| (sid, t)));
    }
    let refs: Vec<(usize, &[usize])> = all.iter().map(|(s, a)| (*s, a.as_slice())).collect();
    let scores = m.score_groundings(&enc, &g, &refs).unwrap();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ranked = m.decode_beam(&enc, &g, all.len()).unwrap();
    assert_eq!(ranked[0].log_score, best);
    // one-at-a-time scoring agrees with the cached batch
    for ((s, a), sc) in all.iter().zip(&scores).take(20) {
        assert_eq!(m.score_grounded(&enc, &g, *s, a).unwrap(), *sc);
    }
}

#[test]
fn last_argument_changes_only_last_term() {
    let (d, i, m, g, _) = setup(BLOCKS, BLOCKS_3, ModelConfig { hidden: 8, layers: 2, ..Default::default() }, 4);
    let enc = m.encode(&g).unwrap();
    let stack = d.schema_id("stack").unwrap();
    let (o1, o2, o3) = (i.object_id("o1").unwrap(), i.object_id("o2").unwrap(), i.object_id("o3").unwrap());
    let prefix = m.score_groundings(&enc, &g, &[(stack, &[o1, o2][..]), (stack, &[o1, o3][..])]).unwrap();
    // Same first slot: scores differ by the last-slot log-probabilities alone.
    let mut t = crate::tensor::Tape::new();
    let dec = Decoder::from_output(&mut t, &m, &enc, &g).unwrap();
    let st = dec.start(&mut t, stack).unwrap();
    let st = dec.advance(&mut t, st, o1).unwrap();
    let logits = dec.object_logits(&mut t, st).unwrap();
    let lp = Decoder::log_probs(&mut t, logits);
    assert!(((prefix[0] - prefix[1]) - (lp[o2] - lp[o3])).abs() < 1e-12);
}

#[test]
fn teacher_forced_loss_is_negative_greedy_score() {
    for ab in Ablation::ALL {
        let (_, _, m, g, _) = setup(GRIPPER, GRIPPER_1, ModelConfig { ablation: ab, hidden: 12, layers: 2 }, 6);
        let enc = m.encode(&g).unwrap();
        let gr = m.decode_greedy(&enc, &g).unwrap();
        let (loss, hit) = m.loss_and_hit(&g, &SupervisionTarget { schema: gr.schema, args: gr.args.clone() }).unwrap();
        assert_eq!(loss, -gr.log_score, "{ab:?}");
        assert!(hit);
    }
}

#[test]
fn loss_gradient_matches_finite_differences() {
    for ab in Ablation::ALL {
        let (d, i, mut m, g, _) = setup(ON_CLEAR, ON_CLEAR_3, small(ab), 21);
        jitter(&mut m, 5);
        let target = SupervisionTarget {
            schema: d.schema_id("unstack").unwrap(),
            args: vec![i.object_id("o3").unwrap(), i.object_id("o2").unwrap()],
        };
        let (_, _, grads) = m.loss_and_grad(&g, &target).unwrap();
        let num = finite_diff_grad(
            |p| Model { params: p.clone(), ..m.clone() }.loss(&g, &target).unwrap(),
            &m.params,
            1e-5,
        )
        .unwrap();
        for (name, n) in &num.0 {
            let a = grads.get(name).unwrap();
            for (x, y) in a.iter().zip(n) {
                let rel = (x - y).abs() / x.abs().max(y.abs()).max(1e-4);
                assert!(rel <= 1e-4, "{ab:?} {name}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn pick_up_decodes_one_argument() {
    let (d, _, m, g, _) = setup(BLOCKS, BLOCKS_3, ModelConfig { hidden: 8, layers: 1, ..Default::default() }, 0);
    let enc = m.encode(&g).unwrap();
    let pick = d.schema_id("pick-up").unwrap();
    let ranked = m.decode_beam(&enc, &g, 200).unwrap();
    let pu: Vec<_> = ranked.iter().filter(|r| r.schema == pick).collect();
    assert!(!pu.is_empty());
    assert!(pu.iter().all(|r| r.args.len() == 1));
}

#[test]
fn invalid_targets_and_mismatched_graphs() {
    let (d, _, m, g, _) = setup(BLOCKS, BLOCKS_3, small(Ablation::Full), 0);
    let stack = d.schema_id("stack").unwrap();
    assert!(matches!(m.loss(&g, &SupervisionTarget { schema: 9, args: vec![] }), Err(ModelError::UnknownSchema(9))));
    assert!(matches!(m.loss(&g, &SupervisionTarget { schema: stack, args: vec![0] }), Err(ModelError::InvalidTarget(_))));
    assert!(matches!(m.loss(&g, &SupervisionTarget { schema: stack, args: vec![0, 7] }), Err(ModelError::UnknownObject(7))));
    let (_, _, other, og, _) = setup(GRIPPER, GRIPPER_1, small(Ablation::Full), 0);
    assert!(matches!(m.encode(&og), Err(ModelError::DimensionMismatch { .. })));
    assert!(other.check_domain(&d).is_err());
    let (_, _, _, bare, _) = setup(BLOCKS, BLOCKS_3, small(Ablation::NoActionNodes), 0);
    assert_eq!(m.encode(&bare), Err(ModelError::NoSchemaNodes));
    let enc = m.encode(&g).unwrap();
    assert_eq!(m.decode_beam(&enc, &g, 0), Err(ModelError::ZeroBeam));
}

#[test]
fn ablated_graphs_still_decode() {
    let (_, _, m, g, _) = setup(BLOCKS, BLOCKS_3, small(Ablation::NoActionNodes), 1);
    assert_eq!(g.count(NodeKind::ActionSchema), 0);
    let enc = m.encode(&g).unwrap();
    let ranked = m.decode_beam(&enc, &g, 4).unwrap();
    assert_eq!(ranked.len(), 4);
    let (_, _, m, g, _) = setup(BLOCKS, BLOCKS_3, small(Ablation::NoGlobalNode), 1);
    let enc = m.encode(&g).unwrap();
    assert!(enc.global.iter().all(|x| *x == 0.0));
    assert!(m.params.iter().all(|(n, _)| !n.starts_with("enc.phi_g")));
}
