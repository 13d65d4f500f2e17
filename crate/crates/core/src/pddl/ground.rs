use super::{ActionSchema, Atom, Domain, GroundAction, Instance, LiftedAtom, ObjectId, Term};

/// Predicates that no schema adds or deletes.
pub fn static_predicates(domain: &Domain) -> Vec<bool> {
    let mut fluent = vec![false; domain.predicates.len()];
    for s in &domain.schemas {
        for a in s.add.iter().chain(&s.del) {
            fluent[a.pred] = true;
        }
    }
    fluent.into_iter().map(|f| !f).collect()
}

fn substitute(atom: &LiftedAtom, args: &[ObjectId], instance: &Instance) -> Atom {
    Atom::new(
        atom.pred,
        atom.args.iter().map(|t| match t {
            Term::Var(i) => args[*i],
            Term::Const(c) => instance.object_id(c).expect("domain constants are instance objects"),
        }),
    )
}

fn max_var(atom: &LiftedAtom) -> Option<usize> {
    atom.args
        .iter()
        .filter_map(|t| match t {
            Term::Var(i) => Some(*i),
            Term::Const(_) => None,
        })
        .max()
}

/// Instantiates `schema` with `args`, producing canonical pre/add/del sets.
pub fn instantiate(schema_id: usize, schema: &ActionSchema, args: Vec<ObjectId>, instance: &Instance) -> GroundAction {
    let sub = |atoms: &[LiftedAtom]| {
        let mut v: Vec<Atom> = atoms.iter().map(|a| substitute(a, &args, instance)).collect();
        v.sort();
        v.dedup();
        v
    };
    let pre = sub(&schema.pre);
    let add = sub(&schema.add);
    let del = sub(&schema.del);
    GroundAction { schema: schema_id, args, pre, add, del }
}

/// All type-consistent groundings whose static preconditions hold in the
/// initial state, ordered by schema and then lexicographically by argument.
///
/// Static atoms never change, so a grounding that fails one can never become
/// applicable. For untyped domains this is what makes unary static predicates
/// such as `(room ?r)` act as types.
pub fn ground_actions(domain: &Domain, instance: &Instance) -> Vec<GroundAction> {
    let is_static = static_predicates(domain);
    let mut out = Vec::new();
    for (sid, schema) in domain.schemas.iter().enumerate() {
        let candidates: Vec<Vec<ObjectId>> = schema
            .params
            .iter()
            .map(|p| {
                instance
                    .objects
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| domain.is_subtype(o.ty, p.ty))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        // Static preconditions, bucketed by the depth at which they become fully bound.
        let mut checks: Vec<Vec<&LiftedAtom>> = vec![Vec::new(); schema.arity() + 1];
        for a in schema.pre.iter().filter(|a| is_static[a.pred]) {
            checks[max_var(a).map_or(0, |v| v + 1)].push(a);
        }
        let mut args = Vec::with_capacity(schema.arity());
        extend(instance, sid, schema, &candidates, &checks, &mut args, &mut out);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn extend(
    instance: &Instance,
    sid: usize,
    schema: &ActionSchema,
    candidates: &[Vec<ObjectId>],
    checks: &[Vec<&LiftedAtom>],
    args: &mut Vec<ObjectId>,
    out: &mut Vec<GroundAction>,
) {
    let depth = args.len();
    if !checks[depth].iter().all(|a| instance.init.contains(&substitute(a, args, instance))) {
        return;
    }
    if depth == schema.arity() {
        out.push(instantiate(sid, schema, args.clone(), instance));
        return;
    }
    for &o in &candidates[depth] {
        args.push(o);
        extend(instance, sid, schema, candidates, checks, args, out);
        args.pop();
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::super::fixtures::*;
    use super::super::{applicable, apply, parse_problem};
    use super::*;

    fn count_by_schema(d: &Domain, acts: &[GroundAction]) -> Vec<usize> {
        let mut c = vec![0; d.schemas.len()];
        for a in acts {
            c[a.schema] += 1;
        }
        c
    }

    #[test]
    fn gripper_one_ball() {
        let (d, i) = load(GRIPPER, GRIPPER_1);
        let acts = ground_actions(&d, &i);
        assert_eq!(count_by_schema(&d, &acts), [4, 4, 4]);
        let set: HashSet<_> = acts.iter().map(|a| (a.schema, a.args.clone())).collect();
        assert_eq!(set.len(), acts.len());
    }

    #[test]
    fn blocks_three() {
        let (d, i) = load(BLOCKS, BLOCKS_3);
        let acts = ground_actions(&d, &i);
        assert_eq!(count_by_schema(&d, &acts), [3, 3, 9, 9]);
        // lexicographic within a schema
        let stack: Vec<_> = acts.iter().filter(|a| a.schema == 2).map(|a| a.args.clone()).collect();
        let mut sorted = stack.clone();
        sorted.sort();
        assert_eq!(stack, sorted);
    }

    #[test]
    fn missing_type_yields_no_groundings() {
        let d = super::super::parse_domain(ON_CLEAR).unwrap();
        let i = parse_problem("(define (problem p) (:domain on-clear) (:objects a b - block) (:init (clear a)) (:goal (and)))", &d).unwrap();
        let acts = ground_actions(&d, &i);
        assert_eq!(count_by_schema(&d, &acts), [0, 4]);
    }

    #[test]
    fn tower_fixture_semantics() {
        let (d, i) = load(BLOCKS, BLOCKS_3);
        let acts = ground_actions(&d, &i);
        let find = |name: &str, args: &[&str]| {
            let sid = d.schema_id(name).unwrap();
            let ids: Vec<_> = args.iter().map(|a| i.object_id(a).unwrap()).collect();
            acts.iter().find(|a| a.same_grounding(sid, &ids)).unwrap().clone()
        };
        assert!(applicable(&i.init, &find("pick-up", &["o1"])));
        assert!(!applicable(&i.init, &find("pick-up", &["o2"])));
        let after = apply(&i.init, &find("unstack", &["o3", "o2"])).unwrap();
        let names: HashSet<String> = after.atoms().iter().map(|a| i.atom_to_string(&d, a)).collect();
        assert!(names.contains("(holding o3)"));
        assert!(names.contains("(clear o2)"));
        assert!(!names.contains("(on o3 o2)"));
        let back = apply(&after, &find("stack", &["o3", "o2"])).unwrap();
        assert_eq!(back.key(), i.init.key());
        assert!(!super::super::is_goal(&i.init, &i.goal));
    }
}
