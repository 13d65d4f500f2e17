use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::{ObjectId, PddlError, SchemaId};

/// Ground atom `p(o1, ..., ok)` over predicate and object ids.
///
/// The derived ordering (predicate, then arguments) is the canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub pred: u32,
    pub args: SmallVec<[u32; 4]>,
}

impl Atom {
    pub fn new(pred: usize, args: impl IntoIterator<Item = usize>) -> Self {
        Atom { pred: pred as u32, args: args.into_iter().map(|a| a as u32).collect() }
    }

    pub fn mentions(&self, object: ObjectId) -> bool {
        self.args.iter().any(|&a| a as usize == object)
    }
}

/// Set of ground atoms in canonical (sorted, duplicate-free) order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    atoms: Vec<Atom>,
}

impl State {
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Self {
        let mut atoms: Vec<Atom> = atoms.into_iter().collect();
        atoms.sort_unstable();
        atoms.dedup();
        State { atoms }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.binary_search(atom).is_ok()
    }

    /// True when every atom of `sorted` is in the state.
    ///
    /// `sorted` must be in canonical order; the check is a linear merge.
    pub fn contains_all(&self, sorted: &[Atom]) -> bool {
        let mut it = self.atoms.iter();
        'outer: for needle in sorted {
            for a in it.by_ref() {
                match a.cmp(needle) {
                    std::cmp::Ordering::Less => continue,
                    std::cmp::Ordering::Equal => continue 'outer,
                    std::cmp::Ordering::Greater => return false,
                }
            }
            return false;
        }
        true
    }

    /// Stable 64-bit FNV-1a hash of the canonical atom sequence.
    pub fn key(&self) -> u64 {
        let mut h = Fnv64::default();
        for atom in &self.atoms {
            h.write_u32(atom.pred);
            h.write_u32(atom.args.len() as u32);
            for &a in &atom.args {
                h.write_u32(a);
            }
        }
        h.finish()
    }

    pub fn key_hex(&self) -> String {
        format!("{:016x}", self.key())
    }
}

#[derive(Clone, Copy)]
struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }
}

impl Hasher for Fnv64 {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn write_u32(&mut self, v: u32) {
        self.write(&v.to_le_bytes());
    }
}

/// Schema instantiated with an object tuple. `pre`, `add` and `del` are canonical.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundAction {
    pub schema: SchemaId,
    pub args: Vec<ObjectId>,
    pub pre: Vec<Atom>,
    pub add: Vec<Atom>,
    pub del: Vec<Atom>,
}

impl GroundAction {
    pub fn same_grounding(&self, schema: SchemaId, args: &[ObjectId]) -> bool {
        self.schema == schema && self.args == args
    }
}

pub fn applicable(state: &State, action: &GroundAction) -> bool {
    state.contains_all(&action.pre)
}

/// Successor `(s \ del) ∪ add`. Fails if the preconditions do not hold.
pub fn apply(state: &State, action: &GroundAction) -> Result<State, PddlError> {
    if !applicable(state, action) {
        return Err(PddlError::NotApplicable {
            action: format!("schema {} {:?}", action.schema, action.args),
        });
    }
    Ok(successor(state, action))
}

/// `apply` without the precondition check.
pub fn successor(state: &State, action: &GroundAction) -> State {
    let mut atoms = Vec::with_capacity(state.atoms.len() + action.add.len());
    let mut add = action.add.iter().peekable();
    for a in &state.atoms {
        while let Some(x) = add.peek() {
            if *x < a {
                atoms.push((*x).clone());
                add.next();
            } else {
                break;
            }
        }
        if add.peek() == Some(&a) {
            atoms.push(a.clone());
            add.next();
            continue;
        }
        if action.del.binary_search(a).is_err() {
            atoms.push(a.clone());
        }
    }
    atoms.extend(add.cloned());
    State { atoms }
}

pub fn is_goal(state: &State, goal: &[Atom]) -> bool {
    state.contains_all(goal)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;

    fn atom_strategy() -> impl Strategy<Value = Atom> {
        (0usize..4, proptest::collection::vec(0usize..4, 0..3)).prop_map(|(p, a)| Atom::new(p, a))
    }

    proptest! {
        #[test]
        fn key_ignores_insertion_order(atoms in proptest::collection::vec(atom_strategy(), 0..12), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = atoms.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = State::new(atoms.clone());
            let b = State::new(shuffled);
            prop_assert_eq!(a.key(), b.key());
            prop_assert_eq!(&a, &b);
        }

        #[test]
        fn key_distinguishes_sets(x in proptest::collection::btree_set(atom_strategy(), 0..8), y in proptest::collection::btree_set(atom_strategy(), 0..8)) {
            let (a, b) = (State::new(x.clone()), State::new(y.clone()));
            prop_assert_eq!(a.key() == b.key(), x == y);
        }

        #[test]
        fn successor_matches_set_algebra(
            s in proptest::collection::btree_set(atom_strategy(), 0..10),
            pre in proptest::collection::btree_set(atom_strategy(), 0..3),
            add in proptest::collection::btree_set(atom_strategy(), 0..4),
            del in proptest::collection::btree_set(atom_strategy(), 0..4),
        ) {
            let mut s = s;
            s.extend(pre.iter().cloned());
            let state = State::new(s.clone());
            let action = GroundAction {
                schema: 0,
                args: vec![],
                pre: pre.into_iter().collect(),
                add: add.iter().cloned().collect(),
                del: del.iter().cloned().collect(),
            };
            prop_assert!(applicable(&state, &action));
            let next = apply(&state, &action).unwrap();
            let expected: BTreeSet<Atom> = s.difference(&del).cloned().collect::<BTreeSet<_>>().union(&add).cloned().collect();
            prop_assert_eq!(next.atoms().to_vec(), expected.into_iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn empty_precondition_always_applicable() {
        let a = GroundAction { schema: 0, args: vec![], pre: vec![], add: vec![], del: vec![] };
        let s = State::new([Atom::new(1, [2])]);
        assert!(applicable(&s, &a));
        assert_eq!(apply(&s, &a).unwrap().key(), s.key());
        assert!(applicable(&State::default(), &a));
    }

    #[test]
    fn goal_checks() {
        let s = State::new([Atom::new(0, [1, 2]), Atom::new(1, [0])]);
        assert!(is_goal(&s, &[]));
        assert!(is_goal(&s, &[Atom::new(0, [1, 2])]));
        assert!(is_goal(&s, s.atoms()));
        assert!(!is_goal(&s, &[Atom::new(0, [2, 1])]));
    }
}
