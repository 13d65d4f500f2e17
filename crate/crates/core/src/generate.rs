//! Bundled benchmark domains and random problem generators.

use rand::seq::SliceRandom;
use rand::Rng;

pub const BLOCKSWORLD_DOMAIN: &str = include_str!("../domains/blocksworld.pddl");
pub const GRIPPER_DOMAIN: &str = include_str!("../domains/gripper.pddl");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Blocksworld,
    Gripper,
}

impl Family {
    pub fn domain_text(self) -> &'static str {
        match self {
            Family::Blocksworld => BLOCKSWORLD_DOMAIN,
            Family::Gripper => GRIPPER_DOMAIN,
        }
    }

    /// Problem text of the given size (blocks or balls).
    pub fn problem(self, name: &str, size: usize, rng: &mut impl Rng) -> String {
        match self {
            Family::Blocksworld => blocksworld_problem(name, size, rng),
            Family::Gripper => gripper_problem(name, size, rng),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "blocksworld" | "blocks" => Ok(Family::Blocksworld),
            "gripper" => Ok(Family::Gripper),
            _ => Err(format!("unknown domain family `{s}` (expected blocksworld or gripper)")),
        }
    }
}

/// Random towers: blocks are placed in random order, each on the table or on
/// top of an existing tower, chosen uniformly. Returns `below[i]`.
fn random_towers(n: usize, rng: &mut impl Rng) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut below = vec![None; n];
    let mut tops: Vec<usize> = Vec::new();
    for b in order {
        let pick = rng.gen_range(0..=tops.len());
        if pick < tops.len() {
            below[b] = Some(tops[pick]);
            tops[pick] = b;
        } else {
            tops.push(b);
        }
    }
    below
}

/// `n` blocks `b1..bn` in random towers; the goal is the `on` relation of
/// another random configuration, resampled until it is non-empty and not
/// already true.
pub fn blocksworld_problem(name: &str, n: usize, rng: &mut impl Rng) -> String {
    assert!(n >= 2, "blocksworld needs at least two blocks");
    let block = |i: usize| format!("b{}", i + 1);
    let init = random_towers(n, rng);
    let goal = loop {
        let g = random_towers(n, rng);
        let ons = g.iter().filter(|x| x.is_some()).count();
        let holds = g.iter().zip(&init).all(|(gb, ib)| gb.is_none() || gb == ib);
        if ons > 0 && !holds {
            break g;
        }
    };
    let mut atoms = vec!["(handempty)".to_string()];
    for i in 0..n {
        match init[i] {
            Some(j) => atoms.push(format!("(on {} {})", block(i), block(j))),
            None => atoms.push(format!("(ontable {})", block(i))),
        }
        if !init.contains(&Some(i)) {
            atoms.push(format!("(clear {})", block(i)));
        }
    }
    let goals: Vec<String> =
        (0..n).filter_map(|i| goal[i].map(|j| format!("(on {} {})", block(i), block(j)))).collect();
    let objects: Vec<String> = (0..n).map(block).collect();
    format!(
        "(define (problem {name})\n  (:domain blocks)\n  (:objects {})\n  (:init {})\n  (:goal (and {})))\n",
        objects.join(" "),
        atoms.join(" "),
        goals.join(" ")
    )
}

/// Two rooms, two grippers, `n` balls. Robot and balls start in random rooms
/// and every ball has a random goal room; at least one ball must move.
pub fn gripper_problem(name: &str, n: usize, rng: &mut impl Rng) -> String {
    assert!(n >= 1, "gripper needs at least one ball");
    let rooms = ["rooma", "roomb"];
    let start: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    let goal = loop {
        let g: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        if g != start {
            break g;
        }
    };
    let robby = rooms[rng.gen_range(0..2)];
    let mut atoms = vec![
        "(room rooma)".to_string(),
        "(room roomb)".into(),
        "(gripper left)".into(),
        "(gripper right)".into(),
        "(free left)".into(),
        "(free right)".into(),
        format!("(at-robby {robby})"),
    ];
    let mut objects = vec!["rooma".to_string(), "roomb".into(), "left".into(), "right".into()];
    let mut goals = Vec::new();
    for i in 0..n {
        let b = format!("ball{}", i + 1);
        atoms.push(format!("(ball {b})"));
        atoms.push(format!("(at {b} {})", rooms[start[i]]));
        goals.push(format!("(at {b} {})", rooms[goal[i]]));
        objects.push(b);
    }
    format!(
        "(define (problem {name})\n  (:domain gripper-strips)\n  (:objects {})\n  (:init {})\n  (:goal (and {})))\n",
        objects.join(" "),
        atoms.join(" "),
        goals.join(" ")
    )
}
