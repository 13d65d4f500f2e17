use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::SupervisionTarget;
use crate::pddl::sexpr::read_one;
use crate::pddl::{applicable, ground_actions, is_goal, successor, Atom, Domain, Instance, ObjectDef, PddlError, State};
use crate::search::{SearchBudget, SearchError, Task};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("metadata: {0}")]
    Meta(String),
}

/// Hex SHA-256 of the canonical printed domain.
pub fn domain_sha(domain: &Domain) -> String {
    let digest = Sha256::digest(domain.to_pddl().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// One supervised state. `instance` is the source task restarted at this
/// state, so `instance.init` is the labelled state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub instance_id: String,
    pub instance: Instance,
    pub target: SupervisionTarget,
    pub applicable_actions_count: usize,
}

impl TrainingExample {
    pub fn state(&self) -> &State {
        &self.instance.init
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub instance_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub instances: Vec<String>,
    pub max_expansions: usize,
    pub max_seconds: f64,
    /// Length of the followed optimal trajectory per generated instance.
    pub plan_lengths: Vec<(String, usize)>,
    pub skipped: Vec<SkipRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub domain_sha: String,
    pub split: Split,
    pub provenance: Provenance,
    pub examples: Vec<TrainingExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn to_jsonl(&self, domain: &Domain) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            let rec = ExampleRecord::from_example(domain, &self.domain_sha, ex);
            out.push_str(&serde_json::to_string(&rec).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses records; provenance is left empty.
    pub fn from_jsonl(text: &str, domain: &Domain, split: Split) -> Result<Dataset, DatasetError> {
        let sha = domain_sha(domain);
        let mut examples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| DatasetError::Record { line: i + 1, msg };
            let rec: ExampleRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            if rec.domain_sha != sha {
                return Err(err(format!("record is for domain {}, expected {sha}", rec.domain_sha)));
            }
            examples.push(rec.to_example(domain).map_err(|e| err(e.to_string()))?);
        }
        Ok(Dataset { domain_sha: sha, split, provenance: Provenance::default(), examples })
    }

    /// Writes `path` (records) and `path.meta.json` (split and provenance).
    pub fn save(&self, path: &Path, domain: &Domain) -> Result<(), DatasetError> {
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |source| DatasetError::Io { path: p, source }
        };
        let mut w = BufWriter::new(fs::File::create(path).map_err(io(path))?);
        w.write_all(self.to_jsonl(domain).as_bytes()).map_err(io(path))?;
        w.flush().map_err(io(path))?;
        let meta = Meta { domain_sha: self.domain_sha.clone(), split: self.split, examples: self.len(), provenance: self.provenance.clone() };
        let mp = meta_path(path);
        let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        fs::write(&mp, text + "\n").map_err(io(&mp))
    }

    /// Reads records and, when present, the metadata sidecar.
    pub fn load(path: &Path, domain: &Domain) -> Result<Dataset, DatasetError> {
        let f = fs::File::open(path).map_err(|source| DatasetError::Io { path: path.into(), source })?;
        let mut text = String::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|source| DatasetError::Io { path: path.into(), source })?;
            text.push_str(&line);
            text.push('\n');
        }
        let mp = meta_path(path);
        let meta: Option<Meta> = match fs::read_to_string(&mp) {
            Ok(s) => Some(serde_json::from_str(&s).map_err(|e| DatasetError::Meta(e.to_string()))?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(source) => return Err(DatasetError::Io { path: mp, source }),
        };
        let mut ds = Dataset::from_jsonl(&text, domain, meta.as_ref().map_or(Split::Train, |m| m.split))?;
        if let Some(m) = meta {
            if m.examples != ds.len() {
                return Err(DatasetError::Meta(format!("metadata lists {} examples, file has {}", m.examples, ds.len())));
            }
            ds.provenance = m.provenance;
        }
        Ok(ds)
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    domain_sha: String,
    split: Split,
    examples: usize,
    provenance: Provenance,
}

/// On-disk form of one example. Object types are given by name so a record
/// can be decoded without the source problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub domain_sha: String,
    pub instance_id: String,
    pub state_atoms: Vec<String>,
    pub goal_atoms: Vec<String>,
    pub target_schema: String,
    pub target_args: Vec<String>,
    pub applicable_actions_count: usize,
    pub objects: Vec<(String, String)>,
}

impl ExampleRecord {
    pub fn from_example(domain: &Domain, sha: &str, ex: &TrainingExample) -> Self {
        let inst = &ex.instance;
        ExampleRecord {
            domain_sha: sha.to_string(),
            instance_id: ex.instance_id.clone(),
            state_atoms: inst.init.atoms().iter().map(|a| inst.atom_to_string(domain, a)).collect(),
            goal_atoms: inst.goal.iter().map(|a| inst.atom_to_string(domain, a)).collect(),
            target_schema: domain.schemas[ex.target.schema].name.clone(),
            target_args: ex.target.args.iter().map(|&o| inst.objects[o].name.clone()).collect(),
            applicable_actions_count: ex.applicable_actions_count,
            objects: inst.objects.iter().map(|o| (o.name.clone(), domain.types[o.ty].name.clone())).collect(),
        }
    }

    pub fn to_example(&self, domain: &Domain) -> Result<TrainingExample, PddlError> {
        let bad = |m: String| PddlError::InvalidProblem(m);
        let mut objects = Vec::with_capacity(self.objects.len());
        for (name, ty) in &self.objects {
            let ty = domain.type_id(&ty.to_lowercase()).ok_or_else(|| PddlError::UndeclaredType(ty.clone()))?;
            objects.push(ObjectDef { name: name.to_lowercase(), ty });
        }
        if objects.windows(2).any(|w| w[0].name >= w[1].name) {
            return Err(bad("objects must be sorted by name without duplicates".into()));
        }
        let mut inst = Instance {
            name: self.instance_id.clone(),
            domain_name: domain.name.clone(),
            objects,
            init: State::default(),
            goal: Vec::new(),
        };
        let parse = |s: &String| parse_atom(s, domain, &inst);
        let state = State::new(self.state_atoms.iter().map(parse).collect::<Result<Vec<_>, _>>()?);
        let mut goal = self.goal_atoms.iter().map(parse).collect::<Result<Vec<_>, _>>()?;
        goal.sort();
        goal.dedup();
        let schema = domain
            .schema_id(&self.target_schema.to_lowercase())
            .ok_or_else(|| bad(format!("unknown action schema `{}`", self.target_schema)))?;
        let args = self
            .target_args
            .iter()
            .map(|a| inst.object_id(&a.to_lowercase()).ok_or_else(|| PddlError::UndeclaredObject(a.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        if args.len() != domain.schemas[schema].arity() {
            return Err(PddlError::ArityMismatch {
                predicate: self.target_schema.clone(),
                expected: domain.schemas[schema].arity(),
                found: args.len(),
            });
        }
        inst.init = state;
        inst.goal = goal;
        Ok(TrainingExample {
            instance_id: self.instance_id.clone(),
            instance: inst,
            target: SupervisionTarget { schema, args },
            applicable_actions_count: self.applicable_actions_count,
        })
    }
}

/// Parses `(pred obj ...)` against a domain and an object list.
pub fn parse_atom(text: &str, domain: &Domain, instance: &Instance) -> Result<Atom, PddlError> {
    let e = read_one(text)?;
    let items = e.as_list().ok_or_else(|| e.syntax_error("expected an atom"))?;
    let syms: Vec<&str> = items
        .iter()
        .map(|s| s.as_symbol().ok_or_else(|| s.syntax_error("expected a symbol")))
        .collect::<Result<_, _>>()?;
    let (head, args) = syms.split_first().ok_or_else(|| e.syntax_error("empty atom"))?;
    let head = head.to_lowercase();
    let pred = domain.predicate_id(&head).ok_or_else(|| PddlError::UndeclaredPredicate(head.clone()))?;
    let expected = domain.predicates[pred].arity();
    if args.len() != expected {
        return Err(PddlError::ArityMismatch { predicate: head, expected, found: args.len() });
    }
    let ids = args
        .iter()
        .map(|a| {
            let a = a.to_lowercase();
            instance.object_id(&a).ok_or(PddlError::UndeclaredObject(a))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Atom::new(pred, ids))
}

fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Follows one optimal trajectory, labelling every non-goal state with an
/// optimal first action drawn uniformly. Returns the examples in order.
pub fn trajectory_examples(
    domain: &Domain,
    instance: &Instance,
    rng: &mut ChaCha8Rng,
    budget: &SearchBudget,
) -> Result<Vec<TrainingExample>, SearchError> {
    let actions = ground_actions(domain, instance);
    let task = Task { goal: &instance.goal, actions: &actions };
    let mut state = instance.init.clone();
    let mut out = Vec::new();
    while !is_goal(&state, &instance.goal) {
        let choices = task.optimal_first_actions(&state, budget)?;
        if choices.is_empty() {
            return Err(SearchError::Unsolvable);
        }
        let a = &choices[rng.gen_range(0..choices.len())];
        out.push(TrainingExample {
            instance_id: instance.name.clone(),
            instance: Instance { init: state.clone(), ..instance.clone() },
            target: SupervisionTarget::from_action(a),
            applicable_actions_count: actions.iter().filter(|g| applicable(&state, g)).count(),
        });
        state = successor(&state, a);
    }
    Ok(out)
}

/// Labels states from every instance. Instances the planner cannot solve
/// within `budget` contribute nothing and are listed in the provenance.
/// Work is spread over the current rayon pool; output order and content do
/// not depend on the number of threads.
pub fn generate_dataset(domain: &Domain, instances: &[Instance], seed: u64, budget: &SearchBudget) -> Dataset {
    let results: Vec<_> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| trajectory_examples(domain, inst, &mut instance_rng(seed, i), budget))
        .collect();
    let mut provenance = Provenance {
        seed,
        instances: instances.iter().map(|i| i.name.clone()).collect(),
        max_expansions: budget.max_expansions,
        max_seconds: budget.max_seconds,
        ..Provenance::default()
    };
    let mut examples = Vec::new();
    for (inst, r) in instances.iter().zip(results) {
        match r {
            Ok(ex) => {
                provenance.plan_lengths.push((inst.name.clone(), ex.len()));
                examples.extend(ex);
            }
            Err(e) => provenance.skipped.push(SkipRecord { instance_id: inst.name.clone(), reason: e.to_string() }),
        }
    }
    Dataset { domain_sha: domain_sha(domain), split: Split::Train, provenance, examples }
}
