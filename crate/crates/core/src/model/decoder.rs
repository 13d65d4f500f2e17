use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::graph::PlanningGraph;
use crate::pddl::{ObjectId, SchemaId};
use crate::tensor::{log_softmax_values, Gradients, ParamStore, Tape, TensorError, Var};

use super::encoder::{encode_on_tape, mlp, EncoderOutput};
use super::{Model, ModelError, SupervisionTarget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedAction {
    pub schema: SchemaId,
    pub args: Vec<ObjectId>,
    /// Sum of the selected log-softmax terms.
    pub log_score: f64,
}

impl DecodedAction {
    pub fn same_grounding(&self, other: &DecodedAction) -> bool {
        self.schema == other.schema && self.args == other.args
    }
}

/// Decoded groundings in non-increasing score order.
pub type RankedActions = Vec<DecodedAction>;

/// GRU cell with gates laid out `[r | z | n]` along the columns.
pub(crate) fn gru<'p>(t: &mut Tape<'p>, s: &'p ParamStore, hidden: Var, input: Var) -> Result<Var, TensorError> {
    let h = t.shape(hidden).1;
    let w_ih = t.param(s, "dec.gru.w_ih")?;
    let b_ih = t.param(s, "dec.gru.b_ih")?;
    let w_hh = t.param(s, "dec.gru.w_hh")?;
    let b_hh = t.param(s, "dec.gru.b_hh")?;
    let gi = t.matmul(input, w_ih)?;
    let gi = t.add_row(gi, b_ih)?;
    let gh = t.matmul(hidden, w_hh)?;
    let gh = t.add_row(gh, b_hh)?;
    let (ir, iz, inn) = (t.slice_cols(gi, 0, h)?, t.slice_cols(gi, h, h)?, t.slice_cols(gi, 2 * h, h)?);
    let (hr, hz, hn) = (t.slice_cols(gh, 0, h)?, t.slice_cols(gh, h, h)?, t.slice_cols(gh, 2 * h, h)?);
    let r = t.add(ir, hr)?;
    let r = t.sigmoid(r);
    let z = t.add(iz, hz)?;
    let z = t.sigmoid(z);
    let rn = t.hadamard(r, hn)?;
    let n = t.add(inn, rn)?;
    let n = t.tanh(n);
    let d = t.sub(hidden, n)?;
    let zd = t.hadamard(z, d)?;
    t.add(n, zd)
}

fn row_index(i: usize) -> Rc<[usize]> {
    Rc::from(vec![i])
}

/// Decoder inputs on one tape, shared by inference and training.
pub(crate) struct Decoder<'p> {
    model: &'p Model,
    v_schema: Var,
    v_obj: Var,
    h1: Var,
    num_objects: usize,
}

/// Hidden state for the next parameter slot.
#[derive(Clone, Copy)]
pub(crate) enum SlotState {
    /// GRU state advanced by every previous selection.
    Chained(Var),
    /// Independent slots: slot index only.
    Indexed(usize),
}

impl<'p> Decoder<'p> {
    fn new(t: &mut Tape<'p>, model: &'p Model, v_schema: Option<Var>, v_obj: Var, g: Var) -> Result<Self, ModelError> {
        let s = &model.params;
        let v_schema = match v_schema {
            Some(v) => v,
            None => t.param(s, "dec.schema_emb")?,
        };
        let h = model.hidden();
        let zero = t.zeros(1, h);
        let h1 = gru(t, s, g, zero)?;
        let num_objects = t.shape(v_obj).0;
        Ok(Decoder { model, v_schema, v_obj, h1, num_objects })
    }

    /// Inputs taken from a finished encoding.
    pub(crate) fn from_output(t: &mut Tape<'p>, model: &'p Model, enc: &EncoderOutput, g: &PlanningGraph) -> Result<Self, ModelError> {
        model.check_graph(g)?;
        let h = model.hidden();
        let rows = |idx: &[usize]| idx.iter().flat_map(|&i| enc.node(i).to_vec()).collect::<Vec<f64>>();
        let v_obj = t.constant(g.object_nodes.len(), h, rows(&g.object_nodes))?;
        let v_schema = if model.config.ablation.action_nodes() {
            Some(t.constant(g.schema_nodes.len(), h, rows(&g.schema_nodes))?)
        } else {
            None
        };
        let gv = t.constant(1, h, enc.global.clone())?;
        Decoder::new(t, model, v_schema, v_obj, gv)
    }

    fn arity(&self, schema: SchemaId) -> usize {
        self.model.arities[schema]
    }

    fn head(&self, t: &mut Tape<'p>, name: &str, rows: Var, state: Var) -> Result<Var, TensorError> {
        let x = t.mul_row(rows, state)?;
        mlp(t, &self.model.params, name, x)
    }

    fn schema_logits(&self, t: &mut Tape<'p>) -> Result<Var, TensorError> {
        self.head(t, "dec.schema", self.v_schema, self.h1)
    }

    pub(crate) fn start(&self, t: &mut Tape<'p>, schema: SchemaId) -> Result<SlotState, TensorError> {
        if !self.model.config.ablation.conditional_decoding() {
            return Ok(SlotState::Indexed(0));
        }
        let va = t.gather_rows(self.v_schema, &row_index(schema))?;
        Ok(SlotState::Chained(gru(t, &self.model.params, self.h1, va)?))
    }

    fn hidden(&self, t: &mut Tape<'p>, state: SlotState) -> Result<Var, TensorError> {
        match state {
            SlotState::Chained(h) => Ok(h),
            SlotState::Indexed(i) => {
                let s = &self.model.params;
                let emb = t.param(s, "dec.slot_emb")?;
                let pos = t.gather_rows(emb, &row_index(i))?;
                gru(t, s, self.h1, pos)
            }
        }
    }

    pub(crate) fn object_logits(&self, t: &mut Tape<'p>, state: SlotState) -> Result<Var, TensorError> {
        let h = self.hidden(t, state)?;
        self.head(t, "dec.object", self.v_obj, h)
    }

    pub(crate) fn advance(&self, t: &mut Tape<'p>, state: SlotState, obj: ObjectId) -> Result<SlotState, TensorError> {
        match state {
            SlotState::Chained(h) => {
                let vo = t.gather_rows(self.v_obj, &row_index(obj))?;
                Ok(SlotState::Chained(gru(t, &self.model.params, h, vo)?))
            }
            SlotState::Indexed(i) => Ok(SlotState::Indexed(i + 1)),
        }
    }

    pub(crate) fn log_probs(t: &mut Tape<'p>, logits: Var) -> Vec<f64> {
        let lp = t.log_softmax(logits);
        t.value(lp).to_vec()
    }

    fn greedy(&self, t: &mut Tape<'p>) -> Result<DecodedAction, ModelError> {
        let logits = self.schema_logits(t)?;
        let lp = Self::log_probs(t, logits);
        let schema = argmax(&lp);
        let mut score = lp[schema];
        let mut state = self.start(t, schema)?;
        let mut args = Vec::new();
        for _ in 0..self.arity(schema) {
            let logits = self.object_logits(t, state)?;
            let lp = Self::log_probs(t, logits);
            let o = argmax(&lp);
            score += lp[o];
            args.push(o);
            state = self.advance(t, state, o)?;
        }
        Ok(DecodedAction { schema, args, log_score: score })
    }

    fn beam(&self, t: &mut Tape<'p>, k: usize) -> Result<RankedActions, ModelError> {
        struct Partial {
            schema: SchemaId,
            args: Vec<ObjectId>,
            score: f64,
            state: Option<SlotState>,
        }
        let logits = self.schema_logits(t)?;
        let lp = Self::log_probs(t, logits);
        let mut beam = Vec::new();
        for a in top_k(&lp, k) {
            let state = if self.arity(a) > 0 { Some(self.start(t, a)?) } else { None };
            beam.push(Partial { schema: a, args: vec![], score: lp[a], state });
        }
        while beam.iter().any(|p| p.state.is_some()) {
            // Candidates: (parent, chosen object, score); finished entries carry over.
            let mut cands: Vec<(usize, Option<ObjectId>, f64)> = Vec::new();
            for (i, p) in beam.iter().enumerate() {
                match p.state {
                    None => cands.push((i, None, p.score)),
                    Some(state) => {
                        let logits = self.object_logits(t, state)?;
                        let lp = Self::log_probs(t, logits);
                        for o in top_k(&lp, k) {
                            cands.push((i, Some(o), p.score + lp[o]));
                        }
                    }
                }
            }
            cands.sort_by(|a, b| b.2.total_cmp(&a.2));
            cands.truncate(k);
            let mut next = Vec::with_capacity(cands.len());
            for (i, o, score) in cands {
                let p = &beam[i];
                let Some(o) = o else {
                    next.push(Partial { schema: p.schema, args: p.args.clone(), score, state: None });
                    continue;
                };
                let mut args = p.args.clone();
                args.push(o);
                let state = if args.len() < self.arity(p.schema) {
                    Some(self.advance(t, p.state.expect("unfinished entry"), o)?)
                } else {
                    None
                };
                next.push(Partial { schema: p.schema, args, score, state });
            }
            beam = next;
        }
        Ok(beam.into_iter().map(|p| DecodedAction { schema: p.schema, args: p.args, log_score: p.score }).collect())
    }

    fn check(&self, schema: SchemaId, args: &[ObjectId]) -> Result<(), ModelError> {
        if schema >= self.model.arities.len() {
            return Err(ModelError::UnknownSchema(schema));
        }
        if args.len() != self.arity(schema) {
            return Err(ModelError::InvalidTarget(format!(
                "schema {schema} takes {} arguments, got {}",
                self.arity(schema),
                args.len()
            )));
        }
        if let Some(&o) = args.iter().find(|&&o| o >= self.num_objects) {
            return Err(ModelError::UnknownObject(o));
        }
        Ok(())
    }

    /// Teacher-forced log-scores, sharing work between common prefixes.
    fn score_many(&self, t: &mut Tape<'p>, groundings: &[(SchemaId, &[ObjectId])]) -> Result<Vec<f64>, ModelError> {
        let logits = self.schema_logits(t)?;
        let schema_lp = Self::log_probs(t, logits);
        // prefix -> (state, log-probs for the next slot)
        let mut cache: HashMap<(SchemaId, Vec<ObjectId>), (SlotState, Vec<f64>)> = HashMap::new();
        let mut out = Vec::with_capacity(groundings.len());
        for &(schema, args) in groundings {
            self.check(schema, args)?;
            let mut score = schema_lp[schema];
            for i in 0..args.len() {
                let key = (schema, args[..i].to_vec());
                if !cache.contains_key(&key) {
                    let state = if i == 0 {
                        self.start(t, schema)?
                    } else {
                        let (prev, _) = cache[&(schema, args[..i - 1].to_vec())];
                        self.advance(t, prev, args[i - 1])?
                    };
                    let logits = self.object_logits(t, state)?;
                    let lp = Self::log_probs(t, logits);
                    cache.insert(key.clone(), (state, lp));
                }
                score += cache[&key].1[args[i]];
            }
            out.push(score);
        }
        Ok(out)
    }

    /// `CE(schema) + sum of per-slot CE` with teacher forcing. The flag is
    /// true when greedy decoding would reproduce the target: the target is
    /// the argmax at every step.
    fn loss(&self, t: &mut Tape<'p>, target: &SupervisionTarget) -> Result<(Var, bool), ModelError> {
        self.check(target.schema, &target.args)?;
        let picks = |t: &Tape<'p>, logits: Var, want: usize| argmax(&log_softmax_values(t.value(logits))) == want;
        let logits = self.schema_logits(t)?;
        let mut correct = picks(t, logits, target.schema);
        let mut loss = t.cross_entropy(logits, target.schema)?;
        if target.args.is_empty() {
            return Ok((loss, correct));
        }
        let mut state = self.start(t, target.schema)?;
        for (i, &o) in target.args.iter().enumerate() {
            let logits = self.object_logits(t, state)?;
            correct &= picks(t, logits, o);
            let ce = t.cross_entropy(logits, o)?;
            loss = t.add(loss, ce)?;
            if i + 1 < target.args.len() {
                state = self.advance(t, state, o)?;
            }
        }
        Ok((loss, correct))
    }
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

/// Indices of the `k` largest values; ties go to the lower index.
fn top_k(x: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].total_cmp(&x[a]));
    idx.truncate(k);
    idx
}

impl Model {
    fn training_decoder<'p>(&'p self, t: &mut Tape<'p>, g: &PlanningGraph) -> Result<Decoder<'p>, ModelError> {
        let enc = encode_on_tape(t, self, g)?;
        let rows = |idx: &[usize]| -> Rc<[usize]> { idx.iter().map(|&i| enc.row_of[i].expect("non-global node")).collect() };
        let v_obj = t.gather_rows(enc.v, &rows(&g.object_nodes))?;
        let v_schema = if self.config.ablation.action_nodes() {
            Some(t.gather_rows(enc.v, &rows(&g.schema_nodes))?)
        } else {
            None
        };
        Decoder::new(t, self, v_schema, v_obj, enc.g)
    }

    pub fn decode_greedy(&self, enc: &EncoderOutput, g: &PlanningGraph) -> Result<DecodedAction, ModelError> {
        let mut t = Tape::new();
        Decoder::from_output(&mut t, self, enc, g)?.greedy(&mut t)
    }

    /// Beam search of width `k` over schema then parameter slots. Entries
    /// whose schema has fewer parameters finish early and keep their score.
    pub fn decode_beam(&self, enc: &EncoderOutput, g: &PlanningGraph, k: usize) -> Result<RankedActions, ModelError> {
        if k == 0 {
            return Err(ModelError::ZeroBeam);
        }
        let mut t = Tape::new();
        Decoder::from_output(&mut t, self, enc, g)?.beam(&mut t, k)
    }

    /// Log-score of a forced grounding: schema term plus each slot's term.
    pub fn score_grounded(&self, enc: &EncoderOutput, g: &PlanningGraph, schema: SchemaId, args: &[ObjectId]) -> Result<f64, ModelError> {
        Ok(self.score_groundings(enc, g, &[(schema, args)])?[0])
    }

    pub fn score_groundings(&self, enc: &EncoderOutput, g: &PlanningGraph, groundings: &[(SchemaId, &[ObjectId])]) -> Result<Vec<f64>, ModelError> {
        let mut t = Tape::new();
        Decoder::from_output(&mut t, self, enc, g)?.score_many(&mut t, groundings)
    }

    pub fn loss(&self, g: &PlanningGraph, target: &SupervisionTarget) -> Result<f64, ModelError> {
        Ok(self.loss_and_hit(g, target)?.0)
    }

    /// Loss plus whether greedy decoding returns the target grounding.
    pub fn loss_and_hit(&self, g: &PlanningGraph, target: &SupervisionTarget) -> Result<(f64, bool), ModelError> {
        let mut t = Tape::new();
        let dec = self.training_decoder(&mut t, g)?;
        let (l, hit) = dec.loss(&mut t, target)?;
        Ok((t.scalar(l), hit))
    }

    pub fn loss_and_grad(&self, g: &PlanningGraph, target: &SupervisionTarget) -> Result<(f64, bool, Gradients), ModelError> {
        let mut t = Tape::new();
        let dec = self.training_decoder(&mut t, g)?;
        let (l, hit) = dec.loss(&mut t, target)?;
        let v = t.scalar(l);
        Ok((v, hit, t.backward(l)?))
    }
}
