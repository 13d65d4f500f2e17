//! Coverage and plan quality over tiered suites.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{run_policy, ExecConfig, Outcome};
use crate::model::{Model, ModelError};
use crate::pddl::{Domain, Instance};
use crate::search::{solve_satisficing, validate_plan, SearchBudget};

/// Reference planner budget per instance.
pub const REFERENCE_BUDGET: SearchBudget = SearchBudget::new(1_000_000, 120.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("coverage of an empty result set")]
    Empty,
    #[error("instance `{0}` appears in more than one tier")]
    OverlappingTiers(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct TierSpec {
    pub name: String,
    pub size: String,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub exec: ExecConfig,
    pub reference: SearchBudget,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { exec: ExecConfig::default(), reference: REFERENCE_BUDGET }
    }
}

/// One evaluated instance. `outcome` is `None` when the rollout failed with
/// an error; lengths are present only for solved runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance_id: String,
    pub tier: String,
    pub outcome: Option<Outcome>,
    pub policy_len: Option<usize>,
    pub ref_len: Option<usize>,
}

impl InstanceResult {
    pub fn solved(&self) -> bool {
        self.outcome == Some(Outcome::Solved)
    }

    fn both(&self) -> Option<(usize, usize)> {
        match (self.solved(), self.policy_len, self.ref_len) {
            (true, Some(p), Some(r)) => Some((r, p)),
            _ => None,
        }
    }
}

/// `100 * solved / total`.
pub fn coverage(rows: &[InstanceResult]) -> Result<f64, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(100.0 * rows.iter().filter(|r| r.solved()).count() as f64 / rows.len() as f64)
}

fn ratio(reference: usize, policy: usize) -> f64 {
    if policy == 0 {
        // Only reachable when the initial state is a goal for both systems.
        1.0
    } else {
        reference as f64 / policy as f64
    }
}

/// Mean of `reference / policy` over instances both systems solved.
pub fn plan_quality_ratio(rows: &[InstanceResult]) -> Option<f64> {
    let ratios: Vec<f64> = rows.iter().filter_map(InstanceResult::both).map(|(r, p)| ratio(r, p)).collect();
    (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// `sum reference / sum policy` over the same instances.
pub fn pqr_ratio_of_sums(rows: &[InstanceResult]) -> Option<f64> {
    let both: Vec<(usize, usize)> = rows.iter().filter_map(InstanceResult::both).collect();
    if both.is_empty() {
        return None;
    }
    let (r, p) = both.iter().fold((0, 0), |(a, b), (r, p)| (a + r, b + p));
    Some(ratio(r, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub tier: String,
    pub size: String,
    pub total: usize,
    pub solved: usize,
    pub reference_solved: usize,
    pub both_solved: usize,
    pub coverage: f64,
    pub pqr: Option<f64>,
    pub pqr_ratio_of_sums: Option<f64>,
}

impl TierReport {
    pub fn from_rows(tier: &str, size: &str, rows: &[InstanceResult]) -> Result<Self, EvalError> {
        Ok(TierReport {
            tier: tier.into(),
            size: size.into(),
            total: rows.len(),
            solved: rows.iter().filter(|r| r.solved()).count(),
            reference_solved: rows.iter().filter(|r| r.ref_len.is_some()).count(),
            both_solved: rows.iter().filter(|r| r.both().is_some()).count(),
            coverage: coverage(rows)?,
            pqr: plan_quality_ratio(rows),
            pqr_ratio_of_sums: pqr_ratio_of_sums(rows),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub domain: String,
    pub tiers: Vec<TierReport>,
    pub rows: Vec<InstanceResult>,
}

impl EvalReport {
    /// Re-aggregates tiers from per-instance rows, keeping first-seen tier
    /// order. `sizes` supplies size descriptors by tier name.
    pub fn from_rows(domain: &str, rows: Vec<InstanceResult>, sizes: &[(String, String)]) -> Result<Self, EvalError> {
        let mut order: Vec<&str> = Vec::new();
        for r in &rows {
            if !order.contains(&r.tier.as_str()) {
                order.push(&r.tier);
            }
        }
        let tiers = order
            .iter()
            .map(|t| {
                let sub: Vec<InstanceResult> = rows.iter().filter(|r| r.tier == *t).cloned().collect();
                let size = sizes.iter().find(|(n, _)| n == t).map_or("", |(_, s)| s.as_str());
                TierReport::from_rows(t, size, &sub)
            })
            .collect::<Result<_, _>>()?;
        Ok(EvalReport { domain: domain.into(), tiers, rows })
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }
}

fn evaluate_instance(domain: &Domain, model: &Model, tier: &str, inst: &Instance, cfg: &EvalConfig) -> InstanceResult {
    let run = run_policy(domain, inst, model, &cfg.exec).ok();
    let outcome = run.as_ref().map(|r| r.outcome);
    let policy_len = run.filter(|r| r.outcome == Outcome::Solved && validate_plan(domain, inst, &r.plan)).map(|r| r.steps);
    let ref_len = solve_satisficing(domain, inst, &cfg.reference).ok().map(|p| p.len());
    InstanceResult {
        instance_id: inst.name.clone(),
        tier: tier.into(),
        // A solved rollout whose plan fails validation is not counted as solved.
        outcome: match (outcome, policy_len) {
            (Some(Outcome::Solved), None) => None,
            (o, _) => o,
        },
        policy_len,
        ref_len,
    }
}

/// Rolls out the policy and the reference planner on every instance.
/// Instances run on the current rayon pool; rows keep tier and instance
/// order.
pub fn evaluate_suite(domain: &Domain, model: &Model, tiers: &[TierSpec], cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    model.check_domain(domain)?;
    let mut seen = HashSet::new();
    for t in tiers {
        for i in &t.instances {
            if !seen.insert(i.name.as_str()) {
                return Err(EvalError::OverlappingTiers(i.name.clone()));
            }
        }
    }
    let jobs: Vec<(&str, &Instance)> =
        tiers.iter().flat_map(|t| t.instances.iter().map(move |i| (t.name.as_str(), i))).collect();
    let rows: Vec<InstanceResult> =
        jobs.par_iter().map(|(t, i)| evaluate_instance(domain, model, t, i, cfg)).collect();
    let sizes: Vec<(String, String)> = tiers.iter().map(|t| (t.name.clone(), t.size.clone())).collect();
    EvalReport::from_rows(&domain.name, rows, &sizes)
}

/// Per-tier mean over domains. Coverage averages every domain that has the
/// tier; P averages only the domains where it is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedRow {
    pub tier: String,
    pub coverage: f64,
    pub pqr: Option<f64>,
    pub domains: usize,
    pub domains_with_pqr: usize,
}

pub fn combined(reports: &[EvalReport]) -> Vec<CombinedRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in reports {
        for t in &r.tiers {
            if !order.contains(&t.tier.as_str()) {
                order.push(&t.tier);
            }
        }
    }
    order
        .into_iter()
        .map(|tier| {
            let ts: Vec<&TierReport> = reports.iter().filter_map(|r| r.tiers.iter().find(|t| t.tier == tier)).collect();
            let ps: Vec<f64> = ts.iter().filter_map(|t| t.pqr).collect();
            CombinedRow {
                tier: tier.into(),
                coverage: ts.iter().map(|t| t.coverage).sum::<f64>() / ts.len() as f64,
                pqr: (!ps.is_empty()).then(|| ps.iter().sum::<f64>() / ps.len() as f64),
                domains: ts.len(),
                domains_with_pqr: ps.len(),
            }
        })
        .collect()
}

fn fmt_p(p: Option<f64>) -> String {
    p.map_or_else(|| "-".into(), |p| format!("{p:.3}"))
}

/// Fixed-width table: one row per domain, a (C, P) column pair per tier,
/// plus a combined row when more than one domain is given.
pub fn render_table(reports: &[EvalReport]) -> String {
    let comb = combined(reports);
    let tiers: Vec<&str> = comb.iter().map(|c| c.tier.as_str()).collect();
    let mut out = format!("{:<16}", "domain");
    for t in &tiers {
        out.push_str(&format!("{:>18}", t));
    }
    out.push('\n');
    out.push_str(&format!("{:<16}", ""));
    for _ in &tiers {
        out.push_str(&format!("{:>9}{:>9}", "C", "P"));
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!("{:<16}", r.domain));
        for t in &tiers {
            match r.tiers.iter().find(|x| x.tier == *t) {
                Some(x) => out.push_str(&format!("{:>9.1}{:>9}", x.coverage, fmt_p(x.pqr))),
                None => out.push_str(&format!("{:>9}{:>9}", "-", "-")),
            }
        }
        out.push('\n');
    }
    if reports.len() > 1 {
        out.push_str(&format!("{:<16}", "combined"));
        for c in &comb {
            out.push_str(&format!("{:>9.1}{:>9}", c.coverage, fmt_p(c.pqr)));
        }
        out.push('\n');
        out.push_str("combined P averages only domains where P is defined\n");
    }
    out
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    instance_id: String,
    outcome: String,
    policy_len: Option<usize>,
    ref_len: Option<usize>,
    tier: String,
}

pub fn rows_to_csv(rows: &[InstanceResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow {
            instance_id: r.instance_id.clone(),
            outcome: r.outcome.map_or("error", Outcome::name).into(),
            policy_len: r.policy_len,
            ref_len: r.ref_len,
            tier: r.tier.clone(),
        })
        .expect("csv rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn rows_from_csv(text: &str) -> Result<Vec<InstanceResult>, EvalError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    rd.deserialize::<CsvRow>()
        .map(|r| {
            let r = r.map_err(|e| EvalError::Csv(e.to_string()))?;
            let outcome = match r.outcome.as_str() {
                "error" => None,
                s => Some(s.parse().map_err(EvalError::Csv)?),
            };
            Ok(InstanceResult { instance_id: r.instance_id, tier: r.tier, outcome, policy_len: r.policy_len, ref_len: r.ref_len })
        })
        .collect()
}
