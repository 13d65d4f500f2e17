use std::collections::{BTreeSet, HashMap};

use super::sexpr::{read_one, SExpr};
use super::{
    ActionSchema, Atom, Domain, Instance, LiftedAtom, ObjectDef, Param, PddlError, PredicateDef,
    State, Term, TypeDef, TypeId, ROOT_TYPE,
};

const SUPPORTED_REQUIREMENTS: &[&str] = &[":strips", ":typing"];

fn expect_list<'a>(e: &'a SExpr, what: &str) -> Result<&'a [SExpr], PddlError> {
    e.as_list().ok_or_else(|| e.syntax_error(format!("expected a list for {what}")))
}

fn expect_symbol<'a>(e: &'a SExpr, what: &str) -> Result<&'a str, PddlError> {
    e.as_symbol().ok_or_else(|| e.syntax_error(format!("expected a symbol for {what}")))
}

/// Parses `(define (KIND name) ...)`, returning the name and the remaining sections.
fn define_header<'a>(root: &'a SExpr, kind: &str) -> Result<(String, &'a [SExpr]), PddlError> {
    let items = expect_list(root, "define")?;
    if items.first().and_then(SExpr::as_symbol) != Some("define") {
        return Err(root.syntax_error("expected `(define ...)`"));
    }
    let header = items.get(1).ok_or_else(|| root.syntax_error(format!("missing `({kind} ...)`")))?;
    let h = expect_list(header, kind)?;
    if h.len() != 2 || h[0].as_symbol() != Some(kind) {
        return Err(header.syntax_error(format!("expected `({kind} <name>)`")));
    }
    Ok((expect_symbol(&h[1], "name")?.to_string(), &items[2..]))
}

fn check_requirements(items: &[SExpr]) -> Result<Vec<String>, PddlError> {
    let mut reqs = Vec::new();
    for r in items {
        let name = expect_symbol(r, "requirement")?;
        if !name.starts_with(':') {
            return Err(r.syntax_error("requirement flags start with `:`"));
        }
        if !SUPPORTED_REQUIREMENTS.contains(&name) {
            return Err(PddlError::Unsupported(format!("requirement {name}")));
        }
        reqs.push(name.to_string());
    }
    Ok(reqs)
}

/// Name, declared type, and the name's expression (for error positions).
type TypedItem<'a> = (String, Option<String>, &'a SExpr);

/// Splits `a b - t c d - u e` into `(name, Some(type) | None)` pairs.
fn typed_list(items: &[SExpr]) -> Result<Vec<TypedItem<'_>>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<(&str, &SExpr)> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let e = &items[i];
        match e {
            SExpr::Symbol { text, .. } if text == "-" => {
                let ty = items.get(i + 1).ok_or_else(|| e.syntax_error("missing type after `-`"))?;
                if ty.head() == Some("either") {
                    return Err(PddlError::Unsupported("either types".into()));
                }
                let ty = expect_symbol(ty, "type name")?;
                if pending.is_empty() {
                    return Err(e.syntax_error("type annotation without names"));
                }
                for (name, src) in pending.drain(..) {
                    out.push((name.to_string(), Some(ty.to_string()), src));
                }
                i += 2;
            }
            SExpr::Symbol { text, .. } => {
                pending.push((text, e));
                i += 1;
            }
            SExpr::List { .. } => return Err(e.syntax_error("expected a name")),
        }
    }
    for (name, src) in pending {
        out.push((name.to_string(), None, src));
    }
    Ok(out)
}

fn parse_types(items: &[SExpr]) -> Result<Vec<TypeDef>, PddlError> {
    let decls = typed_list(items)?;
    let mut names: Vec<String> = vec![ROOT_TYPE.to_string()];
    // Declared names first, then types that only appear as parents.
    for (name, _, _) in &decls {
        if !names.contains(name) {
            names.push(name.clone());
        }
    }
    for (_, parent, _) in &decls {
        if let Some(p) = parent {
            if !names.contains(p) {
                names.push(p.clone());
            }
        }
    }
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut parents: Vec<Option<TypeId>> = (0..names.len()).map(|i| (i > 0).then_some(0)).collect();
    for (name, parent, src) in &decls {
        if name == ROOT_TYPE {
            if parent.is_some() {
                return Err(src.syntax_error("the root type `object` cannot have a parent"));
            }
            continue;
        }
        let id = index[name.as_str()];
        parents[id] = Some(parent.as_deref().map_or(0, |p| index[p]));
    }
    // Reject cycles: every chain must reach the root.
    for start in 0..names.len() {
        let mut cur = start;
        for _ in 0..=names.len() {
            match parents[cur] {
                Some(p) => cur = p,
                None => break,
            }
        }
        if parents[cur].is_some() {
            return Err(PddlError::InvalidDomain(format!("cyclic type hierarchy at `{}`", names[start])));
        }
    }
    Ok(names.into_iter().zip(parents).map(|(name, parent)| TypeDef { name, parent }).collect())
}

fn resolve_type(types: &[TypeDef], name: Option<&str>) -> Result<TypeId, PddlError> {
    let name = name.unwrap_or(ROOT_TYPE);
    types
        .iter()
        .position(|t| t.name == name)
        .ok_or_else(|| PddlError::UndeclaredType(name.to_string()))
}

fn reject_construct(e: &SExpr) -> Result<(), PddlError> {
    let feature = match e.head() {
        Some("not") => "negative preconditions",
        Some("=") => "equality",
        Some("or") => "disjunctive preconditions",
        Some("imply") => "disjunctive preconditions",
        Some("forall") | Some("exists") => "quantified preconditions",
        Some("when") => "conditional effects",
        Some("increase") | Some("decrease") | Some("assign") | Some("scale-up")
        | Some("scale-down") => "numeric fluents",
        Some("<") | Some(">") | Some("<=") | Some(">=") => "numeric fluents",
        _ => return Ok(()),
    };
    Err(PddlError::Unsupported(feature.into()))
}

/// Flattens a conjunction into its literals. `()` and `(and)` are empty.
fn conjuncts(e: &SExpr) -> Result<Vec<&SExpr>, PddlError> {
    let items = expect_list(e, "condition")?;
    if items.is_empty() {
        return Ok(Vec::new());
    }
    if e.head() == Some("and") {
        let mut out = Vec::new();
        for c in &items[1..] {
            out.extend(conjuncts(c)?);
        }
        return Ok(out);
    }
    Ok(vec![e])
}

struct Scope<'a> {
    domain: &'a Domain,
    params: &'a [Param],
}

impl Scope<'_> {
    fn lifted_atom(&self, e: &SExpr) -> Result<LiftedAtom, PddlError> {
        reject_construct(e)?;
        let items = expect_list(e, "atom")?;
        let head = items.first().ok_or_else(|| e.syntax_error("empty atom"))?;
        let name = expect_symbol(head, "predicate name")?;
        let pred = self
            .domain
            .predicate_id(name)
            .ok_or_else(|| PddlError::UndeclaredPredicate(name.to_string()))?;
        let def = &self.domain.predicates[pred];
        if def.arity() != items.len() - 1 {
            return Err(PddlError::ArityMismatch {
                predicate: name.to_string(),
                expected: def.arity(),
                found: items.len() - 1,
            });
        }
        let mut args = Vec::with_capacity(def.arity());
        for (pos, arg) in items[1..].iter().enumerate() {
            let sym = expect_symbol(arg, "argument")?;
            let (term, ty) = if sym.starts_with('?') {
                let idx = self
                    .params
                    .iter()
                    .position(|p| p.name == sym)
                    .ok_or_else(|| arg.syntax_error(format!("unbound variable `{sym}`")))?;
                (Term::Var(idx), self.params[idx].ty)
            } else {
                let (_, ty) = self
                    .domain
                    .constants
                    .iter()
                    .find(|(c, _)| c == sym)
                    .ok_or_else(|| PddlError::UndeclaredObject(sym.to_string()))?;
                (Term::Const(sym.to_string()), *ty)
            };
            let expected = def.param_types[pos];
            if !self.domain.is_subtype(ty, expected) {
                return Err(PddlError::TypeMismatch {
                    object: sym.to_string(),
                    expected: self.domain.types[expected].name.clone(),
                    found: self.domain.types[ty].name.clone(),
                });
            }
            args.push(term);
        }
        Ok(LiftedAtom { pred, args })
    }
}

fn parse_action(domain: &Domain, items: &[SExpr], src: &SExpr) -> Result<ActionSchema, PddlError> {
    let name = expect_symbol(items.get(1).ok_or_else(|| src.syntax_error("missing action name"))?, "action name")?;
    let mut params = Vec::new();
    let mut pre_expr = None;
    let mut eff_expr = None;
    let mut i = 2;
    while i < items.len() {
        let key = expect_symbol(&items[i], "action keyword")?;
        let value = items.get(i + 1).ok_or_else(|| items[i].syntax_error(format!("missing value for {key}")))?;
        match key {
            ":parameters" => {
                for (var, ty, at) in typed_list(expect_list(value, ":parameters")?)? {
                    if !var.starts_with('?') {
                        return Err(at.syntax_error("parameters must start with `?`"));
                    }
                    if params.iter().any(|p: &Param| p.name == var) {
                        return Err(PddlError::InvalidDomain(format!("duplicate parameter `{var}` in `{name}`")));
                    }
                    let ty = resolve_type(&domain.types, ty.as_deref())?;
                    params.push(Param { name: var, ty });
                }
            }
            ":precondition" => pre_expr = Some(value),
            ":effect" => eff_expr = Some(value),
            other => return Err(PddlError::Unsupported(format!("action keyword {other}"))),
        }
        i += 2;
    }
    let scope = Scope { domain, params: &params };
    let mut pre = BTreeSet::new();
    if let Some(e) = pre_expr {
        for c in conjuncts(e)? {
            pre.insert(scope.lifted_atom(c)?);
        }
    }
    let mut add = BTreeSet::new();
    let mut del = BTreeSet::new();
    if let Some(e) = eff_expr {
        for c in conjuncts(e)? {
            if c.head() == Some("not") {
                let inner = expect_list(c, "negated effect")?;
                if inner.len() != 2 {
                    return Err(c.syntax_error("`not` takes exactly one atom"));
                }
                del.insert(scope.lifted_atom(&inner[1])?);
            } else {
                add.insert(scope.lifted_atom(c)?);
            }
        }
    }
    if let Some(a) = add.intersection(&del).next() {
        return Err(PddlError::InvalidDomain(format!(
            "action `{name}` both adds and deletes `{}`",
            domain.predicates[a.pred].name
        )));
    }
    Ok(ActionSchema {
        name: name.to_string(),
        params,
        pre: pre.into_iter().collect(),
        add: add.into_iter().collect(),
        del: del.into_iter().collect(),
    })
}

/// Parses a STRIPS + `:typing` domain.
pub fn parse_domain(text: &str) -> Result<Domain, PddlError> {
    let root = read_one(text)?;
    let (name, sections) = define_header(&root, "domain")?;
    let mut domain = Domain {
        name,
        requirements: Vec::new(),
        types: vec![TypeDef { name: ROOT_TYPE.into(), parent: None }],
        constants: Vec::new(),
        predicates: Vec::new(),
        schemas: Vec::new(),
    };
    for section in sections {
        let items = expect_list(section, "domain section")?;
        let key = items.first().and_then(SExpr::as_symbol).ok_or_else(|| section.syntax_error("expected a section keyword"))?;
        match key {
            ":requirements" => domain.requirements = check_requirements(&items[1..])?,
            ":types" => domain.types = parse_types(&items[1..])?,
            ":constants" => {
                for (c, ty, _) in typed_list(&items[1..])? {
                    let ty = resolve_type(&domain.types, ty.as_deref())?;
                    if domain.constants.iter().any(|(n, _)| *n == c) {
                        return Err(PddlError::InvalidDomain(format!("duplicate constant `{c}`")));
                    }
                    domain.constants.push((c, ty));
                }
            }
            ":predicates" => {
                for p in &items[1..] {
                    let parts = expect_list(p, "predicate declaration")?;
                    let pname = expect_symbol(parts.first().ok_or_else(|| p.syntax_error("empty predicate"))?, "predicate name")?;
                    if domain.predicate_id(pname).is_some() {
                        return Err(PddlError::InvalidDomain(format!("duplicate predicate `{pname}`")));
                    }
                    let mut param_types = Vec::new();
                    for (var, ty, at) in typed_list(&parts[1..])? {
                        if !var.starts_with('?') {
                            return Err(at.syntax_error("predicate parameters must start with `?`"));
                        }
                        param_types.push(resolve_type(&domain.types, ty.as_deref())?);
                    }
                    domain.predicates.push(PredicateDef { name: pname.to_string(), param_types });
                }
            }
            ":action" => {
                let schema = parse_action(&domain, items, section)?;
                if domain.schema_id(&schema.name).is_some() {
                    return Err(PddlError::InvalidDomain(format!("duplicate action `{}`", schema.name)));
                }
                domain.schemas.push(schema);
            }
            ":functions" => return Err(PddlError::Unsupported("numeric fluents".into())),
            ":derived" => return Err(PddlError::Unsupported("derived predicates".into())),
            ":durative-action" => return Err(PddlError::Unsupported("durative actions".into())),
            ":constraints" => return Err(PddlError::Unsupported("constraints".into())),
            other => return Err(PddlError::Unsupported(format!("domain section {other}"))),
        }
    }
    if domain.schemas.is_empty() {
        return Err(PddlError::InvalidDomain("domain declares no action schemas".into()));
    }
    Ok(domain)
}

fn ground_atom(
    e: &SExpr,
    domain: &Domain,
    objects: &HashMap<String, TypeId>,
    ids: &HashMap<String, usize>,
) -> Result<Atom, PddlError> {
    reject_construct(e)?;
    let items = expect_list(e, "ground atom")?;
    let head = items.first().ok_or_else(|| e.syntax_error("empty atom"))?;
    let name = expect_symbol(head, "predicate name")?;
    let pred = domain.predicate_id(name).ok_or_else(|| PddlError::UndeclaredPredicate(name.to_string()))?;
    let def = &domain.predicates[pred];
    if def.arity() != items.len() - 1 {
        return Err(PddlError::ArityMismatch {
            predicate: name.to_string(),
            expected: def.arity(),
            found: items.len() - 1,
        });
    }
    let mut args = Vec::with_capacity(def.arity());
    for (pos, arg) in items[1..].iter().enumerate() {
        let obj = expect_symbol(arg, "object")?;
        let ty = *objects.get(obj).ok_or_else(|| PddlError::UndeclaredObject(obj.to_string()))?;
        let expected = def.param_types[pos];
        if !domain.is_subtype(ty, expected) {
            return Err(PddlError::TypeMismatch {
                object: obj.to_string(),
                expected: domain.types[expected].name.clone(),
                found: domain.types[ty].name.clone(),
            });
        }
        args.push(ids[obj]);
    }
    Ok(Atom::new(pred, args))
}

/// Parses a problem against an already parsed domain.
pub fn parse_problem(text: &str, domain: &Domain) -> Result<Instance, PddlError> {
    let root = read_one(text)?;
    let (name, sections) = define_header(&root, "problem")?;
    let mut domain_name = None;
    let mut object_decls: Vec<(String, TypeId)> = domain.constants.clone();
    let mut init_exprs: Vec<&SExpr> = Vec::new();
    let mut goal_expr = None;
    for section in sections {
        let items = expect_list(section, "problem section")?;
        let key = items.first().and_then(SExpr::as_symbol).ok_or_else(|| section.syntax_error("expected a section keyword"))?;
        match key {
            ":domain" => {
                let d = expect_symbol(items.get(1).ok_or_else(|| section.syntax_error("missing domain name"))?, "domain name")?;
                if d != domain.name {
                    return Err(PddlError::InvalidProblem(format!(
                        "problem is for domain `{d}`, not `{}`",
                        domain.name
                    )));
                }
                domain_name = Some(d.to_string());
            }
            ":requirements" => {
                check_requirements(&items[1..])?;
            }
            ":objects" => {
                for (o, ty, _) in typed_list(&items[1..])? {
                    if object_decls.iter().any(|(n, _)| *n == o) {
                        return Err(PddlError::InvalidProblem(format!("duplicate object `{o}`")));
                    }
                    object_decls.push((o, resolve_type(&domain.types, ty.as_deref())?));
                }
            }
            ":init" => init_exprs.extend(&items[1..]),
            ":goal" => {
                goal_expr = Some(items.get(1).ok_or_else(|| section.syntax_error("missing goal"))?);
                if items.len() > 2 {
                    return Err(section.syntax_error("`:goal` takes one condition"));
                }
            }
            ":metric" => return Err(PddlError::Unsupported("plan metrics".into())),
            other => return Err(PddlError::Unsupported(format!("problem section {other}"))),
        }
    }
    let domain_name = domain_name.ok_or_else(|| PddlError::InvalidProblem("missing `(:domain ...)`".into()))?;
    object_decls.sort();
    let objects: Vec<ObjectDef> = object_decls.iter().map(|(n, t)| ObjectDef { name: n.clone(), ty: *t }).collect();
    let types: HashMap<String, TypeId> = object_decls.iter().cloned().collect();
    let ids: HashMap<String, usize> = objects.iter().enumerate().map(|(i, o)| (o.name.clone(), i)).collect();

    let mut init = Vec::with_capacity(init_exprs.len());
    for e in init_exprs {
        init.push(ground_atom(e, domain, &types, &ids)?);
    }
    let mut goal = Vec::new();
    if let Some(g) = goal_expr {
        for c in conjuncts(g)? {
            goal.push(ground_atom(c, domain, &types, &ids)?);
        }
    }
    goal.sort();
    goal.dedup();
    Ok(Instance { name, domain_name, objects, init: State::new(init), goal })
}
