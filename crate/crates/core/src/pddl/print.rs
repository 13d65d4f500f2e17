use std::fmt::Write;

use super::{ActionSchema, Domain, Instance, LiftedAtom, Term};

fn typed_name(out: &mut String, domain: &Domain, name: &str, ty: usize) {
    out.push_str(name);
    if ty != 0 {
        let _ = write!(out, " - {}", domain.types[ty].name);
    }
}

fn lifted(out: &mut String, domain: &Domain, schema: &ActionSchema, atom: &LiftedAtom) {
    out.push('(');
    out.push_str(&domain.predicates[atom.pred].name);
    for t in &atom.args {
        out.push(' ');
        match t {
            Term::Var(i) => out.push_str(&schema.params[*i].name),
            Term::Const(c) => out.push_str(c),
        }
    }
    out.push(')');
}

pub(super) fn domain_to_pddl(domain: &Domain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", domain.name);
    if !domain.requirements.is_empty() {
        let _ = writeln!(out, "  (:requirements {})", domain.requirements.join(" "));
    }
    if domain.types.len() > 1 {
        out.push_str("  (:types");
        for t in &domain.types[1..] {
            let parent = t.parent.map_or("object", |p| domain.types[p].name.as_str());
            let _ = write!(out, " {} - {}", t.name, parent);
        }
        out.push_str(")\n");
    }
    if !domain.constants.is_empty() {
        out.push_str("  (:constants");
        for (c, ty) in &domain.constants {
            out.push(' ');
            typed_name(&mut out, domain, c, *ty);
        }
        out.push_str(")\n");
    }
    out.push_str("  (:predicates");
    for p in &domain.predicates {
        let _ = write!(out, " ({}", p.name);
        for (i, &ty) in p.param_types.iter().enumerate() {
            out.push(' ');
            typed_name(&mut out, domain, &format!("?a{i}"), ty);
        }
        out.push(')');
    }
    out.push_str(")\n");
    for s in &domain.schemas {
        let _ = writeln!(out, "  (:action {}", s.name);
        out.push_str("    :parameters (");
        for (i, p) in s.params.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            typed_name(&mut out, domain, &p.name, p.ty);
        }
        out.push_str(")\n    :precondition (and");
        for a in &s.pre {
            out.push(' ');
            lifted(&mut out, domain, s, a);
        }
        out.push_str(")\n    :effect (and");
        for a in &s.add {
            out.push(' ');
            lifted(&mut out, domain, s, a);
        }
        for a in &s.del {
            out.push_str(" (not ");
            lifted(&mut out, domain, s, a);
            out.push(')');
        }
        out.push_str("))\n");
    }
    out.push_str(")\n");
    out
}

pub(super) fn instance_to_pddl(instance: &Instance, domain: &Domain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", instance.name);
    let _ = writeln!(out, "  (:domain {})", instance.domain_name);
    out.push_str("  (:objects");
    for o in &instance.objects {
        if domain.constants.iter().any(|(c, _)| *c == o.name) {
            continue;
        }
        out.push(' ');
        typed_name(&mut out, domain, &o.name, o.ty);
    }
    out.push_str(")\n  (:init");
    for a in instance.init.atoms() {
        out.push(' ');
        out.push_str(&instance.atom_to_string(domain, a));
    }
    out.push_str(")\n  (:goal (and");
    for a in &instance.goal {
        out.push(' ');
        out.push_str(&instance.atom_to_string(domain, a));
    }
    out.push_str(")))\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{parse_domain, parse_problem};

    #[test]
    fn bundled_files_round_trip() {
        for (dom, prob) in [(BLOCKS, BLOCKS_3), (GRIPPER, GRIPPER_1), (ON_CLEAR, ON_CLEAR_3)] {
            let (d, i) = load(dom, prob);
            let d2 = parse_domain(&d.to_pddl()).unwrap();
            assert_eq!(d, d2);
            let i2 = parse_problem(&i.to_pddl(&d), &d2).unwrap();
            assert_eq!(i, i2);
        }
    }

    #[test]
    fn constants_round_trip() {
        let src = "(define (domain c) (:requirements :strips :typing) (:types loc) (:constants home - loc)
            (:predicates (at ?l - loc)) (:action go :parameters (?to - loc) :precondition (at home) :effect (and (at ?to) (not (at home)))))";
        let d = parse_domain(src).unwrap();
        let d2 = parse_domain(&d.to_pddl()).unwrap();
        assert_eq!(d, d2);
        let i = parse_problem("(define (problem p) (:domain c) (:objects work - loc) (:init (at home)) (:goal (at work)))", &d).unwrap();
        assert_eq!(i.objects.len(), 2);
        assert_eq!(parse_problem(&i.to_pddl(&d), &d).unwrap(), i);
    }
}
