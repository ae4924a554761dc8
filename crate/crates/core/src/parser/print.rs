use std::fmt::Write;

use crate::model::{Atom, Domain, Instance, Literal, Method};
use crate::preference::Prioritization;

pub(super) fn atom_text(a: &Atom) -> String {
    atom(a)
}

fn atom(a: &Atom) -> String {
    let mut s = format!("({}", a.pred);
    for t in &a.args {
        write!(s, " {t}").unwrap();
    }
    s.push(')');
    s
}

fn literal(l: &Literal) -> String {
    if l.positive {
        atom(&l.atom)
    } else {
        format!("(not {})", atom(&l.atom))
    }
}

fn joined<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(|x| format!(" {}", f(x))).collect()
}

fn method(m: &Method, indent: &str, out: &mut String) {
    writeln!(out, "{indent}(method").unwrap();
    writeln!(out, "{indent}  (id {})", m.id).unwrap();
    writeln!(out, "{indent}  (head {})", atom(&m.head)).unwrap();
    if m.network.is_empty() {
        writeln!(out, "{indent}  (tasks)").unwrap();
    } else {
        writeln!(out, "{indent}  (tasks").unwrap();
        let n = m.network.len();
        for (i, (t, a)) in m.network.tasks().iter().enumerate() {
            let close = if i + 1 == n { ")" } else { "" };
            writeln!(out, "{indent}    ({t} {}){close}", atom(a)).unwrap();
        }
    }
    let pairs: String = m
        .network
        .order()
        .iter()
        .map(|(a, b)| format!(" ({a} {b})"))
        .collect();
    write!(out, "{indent}  (order{pairs})").unwrap();
    if let Some(p) = &m.provenance {
        let ins: String = p.inserted.iter().map(|t| format!(" {t}")).collect();
        write!(
            out,
            "\n{indent}  (provenance (origin {}) (inserted{ins}))",
            p.origin
        )
        .unwrap();
    }
    out.push(')');
}

/// Canonical text of a domain: sorted declarations, two-space indentation.
pub fn print_domain(d: &Domain) -> String {
    let mut out = format!("(domain {}\n", d.name);
    out.push_str("  (predicates");
    for (p, n) in &d.predicates {
        let args: String = (1..=*n).map(|i| format!(" ?a{i}")).collect();
        write!(out, "\n    ({p}{args})").unwrap();
    }
    out.push(')');
    if !d.constants.is_empty() {
        let cs: String = d.constants.iter().map(|c| format!(" {c}")).collect();
        write!(out, "\n  (constants{cs})").unwrap();
    }
    for op in d.operators.values() {
        write!(out, "\n  (operator\n    (head {})", atom(&op.head())).unwrap();
        write!(out, "\n    (pre{})", joined(&op.pre, literal)).unwrap();
        write!(out, "\n    (add{})", joined(&op.add, atom)).unwrap();
        write!(out, "\n    (del{}))", joined(&op.del, atom)).unwrap();
    }
    for c in d.compounds.values() {
        let ps: String = c.params.iter().map(|p| format!(" ?{p}")).collect();
        write!(out, "\n  (compound ({}{ps}))", c.name).unwrap();
    }
    for m in d.methods.values() {
        out.push('\n');
        method(m, "  ", &mut out);
    }
    out.push_str(")\n");
    out
}

pub fn print_instance(i: &Instance) -> String {
    let mut out = format!("(instance {}\n  (init", i.name);
    for a in i.init.atoms() {
        write!(out, "\n    {}", atom(a)).unwrap();
    }
    out.push(')');
    write!(out, "\n  (top {})", atom(&i.top)).unwrap();
    if let Some(g) = &i.goal {
        write!(out, "\n  (goal{})", joined(g, atom)).unwrap();
    }
    out.push_str(")\n");
    out
}

pub fn print_prioritization(p: &Prioritization) -> String {
    let mut out = String::from("(prioritization");
    for s in &p.strata {
        let ids: String = s.iter().map(|m| format!(" {m}")).collect();
        write!(out, "\n  (stratum{ids})").unwrap();
    }
    out.push_str(")\n");
    out
}

/// Canonical text of a method set, sorted by id.
pub fn print_methods<'a>(methods: impl IntoIterator<Item = &'a Method>) -> String {
    let mut ms: Vec<&Method> = methods.into_iter().collect();
    ms.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = String::from("(methods");
    for m in ms {
        out.push('\n');
        method(m, "  ", &mut out);
    }
    out.push_str(")\n");
    out
}
