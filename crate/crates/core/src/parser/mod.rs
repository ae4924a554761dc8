//! Reader and canonical printer for the s-expression formats: `.htn`
//! domains, `.inst` instances, `.prio` prioritizations, `.methods`
//! refined-method sets and `.tree` decomposition trees. See
//! `docs/format.md` for the grammar.

mod print;
mod sexpr;
mod tree_text;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{
    Atom, CompoundSchema, Domain, Instance, Literal, Method, ModelError, OperatorSchema,
    Provenance, State, Symbol, TaskId, TaskNetwork, Term,
};
use crate::preference::{PreferenceError, Prioritization};

pub use print::{print_domain, print_instance, print_methods, print_prioritization};
pub use sexpr::{read_all, SExpr, SourceSpan, SyntaxError};
pub use tree_text::{parse_tree, print_tree};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{span}: syntax error: {message}")]
    Syntax { message: String, span: SourceSpan },
    #[error("{span}: {symbol} expects {expected} arguments, found {found}")]
    ArityMismatch {
        symbol: String,
        expected: usize,
        found: usize,
        span: SourceSpan,
    },
    #[error("{span}: duplicate name {name}")]
    DuplicateName { name: String, span: SourceSpan },
    #[error("{span}: undeclared predicate {name}")]
    UndeclaredPredicate { name: String, span: SourceSpan },
    #[error("{span}: method head {name} is not a compound action")]
    MethodHeadNotCompound { name: String, span: SourceSpan },
    #[error("{span}: initial state atom {atom} is not ground")]
    UngroundedInit { atom: String, span: SourceSpan },
    #[error("{span}: unknown task {name}")]
    UnknownTask { name: String, span: SourceSpan },
    #[error("{span}: {message}")]
    NotAPartition { message: String, span: SourceSpan },
    #[error("{span}: invalid: {message}")]
    Invalid { message: String, span: SourceSpan },
}

impl ParseError {
    pub fn span(&self) -> &SourceSpan {
        match self {
            ParseError::Syntax { span, .. }
            | ParseError::ArityMismatch { span, .. }
            | ParseError::DuplicateName { span, .. }
            | ParseError::UndeclaredPredicate { span, .. }
            | ParseError::MethodHeadNotCompound { span, .. }
            | ParseError::UngroundedInit { span, .. }
            | ParseError::UnknownTask { span, .. }
            | ParseError::NotAPartition { span, .. }
            | ParseError::Invalid { span, .. } => span,
        }
    }
}

impl From<SyntaxError> for ParseError {
    fn from(e: SyntaxError) -> Self {
        ParseError::Syntax {
            message: e.message,
            span: e.span,
        }
    }
}

type Result<T> = std::result::Result<T, ParseError>;

fn syntax(message: impl Into<String>, e: &SExpr) -> ParseError {
    ParseError::Syntax {
        message: message.into(),
        span: e.span().clone(),
    }
}

fn model_err(err: ModelError, e: &SExpr) -> ParseError {
    let span = e.span().clone();
    match err {
        ModelError::ArityMismatch {
            symbol,
            expected,
            found,
        } => ParseError::ArityMismatch {
            symbol,
            expected,
            found,
            span,
        },
        other => ParseError::Invalid {
            message: other.to_string(),
            span,
        },
    }
}

/// Reads the single top-level form with keyword `kind`.
fn single_form(text: &str, file: &str, kind: &str) -> Result<SExpr> {
    let mut forms = read_all(text, file)?;
    if forms.len() != 1 {
        let span = forms.get(1).map_or(
            SourceSpan {
                file: file.into(),
                line: 1,
                column: 1,
            },
            |f| f.span().clone(),
        );
        return Err(ParseError::Syntax {
            message: format!("expected exactly one ({kind} ...) form"),
            span,
        });
    }
    let form = forms.remove(0);
    if form.head() != Some(kind) {
        return Err(syntax(format!("expected ({kind} ...)"), &form));
    }
    Ok(form)
}

fn list<'a>(e: &'a SExpr, what: &str) -> Result<&'a [SExpr]> {
    e.as_list()
        .ok_or_else(|| syntax(format!("expected {what} list"), e))
}

fn symbol<'a>(e: &'a SExpr, what: &str) -> Result<&'a str> {
    e.as_symbol()
        .ok_or_else(|| syntax(format!("expected {what}"), e))
}

fn parse_atom(e: &SExpr) -> Result<Atom> {
    let items = list(e, "atom")?;
    let (head, args) = items.split_first().ok_or_else(|| syntax("empty atom", e))?;
    let pred = symbol(head, "predicate name")?;
    if pred.starts_with('?') {
        return Err(syntax("predicate name may not be a variable", head));
    }
    let args = args
        .iter()
        .map(|a| symbol(a, "term").map(Term::parse))
        .collect::<Result<Vec<_>>>()?;
    Ok(Atom::new(pred, args))
}

fn parse_literal(e: &SExpr) -> Result<Literal> {
    if e.head() == Some("not") {
        let items = list(e, "literal")?;
        if items.len() != 2 {
            return Err(syntax("(not ...) takes exactly one atom", e));
        }
        return Ok(Literal::neg(parse_atom(&items[1])?));
    }
    Ok(Literal::pos(parse_atom(e)?))
}

/// `(keyword item...)` → items.
fn section<'a>(e: &'a SExpr, keyword: &str) -> Result<&'a [SExpr]> {
    if e.head() != Some(keyword) {
        return Err(syntax(format!("expected ({keyword} ...)"), e));
    }
    Ok(&list(e, keyword)?[1..])
}

fn var_params(atom: &Atom, e: &SExpr) -> Result<Vec<Symbol>> {
    atom.args
        .iter()
        .map(|t| match t {
            Term::Var(v) => Ok(v.clone()),
            Term::Const(_) => Err(syntax("parameters must be variables", e)),
        })
        .collect()
}

fn parse_task_id(e: &SExpr) -> Result<TaskId> {
    let s = symbol(e, "task id")?;
    s.strip_prefix('t')
        .and_then(|n| n.parse::<u32>().ok())
        .map(TaskId)
        .ok_or_else(|| syntax(format!("task ids have the form t<number>, found {s}"), e))
}

/// Parses a domain and validates every structural invariant.
pub fn parse_domain(text: &str) -> Result<Domain> {
    parse_domain_named(text, "<domain>")
}

pub fn parse_domain_named(text: &str, file: &str) -> Result<Domain> {
    let form = single_form(text, file, "domain")?;
    let items = list(&form, "domain")?;
    let name = items
        .get(1)
        .ok_or_else(|| syntax("domain needs a name", &form))
        .and_then(|n| symbol(n, "domain name"))?;
    let mut dom = Domain {
        name: name.into(),
        ..Domain::default()
    };
    let mut method_forms = Vec::new();
    let mut op_forms = Vec::new();
    for item in &items[2..] {
        match item.head() {
            Some("predicates") => {
                for p in section(item, "predicates")? {
                    let a = parse_atom(p)?;
                    if dom.predicates.insert(a.pred.clone(), a.arity()).is_some() {
                        return Err(ParseError::DuplicateName {
                            name: a.pred.to_string(),
                            span: p.span().clone(),
                        });
                    }
                }
            }
            Some("constants") => {
                for c in section(item, "constants")? {
                    let c = symbol(c, "constant")?;
                    dom.constants.insert(c.into());
                }
            }
            Some("operator") => {
                let op = parse_operator(item)?;
                if dom.operators.contains_key(&op.name) {
                    return Err(ParseError::DuplicateName {
                        name: op.name.to_string(),
                        span: item.span().clone(),
                    });
                }
                op_forms.push((op.name.clone(), item));
                dom.operators.insert(op.name.clone(), op);
            }
            Some("compound") => {
                let parts = section(item, "compound")?;
                if parts.len() != 1 {
                    return Err(syntax("(compound (name ?params...))", item));
                }
                let a = parse_atom(&parts[0])?;
                let params = var_params(&a, item)?;
                if dom.compounds.contains_key(&a.pred) {
                    return Err(ParseError::DuplicateName {
                        name: a.pred.to_string(),
                        span: item.span().clone(),
                    });
                }
                dom.compounds.insert(
                    a.pred.clone(),
                    CompoundSchema {
                        name: a.pred,
                        params,
                    },
                );
            }
            Some("method") => method_forms.push(item),
            _ => return Err(syntax("unknown domain section", item)),
        }
    }
    for (name, form) in &op_forms {
        if dom.compounds.contains_key(name) {
            return Err(ParseError::DuplicateName {
                name: name.to_string(),
                span: form.span().clone(),
            });
        }
        let op = &dom.operators[name];
        for a in op.pre.iter().map(|l| &l.atom).chain(&op.add).chain(&op.del) {
            check_predicate(&dom, a, form)?;
        }
    }
    for form in method_forms {
        let m = parse_method(form, &dom)?;
        if dom.methods.contains_key(&m.id) {
            return Err(ParseError::DuplicateName {
                name: m.id.to_string(),
                span: form.span().clone(),
            });
        }
        dom.methods.insert(m.id.clone(), m);
    }
    dom.validate().map_err(|e| model_err(e, &form))?;
    Ok(dom)
}

fn check_predicate(dom: &Domain, a: &Atom, e: &SExpr) -> Result<()> {
    match dom.predicates.get(&a.pred) {
        None => Err(ParseError::UndeclaredPredicate {
            name: a.pred.to_string(),
            span: e.span().clone(),
        }),
        Some(&n) if n != a.arity() => Err(ParseError::ArityMismatch {
            symbol: a.pred.to_string(),
            expected: n,
            found: a.arity(),
            span: e.span().clone(),
        }),
        Some(_) => Ok(()),
    }
}

fn parse_operator(e: &SExpr) -> Result<OperatorSchema> {
    let parts = section(e, "operator")?;
    let mut head = None;
    let (mut pre, mut add, mut del) = (Vec::new(), Vec::new(), Vec::new());
    for p in parts {
        match p.head() {
            Some("head") => {
                let h = section(p, "head")?;
                if h.len() != 1 {
                    return Err(syntax("(head (name ?params...))", p));
                }
                head = Some(parse_atom(&h[0])?);
            }
            Some("pre") => {
                for l in section(p, "pre")? {
                    pre.push(parse_literal(l)?);
                }
            }
            Some("add") => {
                for a in section(p, "add")? {
                    add.push(parse_atom(a)?);
                }
            }
            Some("del") => {
                for a in section(p, "del")? {
                    del.push(parse_atom(a)?);
                }
            }
            _ => return Err(syntax("unknown operator section", p)),
        }
    }
    let head = head.ok_or_else(|| syntax("operator without (head ...)", e))?;
    let params = var_params(&head, e)?;
    Ok(OperatorSchema {
        name: head.pred,
        params,
        pre,
        add,
        del,
    })
}

fn parse_method(e: &SExpr, dom: &Domain) -> Result<Method> {
    let parts = section(e, "method")?;
    let mut id = None;
    let mut head: Option<(Atom, &SExpr)> = None;
    let mut tasks = BTreeMap::new();
    let mut order = BTreeSet::new();
    let mut provenance = None;
    for p in parts {
        match p.head() {
            Some("id") => {
                let s = section(p, "id")?;
                if s.len() != 1 {
                    return Err(syntax("(id name)", p));
                }
                id = Some(Symbol::new(symbol(&s[0], "method id")?));
            }
            Some("head") => {
                let h = section(p, "head")?;
                if h.len() != 1 {
                    return Err(syntax("(head (compound ?params...))", p));
                }
                head = Some((parse_atom(&h[0])?, p));
            }
            Some("tasks") => {
                for t in section(p, "tasks")? {
                    let pair = list(t, "task")?;
                    if pair.len() != 2 {
                        return Err(syntax("(t<n> (action ...))", t));
                    }
                    let tid = parse_task_id(&pair[0])?;
                    let action = parse_atom(&pair[1])?;
                    if !dom.is_compound(&action) && !dom.is_primitive(&action) {
                        return Err(ParseError::UnknownTask {
                            name: action.pred.to_string(),
                            span: t.span().clone(),
                        });
                    }
                    dom.check_action(&action, true)
                        .map_err(|err| model_err(err, t))?;
                    if tasks.insert(tid, action).is_some() {
                        return Err(ParseError::DuplicateName {
                            name: tid.to_string(),
                            span: t.span().clone(),
                        });
                    }
                }
            }
            Some("order") => {
                for pair in section(p, "order")? {
                    let items = list(pair, "ordering pair")?;
                    if items.first().and_then(SExpr::as_symbol) == Some(":ordered") {
                        let ids = items[1..]
                            .iter()
                            .map(parse_task_id)
                            .collect::<Result<Vec<_>>>()?;
                        for w in ids.windows(2) {
                            order.insert((w[0], w[1]));
                        }
                    } else if items.len() == 2 {
                        order.insert((parse_task_id(&items[0])?, parse_task_id(&items[1])?));
                    } else {
                        return Err(syntax("ordering pairs are (t<a> t<b>)", pair));
                    }
                }
            }
            Some("provenance") => {
                let mut origin = None;
                let mut inserted = Vec::new();
                for q in section(p, "provenance")? {
                    match q.head() {
                        Some("origin") => {
                            let s = section(q, "origin")?;
                            if s.len() != 1 {
                                return Err(syntax("(origin method-id)", q));
                            }
                            origin = Some(Symbol::new(symbol(&s[0], "method id")?));
                        }
                        Some("inserted") => {
                            for t in section(q, "inserted")? {
                                inserted.push(parse_task_id(t)?);
                            }
                        }
                        _ => return Err(syntax("unknown provenance entry", q)),
                    }
                }
                let origin = origin.ok_or_else(|| syntax("provenance without origin", p))?;
                provenance = Some(Provenance { origin, inserted });
            }
            _ => return Err(syntax("unknown method section", p)),
        }
    }
    let id = id.ok_or_else(|| syntax("method without (id ...)", e))?;
    let (head, head_form) = head.ok_or_else(|| syntax("method without (head ...)", e))?;
    if !dom.is_compound(&head) {
        return Err(ParseError::MethodHeadNotCompound {
            name: head.pred.to_string(),
            span: head_form.span().clone(),
        });
    }
    dom.check_action(&head, false)
        .map_err(|err| model_err(err, head_form))?;
    let network = TaskNetwork::new(tasks, order).map_err(|err| model_err(err, e))?;
    Ok(Method {
        id,
        head,
        network,
        provenance,
    })
}

/// Parses an instance against an already parsed domain.
pub fn parse_instance(text: &str, dom: &Domain) -> Result<Instance> {
    parse_instance_named(text, dom, "<instance>")
}

pub fn parse_instance_named(text: &str, dom: &Domain, file: &str) -> Result<Instance> {
    let form = single_form(text, file, "instance")?;
    let items = list(&form, "instance")?;
    let name = items
        .get(1)
        .ok_or_else(|| syntax("instance needs a name", &form))
        .and_then(|n| symbol(n, "instance name"))?;
    let mut init = None;
    let mut top = None;
    let mut goal = None;
    for item in &items[2..] {
        match item.head() {
            Some("init") => {
                let mut atoms = Vec::new();
                for a in section(item, "init")? {
                    let atom = parse_atom(a)?;
                    if !atom.is_ground() {
                        return Err(ParseError::UngroundedInit {
                            atom: atom.to_string(),
                            span: a.span().clone(),
                        });
                    }
                    check_predicate(dom, &atom, a)?;
                    atoms.push(atom);
                }
                init = Some(State::new(atoms).expect("checked ground"));
            }
            Some("top") => {
                let t = section(item, "top")?;
                if t.len() != 1 {
                    return Err(syntax("(top (compound args...))", item));
                }
                let a = parse_atom(&t[0])?;
                if !dom.is_compound(&a) {
                    return Err(ParseError::UnknownTask {
                        name: a.pred.to_string(),
                        span: t[0].span().clone(),
                    });
                }
                dom.check_action(&a, false)
                    .map_err(|e| model_err(e, &t[0]))?;
                if !a.is_ground() {
                    return Err(ParseError::Invalid {
                        message: format!("top task {a} is not ground"),
                        span: t[0].span().clone(),
                    });
                }
                top = Some(a);
            }
            Some("goal") => {
                let mut atoms = Vec::new();
                for a in section(item, "goal")? {
                    let atom = parse_atom(a)?;
                    if !atom.is_ground() {
                        return Err(ParseError::Invalid {
                            message: format!("goal atom {atom} is not ground"),
                            span: a.span().clone(),
                        });
                    }
                    check_predicate(dom, &atom, a)?;
                    atoms.push(atom);
                }
                goal = Some(atoms);
            }
            _ => return Err(syntax("unknown instance section", item)),
        }
    }
    Ok(Instance {
        name: name.into(),
        init: init.unwrap_or_default(),
        top: top.ok_or_else(|| syntax("instance without (top ...)", &form))?,
        goal,
    })
}

/// Parses a prioritization and checks that it partitions `dom`'s methods.
pub fn parse_prioritization(text: &str, dom: &Domain) -> Result<Prioritization> {
    let form = single_form(text, "<prioritization>", "prioritization")?;
    let mut strata = Vec::new();
    for s in section(&form, "prioritization")? {
        let ids = section(s, "stratum")?
            .iter()
            .map(|m| symbol(m, "method id").map(Symbol::new))
            .collect::<Result<BTreeSet<_>>>()?;
        let raw_len = list(s, "stratum")?.len() - 1;
        if ids.len() != raw_len {
            return Err(ParseError::NotAPartition {
                message: "method listed twice in a stratum".into(),
                span: s.span().clone(),
            });
        }
        strata.push(ids);
    }
    let p = Prioritization::new(strata);
    p.validate(dom).map_err(|e| match e {
        PreferenceError::NotAPartition(message) | PreferenceError::NotStratifiable(message) => {
            ParseError::NotAPartition {
                message,
                span: form.span().clone(),
            }
        }
    })?;
    Ok(p)
}

/// Parses a `.methods` file of (refined) methods against `dom`.
pub fn parse_methods(text: &str, dom: &Domain) -> Result<Vec<Method>> {
    let form = single_form(text, "<methods>", "methods")?;
    let mut out: Vec<Method> = Vec::new();
    for m in section(&form, "methods")? {
        let method = parse_method(m, dom)?;
        if out.iter().any(|x| x.id == method.id) || dom.methods.contains_key(&method.id) {
            return Err(ParseError::DuplicateName {
                name: method.id.to_string(),
                span: m.span().clone(),
            });
        }
        out.push(method);
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}
