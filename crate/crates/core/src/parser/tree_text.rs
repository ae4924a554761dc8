use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::{list, parse_atom, section, single_form, symbol, syntax, ParseError, Result};
use crate::model::{grounding_bijection_with, Binding, Domain, TaskId, TaskNetwork};
use crate::parser::sexpr::SExpr;
use crate::tree::{Decomposition, DecompositionTree, Node, NodeId};

fn node_id(e: &SExpr) -> Result<NodeId> {
    let s = symbol(e, "node id")?;
    s.strip_prefix('n')
        .and_then(|n| n.parse::<u32>().ok())
        .map(NodeId)
        .ok_or_else(|| syntax(format!("node ids have the form n<number>, found {s}"), e))
}

/// Canonical text of a decomposition tree: nodes by id, then every ordering
/// constraint.
pub fn print_tree(dt: &DecompositionTree) -> String {
    let mut out = format!("(tree\n  (root {})", dt.root);
    for id in dt.ids() {
        let n = dt.node(id);
        write!(out, "\n  (node {id} {}", super::print::atom_text(&n.action)).unwrap();
        if let Some(d) = &n.decomposition {
            let cs: String = n.children.iter().map(|c| format!(" {c}")).collect();
            write!(out, " (method {}) (children{cs})", d.method).unwrap();
        }
        out.push(')');
    }
    let pairs: String = dt
        .constraints
        .iter()
        .map(|(a, b)| format!(" ({a} {b})"))
        .collect();
    write!(out, "\n  (order{pairs}))\n").unwrap();
    out
}

/// Reads a tree. Node ids must be `n0..n{k}` without gaps. Bindings and
/// subtask maps are reconstructed from the named methods where the children
/// form a grounding of the method's network, and left empty otherwise.
pub fn parse_tree(text: &str, dom: &Domain) -> Result<DecompositionTree> {
    let form = single_form(text, "<tree>", "tree")?;
    let mut root = None;
    let mut nodes: BTreeMap<NodeId, (Node, Option<crate::model::Symbol>)> = BTreeMap::new();
    let mut constraints = BTreeSet::new();
    for item in section(&form, "tree")? {
        match item.head() {
            Some("root") => {
                let r = section(item, "root")?;
                if r.len() != 1 {
                    return Err(syntax("(root n<id>)", item));
                }
                root = Some(node_id(&r[0])?);
            }
            Some("node") => {
                let parts = section(item, "node")?;
                if parts.len() < 2 {
                    return Err(syntax(
                        "(node n<id> (action ...) [(method id) (children ...)])",
                        item,
                    ));
                }
                let id = node_id(&parts[0])?;
                let action = parse_atom(&parts[1])?;
                let mut method = None;
                let mut children = Vec::new();
                for p in &parts[2..] {
                    match p.head() {
                        Some("method") => {
                            let m = section(p, "method")?;
                            if m.len() != 1 {
                                return Err(syntax("(method id)", p));
                            }
                            method = Some(symbol(&m[0], "method id")?.into());
                        }
                        Some("children") => {
                            children = section(p, "children")?
                                .iter()
                                .map(node_id)
                                .collect::<Result<_>>()?;
                        }
                        _ => return Err(syntax("expected (method ...) or (children ...)", p)),
                    }
                }
                let node = Node {
                    action,
                    children,
                    decomposition: None,
                };
                if nodes.insert(id, (node, method)).is_some() {
                    return Err(ParseError::DuplicateName {
                        name: id.to_string(),
                        span: item.span().clone(),
                    });
                }
            }
            Some("order") => {
                for pair in section(item, "order")? {
                    let ab = list(pair, "ordering pair")?;
                    if ab.len() != 2 {
                        return Err(syntax("ordering pairs have the form (n<a> n<b>)", pair));
                    }
                    constraints.insert((node_id(&ab[0])?, node_id(&ab[1])?));
                }
            }
            _ => {
                return Err(syntax(
                    "expected (root ...), (node ...) or (order ...)",
                    item,
                ))
            }
        }
    }
    if nodes.keys().enumerate().any(|(i, id)| id.index() != i) {
        return Err(syntax("node ids must be n0..n<k> without gaps", &form));
    }
    let root = root.ok_or_else(|| syntax("tree without (root ...)", &form))?;
    let actions: Vec<_> = nodes.values().map(|(n, _)| n.action.clone()).collect();
    let mut out = Vec::with_capacity(nodes.len());
    for (_, (mut node, method)) in nodes {
        if let Some(method) = method {
            let mut dec = Decomposition {
                method: method.clone(),
                binding: Binding::new(),
                subtasks: BTreeMap::new(),
            };
            if let Some(m) = dom.method(&method) {
                let local: BTreeMap<NodeId, TaskId> = node
                    .children
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (*c, TaskId(i as u32)))
                    .collect();
                let tasks = node
                    .children
                    .iter()
                    .filter_map(|c| Some((local[c], actions.get(c.index())?.clone())))
                    .collect();
                let order = constraints
                    .iter()
                    .filter_map(|(a, b)| Some((*local.get(a)?, *local.get(b)?)))
                    .collect();
                let mut head = Binding::new();
                if m.head.unify_into(&node.action, &mut head) {
                    if let Some((map, b)) = TaskNetwork::new(tasks, order)
                        .ok()
                        .and_then(|tn| grounding_bijection_with(&tn, &m.network, head))
                    {
                        dec.binding = b;
                        dec.subtasks = map
                            .into_iter()
                            .map(|(g, t)| (t, node.children[g.0 as usize]))
                            .collect();
                    }
                }
            }
            node.decomposition = Some(dec);
        }
        out.push(node);
    }
    Ok(DecompositionTree {
        nodes: out,
        root,
        constraints,
    })
}
