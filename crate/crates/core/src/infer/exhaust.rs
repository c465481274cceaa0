//! Exhaustiveness of `case` expressions via pattern-matrix usefulness.

use crate::ast::*;
use crate::diag::{Diagnostic, ErrorKind};
use crate::infer::data_head;
use crate::types::unroll_mu;
use std::rc::Rc;

#[derive(Clone, Debug)]
enum Head {
    Data { def: Rc<DataDef>, index: usize },
    Nil,
    Cons,
    Record(usize),
    Lit(String),
}

impl Head {
    fn same(&self, other: &Head) -> bool {
        match (self, other) {
            (Head::Data { def: a, index: i }, Head::Data { def: b, index: j }) => a.tag == b.tag && i == j,
            (Head::Nil, Head::Nil) | (Head::Cons, Head::Cons) => true,
            (Head::Record(a), Head::Record(b)) => a == b,
            (Head::Lit(a), Head::Lit(b)) => a == b,
            _ => false,
        }
    }

    fn arity(&self) -> usize {
        match self {
            Head::Data { def, index } => ctor_arities(def)[*index],
            Head::Nil | Head::Lit(_) => 0,
            Head::Cons => 2,
            Head::Record(n) => *n,
        }
    }

    /// Every constructor of the head's type, or `None` when the set is unbounded.
    fn family(&self) -> Option<Vec<Head>> {
        match self {
            Head::Data { def, .. } => {
                Some((0..ctor_arities(def).len()).map(|index| Head::Data { def: def.clone(), index }).collect())
            }
            Head::Nil | Head::Cons => Some(vec![Head::Nil, Head::Cons]),
            Head::Record(n) => Some(vec![Head::Record(*n)]),
            Head::Lit(_) => None,
        }
    }
}

fn ctor_arities(def: &DataDef) -> Vec<usize> {
    if let Some(h) = &def.hw_template {
        return h.ctors.iter().map(|(_, p)| p.is_some() as usize).collect();
    }
    let t = unroll_mu(def.sw_template.as_ref().expect("software datatype template"));
    data_head(&t).map(|d| d.ctors.iter().map(|(_, p)| p.is_some() as usize).collect()).unwrap_or_default()
}

#[derive(Clone, Debug)]
enum Pat {
    Wild,
    Ctor(Head, Vec<Pat>),
}

fn simplify(p: &Pattern) -> Pat {
    match &p.kind {
        PatKind::Wild | PatKind::Var { .. } => Pat::Wild,
        PatKind::Int(n) => Pat::Ctor(Head::Lit(n.to_string()), vec![]),
        PatKind::Real(r) => Pat::Ctor(Head::Lit(format!("{:?}", r)), vec![]),
        PatKind::Str(s) => Pat::Ctor(Head::Lit(format!("{:?}", s)), vec![]),
        PatKind::Ctor { arg, info, .. } => match info {
            Some(ci) => {
                let args = arg.iter().map(|a| simplify(a)).collect();
                Pat::Ctor(Head::Data { def: ci.def.clone(), index: ci.index }, args)
            }
            None => Pat::Wild,
        },
        PatKind::Record { fields, .. } => {
            let mut fs: Vec<&(String, Pattern)> = fields.iter().collect();
            fs.sort_by(|a, b| a.0.cmp(&b.0));
            Pat::Ctor(Head::Record(fs.len()), fs.iter().map(|(_, p)| simplify(p)).collect())
        }
        PatKind::Tuple { items, .. } => Pat::Ctor(Head::Record(items.len()), items.iter().map(simplify).collect()),
        PatKind::Cons(h, t) => Pat::Ctor(Head::Cons, vec![simplify(h), simplify(t)]),
        PatKind::List(items) => items
            .iter()
            .rev()
            .fold(Pat::Ctor(Head::Nil, vec![]), |acc, p| Pat::Ctor(Head::Cons, vec![simplify(p), acc])),
    }
}

fn specialize(row: &[Pat], head: &Head) -> Option<Vec<Pat>> {
    match &row[0] {
        Pat::Wild => {
            let mut out = vec![Pat::Wild; head.arity()];
            out.extend_from_slice(&row[1..]);
            Some(out)
        }
        Pat::Ctor(h, args) if h.same(head) => {
            let mut out = args.clone();
            out.extend_from_slice(&row[1..]);
            Some(out)
        }
        Pat::Ctor(..) => None,
    }
}

/// Whether some value matched by `q` escapes every row of `matrix`.
fn useful(matrix: &[Vec<Pat>], q: &[Pat]) -> bool {
    if q.is_empty() {
        return matrix.is_empty();
    }
    match &q[0] {
        Pat::Ctor(h, _) => {
            let m: Vec<Vec<Pat>> = matrix.iter().filter_map(|r| specialize(r, h)).collect();
            useful(&m, &specialize(q, h).unwrap())
        }
        Pat::Wild => {
            let heads: Vec<&Head> = matrix
                .iter()
                .filter_map(|r| match &r[0] {
                    Pat::Ctor(h, _) => Some(h),
                    Pat::Wild => None,
                })
                .collect();
            let family = heads.first().and_then(|h| h.family());
            if let Some(all) = family {
                if all.iter().all(|c| heads.iter().any(|h| h.same(c))) {
                    return all.iter().any(|c| {
                        let m: Vec<Vec<Pat>> = matrix.iter().filter_map(|r| specialize(r, c)).collect();
                        useful(&m, &specialize(q, c).unwrap())
                    });
                }
            }
            let default: Vec<Vec<Pat>> =
                matrix.iter().filter(|r| matches!(r[0], Pat::Wild)).map(|r| r[1..].to_vec()).collect();
            useful(&default, &q[1..])
        }
    }
}

/// True when the patterns cover every value of their type.
pub fn is_exhaustive(pats: &[&Pattern]) -> bool {
    let matrix: Vec<Vec<Pat>> = pats.iter().map(|p| vec![simplify(p)]).collect();
    !useful(&matrix, &[Pat::Wild])
}

/// Emits a warning for each non-exhaustive `case` in the tree.
pub fn check(e: &Expr, diags: &mut Vec<Diagnostic>) {
    if let ExprKind::Case(_, arms) = &e.kind {
        let pats: Vec<&Pattern> = arms.iter().map(|(p, _)| p).collect();
        if !is_exhaustive(&pats) {
            diags.push(Diagnostic::warning(
                ErrorKind::NonExhaustiveMatch,
                Some(e.span),
                "this case expression does not cover every value",
            ));
        }
    }
    for c in e.children() {
        match c {
            Node::Expr(x) => check(x, diags),
            Node::Dec(d) => d.exprs().into_iter().for_each(|x| check(x, diags)),
            Node::Pat(_) => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::diag::ErrorKind;
    use crate::infer::infer_source;

    fn warns(src: &str) -> bool {
        let (_, _, inf) = infer_source(src).unwrap();
        assert!(inf.diags.iter().all(|d| !d.is_error()), "{:?}", inf.diags);
        inf.diags.iter().any(|d| d.kind == ErrorKind::NonExhaustiveMatch)
    }

    #[test]
    fn lists() {
        assert!(!warns("case [1] of [] => 0 |: x::xs => x"));
        assert!(warns("case [1] of x::xs => x"));
        assert!(warns("case [1] of [] => 0 |: [x] => x"));
        assert!(!warns("case [1] of [] => 0 |: [x] => x |: x::y::z => y"));
    }

    #[test]
    fn datatypes_and_literals() {
        let opt = "let sdatatype 'a option = SOME of 'a |: NONE in ";
        assert!(!warns(&format!("{}case SOME 1 of SOME x => x |: NONE => 0 end", opt)));
        assert!(warns(&format!("{}case SOME 1 of SOME 1 => 1 |: NONE => 0 end", opt)));
        assert!(warns("case 3 of 1 => 1 |: 2 => 2"));
        assert!(!warns("case 3 of 1 => 1 |: _ => 2"));
        assert!(!warns("case (1, [2]) of (a, []) => a |: (a, b::c) => b"));
    }
}
