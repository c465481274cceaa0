//! Typed-AST listing: every binder with its final type.

use crate::ast::*;
use crate::types::{SemType, TypePrinter};
use std::fmt::Write;

/// One line per binder, indented by nesting depth, ending with the program type.
pub fn typed_ast(e: &Expr) -> String {
    let mut out = String::new();
    expr(e, 0, None, &mut out);
    let mut p = TypePrinter::new();
    let _ = writeln!(out, "program : {}", slot(&mut p, &e.ty));
    out
}

fn slot(p: &mut TypePrinter, s: &TySlot) -> String {
    match s.get() {
        Some(t) => p.sem(t),
        None => "?".into(),
    }
}

fn line(out: &mut String, depth: usize, name: &str, ty: &str) {
    let _ = writeln!(out, "{}{} : {}", "  ".repeat(depth), name, ty);
}

fn pattern(p: &Pattern, depth: usize, pr: &mut TypePrinter, out: &mut String) {
    match &p.kind {
        PatKind::Var { name, .. } => {
            let t = slot(pr, &p.ty);
            line(out, depth, name, &t);
        }
        PatKind::Ctor { arg: Some(a), .. } => pattern(a, depth, pr, out),
        PatKind::Record { fields, .. } => fields.iter().for_each(|(_, q)| pattern(q, depth, pr, out)),
        PatKind::Tuple { items, .. } | PatKind::List(items) => items.iter().for_each(|q| pattern(q, depth, pr, out)),
        PatKind::Cons(a, b) => {
            pattern(a, depth, pr, out);
            pattern(b, depth, pr, out);
        }
        _ => {}
    }
}

/// Nested binders share the printer of their outermost declaration so names agree.
fn dec(d: &Dec, depth: usize, shared: Option<&mut TypePrinter>, out: &mut String) {
    let mut own = TypePrinter::new();
    let pr = match shared {
        Some(p) => p,
        None => &mut own,
    };
    match &d.kind {
        DecKind::Val { name, ty, expr: e, .. } => {
            let t = slot(pr, ty);
            line(out, depth, &format!("val {}", name), &t);
            expr(e, depth + 1, Some(pr), out);
        }
        DecKind::Fun { name, params, ty, body, .. } => {
            let t = slot(pr, ty);
            line(out, depth, &format!("fun {}", name), &t);
            params.iter().for_each(|p| pattern(p, depth + 1, pr, out));
            expr(body, depth + 1, Some(pr), out);
        }
        DecKind::Module { name, size_param, param, ty, body, .. } => {
            let t = slot(pr, ty);
            line(out, depth, &format!("module {}", name), &t);
            if let Some(n) = size_param {
                line(out, depth + 1, n, &pr.sem(&SemType::int()));
            }
            pattern(param, depth + 1, pr, out);
            expr(body, depth + 1, Some(pr), out);
        }
        DecKind::Type { name, .. } => {
            let _ = writeln!(out, "{}type {}", "  ".repeat(depth), name);
        }
        DecKind::Datatype { name, ctors, hw, .. } => {
            let kw = if *hw { "hdatatype" } else { "sdatatype" };
            let names: Vec<&str> = ctors.iter().map(|c| c.name.as_str()).collect();
            let _ = writeln!(out, "{}{} {} = {}", "  ".repeat(depth), kw, name, names.join(" | "));
        }
    }
}

fn expr(e: &Expr, depth: usize, mut shared: Option<&mut TypePrinter>, out: &mut String) {
    let mut own = TypePrinter::new();
    for c in e.children() {
        match c {
            Node::Expr(x) => expr(x, depth, shared.as_deref_mut(), out),
            Node::Dec(d) => dec(d, depth, shared.as_deref_mut(), out),
            Node::Pat(p) => pattern(p, depth, shared.as_deref_mut().unwrap_or(&mut own), out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::infer_source;

    #[test]
    fn lists_binders() {
        let (e, _, _) = infer_source("let fun foo (x, y, s: string) = s val z = foo (1, 2.0, \"a\") in z end").unwrap();
        let text = typed_ast(&e);
        assert!(text.contains("fun foo : ('a * 'b * string) -> string"), "{}", text);
        assert!(text.contains("  s : string"), "{}", text);
        assert!(text.contains("val z : string"), "{}", text);
        assert!(text.ends_with("program : string\n"), "{}", text);
    }
}
