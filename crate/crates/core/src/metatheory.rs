//! Executable type-safety checks: a substitution-based small-step evaluator
//! with explicit reference and wrap stores, a generator of well-typed terms,
//! and a driver that asserts progress and preservation on every step.
//!
//! Hardware values inside software terms are closed (they have no pins), so a
//! gate applied to constant wires is represented by its constant output.

use crate::ast::{BinOp, Dec, DecKind, Expr, ExprKind, PatKind, Pattern, TySlot, UnOp};
use crate::diag::Span;
use crate::eval::{int_op, literal_bits, Evaluator, Value};
use crate::hw::{GateOp, Netlist};
use crate::infer::{for_each_child, unify::unify, Infer};
use crate::types::{free_metas, map_h, map_s, map_sem, render, HType, MetaId, Rename, SType, SemType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

pub const DEFAULT_FUEL: usize = 100_000;

/// Reference store and wrap store.
#[derive(Clone, Debug, Default)]
pub struct Stores {
    pub refs: Vec<Expr>,
    pub wraps: Vec<Expr>,
}

#[derive(Clone, Debug)]
pub enum StepResult {
    /// `rule` is the root of the derivation, `axiom` the rule applied at the redex.
    Next { term: Expr, rule: &'static str, axiom: &'static str },
    IsValue,
    Stuck(String),
}

fn mk(kind: ExprKind) -> Expr {
    Expr::new(kind, Span::default())
}

fn unit() -> Expr {
    mk(ExprKind::Record(Vec::new()))
}

pub fn is_value(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Int(_)
        | ExprKind::Real(_)
        | ExprKind::Str(_)
        | ExprKind::Bit(_)
        | ExprKind::Lambda { .. }
        | ExprKind::Loc(_)
        | ExprKind::WrapLoc(_) => true,
        ExprKind::Var { ctor, .. } => ctor.is_some(),
        ExprKind::Record(fs) | ExprKind::HwRecord(fs) => fs.iter().all(|(_, x)| is_value(x)),
        ExprKind::List(xs) | ExprKind::ArrayLit(xs) => xs.iter().all(is_value),
        ExprKind::App(f, a) => matches!(&f.kind, ExprKind::Var { ctor: Some(_), .. }) && is_value(a),
        _ => false,
    }
}

/// One step of evaluation.
pub fn small_step(t: &Expr, st: &mut Stores) -> StepResult {
    if is_value(t) {
        return StepResult::IsValue;
    }
    match step(t, st) {
        Ok((term, rule, axiom)) => StepResult::Next { term, rule, axiom },
        Err(why) => StepResult::Stuck(why),
    }
}

type Step = Result<(Expr, &'static str, &'static str), String>;

fn with_kind(e: &Expr, kind: ExprKind) -> Expr {
    Expr { kind, span: e.span, ty: TySlot::Placeholder }
}

/// Steps the first non-value in `items`, or returns None when all are values.
fn step_first(items: &[Expr], st: &mut Stores) -> Option<Result<(Vec<Expr>, &'static str, &'static str), String>> {
    let j = items.iter().position(|x| !is_value(x))?;
    Some(step(&items[j], st).map(|(x, r, a)| {
        let mut out = items.to_vec();
        out[j] = x;
        (out, r, a)
    }))
}

fn binary_rule(op: BinOp, left: bool) -> &'static str {
    use BinOp::*;
    match (op, left) {
        (Add, true) => "E-INT-ADD1",
        (Add, false) => "E-INT-ADD2",
        (Sub, true) => "E-INT-SUB1",
        (Sub, false) => "E-INT-SUB2",
        (Mul, true) => "E-INT-MUL1",
        (Mul, false) => "E-INT-MUL2",
        (Div, true) => "E-INT-DIV1",
        (Div, false) => "E-INT-DIV2",
        (Mod, true) => "E-INT-MOD1",
        (Mod, false) => "E-INT-MOD2",
        (RAdd, true) => "E-REAL-ADD1",
        (RAdd, false) => "E-REAL-ADD2",
        (RSub, true) => "E-REAL-SUB1",
        (RSub, false) => "E-REAL-SUB2",
        (RMul, true) => "E-REAL-MUL1",
        (RMul, false) => "E-REAL-MUL2",
        (RDiv, true) => "E-REAL-DIV1",
        (RDiv, false) => "E-REAL-DIV2",
        (Eq, true) => "E-EQ1",
        (Eq, false) => "E-EQ2",
        (Ne, true) => "E-NEQ1",
        (Ne, false) => "E-NEQ2",
        (Lt, true) => "E-LT1",
        (Lt, false) => "E-LT2",
        (Gt, true) => "E-GT1",
        (Gt, false) => "E-GT2",
        (Le, true) => "E-LEQ1",
        (Le, false) => "E-LEQ2",
        (Ge, true) => "E-GEQ1",
        (Ge, false) => "E-GEQ2",
        (Shl, true) => "E-SLL1",
        (Shl, false) => "E-SLL2",
        (Shr, true) => "E-SRL1",
        (Shr, false) => "E-SRL2",
        (Sra, true) => "E-SRA1",
        (Sra, false) => "E-SRA2",
        (And, true) => "E-AND1",
        (And, false) => "E-AND2",
        (Or, true) => "E-OR1",
        (Or, false) => "E-OR2",
        (Xor, true) => "E-XOR1",
        (Xor, false) => "E-XOR2",
        (Cons, true) => "E-CONS1",
        (Cons, false) => "E-CONS2",
        (Assign, true) => "E-ASSIGN1",
        (Assign, false) => "E-ASSIGN2",
    }
}

fn step(t: &Expr, st: &mut Stores) -> Step {
    let k = |kind| with_kind(t, kind);
    match &t.kind {
        ExprKind::Var { name, .. } => Err(format!("free variable `{}`", name)),
        ExprKind::Record(fs) | ExprKind::HwRecord(fs) => {
            let exprs: Vec<Expr> = fs.iter().map(|(_, x)| x.clone()).collect();
            let (xs, _, ax) = step_first(&exprs, st).ok_or("record is already a value")??;
            let fs = fs.iter().map(|(l, _)| l.clone()).zip(xs).collect();
            let kind = if matches!(t.kind, ExprKind::Record(_)) { ExprKind::Record(fs) } else { ExprKind::HwRecord(fs) };
            Ok((k(kind), "E-RCD", ax))
        }
        ExprKind::List(xs) => {
            let (xs, _, ax) = step_first(xs, st).ok_or("list is already a value")??;
            Ok((k(ExprKind::List(xs)), "E-LIST", ax))
        }
        ExprKind::ArrayLit(xs) => {
            let (xs, _, ax) = step_first(xs, st).ok_or("array is already a value")??;
            Ok((k(ExprKind::ArrayLit(xs)), "E-ARR", ax))
        }
        ExprKind::Proj(l, a) => {
            if !is_value(a) {
                let (a2, _, ax) = step(a, st)?;
                return Ok((k(ExprKind::Proj(l.clone(), Box::new(a2))), "E-PROJ", ax));
            }
            match &a.kind {
                ExprKind::Record(fs) | ExprKind::HwRecord(fs) => fs
                    .iter()
                    .find(|(m, _)| m == l)
                    .map(|(_, v)| (v.clone(), "E-PROJ-RCD", "E-PROJ-RCD"))
                    .ok_or_else(|| format!("no field `{}`", l)),
                _ => Err(format!("projection of `{}` from a non-record", l)),
            }
        }
        ExprKind::Index(a, i) => {
            if !is_value(a) {
                let (a2, _, ax) = step(a, st)?;
                return Ok((k(ExprKind::Index(Box::new(a2), i.clone())), "E-ARR-ACC0", ax));
            }
            if !is_value(i) {
                let (i2, _, ax) = step(i, st)?;
                return Ok((k(ExprKind::Index(a.clone(), Box::new(i2))), "E-ARR-ACC1", ax));
            }
            match (&a.kind, &i.kind) {
                (ExprKind::ArrayLit(xs), ExprKind::Int(n)) => usize::try_from(*n)
                    .ok()
                    .and_then(|n| xs.get(n))
                    .map(|v| (v.clone(), "E-ARR-ACC", "E-ARR-ACC"))
                    .ok_or_else(|| format!("index {} out of range", n)),
                _ => Err("indexing a non-array".into()),
            }
        }
        ExprKind::ArrayGen { size, var, body } => {
            if !is_value(size) {
                let (s2, _, ax) = step(size, st)?;
                return Ok((
                    k(ExprKind::ArrayGen { size: Box::new(s2), var: var.clone(), body: body.clone() }),
                    "E-GEN1", ax,
                ));
            }
            let ExprKind::Int(n) = size.kind else { return Err("array size is not an integer".into()) };
            if n < 0 {
                return Err("negative array size".into());
            }
            let items = (0..n).map(|i| subst(body, var, &mk(ExprKind::Int(i)))).collect();
            Ok((k(ExprKind::ArrayLit(items)), "E-GEN", "E-GEN"))
        }
        ExprKind::BitArray { kind, width, value } => {
            if !is_value(width) {
                let (w2, _, ax) = step(width, st)?;
                return Ok((k(ExprKind::BitArray { kind: *kind, width: Box::new(w2), value: value.clone() }), "E-BITS1", ax));
            }
            if !is_value(value) {
                let (v2, _, ax) = step(value, st)?;
                return Ok((k(ExprKind::BitArray { kind: *kind, width: width.clone(), value: Box::new(v2) }), "E-BITS2", ax));
            }
            match (&width.kind, &value.kind) {
                (ExprKind::Int(w), ExprKind::Int(v)) => {
                    let bits = literal_bits(*kind, *w, *v).map_err(|(_, m)| m)?;
                    Ok((k(ExprKind::ArrayLit(bits.into_iter().map(|b| mk(ExprKind::Bit(b))).collect())), "E-BITS", "E-BITS"))
                }
                _ => Err("bit-array literal over non-integers".into()),
            }
        }
        ExprKind::Unary(op, a) => {
            if !is_value(a) {
                let (a2, _, ax) = step(a, st)?;
                let rule = match op {
                    UnOp::Neg => "E-NEG",
                    UnOp::BitNot => "E-BIT-NEG1",
                    UnOp::AndReduce => "E-AND-RED1",
                    UnOp::OrReduce => "E-OR-RED1",
                    UnOp::XorReduce => "E-XOR-RED1",
                    UnOp::Deref => "E-DEREF",
                };
                return Ok((k(ExprKind::Unary(*op, Box::new(a2))), rule, ax));
            }
            unary(*op, a, st)
        }
        ExprKind::Binary(op, a, b) => {
            if !is_value(a) {
                let (a2, _, ax) = step(a, st)?;
                return Ok((k(ExprKind::Binary(*op, Box::new(a2), b.clone())), binary_rule(*op, true), ax));
            }
            if !is_value(b) {
                let (b2, _, ax) = step(b, st)?;
                return Ok((k(ExprKind::Binary(*op, a.clone(), Box::new(b2))), binary_rule(*op, false), ax));
            }
            binary(*op, a, b, st)
        }
        ExprKind::If(c, th, el) => {
            let el = el.as_ref().ok_or("`if` without `else` survived desugaring")?;
            if !is_value(c) {
                let (c2, _, ax) = step(c, st)?;
                return Ok((k(ExprKind::If(Box::new(c2), th.clone(), Some(el.clone()))), "E-IFELSE", ax));
            }
            match c.kind {
                ExprKind::Int(0) => Ok(((**el).clone(), "E-IFELSE-F", "E-IFELSE-F")),
                ExprKind::Int(_) => Ok(((**th).clone(), "E-IFELSE-T", "E-IFELSE-T")),
                _ => Err("non-integer guard".into()),
            }
        }
        ExprKind::Seq(xs) => match xs.len() {
            0 => Ok((unit(), "E-SEQ", "E-SEQ")),
            1 => Ok((xs[0].clone(), "E-SEQ", "E-SEQ")),
            _ if is_value(&xs[0]) => Ok((k(ExprKind::Seq(xs[1..].to_vec())), "E-SEQNEXT", "E-SEQNEXT")),
            _ => {
                let (x, _, ax) = step(&xs[0], st)?;
                let mut out = xs.clone();
                out[0] = x;
                Ok((k(ExprKind::Seq(out)), "E-SEQ1", ax))
            }
        },
        ExprKind::Let(decs, body) => step_let(t, decs, body, st),
        ExprKind::App(f, a) => {
            if !is_value(f) {
                let (f2, _, ax) = step(f, st)?;
                return Ok((k(ExprKind::App(Box::new(f2), a.clone())), "E-APP1", ax));
            }
            if !is_value(a) {
                let (a2, _, ax) = step(a, st)?;
                let rule = if matches!(f.kind, ExprKind::Var { ctor: Some(_), .. }) { "E-DATATY" } else { "E-APP2" };
                return Ok((k(ExprKind::App(f.clone(), Box::new(a2))), rule, ax));
            }
            match &f.kind {
                ExprKind::Lambda { name, param, body } => {
                    let mut binds = Vec::new();
                    if !match_pattern(param, a, &mut binds)? {
                        return Err("argument does not match the parameter pattern".into());
                    }
                    let mut out = (**body).clone();
                    if let Some(n) = name {
                        if !param.binders().contains(&n.as_str()) {
                            out = subst(&out, n, f);
                        }
                    }
                    for (n, v) in binds {
                        out = subst(&out, &n, &v);
                    }
                    Ok((out, "E-APPABS", "E-APPABS"))
                }
                _ => Err("application of a non-function".into()),
            }
        }
        ExprKind::Case(s, arms) => {
            if !is_value(s) {
                let (s2, _, ax) = step(s, st)?;
                return Ok((k(ExprKind::Case(Box::new(s2), arms.clone())), "E-CASE", ax));
            }
            for (p, body) in arms {
                let mut binds = Vec::new();
                if match_pattern(p, s, &mut binds)? {
                    let mut out = body.clone();
                    for (n, v) in binds {
                        out = subst(&out, &n, &v);
                    }
                    return Ok((out, "E-CASE-TY", "E-CASE-TY"));
                }
            }
            Err("no case arm matches".into())
        }
        ExprKind::Ref(a) => {
            if !is_value(a) {
                let (a2, _, ax) = step(a, st)?;
                return Ok((k(ExprKind::Ref(Box::new(a2))), "E-REF", ax));
            }
            st.refs.push((**a).clone());
            Ok((k(ExprKind::Loc(st.refs.len() as u32 - 1)), "E-REFV", "E-REFV"))
        }
        ExprKind::Sw(a) => {
            if !is_value(a) {
                let (a2, _, ax) = step(a, st)?;
                return Ok((k(ExprKind::Sw(Box::new(a2))), "E-SW", ax));
            }
            st.wraps.push((**a).clone());
            Ok((k(ExprKind::WrapLoc(st.wraps.len() as u32 - 1)), "E-SWV", "E-SWV"))
        }
        ExprKind::Unsw(a) => {
            if !is_value(a) {
                let (a2, _, ax) = step(a, st)?;
                return Ok((k(ExprKind::Unsw(Box::new(a2))), "E-UNSW", ax));
            }
            match a.kind {
                ExprKind::WrapLoc(w) => {
                    st.wraps.get(w as usize).cloned().map(|v| (v, "E-UNSWWRAP", "E-UNSWWRAP")).ok_or_else(|| "dangling wrap location".into())
                }
                _ => Err("unsw of a non-wrapped value".into()),
            }
        }
        ExprKind::Param(..) => Err("module instantiation is outside the small-step fragment".into()),
        ExprKind::Tuple { .. }
        | ExprKind::Unit
        | ExprKind::Collapse(..)
        | ExprKind::AndAlso(..)
        | ExprKind::OrElse(..)
        | ExprKind::Not(_) => Err("derived form survived desugaring".into()),
        ExprKind::Int(_)
        | ExprKind::Real(_)
        | ExprKind::Str(_)
        | ExprKind::Bit(_)
        | ExprKind::Lambda { .. }
        | ExprKind::Loc(_)
        | ExprKind::WrapLoc(_) => Err("value cannot step".into()),
    }
}

/// Function value for a `fun` declaration: curried lambdas, recursive through the outermost.
fn fun_value(name: &str, params: &[Pattern], body: &Expr) -> Expr {
    let mut out = body.clone();
    for (i, p) in params.iter().enumerate().rev() {
        let self_name = (i == 0).then(|| name.to_string());
        out = mk(ExprKind::Lambda { name: self_name, param: p.clone(), body: Box::new(out) });
    }
    out
}

fn step_let(t: &Expr, decs: &[Dec], body: &Expr, st: &mut Stores) -> Step {
    let k = |decs: Vec<Dec>, body: Expr| with_kind(t, ExprKind::Let(decs, Box::new(body)));
    let Some(j) = decs.iter().position(|d| !matches!(d.kind, DecKind::Type { .. } | DecKind::Datatype { .. })) else {
        if is_value(body) {
            return Ok((body.clone(), "E-LETV2", "E-LETV2"));
        }
        let (b2, _, ax) = step(body, st)?;
        return Ok((k(decs.to_vec(), b2), "E-LETBODY", ax));
    };
    let (name, v) = match &decs[j].kind {
        DecKind::Val { name, expr, .. } => {
            if !is_value(expr) {
                let (x, _, ax) = step(expr, st)?;
                let mut ds = decs.to_vec();
                if let DecKind::Val { expr, .. } = &mut ds[j].kind {
                    *expr = x;
                }
                return Ok((k(ds, body.clone()), "E-LET", ax));
            }
            (name.clone(), expr.clone())
        }
        DecKind::Fun { name, params, body: fb, .. } => (name.clone(), fun_value(name, params, fb)),
        DecKind::Module { .. } => return Err("module declarations are outside the small-step fragment".into()),
        DecKind::Type { .. } | DecKind::Datatype { .. } => unreachable!(),
    };
    let rest = mk(ExprKind::Let(decs[j + 1..].to_vec(), Box::new(body.clone())));
    let rest = subst(&rest, &name, &v);
    let ExprKind::Let(after, body2) = rest.kind else { unreachable!() };
    let mut ds = decs[..j].to_vec();
    ds.extend(after);
    if ds.is_empty() {
        return Ok((*body2, "E-LETV2", "E-LETV2"));
    }
    Ok((k(ds, *body2), "E-LETV1", "E-LETV1"))
}

fn gate(op: GateOp, a: &Expr, b: &Expr) -> Result<Expr, String> {
    let bin = match op {
        GateOp::And => BinOp::And,
        GateOp::Or => BinOp::Or,
        GateOp::Xor => BinOp::Xor,
    };
    Ok(match (&a.kind, &b.kind) {
        (ExprKind::Bit(x), ExprKind::Bit(y)) => mk(ExprKind::Bit(op.apply([*x, *y]))),
        (ExprKind::ArrayLit(xs), ExprKind::ArrayLit(ys)) if xs.len() == ys.len() => mk(ExprKind::ArrayLit(
            xs.iter().zip(ys).map(|(x, y)| mk(ExprKind::Binary(bin, Box::new(x.clone()), Box::new(y.clone())))).collect(),
        )),
        (ExprKind::HwRecord(xs), ExprKind::HwRecord(_)) => mk(ExprKind::HwRecord(
            xs.iter()
                .map(|(l, _)| {
                    let pa = mk(ExprKind::Proj(l.clone(), Box::new(a.clone())));
                    let pb = mk(ExprKind::Proj(l.clone(), Box::new(b.clone())));
                    (l.clone(), mk(ExprKind::Binary(bin, Box::new(pa), Box::new(pb))))
                })
                .collect(),
        )),
        _ => return Err(format!("gate `{}` on mismatched hardware values", op.symbol())),
    })
}

fn bit_values(v: &Expr) -> Option<Vec<u8>> {
    match &v.kind {
        ExprKind::Bit(b) => Some(vec![*b]),
        ExprKind::ArrayLit(xs) => xs.iter().map(|x| if let ExprKind::Bit(b) = x.kind { Some(b) } else { None }).collect(),
        _ => None,
    }
}

fn unary(op: UnOp, a: &Expr, st: &mut Stores) -> Step {
    match (op, &a.kind) {
        (UnOp::Neg, ExprKind::Int(n)) => n.checked_neg().map(|n| (mk(ExprKind::Int(n)), "E-NEGV", "E-NEGV")).ok_or_else(|| "overflow".into()),
        (UnOp::Neg, ExprKind::Real(r)) => Ok((mk(ExprKind::Real(-r)), "E-NEGV", "E-NEGV")),
        (UnOp::Deref, ExprKind::Loc(l)) => {
            st.refs.get(*l as usize).cloned().map(|v| (v, "E-DEREFLOC", "E-DEREFLOC")).ok_or_else(|| "dangling location".into())
        }
        (UnOp::BitNot, ExprKind::Bit(b)) => Ok((mk(ExprKind::Bit(1 - b)), "E-BIT-NEG", "E-BIT-NEG")),
        (UnOp::BitNot, ExprKind::ArrayLit(xs)) => Ok((
            mk(ExprKind::ArrayLit(xs.iter().map(|x| mk(ExprKind::Unary(UnOp::BitNot, Box::new(x.clone())))).collect())),
            "E-BIT-NEG2",
            "E-BIT-NEG2",
        )),
        (UnOp::BitNot, ExprKind::HwRecord(fs)) => Ok((
            mk(ExprKind::HwRecord(
                fs.iter()
                    .map(|(l, _)| {
                        let p = mk(ExprKind::Proj(l.clone(), Box::new(a.clone())));
                        (l.clone(), mk(ExprKind::Unary(UnOp::BitNot, Box::new(p))))
                    })
                    .collect(),
            )),
            "E-BIT-NEG3",
            "E-BIT-NEG3",
        )),
        (UnOp::AndReduce | UnOp::OrReduce | UnOp::XorReduce, ExprKind::ArrayLit(xs)) if !xs.is_empty() => {
            let (g, rule) = match op {
                UnOp::AndReduce => (GateOp::And, "E-AND-RED"),
                UnOp::OrReduce => (GateOp::Or, "E-OR-RED"),
                _ => (GateOp::Xor, "E-XOR-RED"),
            };
            if let Some(bits) = bit_values(a) {
                return Ok((mk(ExprKind::Bit(g.apply(bits))), rule, rule));
            }
            // Elements are themselves arrays or records: combine them pairwise.
            let mut it = xs.iter().cloned();
            let first = it.next().unwrap();
            let bin = match g {
                GateOp::And => BinOp::And,
                GateOp::Or => BinOp::Or,
                GateOp::Xor => BinOp::Xor,
            };
            let out = it.fold(first, |acc, x| mk(ExprKind::Binary(bin, Box::new(acc), Box::new(x))));
            Ok((out, rule, rule))
        }
        _ => Err(format!("`{}` cannot be applied to this value", op.name())),
    }
}

fn shift(op: BinOp, a: &Expr, b: &Expr) -> Step {
    let xs = match &a.kind {
        ExprKind::ArrayLit(xs) => xs.clone(),
        _ => return Err("shift of a non-array".into()),
    };
    let amount = bit_values(b).ok_or("shift amount is not constant")?;
    let k = amount.iter().enumerate().fold(0usize, |acc, (i, b)| if i < 32 { acc | ((*b as usize) << i) } else { acc });
    let n = xs.len();
    let zero = || mk(ExprKind::Bit(0));
    let out: Vec<Expr> = (0..n)
        .map(|i| match op {
            BinOp::Shl => if i >= k { xs[i - k].clone() } else { zero() },
            BinOp::Shr => if i + k < n { xs[i + k].clone() } else { zero() },
            _ => if i + k < n { xs[i + k].clone() } else { xs[n - 1].clone() },
        })
        .collect();
    let rule = match op {
        BinOp::Shl => "E-SLL",
        BinOp::Shr => "E-SRL",
        _ => "E-SRA",
    };
    Ok((mk(ExprKind::ArrayLit(out)), rule, rule))
}

fn binary(op: BinOp, a: &Expr, b: &Expr, st: &mut Stores) -> Step {
    use BinOp::*;
    use ExprKind as K;
    match (op, &a.kind, &b.kind) {
        (Add | Sub | Mul | Div | Mod, K::Int(x), K::Int(y)) => {
            let rule = match op {
                Add => "E-INT-ADD",
                Sub => "E-INT-SUB",
                Mul => "E-INT-MUL",
                Div => "E-INT-DIV",
                _ => "E-INT-MOD",
            };
            int_op(op, *x, *y).map(|n| (mk(K::Int(n)), rule, rule)).map_err(|(_, m)| m)
        }
        (RAdd | RSub | RMul | RDiv, K::Real(x), K::Real(y)) => {
            let (r, rule) = match op {
                RAdd => (x + y, "E-REAL-ADD"),
                RSub => (x - y, "E-REAL-SUB"),
                RMul => (x * y, "E-REAL-MUL"),
                _ => (x / y, "E-REAL-DIV"),
            };
            Ok((mk(K::Real(r)), rule, rule))
        }
        (Eq | Ne, _, _) => {
            let eq = term_equal(a, b).ok_or("values of this type cannot be compared")?;
            let rule = if op == Eq { "E-EQ" } else { "E-NEQ" };
            Ok((mk(K::Int((eq == (op == Eq)) as i32)), rule, rule))
        }
        (Lt | Gt | Le | Ge, _, _) => {
            let ord = match (&a.kind, &b.kind) {
                (K::Int(x), K::Int(y)) => x.partial_cmp(y),
                (K::Real(x), K::Real(y)) => x.partial_cmp(y),
                (K::Str(x), K::Str(y)) => x.partial_cmp(y),
                _ => return Err("ordering on unordered values".into()),
            };
            use std::cmp::Ordering::*;
            let (r, rule) = match (op, ord) {
                (Lt, o) => (o == Some(Less), "E-LT"),
                (Gt, o) => (o == Some(Greater), "E-GT"),
                (Le, o) => (matches!(o, Some(Less | Equal)), "E-LEQ"),
                (_, o) => (matches!(o, Some(Greater | Equal)), "E-GEQ"),
            };
            Ok((mk(K::Int(r as i32)), rule, rule))
        }
        (Shl | Shr | Sra, _, _) => shift(op, a, b),
        (And | Or | Xor, _, _) => {
            let (g, rule) = match op {
                And => (GateOp::And, "E-AND"),
                Or => (GateOp::Or, "E-OR"),
                _ => (GateOp::Xor, "E-XOR"),
            };
            Ok((gate(g, a, b)?, rule, rule))
        }
        (Cons, _, K::List(xs)) => {
            let mut out = vec![a.clone()];
            out.extend(xs.iter().cloned());
            Ok((mk(K::List(out)), "E-CONS", "E-CONS"))
        }
        (Assign, K::Loc(l), _) => {
            let slot = st.refs.get_mut(*l as usize).ok_or("dangling location")?;
            *slot = b.clone();
            Ok((unit(), "E-ASSIGN", "E-ASSIGN"))
        }
        _ => Err(format!("`{}` cannot be applied to these values", op.name())),
    }
}

/// Structural equality on values; None for functions.
pub fn term_equal(a: &Expr, b: &Expr) -> Option<bool> {
    use ExprKind as K;
    Some(match (&a.kind, &b.kind) {
        (K::Int(x), K::Int(y)) => x == y,
        (K::Real(x), K::Real(y)) => x == y,
        (K::Str(x), K::Str(y)) => x == y,
        (K::Loc(x), K::Loc(y)) => x == y,
        (K::List(xs), K::List(ys)) => {
            if xs.len() != ys.len() {
                return Some(false);
            }
            for (x, y) in xs.iter().zip(ys) {
                if !term_equal(x, y)? {
                    return Some(false);
                }
            }
            true
        }
        (K::Record(xs), K::Record(ys)) => {
            for (l, x) in xs {
                let y = ys.iter().find(|(m, _)| m == l).map(|(_, y)| y)?;
                if !term_equal(x, y)? {
                    return Some(false);
                }
            }
            xs.len() == ys.len()
        }
        (K::Var { ctor: Some(c), .. }, K::Var { ctor: Some(d), .. }) => c.name == d.name,
        (K::App(f, x), K::App(g, y)) => match (&f.kind, &g.kind) {
            (K::Var { ctor: Some(c), .. }, K::Var { ctor: Some(d), .. }) => c.name == d.name && term_equal(x, y)?,
            _ => return None,
        },
        (K::Var { ctor: Some(_), .. }, K::App(..)) | (K::App(..), K::Var { ctor: Some(_), .. }) => false,
        _ => return None,
    })
}

/// Matches a value against a pattern, collecting bindings.
fn match_pattern(p: &Pattern, v: &Expr, binds: &mut Vec<(String, Expr)>) -> Result<bool, String> {
    use ExprKind as K;
    Ok(match (&p.kind, &v.kind) {
        (PatKind::Wild, _) => true,
        (PatKind::Var { name, .. }, _) => {
            binds.push((name.clone(), v.clone()));
            true
        }
        (PatKind::Int(n), K::Int(m)) => n == m,
        (PatKind::Real(x), K::Real(y)) => x == y,
        (PatKind::Str(x), K::Str(y)) => x == y,
        (PatKind::List(ps), K::List(xs)) => {
            if ps.len() != xs.len() {
                return Ok(false);
            }
            for (p, x) in ps.iter().zip(xs) {
                if !match_pattern(p, x, binds)? {
                    return Ok(false);
                }
            }
            true
        }
        (PatKind::Cons(h, t), K::List(xs)) => {
            if xs.is_empty() {
                return Ok(false);
            }
            let tail = mk(K::List(xs[1..].to_vec()));
            match_pattern(h, &xs[0], binds)? && match_pattern(t, &tail, binds)?
        }
        (PatKind::Record { fields, .. }, K::Record(fs) | K::HwRecord(fs)) => {
            for (l, p) in fields {
                let Some((_, x)) = fs.iter().find(|(m, _)| m == l) else { return Err(format!("no field `{}`", l)) };
                if !match_pattern(p, x, binds)? {
                    return Ok(false);
                }
            }
            true
        }
        (PatKind::Ctor { name, arg, .. }, _) => match (&v.kind, arg) {
            (K::Var { name: n, ctor: Some(_) }, None) => n == name,
            (K::App(f, x), Some(ap)) => match &f.kind {
                K::Var { name: n, ctor: Some(_) } => n == name && match_pattern(ap, x, binds)?,
                _ => false,
            },
            (K::App(..), None) | (K::Var { ctor: Some(_), .. }, Some(_)) => false,
            _ => return Err("constructor pattern against a non-constructor value".into()),
        },
        (PatKind::Tuple { .. }, _) => return Err("tuple pattern survived desugaring".into()),
        _ => return Err("pattern does not fit the value's shape".into()),
    })
}

/// Capture-free substitution of a closed value for a variable.
pub fn subst(e: &Expr, name: &str, v: &Expr) -> Expr {
    let binds = |p: &Pattern| p.binders().contains(&name);
    let kind = match &e.kind {
        ExprKind::Var { name: n, ctor: None } if n == name => return v.clone(),
        ExprKind::Lambda { name: self_name, param, body } => {
            if self_name.as_deref() == Some(name) || binds(param) {
                return e.clone();
            }
            ExprKind::Lambda { name: self_name.clone(), param: param.clone(), body: Box::new(subst(body, name, v)) }
        }
        ExprKind::Let(decs, body) => {
            let mut out = Vec::new();
            let mut shadowed = false;
            for d in decs {
                if shadowed {
                    out.push(d.clone());
                    continue;
                }
                let mut d2 = d.clone();
                match &mut d2.kind {
                    DecKind::Val { name: n, expr, .. } => {
                        *expr = subst(expr, name, v);
                        shadowed = n == name;
                    }
                    DecKind::Fun { name: n, params, body, .. } => {
                        if n == name {
                            shadowed = true;
                        } else if !params.iter().any(binds) {
                            *body = subst(body, name, v);
                        }
                    }
                    DecKind::Module { name: n, size_param, param, body, .. } => {
                        if n == name {
                            shadowed = true;
                        } else if size_param.as_deref() != Some(name) && !binds(param) {
                            *body = subst(body, name, v);
                        }
                    }
                    DecKind::Type { .. } | DecKind::Datatype { .. } => {}
                }
                out.push(d2);
            }
            let body = if shadowed { (**body).clone() } else { subst(body, name, v) };
            ExprKind::Let(out, Box::new(body))
        }
        ExprKind::Case(s, arms) => ExprKind::Case(
            Box::new(subst(s, name, v)),
            arms.iter().map(|(p, b)| (p.clone(), if binds(p) { b.clone() } else { subst(b, name, v) })).collect(),
        ),
        ExprKind::ArrayGen { size, var, body } => ExprKind::ArrayGen {
            size: Box::new(subst(size, name, v)),
            var: var.clone(),
            body: if var == name { body.clone() } else { Box::new(subst(body, name, v)) },
        },
        _ => {
            let mut out = e.clone();
            for_each_child(&mut out, &mut |x| *x = subst(x, name, v), &mut |_| {}, &mut |_| {});
            return out;
        }
    };
    Expr { kind, span: e.span, ty: e.ty.clone() }
}

// ----------------------------------------------------------------------
// Typing of intermediate terms

fn clear_pattern(p: &mut Pattern) {
    p.ty = TySlot::Placeholder;
    match &mut p.kind {
        PatKind::Ctor { arg: Some(a), .. } => clear_pattern(a),
        PatKind::Record { fields, .. } => fields.iter_mut().for_each(|(_, p)| clear_pattern(p)),
        PatKind::Tuple { items, .. } | PatKind::List(items) => items.iter_mut().for_each(clear_pattern),
        PatKind::Cons(a, b) => {
            clear_pattern(a);
            clear_pattern(b);
        }
        _ => {}
    }
}

fn clear_dec(d: &mut Dec) {
    match &mut d.kind {
        DecKind::Val { ty, expr, .. } => {
            *ty = TySlot::Placeholder;
            clear_slots(expr);
        }
        DecKind::Fun { ty, params, body, .. } => {
            *ty = TySlot::Placeholder;
            params.iter_mut().for_each(clear_pattern);
            clear_slots(body);
        }
        DecKind::Module { ty, param, body, .. } => {
            *ty = TySlot::Placeholder;
            clear_pattern(param);
            clear_slots(body);
        }
        DecKind::Datatype { def, .. } => *def = None,
        DecKind::Type { .. } => {}
    }
}

/// Resets every inferred slot so the term can be inferred afresh.
pub fn clear_slots(e: &mut Expr) {
    e.ty = TySlot::Placeholder;
    for_each_child(e, &mut clear_slots, &mut clear_dec, &mut clear_pattern);
}

/// Types of allocated locations, extended at each allocation.
#[derive(Clone, Debug, Default)]
pub struct StoreTyping {
    pub refs: Vec<SType>,
    pub wraps: Vec<HType>,
}

fn fresh_map(inf: &mut Infer, metas: Vec<crate::types::MetaOcc>) -> HashMap<MetaId, MetaId> {
    metas.into_iter().map(|o| (o.id, inf.gen.fresh(o.kind))).collect()
}

/// Inference context whose location types use its own fresh metavariables.
fn typing_context(typing: &StoreTyping) -> Infer {
    let mut inf = Infer::new();
    for (i, t) in typing.refs.iter().enumerate() {
        let map = fresh_map(&mut inf, free_metas(&SemType::Sw(t.clone())));
        inf.store_types.insert(i as u32, map_s(t, &mut Rename(&map), &mut Vec::new()));
    }
    for (i, t) in typing.wraps.iter().enumerate() {
        let map = fresh_map(&mut inf, free_metas(&SemType::Hw(t.clone())));
        inf.wrap_types.insert(i as u32, map_h(t, &mut Rename(&map), &mut Vec::new()));
    }
    inf
}

/// Infers the type of a closed term under a store typing.
pub fn type_of(t: &Expr, typing: &StoreTyping) -> Result<SemType, String> {
    let mut e = t.clone();
    clear_slots(&mut e);
    let mut inf = typing_context(typing);
    let ty = inf.infer_and_check(&mut e);
    match inf.diags.iter().find(|d| d.is_error()) {
        Some(d) => Err(d.message.clone()),
        None => Ok(ty),
    }
}

/// True if the term can be given type `expected` under the store typing.
pub fn has_type(t: &Expr, expected: &SemType, typing: &StoreTyping) -> Result<(), String> {
    let mut e = t.clone();
    clear_slots(&mut e);
    let mut inf = typing_context(typing);
    let found = inf.infer_and_check(&mut e);
    if let Some(d) = inf.diags.iter().find(|d| d.is_error()) {
        return Err(d.message.clone());
    }
    let map = fresh_map(&mut inf, free_metas(expected));
    let expected = map_sem(expected, &mut Rename(&map), &mut Vec::new());
    unify(&expected, &found, &inf.sigma)
        .map(|_| ())
        .map_err(|e| format!("expected {}, found {}: {}", render(&expected), inf.render(&found), e.message))
}

// ----------------------------------------------------------------------
// Observable results, for comparing with the big-step evaluator

#[derive(Clone, Debug, PartialEq)]
pub enum Observed {
    Int(i32),
    Real(u64),
    Str(String),
    List(Vec<Observed>),
    Record(Vec<(String, Observed)>),
    Ref(Box<Observed>),
    Wrap(Box<Observed>),
    /// Flat hardware bits, least significant first.
    Bits(Vec<u8>),
    Ctor(String, Option<Box<Observed>>),
    Function,
}

fn hw_bits(v: &Expr) -> Option<Vec<u8>> {
    match &v.kind {
        ExprKind::Bit(b) => Some(vec![*b]),
        ExprKind::ArrayLit(xs) => xs.iter().map(hw_bits).collect::<Option<Vec<_>>>().map(|v| v.concat()),
        ExprKind::HwRecord(fs) => fs.iter().rev().map(|(_, x)| hw_bits(x)).collect::<Option<Vec<_>>>().map(|v| v.concat()),
        _ => None,
    }
}

/// Observable form of a small-step value.
pub fn observe_term(v: &Expr, st: &Stores) -> Option<Observed> {
    use ExprKind as K;
    Some(match &v.kind {
        K::Int(n) => Observed::Int(*n),
        K::Real(r) => Observed::Real(r.to_bits()),
        K::Str(s) => Observed::Str(s.clone()),
        K::Bit(_) | K::ArrayLit(_) | K::HwRecord(_) => Observed::Bits(hw_bits(v)?),
        K::List(xs) => Observed::List(xs.iter().map(|x| observe_term(x, st)).collect::<Option<_>>()?),
        K::Record(fs) => Observed::Record(fs.iter().map(|(l, x)| Some((l.clone(), observe_term(x, st)?))).collect::<Option<_>>()?),
        K::Loc(l) => Observed::Ref(Box::new(observe_term(st.refs.get(*l as usize)?, st)?)),
        K::WrapLoc(w) => Observed::Wrap(Box::new(observe_term(st.wraps.get(*w as usize)?, st)?)),
        K::Lambda { .. } => Observed::Function,
        K::Var { name, ctor: Some(_) } => Observed::Ctor(name.clone(), None),
        K::App(f, x) => match &f.kind {
            K::Var { name, ctor: Some(_) } => Observed::Ctor(name.clone(), Some(Box::new(observe_term(x, st)?))),
            _ => return None,
        },
        _ => return None,
    })
}

/// Observable form of a big-step value.
pub fn observe_value(v: &Value<'_>, ev: &Evaluator<'_>) -> Option<Observed> {
    Some(match v {
        Value::Int(n) => Observed::Int(*n),
        Value::Real(r) => Observed::Real(r.to_bits()),
        Value::Str(s) => Observed::Str(s.to_string()),
        Value::List(_) => Observed::List(v.list_items()?.iter().map(|x| observe_value(x, ev)).collect::<Option<_>>()?),
        Value::Record(fs) => Observed::Record(fs.iter().map(|(l, x)| Some((l.clone(), observe_value(x, ev)?))).collect::<Option<_>>()?),
        Value::Ref(l) => Observed::Ref(Box::new(observe_value(ev.store.get(*l)?, ev)?)),
        Value::SwWrap(x) => Observed::Wrap(Box::new(observe_value(x, ev)?)),
        Value::Hw(id) => {
            let n = Netlist { nodes: ev.builder.nodes.clone(), inputs: Vec::new(), output: *id }.compact();
            let out = crate::netsim::simulate(&n, &[vec![]]).ok()?;
            Observed::Bits(out.into_iter().next()?)
        }
        Value::Data(d) => {
            Observed::Ctor(d.info.name.clone(), match &d.payload {
                Some(p) => Some(Box::new(observe_value(p, ev)?)),
                None => None,
            })
        }
        Value::Ctor(info) => Observed::Ctor(info.name.clone(), None),
        Value::Closure(_) | Value::Prim(_) | Value::Module(_) => Observed::Function,
        Value::GenArray(..) => return None,
    })
}

/// Big-step result of a closed, inferred term.
pub fn big_step(t: &Expr) -> Result<Observed, String> {
    let mut ev = Evaluator::new();
    let env = Evaluator::initial_env();
    let v = ev.eval(t, &env).map_err(|d| d.message)?;
    observe_value(&v, &ev).ok_or_else(|| "value has no observable form".into())
}

// ----------------------------------------------------------------------
// Safety driver

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Value(Observed),
    Stuck(String),
    FuelExhausted,
}

#[derive(Clone, Debug)]
pub struct SafetyReport {
    pub steps: usize,
    pub outcome: Outcome,
    /// Steps after which the term no longer had the original type.
    pub preservation_violations: Vec<String>,
    /// Root rule of each step's derivation.
    pub rules: Vec<&'static str>,
    /// Rule applied at the redex of each step.
    pub axioms: Vec<&'static str>,
}

impl SafetyReport {
    pub fn is_safe(&self) -> bool {
        !matches!(self.outcome, Outcome::Stuck(_)) && self.preservation_violations.is_empty()
    }
}

/// Iterates small steps from `t`, checking progress and preservation at each one.
pub fn check_safety(t: &Expr, ty: &SemType, fuel: usize) -> SafetyReport {
    let mut st = Stores::default();
    let mut typing = StoreTyping::default();
    let mut cur = t.clone();
    let mut rules = Vec::new();
    let mut axioms = Vec::new();
    let mut violations = Vec::new();
    for n in 0..fuel {
        let (refs, wraps) = (st.refs.len(), st.wraps.len());
        match small_step(&cur, &mut st) {
            StepResult::IsValue => {
                let outcome = match observe_term(&cur, &st) {
                    Some(o) => Outcome::Value(o),
                    None => Outcome::Stuck("value has no observable form".into()),
                };
                return SafetyReport { steps: n, outcome, preservation_violations: violations, rules, axioms };
            }
            StepResult::Stuck(why) => {
                return SafetyReport { steps: n, outcome: Outcome::Stuck(why), preservation_violations: violations, rules, axioms };
            }
            StepResult::Next { term, rule, axiom } => {
                rules.push(rule);
                axioms.push(axiom);
                for l in refs..st.refs.len() {
                    match type_of(&st.refs[l], &typing) {
                        Ok(SemType::Sw(s)) => typing.refs.push(s),
                        Ok(other) => violations.push(format!("step {}: stored a non-software value of type {}", n + 1, render(&other))),
                        Err(m) => violations.push(format!("step {}: stored value is ill-typed: {}", n + 1, m)),
                    }
                }
                for w in wraps..st.wraps.len() {
                    match type_of(&st.wraps[w], &typing) {
                        Ok(SemType::Hw(h)) => typing.wraps.push(h),
                        Ok(other) => violations.push(format!("step {}: wrapped a non-hardware value of type {}", n + 1, render(&other))),
                        Err(m) => violations.push(format!("step {}: wrapped value is ill-typed: {}", n + 1, m)),
                    }
                }
                if axiom == "E-ASSIGN" {
                    for (l, v) in st.refs.iter().enumerate() {
                        if let Some(t) = typing.refs.get(l) {
                            if let Err(m) = has_type(v, &SemType::Sw(t.clone()), &typing) {
                                violations.push(format!("step {} ({}): location {} no longer fits its type: {}", n + 1, rule, l, m));
                            }
                        }
                    }
                }
                if let Err(m) = has_type(&term, ty, &typing) {
                    violations.push(format!("step {} ({}): {}", n + 1, rule, m));
                }
                cur = term;
            }
        }
    }
    SafetyReport { steps: fuel, outcome: Outcome::FuelExhausted, preservation_violations: violations, rules, axioms }
}

/// Rules whose left-hand side fits the term at the top level; at most one for determinacy.
pub fn applicable_rules(t: &Expr, st: &Stores) -> Vec<&'static str> {
    let v = is_value;
    let mut out = Vec::new();
    let mut push = |cond: bool, r: &'static str| {
        if cond {
            out.push(r)
        }
    };
    match &t.kind {
        ExprKind::App(f, a) => {
            push(!v(f), "E-APP1");
            push(v(f) && !v(a), "E-APP2/E-DATATY");
            push(matches!(f.kind, ExprKind::Lambda { .. }) && v(a), "E-APPABS");
        }
        ExprKind::If(c, ..) => {
            push(!v(c), "E-IFELSE");
            push(matches!(c.kind, ExprKind::Int(n) if n != 0), "E-IFELSE-T");
            push(matches!(c.kind, ExprKind::Int(0)), "E-IFELSE-F");
        }
        ExprKind::Binary(op, a, b) => {
            push(!v(a), binary_rule(*op, true));
            push(v(a) && !v(b), binary_rule(*op, false));
            push(v(a) && v(b), "E-BINOP");
        }
        ExprKind::Unary(op, a) => {
            push(!v(a), "E-UNARY1");
            push(v(a) && *op == UnOp::Deref && matches!(a.kind, ExprKind::Loc(l) if (l as usize) < st.refs.len()), "E-DEREFLOC");
            push(v(a) && *op != UnOp::Deref, "E-UNARY");
        }
        ExprKind::Ref(a) => {
            push(!v(a), "E-REF");
            push(v(a), "E-REFV");
        }
        ExprKind::Sw(a) => {
            push(!v(a), "E-SW");
            push(v(a), "E-SWV");
        }
        ExprKind::Unsw(a) => {
            push(!v(a), "E-UNSW");
            push(matches!(a.kind, ExprKind::WrapLoc(_)), "E-UNSWWRAP");
        }
        ExprKind::Proj(_, a) => {
            push(!v(a), "E-PROJ");
            push(v(a) && matches!(a.kind, ExprKind::Record(_) | ExprKind::HwRecord(_)), "E-PROJ-RCD");
        }
        ExprKind::Index(a, i) => {
            push(!v(a), "E-ARR-ACC0");
            push(v(a) && !v(i), "E-ARR-ACC1");
            push(v(a) && v(i), "E-ARR-ACC");
        }
        ExprKind::Case(s, _) => {
            push(!v(s), "E-CASE");
            push(v(s), "E-CASE-TY");
        }
        ExprKind::Let(decs, _) => {
            let first = decs.iter().find(|d| !matches!(d.kind, DecKind::Type { .. } | DecKind::Datatype { .. }));
            match first.map(|d| &d.kind) {
                Some(DecKind::Val { expr, .. }) => {
                    push(!v(expr), "E-LET");
                    push(v(expr), "E-LETV");
                }
                Some(DecKind::Fun { .. }) => push(true, "E-LETV"),
                Some(_) => {}
                None => push(true, "E-LETBODY"),
            }
        }
        ExprKind::Seq(xs) => {
            push(xs.len() <= 1, "E-SEQ");
            push(xs.len() > 1 && !v(&xs[0]), "E-SEQ1");
            push(xs.len() > 1 && v(&xs[0]), "E-SEQNEXT");
        }
        ExprKind::Record(fs) | ExprKind::HwRecord(fs) => push(fs.iter().any(|(_, x)| !v(x)), "E-RCD"),
        ExprKind::List(xs) => push(xs.iter().any(|x| !v(x)), "E-LIST"),
        ExprKind::ArrayLit(xs) => push(xs.iter().any(|x| !v(x)), "E-ARR"),
        _ => {}
    }
    out
}

// ----------------------------------------------------------------------
// Generator

#[derive(Clone, Debug, PartialEq)]
enum GTy {
    Int,
    Real,
    Str,
    Unit,
    List(Box<GTy>),
    Rec(Vec<(String, GTy)>),
    Ref(Box<GTy>),
    Fun(Box<GTy>, Box<GTy>),
    /// `bit sw`, or `bit[n] sw` for n > 0.
    Wire(u32),
}

impl GTy {
    fn sem(&self) -> SType {
        match self {
            GTy::Int => SType::Int,
            GTy::Real => SType::Real,
            GTy::Str => SType::String,
            GTy::Unit => SType::unit(),
            GTy::List(t) => SType::list(t.sem()),
            GTy::Rec(fs) => SType::Record(fs.iter().map(|(l, t)| (l.clone(), t.sem())).collect()),
            GTy::Ref(t) => SType::Ref(Box::new(t.sem())),
            GTy::Fun(a, b) => SType::arrow(a.sem(), b.sem()),
            GTy::Wire(0) => SType::Sw(Box::new(HType::Bit)),
            GTy::Wire(n) => SType::Sw(Box::new(HType::bits(*n))),
        }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    next_name: usize,
}

fn bx(e: Expr) -> Box<Expr> {
    Box::new(e)
}

fn var(name: &str) -> Expr {
    Expr::var(name, Span::default())
}

fn pvar(name: &str) -> Pattern {
    Pattern::new(PatKind::Var { name: name.to_string(), ann: None }, Span::default())
}

impl Gen {
    fn name(&mut self, prefix: &str) -> String {
        self.next_name += 1;
        format!("{}{}", prefix, self.next_name)
    }

    fn pick<T: Clone>(&mut self, xs: &[T]) -> T {
        xs[self.rng.gen_range(0..xs.len())].clone()
    }

    fn small_ty(&mut self, depth: u32) -> GTy {
        let base = [GTy::Int, GTy::Int, GTy::Real, GTy::Str, GTy::Unit, GTy::Wire(0)];
        if depth <= 1 {
            return self.pick(&base);
        }
        match self.rng.gen_range(0..10) {
            0 => GTy::List(Box::new(self.small_ty(depth - 1))),
            1 => GTy::Rec(vec![("1".into(), self.small_ty(depth - 1)), ("2".into(), self.small_ty(depth - 1))]),
            2 => GTy::Ref(Box::new(self.pick(&[GTy::Int, GTy::Str, GTy::Real]))),
            3 => GTy::Fun(Box::new(self.small_ty(depth - 1)), Box::new(self.small_ty(depth - 1))),
            4 => GTy::Wire(self.rng.gen_range(2..4)),
            _ => self.pick(&base),
        }
    }

    fn literal(&mut self, ty: &GTy, env: &[(String, GTy)]) -> Expr {
        match ty {
            GTy::Int => mk(ExprKind::Int(self.rng.gen_range(0..10))),
            GTy::Real => mk(ExprKind::Real(self.rng.gen_range(0..8) as f64 * 0.5)),
            GTy::Str => mk(ExprKind::Str(self.pick(&["", "a", "bc", "gem"]).to_string())),
            GTy::Unit => unit(),
            GTy::List(t) => {
                let n = self.rng.gen_range(0..3);
                mk(ExprKind::List((0..n).map(|_| self.literal(t, env)).collect()))
            }
            GTy::Rec(fs) => mk(ExprKind::Record(fs.iter().map(|(l, t)| (l.clone(), self.literal(t, env))).collect())),
            GTy::Ref(t) => {
                let init = self.literal(t, env);
                mk(ExprKind::Ref(bx(init)))
            }
            GTy::Fun(a, b) => {
                let x = self.name("x");
                let mut env2 = env.to_vec();
                env2.push((x.clone(), (**a).clone()));
                let body = self.leaf(b, &env2);
                mk(ExprKind::Lambda { name: None, param: pvar(&x), body: bx(body) })
            }
            GTy::Wire(n) => mk(ExprKind::Sw(bx(self.hw_literal(*n)))),
        }
    }

    fn hw_literal(&mut self, n: u32) -> Expr {
        let bit = |g: &mut Gen| mk(ExprKind::Bit(g.rng.gen_range(0..2)));
        if n == 0 {
            bit(self)
        } else {
            mk(ExprKind::ArrayLit((0..n).map(|_| bit(self)).collect()))
        }
    }

    fn leaf(&mut self, ty: &GTy, env: &[(String, GTy)]) -> Expr {
        let vars: Vec<&String> = env.iter().filter(|(_, t)| t == ty).map(|(n, _)| n).collect();
        if !vars.is_empty() && self.rng.gen_bool(0.5) {
            let n = vars[self.rng.gen_range(0..vars.len())].clone();
            return var(&n);
        }
        self.literal(ty, env)
    }

    /// Hardware term of width `n` (0 = single bit) built from constants and unwrapped values.
    fn hw(&mut self, n: u32, depth: u32, env: &[(String, GTy)]) -> Expr {
        if depth <= 1 {
            return self.hw_literal(n);
        }
        let d = depth - 1;
        match self.rng.gen_range(0..7) {
            0 => mk(ExprKind::Unary(UnOp::BitNot, bx(self.hw(n, d, env)))),
            1..=3 => {
                let op = self.pick(&[BinOp::And, BinOp::Or, BinOp::Xor]);
                mk(ExprKind::Binary(op, bx(self.hw(n, d, env)), bx(self.hw(n, d, env))))
            }
            4 => mk(ExprKind::Unsw(bx(self.expr(&GTy::Wire(n), d, env)))),
            5 if n == 0 => {
                let len = self.rng.gen_range(2..4);
                let k = self.rng.gen_range(0..len);
                mk(ExprKind::Index(bx(self.hw(len, d, env)), bx(mk(ExprKind::Int(k as i32)))))
            }
            6 if n == 0 => {
                let op = self.pick(&[UnOp::AndReduce, UnOp::OrReduce, UnOp::XorReduce]);
                let len = self.rng.gen_range(2..4);
                mk(ExprKind::Unary(op, bx(self.hw(len, d, env))))
            }
            _ => self.hw_literal(n),
        }
    }

    fn expr(&mut self, ty: &GTy, depth: u32, env: &[(String, GTy)]) -> Expr {
        if depth <= 1 {
            return self.leaf(ty, env);
        }
        let d = depth - 1;
        match self.rng.gen_range(0..16) {
            0 => {
                let c = self.expr(&GTy::Int, d, env);
                mk(ExprKind::If(bx(c), bx(self.expr(ty, d, env)), Some(bx(self.expr(ty, d, env)))))
            }
            1 => {
                let t2 = self.small_ty(2);
                let x = self.name("v");
                let bound = self.expr(&t2, d, env);
                let mut env2 = env.to_vec();
                env2.push((x.clone(), t2));
                let body = self.expr(ty, d, &env2);
                let dec = Dec { kind: DecKind::Val { name: x, ann: None, ty: TySlot::Placeholder, expr: bound }, span: Span::default() };
                mk(ExprKind::Let(vec![dec], bx(body)))
            }
            2 => {
                let a = self.small_ty(2);
                let (f, x) = (self.name("f"), self.name("x"));
                let mut inner = env.to_vec();
                inner.push((x.clone(), a.clone()));
                let fbody = self.expr(ty, d, &inner);
                let mut outer = env.to_vec();
                outer.push((f.clone(), GTy::Fun(Box::new(a.clone()), Box::new(ty.clone()))));
                let arg = self.expr(&a, d, &outer);
                let body = mk(ExprKind::App(bx(var(&f)), bx(arg)));
                let dec = Dec {
                    kind: DecKind::Fun { name: f, params: vec![pvar(&x)], ret: None, ty: TySlot::Placeholder, body: fbody },
                    span: Span::default(),
                };
                mk(ExprKind::Let(vec![dec], bx(body)))
            }
            3 => {
                let a = self.small_ty(2);
                let f = self.expr(&GTy::Fun(Box::new(a.clone()), Box::new(ty.clone())), d, env);
                mk(ExprKind::App(bx(f), bx(self.expr(&a, d, env))))
            }
            4 => {
                let s = self.expr(&GTy::Int, d, env);
                let k = self.rng.gen_range(0..3);
                let y = self.name("n");
                let mut env2 = env.to_vec();
                env2.push((y.clone(), GTy::Int));
                let arms = vec![
                    (Pattern::new(PatKind::Int(k), Span::default()), self.expr(ty, d, env)),
                    (pvar(&y), self.expr(ty, d, &env2)),
                ];
                mk(ExprKind::Case(bx(s), arms))
            }
            5 => {
                let e = self.small_ty(1);
                let s = self.expr(&GTy::List(Box::new(e.clone())), d, env);
                let (h, t) = (self.name("h"), self.name("t"));
                let mut env2 = env.to_vec();
                env2.push((h.clone(), e.clone()));
                env2.push((t.clone(), GTy::List(Box::new(e))));
                let cons = Pattern::new(PatKind::Cons(Box::new(pvar(&h)), Box::new(pvar(&t))), Span::default());
                let arms = vec![
                    (Pattern::new(PatKind::List(Vec::new()), Span::default()), self.expr(ty, d, env)),
                    (cons, self.expr(ty, d, &env2)),
                ];
                mk(ExprKind::Case(bx(s), arms))
            }
            6 => {
                let other = self.small_ty(1);
                let (rec, label) = if self.rng.gen_bool(0.5) {
                    (GTy::Rec(vec![("1".into(), ty.clone()), ("2".into(), other)]), "1")
                } else {
                    (GTy::Rec(vec![("a".into(), other), ("b".into(), ty.clone())]), "b")
                };
                let label = label.to_string();
                mk(ExprKind::Proj(label, bx(self.expr(&rec, d, env))))
            }
            7 if matches!(ty, GTy::Int | GTy::Str | GTy::Real) => {
                mk(ExprKind::Unary(UnOp::Deref, bx(self.expr(&GTy::Ref(Box::new(ty.clone())), d, env))))
            }
            8 => {
                let t2 = self.pick(&[GTy::Int, GTy::Str, GTy::Real]);
                let r = self.expr(&GTy::Ref(Box::new(t2.clone())), d, env);
                let assign = mk(ExprKind::Binary(BinOp::Assign, bx(r), bx(self.expr(&t2, d, env))));
                mk(ExprKind::Seq(vec![assign, self.expr(ty, d, env)]))
            }
            _ => self.specific(ty, d, env),
        }
    }

    /// Forms particular to the result type.
    fn specific(&mut self, ty: &GTy, d: u32, env: &[(String, GTy)]) -> Expr {
        let bin = |op, a: Expr, b: Expr| mk(ExprKind::Binary(op, bx(a), bx(b)));
        match ty {
            GTy::Int => match self.rng.gen_range(0..7) {
                0 | 1 => {
                    let op = self.pick(&[BinOp::Add, BinOp::Sub]);
                    bin(op, self.expr(&GTy::Int, d, env), self.expr(&GTy::Int, d, env))
                }
                2 => bin(BinOp::Mul, self.expr(&GTy::Int, d, env), mk(ExprKind::Int(self.rng.gen_range(0..4)))),
                3 => {
                    let op = self.pick(&[BinOp::Div, BinOp::Mod]);
                    bin(op, self.expr(&GTy::Int, d, env), mk(ExprKind::Int(self.rng.gen_range(1..10))))
                }
                4 => mk(ExprKind::Unary(UnOp::Neg, bx(self.expr(&GTy::Int, d, env)))),
                5 => {
                    let t = self.pick(&[GTy::Int, GTy::Real, GTy::Str]);
                    let op = self.pick(&[BinOp::Lt, BinOp::Gt, BinOp::Le, BinOp::Ge]);
                    bin(op, self.expr(&t, d, env), self.expr(&t, d, env))
                }
                _ => {
                    let t = self.pick(&[GTy::Int, GTy::Str]);
                    let op = self.pick(&[BinOp::Eq, BinOp::Ne]);
                    bin(op, self.expr(&t, d, env), self.expr(&t, d, env))
                }
            },
            GTy::Real => {
                let op = self.pick(&[BinOp::RAdd, BinOp::RSub, BinOp::RMul]);
                if self.rng.gen_bool(0.2) {
                    return mk(ExprKind::Unary(UnOp::Neg, bx(self.expr(ty, d, env))));
                }
                bin(op, self.expr(ty, d, env), self.expr(ty, d, env))
            }
            GTy::List(t) => bin(BinOp::Cons, self.expr(t, d, env), self.expr(ty, d, env)),
            GTy::Rec(fs) => mk(ExprKind::Record(fs.iter().map(|(l, t)| (l.clone(), self.expr(t, d, env))).collect())),
            GTy::Ref(t) => mk(ExprKind::Ref(bx(self.expr(t, d, env)))),
            GTy::Unit => {
                let t2 = self.pick(&[GTy::Int, GTy::Str]);
                let r = self.expr(&GTy::Ref(Box::new(t2.clone())), d, env);
                bin(BinOp::Assign, r, self.expr(&t2, d, env))
            }
            GTy::Fun(a, b) => {
                let x = self.name("x");
                let mut env2 = env.to_vec();
                env2.push((x.clone(), (**a).clone()));
                let body = self.expr(b, d, &env2);
                mk(ExprKind::Lambda { name: None, param: pvar(&x), body: bx(body) })
            }
            GTy::Wire(n) => mk(ExprKind::Sw(bx(self.hw(*n, d, env)))),
            GTy::Str => self.leaf(ty, env),
        }
    }
}

/// A closed term of the returned type, inferred and ready for either evaluator.
pub fn gen_well_typed(seed: u64, depth: u32) -> (Expr, SemType) {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), next_name: 0 };
    let depth = depth.max(1);
    let ty = g.small_ty(depth.min(3));
    let mut e = g.expr(&ty, depth, &[]);
    let mut inf = Infer::new();
    inf.infer_and_check(&mut e);
    (e, SemType::Sw(ty.sem()))
}

/// Checks that a term is accepted by inference at exactly the given type.
pub fn infer_accepts(e: &Expr, ty: &SemType) -> Result<(), String> {
    has_type(e, ty, &StoreTyping::default())
}

#[derive(Clone, Debug, Default)]
pub struct CorpusSummary {
    pub terms: usize,
    pub values: usize,
    pub fuel_exhausted: usize,
    pub stuck: Vec<(u64, String)>,
    pub preservation: Vec<(u64, String)>,
    pub infer_rejections: Vec<(u64, String)>,
    pub big_step_mismatches: Vec<(u64, String)>,
    pub nondeterministic: Vec<(u64, String)>,
    pub steps: usize,
}

impl CorpusSummary {
    pub fn ok(&self) -> bool {
        self.stuck.is_empty()
            && self.preservation.is_empty()
            && self.infer_rejections.is_empty()
            && self.big_step_mismatches.is_empty()
            && self.nondeterministic.is_empty()
    }

    fn merge(mut self, o: CorpusSummary) -> CorpusSummary {
        self.terms += o.terms;
        self.values += o.values;
        self.fuel_exhausted += o.fuel_exhausted;
        self.steps += o.steps;
        self.stuck.extend(o.stuck);
        self.preservation.extend(o.preservation);
        self.infer_rejections.extend(o.infer_rejections);
        self.big_step_mismatches.extend(o.big_step_mismatches);
        self.nondeterministic.extend(o.nondeterministic);
        self
    }
}

fn check_seed(seed: u64, depth: u32, fuel: usize) -> CorpusSummary {
    let mut s = CorpusSummary { terms: 1, ..CorpusSummary::default() };
    let (e, ty) = gen_well_typed(seed, depth);
    if let Err(m) = infer_accepts(&e, &ty) {
        s.infer_rejections.push((seed, m));
        return s;
    }
    // Determinacy: replay the trace and count the rules that fit each intermediate term.
    let mut st = Stores::default();
    let mut cur = e.clone();
    for _ in 0..fuel {
        let fits = applicable_rules(&cur, &st);
        if fits.len() > 1 {
            s.nondeterministic.push((seed, fits.join(", ")));
            break;
        }
        match small_step(&cur, &mut st) {
            StepResult::Next { term, .. } => cur = term,
            _ => break,
        }
    }
    let r = check_safety(&e, &ty, fuel);
    s.steps = r.steps;
    for v in r.preservation_violations {
        s.preservation.push((seed, v));
    }
    match r.outcome {
        Outcome::Stuck(m) => s.stuck.push((seed, m)),
        Outcome::FuelExhausted => s.fuel_exhausted += 1,
        Outcome::Value(small) => {
            s.values += 1;
            match big_step(&e) {
                Ok(big) if big == small => {}
                Ok(big) => s.big_step_mismatches.push((seed, format!("small-step {:?}, big-step {:?}", small, big))),
                Err(m) => s.big_step_mismatches.push((seed, format!("big-step failed: {}", m))),
            }
        }
    }
    s
}

/// Runs the safety checks over generated terms for `seeds`, in parallel.
pub fn check_corpus(seeds: std::ops::Range<u64>, depth: u32, fuel: usize) -> CorpusSummary {
    use rayon::prelude::*;
    seeds.into_par_iter().map(|s| check_seed(s, depth, fuel)).reduce(CorpusSummary::default, CorpusSummary::merge)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parsed(src: &str) -> (Expr, SemType) {
        let (e, t, inf) = crate::infer::infer_source(src).unwrap();
        assert_eq!(inf.error_count(), 0, "{:?}", inf.diags);
        (e, t)
    }

    fn trace(src: &str) -> SafetyReport {
        let (e, t) = parsed(src);
        let r = check_safety(&e, &t, DEFAULT_FUEL);
        assert!(r.preservation_violations.is_empty(), "{:?}", r.preservation_violations);
        r
    }

    #[test]
    fn arithmetic_trace() {
        let r = trace("1 + 2 * 3");
        assert_eq!(r.rules, vec!["E-INT-ADD2", "E-INT-ADD"]);
        assert_eq!(r.axioms, vec!["E-INT-MUL", "E-INT-ADD"]);
        assert_eq!(r.outcome, Outcome::Value(Observed::Int(7)));
    }

    #[test]
    fn guard_steps_first() {
        let (e, _) = parsed("if 1 + 0 then (if 1 then \"a\" else \"b\") else \"c\"");
        let mut st = Stores::default();
        let StepResult::Next { term, rule, .. } = small_step(&e, &mut st) else { panic!() };
        assert_eq!(rule, "E-IFELSE");
        assert!(matches!(&term.kind, ExprKind::If(c, ..) if matches!(c.kind, ExprKind::Int(1))));
    }

    #[test]
    fn beta() {
        let r = trace("(let fun id (x : int) = x in id end) 5");
        assert_eq!(r.rules.last(), Some(&"E-APPABS"));
        assert_eq!(r.outcome, Outcome::Value(Observed::Int(5)));
        let (e, _) = parsed("5");
        assert!(matches!(small_step(&e, &mut Stores::default()), StepResult::IsValue));
    }

    #[test]
    fn references_keep_their_types() {
        let r = trace("let val r = ref 1 in (r := $r + 41; $r) end");
        for rule in ["E-REFV", "E-ASSIGN", "E-DEREFLOC"] {
            assert!(r.axioms.contains(&rule), "{:?}", r.axioms);
        }
        assert_eq!(r.outcome, Outcome::Value(Observed::Int(42)));
    }

    #[test]
    fn wrapped_hardware() {
        let r = trace("sw (!(unsw (sw 'b:1)) ^ 'b:1)");
        assert!(r.axioms.contains(&"E-UNSWWRAP"), "{:?}", r.axioms);
        assert_eq!(r.outcome, Outcome::Value(Observed::Wrap(Box::new(Observed::Bits(vec![1])))));
    }

    #[test]
    fn ill_typed_terms_get_stuck() {
        let e = mk(ExprKind::App(bx(mk(ExprKind::Int(1))), bx(mk(ExprKind::Int(2)))));
        assert!(matches!(small_step(&e, &mut Stores::default()), StepResult::Stuck(_)));
    }

    #[test]
    fn generator_contract() {
        let (e, _) = gen_well_typed(0, 1);
        assert!(is_value(&e) || matches!(e.kind, ExprKind::Sw(_) | ExprKind::Ref(_)), "{:?}", e.kind);
        let s = check_corpus(0..100, 6, DEFAULT_FUEL);
        assert!(s.ok(), "{:#?}", s);
    }
}
