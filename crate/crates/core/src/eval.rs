//! Stage-one evaluation: reduces software to values and stages hardware
//! expressions into a shared netlist builder. The top-level module is then
//! expanded with one input pin per parameter variable.

use crate::ast::*;
use crate::diag::{Diagnostic, ErrorKind, Span};
use crate::hw::{GateOp, NetBuilder, Netlist, NodeId, ShiftKind};
use crate::types::{render_h, HType, Label, SemType, Size};
use std::cell::RefCell;
use std::fmt;
use std::path::PathBuf;
use std::rc::Rc;

#[derive(Debug)]
pub struct ListNode<'a> {
    pub head: Value<'a>,
    pub tail: List<'a>,
}

pub type List<'a> = Option<Rc<ListNode<'a>>>;

#[derive(Debug)]
pub struct DataVal<'a> {
    pub info: Rc<CtorInfo>,
    pub payload: Option<Value<'a>>,
}

#[derive(Debug)]
pub struct Closure<'a> {
    /// Bound to the closure itself inside the body.
    pub self_name: Option<&'a str>,
    pub params: &'a [Pattern],
    pub body: &'a Expr,
    pub env: Env<'a>,
    pub args: Vec<Value<'a>>,
}

#[derive(Debug)]
pub struct ModClosure<'a> {
    pub name: &'a str,
    pub size_param: Option<&'a str>,
    /// Size argument once `<: n :>` has been applied.
    pub size: Option<i32>,
    pub param: &'a Pattern,
    pub ret: Option<&'a AstTy>,
    pub body: &'a Expr,
    pub env: Env<'a>,
}

#[derive(Debug)]
pub enum ModVal<'a> {
    User(ModClosure<'a>),
    TwosComp,
    Dff,
}

#[derive(Debug)]
pub struct PrimApp<'a> {
    pub name: &'static str,
    pub arity: usize,
    pub args: Vec<Value<'a>>,
}

#[derive(Clone, Debug)]
pub enum Value<'a> {
    Int(i32),
    Real(f64),
    Str(Rc<str>),
    List(List<'a>),
    Record(Rc<Vec<(Label, Value<'a>)>>),
    Ref(usize),
    SwWrap(Rc<Value<'a>>),
    Hw(NodeId),
    /// Hardware array still being generated; only indexing is allowed.
    GenArray(Rc<RefCell<Vec<NodeId>>>, usize),
    Data(Rc<DataVal<'a>>),
    Ctor(Rc<CtorInfo>),
    Closure(Rc<Closure<'a>>),
    Prim(Rc<PrimApp<'a>>),
    Module(Rc<ModVal<'a>>),
}

impl<'a> Value<'a> {
    pub fn unit() -> Value<'a> {
        Value::Record(Rc::new(Vec::new()))
    }

    pub fn tuple(items: Vec<Value<'a>>) -> Value<'a> {
        Value::Record(Rc::new(items.into_iter().enumerate().map(|(i, v)| ((i + 1).to_string(), v)).collect()))
    }

    pub fn list(items: Vec<Value<'a>>) -> Value<'a> {
        let mut l: List<'a> = None;
        for v in items.into_iter().rev() {
            l = Some(Rc::new(ListNode { head: v, tail: l }));
        }
        Value::List(l)
    }

    pub fn str(s: &str) -> Value<'a> {
        Value::Str(Rc::from(s))
    }

    /// Elements of a list value.
    pub fn list_items(&self) -> Option<Vec<Value<'a>>> {
        let Value::List(mut l) = self.clone() else { return None };
        let mut out = Vec::new();
        while let Some(n) = l {
            out.push(n.head.clone());
            l = n.tail.clone();
        }
        Some(out)
    }

    pub fn as_int(&self) -> Option<i32> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn field(&self, l: &str) -> Option<&Value<'a>> {
        match self {
            Value::Record(fs) => fs.iter().find(|(k, _)| k == l).map(|(_, v)| v),
            _ => None,
        }
    }
}

fn fmt_int(n: i64) -> String {
    if n < 0 {
        format!("~{}", -n)
    } else {
        n.to_string()
    }
}

pub fn fmt_real(r: f64) -> String {
    let s = format!("{:?}", r.abs());
    if r < 0.0 {
        format!("~{}", s)
    } else {
        s
    }
}

impl fmt::Display for Value<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{}", fmt_int(*n as i64)),
            Value::Real(r) => write!(f, "{}", fmt_real(*r)),
            Value::Str(s) => write!(f, "{:?}", s),
            Value::List(_) => {
                let items = self.list_items().unwrap_or_default();
                write!(f, "[{}]", items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))
            }
            Value::Record(fs) => {
                if crate::types::is_tuple_labels(fs) && !fs.is_empty() {
                    write!(f, "({})", fs.iter().map(|(_, v)| v.to_string()).collect::<Vec<_>>().join(", "))
                } else if fs.is_empty() {
                    write!(f, "()")
                } else {
                    let parts: Vec<String> = fs.iter().map(|(l, v)| format!("{} = {}", l, v)).collect();
                    write!(f, "{{{}}}", parts.join(", "))
                }
            }
            Value::Ref(l) => write!(f, "<ref {}>", l),
            Value::SwWrap(v) => write!(f, "sw {}", v),
            Value::Hw(n) => write!(f, "<hw n{}>", n),
            Value::GenArray(..) => write!(f, "<array under generation>"),
            Value::Data(d) => match &d.payload {
                Some(p) => write!(f, "{}({})", d.info.name, p),
                None => write!(f, "{}", d.info.name),
            },
            Value::Ctor(c) => write!(f, "<constructor {}>", c.name),
            Value::Closure(_) | Value::Prim(_) => write!(f, "<fn>"),
            Value::Module(_) => write!(f, "<module>"),
        }
    }
}

#[derive(Debug)]
pub enum Binding<'a> {
    Val(Value<'a>),
    Type { params: &'a [String], body: &'a AstTy, env: Env<'a> },
}

#[derive(Debug)]
pub struct EnvNode<'a> {
    pub name: &'a str,
    pub binding: Binding<'a>,
    pub next: Env<'a>,
}

/// Persistent environment; extension shares the tail.
#[derive(Clone, Debug, Default)]
pub struct Env<'a>(pub Option<Rc<EnvNode<'a>>>);

impl<'a> Env<'a> {
    pub fn bind(&self, name: &'a str, v: Value<'a>) -> Env<'a> {
        Env(Some(Rc::new(EnvNode { name, binding: Binding::Val(v), next: self.clone() })))
    }

    fn bind_type(&self, name: &'a str, params: &'a [String], body: &'a AstTy) -> Env<'a> {
        let b = Binding::Type { params, body, env: self.clone() };
        Env(Some(Rc::new(EnvNode { name, binding: b, next: self.clone() })))
    }

    pub fn lookup(&self, name: &str) -> Option<&Value<'a>> {
        let mut cur = &self.0;
        while let Some(n) = cur {
            if n.name == name {
                if let Binding::Val(v) = &n.binding {
                    return Some(v);
                }
            }
            cur = &n.next.0;
        }
        None
    }

    fn lookup_type(&self, name: &str) -> Option<&Binding<'a>> {
        let mut cur = &self.0;
        while let Some(n) = cur {
            if n.name == name && matches!(n.binding, Binding::Type { .. }) {
                return Some(&n.binding);
            }
            cur = &n.next.0;
        }
        None
    }
}

/// Hardware type pattern from an annotation; unknown parts match anything.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Any,
    Bit,
    Array(Box<Shape>, Option<u32>),
    Temporal(Box<Shape>, Option<u32>),
    Record(Vec<(Label, Shape)>),
}

impl Shape {
    pub fn matches(&self, t: &HType) -> bool {
        match (self, t) {
            (Shape::Any, _) => true,
            (Shape::Temporal(s, n), HType::Temporal(inner, Size::Known(m))) => {
                n.map_or(true, |n| n == *m) && s.matches(inner)
            }
            (Shape::Temporal(s, n), other) => n.map_or(true, |n| n == 0) && s.matches(other),
            (s, HType::Temporal(inner, Size::Known(0))) => s.matches(inner),
            (Shape::Bit, HType::Bit) => true,
            (Shape::Array(s, n), HType::Array(e, Size::Known(m))) => n.map_or(true, |n| n == *m) && s.matches(e),
            (Shape::Record(fs), HType::Record(gs)) => {
                fs.len() == gs.len() && fs.iter().all(|(l, s)| gs.iter().any(|(k, g)| k == l && s.matches(g)))
            }
            _ => false,
        }
    }

    /// The concrete type, when nothing is left unknown.
    pub fn concrete(&self) -> Option<HType> {
        Some(match self {
            Shape::Any => return None,
            Shape::Bit => HType::Bit,
            Shape::Array(s, n) => HType::Array(Box::new(s.concrete()?), Size::Known((*n)?)),
            Shape::Temporal(s, n) => HType::temporal(s.concrete()?, Size::Known((*n)?)),
            Shape::Record(fs) => {
                HType::Record(fs.iter().map(|(l, s)| Some((l.clone(), s.concrete()?))).collect::<Option<_>>()?)
            }
        })
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let size = |n: &Option<u32>| n.map_or("_".to_string(), |n| n.to_string());
        match self {
            Shape::Any => write!(f, "_"),
            Shape::Bit => write!(f, "bit"),
            Shape::Array(s, n) => write!(f, "{}[{}]", s, size(n)),
            Shape::Temporal(s, n) => write!(f, "{} @ {}", s, size(n)),
            Shape::Record(fs) => {
                if crate::types::is_tuple_labels(fs) {
                    write!(f, "#({})", fs.iter().map(|(_, s)| s.to_string()).collect::<Vec<_>>().join(" * "))
                } else {
                    let parts: Vec<String> = fs.iter().map(|(l, s)| format!("{}: {}", l, s)).collect();
                    write!(f, "#{{{}}}", parts.join(", "))
                }
            }
        }
    }
}

const MAX_DEPTH: usize = 20_000;

pub struct Evaluator<'a> {
    pub builder: NetBuilder,
    pub store: Vec<Value<'a>>,
    /// Lines written by `Core.print`.
    pub printed: Vec<String>,
    /// Also write printed lines to stdout as they happen.
    pub echo: bool,
    /// Directory that `Core.read` resolves relative paths against.
    pub base_dir: Option<PathBuf>,
    depth: usize,
    next_gen: usize,
}

impl Default for Evaluator<'_> {
    fn default() -> Self {
        Evaluator::new()
    }
}

pub fn err(kind: ErrorKind, span: Span, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(kind, Some(span), msg)
}

type R<'a> = Result<Value<'a>, Diagnostic>;

impl<'a> Evaluator<'a> {
    pub fn new() -> Evaluator<'a> {
        Evaluator {
            builder: NetBuilder::new(),
            store: Vec::new(),
            printed: Vec::new(),
            echo: false,
            base_dir: None,
            depth: 0,
            next_gen: 0,
        }
    }

    /// Environment holding every built-in.
    pub fn initial_env() -> Env<'a> {
        crate::stdlib::install_values(Env::default())
    }

    pub fn node(&mut self, v: &Value<'a>, span: Span) -> Result<NodeId, Diagnostic> {
        match v {
            Value::Hw(n) => Ok(*n),
            Value::Data(d) if d.info.def.hw => Err(err(
                ErrorKind::Unsupported,
                span,
                format!("hardware datatype `{}` has no bit encoding", d.info.def.name),
            )),
            other => Err(err(ErrorKind::Internal, span, format!("expected a hardware value, found {}", other))),
        }
    }

    fn int(&self, v: &Value<'a>, span: Span) -> Result<i32, Diagnostic> {
        v.as_int().ok_or_else(|| err(ErrorKind::Internal, span, format!("expected an int, found {}", v)))
    }

    fn hw_err(&self, span: Span, msg: String) -> Diagnostic {
        let kind = if msg.contains("out of range") { ErrorKind::OutOfRange } else { ErrorKind::Type };
        err(kind, span, msg)
    }

    pub fn eval(&mut self, e: &'a Expr, env: &Env<'a>) -> R<'a> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            self.depth = 0;
            return Err(err(ErrorKind::Internal, e.span, "evaluation exceeded the maximum recursion depth"));
        }
        let r = self.eval_inner(e, env);
        self.depth = self.depth.saturating_sub(1);
        r
    }

    fn eval_inner(&mut self, e: &'a Expr, env: &Env<'a>) -> R<'a> {
        let span = e.span;
        match &e.kind {
            ExprKind::Int(n) => Ok(Value::Int(*n)),
            ExprKind::Real(r) => Ok(Value::Real(*r)),
            ExprKind::Str(s) => Ok(Value::str(s)),
            ExprKind::Bit(b) => Ok(Value::Hw(self.builder.constant(*b))),
            ExprKind::Var { name, ctor } => match ctor {
                Some(info) if info.has_payload => Ok(Value::Ctor(info.clone())),
                Some(info) => Ok(Value::Data(Rc::new(DataVal { info: info.clone(), payload: None }))),
                None => env
                    .lookup(name)
                    .cloned()
                    .ok_or_else(|| err(ErrorKind::Unbound, span, format!("unbound identifier `{}`", name))),
            },
            ExprKind::Record(fs) => {
                let mut out = Vec::with_capacity(fs.len());
                for (l, x) in fs {
                    out.push((l.clone(), self.eval(x, env)?));
                }
                Ok(Value::Record(Rc::new(out)))
            }
            ExprKind::HwRecord(fs) => {
                let mut out = Vec::with_capacity(fs.len());
                for (l, x) in fs {
                    let v = self.eval(x, env)?;
                    out.push((l.clone(), self.node(&v, x.span)?));
                }
                Ok(Value::Hw(self.builder.record(out)))
            }
            ExprKind::List(xs) => {
                let mut out = Vec::with_capacity(xs.len());
                for x in xs {
                    out.push(self.eval(x, env)?);
                }
                Ok(Value::list(out))
            }
            ExprKind::Proj(l, a) => {
                let v = self.eval(a, env)?;
                match &v {
                    Value::Record(_) => v
                        .field(l)
                        .cloned()
                        .ok_or_else(|| err(ErrorKind::Internal, span, format!("record has no field `{}`", l))),
                    _ => {
                        let n = self.node(&v, a.span)?;
                        let f = self.builder.field(n, l).map_err(|m| err(ErrorKind::Type, span, m))?;
                        Ok(Value::Hw(f))
                    }
                }
            }
            ExprKind::ArrayLit(xs) => {
                let mut out = Vec::with_capacity(xs.len());
                for x in xs {
                    let v = self.eval(x, env)?;
                    out.push(self.node(&v, x.span)?);
                }
                let n = self.builder.array(out).map_err(|m| err(ErrorKind::Type, span, m))?;
                Ok(Value::Hw(n))
            }
            ExprKind::ArrayGen { size, var, body } => self.array_gen(size, var, body, env, None, span),
            ExprKind::Index(a, i) => {
                let v = self.eval(a, env)?;
                let iv = self.eval(i, env)?;
                let k = self.int(&iv, i.span)?;
                if let Value::GenArray(cell, len) = &v {
                    let done = cell.borrow();
                    if k < 0 || k as usize >= *len {
                        return Err(err(
                            ErrorKind::OutOfRange,
                            i.span,
                            format!("index {} is out of range for an array of length {}", k, len),
                        ));
                    }
                    return match done.get(k as usize) {
                        Some(n) => Ok(Value::Hw(*n)),
                        None => Err(err(
                            ErrorKind::Type,
                            i.span,
                            format!("element {} is read before it has been generated", k),
                        )),
                    };
                }
                let n = self.node(&v, a.span)?;
                let r = self.builder.index(n, k as i64).map_err(|m| self.hw_err(i.span, m))?;
                Ok(Value::Hw(r))
            }
            ExprKind::BitArray { kind, width, value } => {
                let w = self.eval(width, env)?;
                let w = self.int(&w, width.span)?;
                let v = self.eval(value, env)?;
                let v = self.int(&v, value.span)?;
                let bits = literal_bits(*kind, w, v).map_err(|(k, m)| err(k, span, m))?;
                let nodes = bits.into_iter().map(|b| self.builder.constant(b)).collect();
                Ok(Value::Hw(self.builder.array(nodes).map_err(|m| err(ErrorKind::Internal, span, m))?))
            }
            ExprKind::Unary(op, a) => {
                let v = self.eval(a, env)?;
                self.unary(*op, v, a.span, span)
            }
            ExprKind::Binary(op, a, b) => {
                let x = self.eval(a, env)?;
                let y = self.eval(b, env)?;
                self.binary(*op, x, y, span)
            }
            ExprKind::If(c, t, f) => {
                let g = self.eval(c, env)?;
                if self.int(&g, c.span)? != 0 {
                    self.eval(t, env)
                } else {
                    match f {
                        Some(f) => self.eval(f, env),
                        None => Ok(Value::unit()),
                    }
                }
            }
            ExprKind::Let(decs, body) => {
                let mut env = env.clone();
                for d in decs {
                    env = self.dec(d, &env)?;
                }
                self.eval(body, &env)
            }
            ExprKind::Seq(xs) => {
                let mut last = Value::unit();
                for x in xs {
                    last = self.eval(x, env)?;
                }
                Ok(last)
            }
            ExprKind::App(f, a) => {
                let fv = self.eval(f, env)?;
                let av = self.eval(a, env)?;
                self.apply(fv, av, span)
            }
            ExprKind::Case(s, arms) => {
                let v = self.eval(s, env)?;
                for (p, body) in arms {
                    let mut binds = Vec::new();
                    if self.matches(p, &v, &mut binds)? {
                        let mut env = env.clone();
                        for (n, x) in binds {
                            env = env.bind(n, x);
                        }
                        return self.eval(body, &env);
                    }
                }
                Err(err(ErrorKind::MatchFailure, span, format!("no case arm matches {}", v)))
            }
            ExprKind::Lambda { name, param, body } => Ok(Value::Closure(Rc::new(Closure {
                self_name: name.as_deref(),
                params: std::slice::from_ref(param),
                body,
                env: env.clone(),
                args: Vec::new(),
            }))),
            ExprKind::Param(m, n) => {
                let mv = self.eval(m, env)?;
                let nv = self.eval(n, env)?;
                let k = self.int(&nv, n.span)?;
                match &mv {
                    Value::Module(mm) => match &**mm {
                        ModVal::User(c) if c.size_param.is_some() && c.size.is_none() => {
                            Ok(Value::Module(Rc::new(ModVal::User(ModClosure {
                                size: Some(k),
                                env: c.env.clone(),
                                ..*c
                            }))))
                        }
                        _ => Err(err(ErrorKind::Type, m.span, "module is not parameterized")),
                    },
                    _ => Err(err(ErrorKind::Internal, m.span, format!("expected a module, found {}", mv))),
                }
            }
            ExprKind::Ref(a) => {
                let v = self.eval(a, env)?;
                self.store.push(v);
                Ok(Value::Ref(self.store.len() - 1))
            }
            ExprKind::Sw(a) => Ok(Value::SwWrap(Rc::new(self.eval(a, env)?))),
            ExprKind::Unsw(a) => match self.eval(a, env)? {
                Value::SwWrap(v) => Ok((*v).clone()),
                other => Err(err(ErrorKind::Internal, a.span, format!("expected a wrapped hardware value, found {}", other))),
            },
            ExprKind::Loc(_) | ExprKind::WrapLoc(_) => {
                Err(err(ErrorKind::Internal, span, "store locations only occur during small-step reduction"))
            }
            ExprKind::Tuple { .. }
            | ExprKind::Unit
            | ExprKind::Collapse(..)
            | ExprKind::AndAlso(..)
            | ExprKind::OrElse(..)
            | ExprKind::Not(_) => Err(err(ErrorKind::Internal, span, "derived form survived desugaring")),
        }
    }

    fn array_gen(
        &mut self,
        size: &'a Expr,
        var: &'a str,
        body: &'a Expr,
        env: &Env<'a>,
        own_name: Option<&'a str>,
        span: Span,
    ) -> R<'a> {
        let sv = self.eval(size, env)?;
        let n = self.int(&sv, size.span)?;
        if n < 0 {
            return Err(err(ErrorKind::OutOfRange, size.span, format!("array size {} is negative", n)));
        }
        let cell = Rc::new(RefCell::new(Vec::with_capacity(n as usize)));
        let env = match own_name {
            Some(name) => {
                self.next_gen += 1;
                env.bind(name, Value::GenArray(cell.clone(), n as usize))
            }
            None => env.clone(),
        };
        for i in 0..n {
            let v = self.eval(body, &env.bind(var, Value::Int(i)))?;
            let node = self.node(&v, body.span)?;
            cell.borrow_mut().push(node);
        }
        let nodes = cell.borrow().clone();
        let arr = self.builder.array(nodes).map_err(|m| err(ErrorKind::Type, span, m))?;
        Ok(Value::Hw(arr))
    }

    pub fn dec(&mut self, d: &'a Dec, env: &Env<'a>) -> Result<Env<'a>, Diagnostic> {
        match &d.kind {
            DecKind::Val { name, expr, .. } => {
                let v = match &expr.kind {
                    ExprKind::ArrayGen { size, var, body } => self.array_gen(size, var, body, env, Some(name), expr.span)?,
                    _ => self.eval(expr, env)?,
                };
                Ok(env.bind(name, v))
            }
            DecKind::Fun { name, params, body, .. } => Ok(env.bind(
                name,
                Value::Closure(Rc::new(Closure {
                    self_name: Some(name),
                    params,
                    body,
                    env: env.clone(),
                    args: Vec::new(),
                })),
            )),
            DecKind::Module { name, size_param, param, ret, body, .. } => Ok(env.bind(
                name,
                Value::Module(Rc::new(ModVal::User(ModClosure {
                    name,
                    size_param: size_param.as_deref(),
                    size: None,
                    param,
                    ret: ret.as_ref(),
                    body,
                    env: env.clone(),
                }))),
            )),
            DecKind::Type { params, name, body } => Ok(env.bind_type(name, params, body)),
            DecKind::Datatype { .. } => Ok(env.clone()),
        }
    }

    pub fn apply(&mut self, f: Value<'a>, arg: Value<'a>, span: Span) -> R<'a> {
        match f {
            Value::Closure(c) => {
                let mut args = c.args.clone();
                args.push(arg);
                if args.len() < c.params.len() {
                    return Ok(Value::Closure(Rc::new(Closure {
                        self_name: c.self_name,
                        params: c.params,
                        body: c.body,
                        env: c.env.clone(),
                        args,
                    })));
                }
                let mut env = c.env.clone();
                if let Some(n) = c.self_name {
                    let me = Closure { self_name: c.self_name, params: c.params, body: c.body, env: c.env.clone(), args: vec![] };
                    env = env.bind(n, Value::Closure(Rc::new(me)));
                }
                for (p, a) in c.params.iter().zip(&args) {
                    let mut binds = Vec::new();
                    if !self.matches(p, a, &mut binds)? {
                        return Err(err(ErrorKind::MatchFailure, p.span, format!("argument {} does not match the parameter pattern", a)));
                    }
                    for (n, x) in binds {
                        env = env.bind(n, x);
                    }
                }
                self.eval(c.body, &env)
            }
            Value::Ctor(info) => Ok(Value::Data(Rc::new(DataVal { info, payload: Some(arg) }))),
            Value::Prim(p) => {
                let mut args = p.args.clone();
                args.push(arg);
                if args.len() < p.arity {
                    return Ok(Value::Prim(Rc::new(PrimApp { name: p.name, arity: p.arity, args })));
                }
                crate::stdlib::call(self, p.name, args, span)
            }
            Value::Module(m) => self.apply_module(&m, arg, span),
            other => Err(err(ErrorKind::Internal, span, format!("cannot apply {}", other))),
        }
    }

    fn apply_module(&mut self, m: &ModVal<'a>, arg: Value<'a>, span: Span) -> R<'a> {
        let x = self.node(&arg, span)?;
        match m {
            ModVal::TwosComp => {
                let r = twos_complement(&mut self.builder, x).map_err(|m| err(ErrorKind::Type, span, m))?;
                Ok(Value::Hw(r))
            }
            ModVal::Dff => Ok(Value::Hw(self.builder.delay(x))),
            ModVal::User(c) => {
                let env = self.module_env(c, span)?;
                let mut binds = Vec::new();
                if !self.matches(c.param, &arg, &mut binds)? {
                    return Err(err(ErrorKind::MatchFailure, span, format!("argument does not match the parameters of `{}`", c.name)));
                }
                let mut env = env;
                for (n, v) in binds {
                    env = env.bind(n, v);
                }
                self.check_annotations(c.param, &env, span)?;
                let out = self.eval(c.body, &env)?;
                if let Some(r) = c.ret {
                    let n = self.node(&out, c.body.span)?;
                    self.check_shape(r, &env, n, span, &format!("result of `{}`", c.name))?;
                }
                Ok(out)
            }
        }
    }

    fn module_env(&mut self, c: &ModClosure<'a>, span: Span) -> Result<Env<'a>, Diagnostic> {
        match (c.size_param, c.size) {
            (Some(n), Some(k)) => Ok(c.env.bind(n, Value::Int(k))),
            (Some(_), None) => Err(err(
                ErrorKind::Type,
                span,
                format!("module `{}` must be instantiated with <: size :> before it is applied", c.name),
            )),
            _ => Ok(c.env.clone()),
        }
    }

    /// Staging check of parameter annotations against the argument actually passed.
    fn check_annotations(&mut self, p: &'a Pattern, env: &Env<'a>, span: Span) -> Result<(), Diagnostic> {
        match &p.kind {
            PatKind::Var { name, ann: Some(t) } => {
                if let Some(Value::Hw(n)) = env.lookup(name).cloned() {
                    self.check_shape(t, env, n, span, &format!("parameter `{}`", name))?;
                }
                Ok(())
            }
            PatKind::Record { fields, .. } => {
                for (_, q) in fields {
                    self.check_annotations(q, env, span)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn check_shape(&mut self, t: &'a AstTy, env: &Env<'a>, n: NodeId, span: Span, what: &str) -> Result<(), Diagnostic> {
        let shape = self.shape(t, env, &[])?;
        let actual = self.builder.ty(n).clone();
        if shape.matches(&actual) {
            return Ok(());
        }
        let (exp, found) = (shape.to_string(), render_h(&actual));
        Err(Diagnostic::error(
            ErrorKind::Type,
            Some(span),
            format!("{}: expected {}, found {}", what, exp, found),
        )
        .with_types(vec![exp, found]))
    }

    /// Evaluates a hardware annotation; unknown type variables and sizes become wildcards.
    pub fn shape(&mut self, t: &'a AstTy, env: &Env<'a>, args: &[(&str, Shape)]) -> Result<Shape, Diagnostic> {
        Ok(match &t.kind {
            TyKind::Var(v) => args.iter().find(|(n, _)| n == v).map(|(_, s)| s.clone()).unwrap_or(Shape::Any),
            TyKind::Name(n, targs) => {
                if n == "bit" && targs.is_empty() {
                    return Ok(Shape::Bit);
                }
                let sargs = targs.iter().map(|a| self.shape(a, env, args)).collect::<Result<Vec<_>, _>>()?;
                match env.lookup_type(n) {
                    Some(Binding::Type { params, body, env: tenv }) => {
                        let (params, body, tenv) = (*params, *body, tenv.clone());
                        let bound: Vec<(&str, Shape)> = params.iter().map(|p| p.as_str()).zip(sargs).collect();
                        self.shape(body, &tenv, &bound)?
                    }
                    _ => Shape::Any,
                }
            }
            TyKind::Record { fields, hw: true } => Shape::Record(
                fields.iter().map(|(l, ft)| Ok((l.clone(), self.shape(ft, env, args)?))).collect::<Result<_, Diagnostic>>()?,
            ),
            TyKind::Tuple { items, hw: true } => Shape::Record(
                items
                    .iter()
                    .enumerate()
                    .map(|(i, ft)| Ok(((i + 1).to_string(), self.shape(ft, env, args)?)))
                    .collect::<Result<_, Diagnostic>>()?,
            ),
            TyKind::Array(e, s) => Shape::Array(Box::new(self.shape(e, env, args)?), self.size(s, env)),
            TyKind::Temporal(e, s) => Shape::Temporal(Box::new(self.shape(e, env, args)?), self.size(s, env)),
            _ => Shape::Any,
        })
    }

    /// Size expression value, or `None` when it mentions unknown names.
    fn size(&mut self, e: &'a Expr, env: &Env<'a>) -> Option<u32> {
        let saved = self.depth;
        let r = self.eval(e, env).ok().and_then(|v| v.as_int());
        self.depth = saved;
        r.and_then(|n| u32::try_from(n).ok())
    }

    /// Matches a value against a pattern, collecting bindings.
    pub fn matches(&mut self, p: &'a Pattern, v: &Value<'a>, binds: &mut Vec<(&'a str, Value<'a>)>) -> Result<bool, Diagnostic> {
        Ok(match (&p.kind, v) {
            (PatKind::Wild, _) => true,
            (PatKind::Var { name, .. }, _) => {
                binds.push((name, v.clone()));
                true
            }
            (PatKind::Int(n), Value::Int(m)) => n == m,
            (PatKind::Real(a), Value::Real(b)) => a == b,
            (PatKind::Str(a), Value::Str(b)) => **a == **b,
            (PatKind::Ctor { arg, info, name }, Value::Data(d)) => {
                let same = match info {
                    Some(i) => i.def.tag == d.info.def.tag && i.index == d.info.index,
                    None => *name == d.info.name,
                };
                if !same {
                    return Ok(false);
                }
                match (arg, &d.payload) {
                    (Some(q), Some(x)) => self.matches(q, x, binds)?,
                    (None, None) => true,
                    _ => false,
                }
            }
            (PatKind::Record { fields, .. }, Value::Record(fs)) => {
                for (l, q) in fields {
                    let Some((_, x)) = fs.iter().find(|(k, _)| k == l) else { return Ok(false) };
                    if !self.matches(q, x, binds)? {
                        return Ok(false);
                    }
                }
                true
            }
            (PatKind::Record { fields, .. }, Value::Hw(n)) => {
                for (l, q) in fields {
                    let f = self.builder.field(*n, l).map_err(|m| err(ErrorKind::Type, p.span, m))?;
                    if !self.matches(q, &Value::Hw(f), binds)? {
                        return Ok(false);
                    }
                }
                true
            }
            (PatKind::Cons(h, t), Value::List(Some(node))) => {
                self.matches(h, &node.head, binds)? && self.matches(t, &Value::List(node.tail.clone()), binds)?
            }
            (PatKind::List(items), Value::List(_)) => {
                let vs = v.list_items().unwrap_or_default();
                if vs.len() != items.len() {
                    return Ok(false);
                }
                for (q, x) in items.iter().zip(&vs) {
                    if !self.matches(q, x, binds)? {
                        return Ok(false);
                    }
                }
                true
            }
            _ => false,
        })
    }

    fn unary(&mut self, op: UnOp, v: Value<'a>, arg_span: Span, span: Span) -> R<'a> {
        match op {
            UnOp::Neg => match v {
                Value::Int(n) => n
                    .checked_neg()
                    .map(Value::Int)
                    .ok_or_else(|| err(ErrorKind::Overflow, span, "integer overflow in negation")),
                Value::Real(r) => Ok(Value::Real(-r)),
                other => Err(err(ErrorKind::Internal, span, format!("cannot negate {}", other))),
            },
            UnOp::Deref => match v {
                Value::Ref(l) => Ok(self.store[l].clone()),
                other => Err(err(ErrorKind::Internal, span, format!("cannot dereference {}", other))),
            },
            UnOp::BitNot | UnOp::AndReduce | UnOp::OrReduce | UnOp::XorReduce => {
                let n = self.node(&v, arg_span)?;
                let r = match op {
                    UnOp::BitNot => self.builder.not(n),
                    UnOp::AndReduce => self.builder.reduce(GateOp::And, n),
                    UnOp::OrReduce => self.builder.reduce(GateOp::Or, n),
                    _ => self.builder.reduce(GateOp::Xor, n),
                };
                Ok(Value::Hw(r.map_err(|m| err(ErrorKind::Type, span, m))?))
            }
        }
    }

    fn binary(&mut self, op: BinOp, x: Value<'a>, y: Value<'a>, span: Span) -> R<'a> {
        use BinOp::*;
        match op {
            Add | Sub | Mul | Div | Mod => {
                let (a, b) = (self.int(&x, span)?, self.int(&y, span)?);
                int_op(op, a, b).map(Value::Int).map_err(|(k, m)| err(k, span, m))
            }
            RAdd | RSub | RMul | RDiv => match (x, y) {
                (Value::Real(a), Value::Real(b)) => Ok(Value::Real(match op {
                    RAdd => a + b,
                    RSub => a - b,
                    RMul => a * b,
                    _ => a / b,
                })),
                _ => Err(err(ErrorKind::Internal, span, "real operator on non-real values")),
            },
            Eq | Ne => {
                let eq = values_equal(&x, &y).ok_or_else(|| err(ErrorKind::Type, span, "values of this type cannot be compared"))?;
                Ok(Value::Int((eq == (op == Eq)) as i32))
            }
            Lt | Gt | Le | Ge => {
                let ord = match (&x, &y) {
                    (Value::Int(a), Value::Int(b)) => a.partial_cmp(b),
                    (Value::Real(a), Value::Real(b)) => a.partial_cmp(b),
                    (Value::Str(a), Value::Str(b)) => a.partial_cmp(b),
                    _ => return Err(err(ErrorKind::Internal, span, "ordering on unordered values")),
                };
                use std::cmp::Ordering::*;
                let r = match (op, ord) {
                    (_, None) => false,
                    (Lt, Some(o)) => o == Less,
                    (Gt, Some(o)) => o == Greater,
                    (Le, Some(o)) => o != Greater,
                    (_, Some(o)) => o != Less,
                };
                Ok(Value::Int(r as i32))
            }
            Shl | Shr | Sra => {
                let (a, b) = (self.node(&x, span)?, self.node(&y, span)?);
                let kind = match op {
                    Shl => ShiftKind::Left,
                    Shr => ShiftKind::Right,
                    _ => ShiftKind::Arith,
                };
                let r = self.builder.shift(kind, a, b).map_err(|m| err(ErrorKind::Type, span, m))?;
                Ok(Value::Hw(r))
            }
            And | Or | Xor => {
                let (a, b) = (self.node(&x, span)?, self.node(&y, span)?);
                let g = match op {
                    And => GateOp::And,
                    Or => GateOp::Or,
                    _ => GateOp::Xor,
                };
                let r = self.builder.gate(g, a, b).map_err(|m| err(ErrorKind::Type, span, m))?;
                Ok(Value::Hw(r))
            }
            Cons => match y {
                Value::List(tail) => Ok(Value::List(Some(Rc::new(ListNode { head: x, tail })))),
                other => Err(err(ErrorKind::Internal, span, format!("cannot cons onto {}", other))),
            },
            Assign => match x {
                Value::Ref(l) => {
                    self.store[l] = y;
                    Ok(Value::unit())
                }
                other => Err(err(ErrorKind::Internal, span, format!("cannot assign to {}", other))),
            },
        }
    }

    /// Expands the program's module: one pin per parameter variable, then the body.
    pub fn expand_top_module(&mut self, m: &Value<'a>, span: Span) -> Result<Netlist, Diagnostic> {
        let Value::Module(mv) = m else {
            return Err(err(ErrorKind::NonModuleProgram, span, format!("the program must evaluate to a module, found {}", m)));
        };
        let c = match &**mv {
            ModVal::User(c) => c,
            ModVal::TwosComp | ModVal::Dff => {
                return Err(err(ErrorKind::NonConcreteModule, span, "a built-in module has no fixed port width"))
            }
        };
        if c.size_param.is_some() && c.size.is_none() {
            return Err(err(
                ErrorKind::NonModuleProgram,
                span,
                format!("module `{}` is parameterized; instantiate it with <: size :>", c.name),
            ));
        }
        let env = self.module_env(c, span)?;
        let arg = self.pins(c.param, &env)?;
        let out = self.apply_module(mv, arg, span)?;
        let out = self.node(&out, c.body.span)?;
        let builder = std::mem::take(&mut self.builder);
        Ok(builder.finish(out).compact())
    }

    fn pins(&mut self, p: &'a Pattern, env: &Env<'a>) -> R<'a> {
        match &p.kind {
            PatKind::Var { name, ann } => {
                let from_ann = match ann {
                    Some(t) => self.shape(t, env, &[])?.concrete(),
                    None => None,
                };
                let ty = match from_ann {
                    Some(t) => t,
                    None => match p.ty.get() {
                        Some(SemType::Hw(h)) if h.is_concrete() => h.clone(),
                        other => {
                            let shown = other.map(crate::types::render).unwrap_or_else(|| "?".into());
                            return Err(err(
                                ErrorKind::NonConcreteModule,
                                p.span,
                                format!("input `{}` has no concrete hardware type (found {})", name, shown),
                            ));
                        }
                    },
                };
                Ok(Value::Hw(self.builder.pin(name, ty)))
            }
            PatKind::Record { fields, hw: true } => {
                let mut out = Vec::new();
                for (l, q) in fields {
                    let v = self.pins(q, env)?;
                    out.push((l.clone(), self.node(&v, q.span)?));
                }
                Ok(Value::Hw(self.builder.record(out)))
            }
            PatKind::Wild => match p.ty.get() {
                Some(SemType::Hw(h)) if h.is_concrete() => {
                    let name = format!("in{}", self.builder.inputs.len());
                    Ok(Value::Hw(self.builder.pin(&name, h.clone())))
                }
                _ => Err(err(ErrorKind::NonConcreteModule, p.span, "unused input has no concrete hardware type")),
            },
            _ => Err(err(ErrorKind::Unsupported, p.span, "module parameters must be variables or hardware tuples")),
        }
    }
}

/// Checked 32-bit arithmetic; division and remainder round towards negative infinity.
pub fn int_op(op: BinOp, a: i32, b: i32) -> Result<i32, (ErrorKind, String)> {
    let overflow = || (ErrorKind::Overflow, format!("integer overflow in {} {} {}", fmt_int(a as i64), op.name(), fmt_int(b as i64)));
    match op {
        BinOp::Add => a.checked_add(b).ok_or_else(overflow),
        BinOp::Sub => a.checked_sub(b).ok_or_else(overflow),
        BinOp::Mul => a.checked_mul(b).ok_or_else(overflow),
        BinOp::Div | BinOp::Mod => {
            if b == 0 {
                return Err((ErrorKind::DivByZero, format!("{} by zero", if op == BinOp::Div { "division" } else { "modulo" })));
            }
            let q = a.checked_div(b).ok_or_else(overflow)?;
            let q = if a % b != 0 && ((a < 0) != (b < 0)) { q - 1 } else { q };
            if op == BinOp::Div {
                Ok(q)
            } else {
                Ok(a.wrapping_sub(q.wrapping_mul(b)))
            }
        }
        _ => Err((ErrorKind::Internal, format!("`{}` is not an integer operator", op.name()))),
    }
}

/// Bits of `w 'u: v` or `w 's: v`, least significant first.
pub fn literal_bits(kind: BitArrayKind, w: i32, v: i32) -> Result<Vec<u8>, (ErrorKind, String)> {
    if w < 0 {
        return Err((ErrorKind::OutOfRange, format!("bit-array width {} is negative", w)));
    }
    let (lo, hi): (i128, i128) = match kind {
        BitArrayKind::Unsigned => (0, 1i128 << w.min(100)),
        BitArrayKind::Signed if w == 0 => (0, 1),
        BitArrayKind::Signed => (-(1i128 << (w - 1).min(100)), 1i128 << (w - 1).min(100)),
        BitArrayKind::Real => return Err((ErrorKind::Unsupported, "real bit arrays ('r:) are not supported".into())),
    };
    if (v as i128) < lo || (v as i128) >= hi {
        return Err((ErrorKind::Overflow, format!("{} does not fit in {} bits", fmt_int(v as i64), w)));
    }
    Ok((0..w).map(|i| if i >= 32 { (v < 0) as u8 } else { ((v >> i) & 1) as u8 }).collect())
}

/// Structural equality; `None` for values without decidable equality.
pub fn values_equal(x: &Value<'_>, y: &Value<'_>) -> Option<bool> {
    Some(match (x, y) {
        (Value::Int(a), Value::Int(b)) => a == b,
        (Value::Real(a), Value::Real(b)) => a == b,
        (Value::Str(a), Value::Str(b)) => a == b,
        (Value::Ref(a), Value::Ref(b)) => a == b,
        (Value::List(_), Value::List(_)) => {
            let (a, b) = (x.list_items()?, y.list_items()?);
            if a.len() != b.len() {
                return Some(false);
            }
            for (p, q) in a.iter().zip(&b) {
                if !values_equal(p, q)? {
                    return Some(false);
                }
            }
            true
        }
        (Value::Record(a), Value::Record(b)) => {
            for (l, p) in a.iter() {
                let q = b.iter().find(|(k, _)| k == l).map(|(_, v)| v)?;
                if !values_equal(p, q)? {
                    return Some(false);
                }
            }
            a.len() == b.len()
        }
        (Value::Data(a), Value::Data(b)) => {
            if a.info.def.tag != b.info.def.tag || a.info.index != b.info.index {
                return Some(false);
            }
            match (&a.payload, &b.payload) {
                (Some(p), Some(q)) => values_equal(p, q)?,
                (None, None) => true,
                _ => false,
            }
        }
        _ => return None,
    })
}

/// Two's complement of a bit array: bitwise NOT, then a half-adder incrementer.
pub fn twos_complement(b: &mut NetBuilder, x: NodeId) -> Result<NodeId, String> {
    let inv = b.not(x)?;
    let bits = b.elems(inv)?;
    let mut carry = b.constant(1);
    let mut out = Vec::with_capacity(bits.len());
    for bit in bits {
        out.push(b.gate_bits(GateOp::Xor, vec![bit, carry]));
        carry = b.gate_bits(GateOp::And, vec![bit, carry]);
    }
    b.array(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::infer_source;

    fn run(src: &str) -> Result<String, Diagnostic> {
        let (e, _, inf) = infer_source(src).unwrap();
        assert!(inf.diags.iter().all(|d| !d.is_error()), "{:?}", inf.diags);
        let mut ev = Evaluator::new();
        let env = Evaluator::initial_env();
        let v = ev.eval(&e, &env)?;
        Ok(v.to_string())
    }

    #[test]
    fn arithmetic() {
        assert_eq!(run("7 / 2").unwrap(), "3");
        assert_eq!(run("~7 / 2").unwrap(), "~4");
        assert_eq!(run("7 % 2").unwrap(), "1");
        assert_eq!(run("~7 % 2").unwrap(), "1");
        assert_eq!(run("if 0 then 1 else 2").unwrap(), "2");
        assert_eq!(run("let val x = 1 in let val x = 2 in x end end").unwrap(), "2");
        assert_eq!(run("1 / 0").unwrap_err().kind, ErrorKind::DivByZero);
        assert_eq!(run("2147483647 + 1").unwrap_err().kind, ErrorKind::Overflow);
    }

    #[test]
    fn lists_and_closures() {
        assert_eq!(run("List.rev [1, 2, 3]").unwrap(), "[3, 2, 1]");
        assert_eq!(run("let fun dbl x = x * 2 in List.map dbl [1, 2] end").unwrap(), "[2, 4]");
        assert_eq!(run("let fun f x y = x - y in f 5 3 end").unwrap(), "2");
        assert_eq!(run("let fun fact n = if n = 0 then 1 else n * fact (n - 1) in fact 5 end").unwrap(), "120");
        let canon = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/programs/canonical.gem")).unwrap();
        // inc -> [1..5], odd -> [1,3,5], big -> [30,50], sum 80
        assert_eq!(run(&canon).unwrap(), "80");
    }

    #[test]
    fn refs_and_sequencing() {
        assert_eq!(run("let val r = ref 1 in (r := $r + 1; r := $r * 10; $r) end").unwrap(), "20");
    }

    #[test]
    fn bit_literals() {
        assert_eq!(literal_bits(BitArrayKind::Unsigned, 4, 6).unwrap(), vec![0, 1, 1, 0]);
        assert_eq!(literal_bits(BitArrayKind::Signed, 3, -1).unwrap(), vec![1, 1, 1]);
        assert!(literal_bits(BitArrayKind::Unsigned, 2, 4).is_err());
        assert!(literal_bits(BitArrayKind::Signed, 2, 2).is_err());
    }

    #[test]
    fn out_of_range_access() {
        let d = run("let val i = 1 in #['b:0][:i:] end").unwrap_err();
        assert_eq!(d.kind, ErrorKind::OutOfRange);
    }
}
