//! Semantic analysis: decoration of binders with explicit types, inference by
//! unification against the global substitution Σ, and typing-rule checks.

pub mod exhaust;
pub mod print;
pub mod unify;

pub use unify::{data_head, unify, UnifyError};

use crate::ast::*;
use crate::diag::{Diagnostic, ErrorKind, Span};
use crate::types::*;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;

pub const DEFAULT_SUBST_LIMIT: usize = 10_000;

#[derive(Clone, Debug)]
pub enum ValBind {
    Var(SemType),
    Ctor(Rc<CtorInfo>),
}

#[derive(Clone, Debug)]
pub enum TypeDef {
    Alias { params: Vec<MetaId>, body: SemType },
    Data(Rc<DataDef>),
    /// A datatype while its own constructors are being translated.
    Pending { meta: MetaId, hw: bool, arity: usize },
}

/// Lexically scoped τ (types) and Γ (values); scopes are restored by truncation.
#[derive(Clone, Debug, Default)]
pub struct TypeEnv {
    pub vals: Vec<(String, ValBind)>,
    pub types: Vec<(String, TypeDef)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnvMark(usize, usize);

impl TypeEnv {
    pub fn bind_val(&mut self, name: &str, t: SemType) {
        self.vals.push((name.to_string(), ValBind::Var(t)));
    }

    pub fn lookup_val(&self, name: &str) -> Option<&ValBind> {
        self.vals.iter().rev().find(|(n, _)| n == name).map(|(_, b)| b)
    }

    pub fn lookup_type(&self, name: &str) -> Option<&TypeDef> {
        self.types.iter().rev().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn mark(&self) -> EnvMark {
        EnvMark(self.vals.len(), self.types.len())
    }

    pub fn restore(&mut self, m: EnvMark) {
        self.vals.truncate(m.0);
        self.types.truncate(m.1);
    }
}

/// Applies Σ to every binding of `env` until nothing changes.
pub fn substitute(sigma: &SubstEnv, env: &TypeEnv, limit: usize) -> Result<TypeEnv, Diagnostic> {
    let fixpoint = |t: &SemType| -> Result<SemType, Diagnostic> {
        let mut cur = t.clone();
        for _ in 0..limit {
            let mut pass = SubstOnce { sigma, changed: false };
            let next = map_sem(&cur, &mut pass, &mut Vec::new());
            if !pass.changed {
                return Ok(next);
            }
            cur = next;
        }
        Err(Diagnostic::error(
            ErrorKind::Internal,
            None,
            format!("substitution did not reach a fixed point within {} passes", limit),
        ))
    };
    let mut out = TypeEnv::default();
    for (n, b) in &env.vals {
        let b = match b {
            ValBind::Var(t) => ValBind::Var(fixpoint(t)?),
            other => other.clone(),
        };
        out.vals.push((n.clone(), b));
    }
    for (n, d) in &env.types {
        let d = match d {
            TypeDef::Alias { params, body } => TypeDef::Alias { params: params.clone(), body: fixpoint(body)? },
            other => other.clone(),
        };
        out.types.push((n.clone(), d));
    }
    Ok(out)
}

/// Names shared by the annotations of a single declaration.
#[derive(Clone, Debug, Default)]
pub struct AnnScope {
    pub tyvars: HashMap<String, SemType>,
    pub sizes: HashMap<String, MetaId>,
}

enum Check {
    Solved,
    Pending,
    Failed(Diagnostic),
}

pub struct Infer {
    pub gen: MetaGen,
    pub sigma: SubstEnv,
    pub env: TypeEnv,
    pub diags: Vec<Diagnostic>,
    pub deferred: Vec<Constraint>,
    pub subst_limit: usize,
    /// Types of store locations (small-step terms only).
    pub store_types: HashMap<u32, SType>,
    pub wrap_types: HashMap<u32, HType>,
    ann: AnnScope,
    next_tag: u32,
}

impl Default for Infer {
    fn default() -> Self {
        Infer::new()
    }
}

fn sw(t: SType) -> SemType {
    SemType::Sw(t)
}

fn hw(t: HType) -> SemType {
    SemType::Hw(t)
}

fn int() -> SemType {
    SemType::Sw(SType::Int)
}

impl Infer {
    /// Inference context with the built-in library installed.
    pub fn new() -> Infer {
        let mut inf = Infer::bare();
        crate::stdlib::install_types(&mut inf);
        inf
    }

    /// Inference context with an empty environment.
    pub fn bare() -> Infer {
        Infer {
            gen: MetaGen::new(),
            sigma: SubstEnv::new(),
            env: TypeEnv::default(),
            diags: Vec::new(),
            deferred: Vec::new(),
            subst_limit: DEFAULT_SUBST_LIMIT,
            store_types: HashMap::new(),
            wrap_types: HashMap::new(),
            ann: AnnScope::default(),
            next_tag: 1,
        }
    }

    pub fn error_count(&self) -> usize {
        self.diags.iter().filter(|d| d.is_error()).count()
    }

    fn error(&mut self, kind: ErrorKind, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(kind, Some(span), msg));
    }

    pub fn zonk(&self, t: &SemType) -> SemType {
        zonk(t, &self.sigma)
    }

    pub fn render(&self, t: &SemType) -> String {
        render(&self.zonk(t))
    }

    /// Unifies and merges the result into Σ; reports and returns false on failure.
    pub fn unify_at(&mut self, expected: &SemType, found: &SemType, span: Span) -> bool {
        match unify(expected, found, &self.sigma) {
            Ok(s) => {
                if let Err(dup) = self.sigma.extend(s) {
                    self.error(ErrorKind::Internal, span, format!("metavariable {} bound twice", dup.0));
                    return false;
                }
                true
            }
            Err(e) => {
                self.diags.push(Diagnostic::error(e.kind, Some(span), e.message).with_types(e.types));
                false
            }
        }
    }

    /// Coerces `t` to a software type, committing unknown-kind metas.
    pub fn expect_sw(&mut self, t: SemType, span: Span) -> SType {
        match t {
            SemType::Sw(s) => s,
            SemType::Meta(id) => match self.sigma.get(id).cloned() {
                Some(t) => self.expect_sw(t, span),
                None => {
                    let s = self.gen.fresh_sw();
                    let _ = self.sigma.insert(id, sw(s.clone()));
                    s
                }
            },
            SemType::Top => SType::Top,
            SemType::Bottom => SType::Bottom,
            other => {
                let r = render(&self.zonk(&other));
                self.diags.push(
                    Diagnostic::error(
                        ErrorKind::Kind,
                        Some(span),
                        format!("kind mismatch: expected a software type, found {} ({})", r, kind_name(&other)),
                    )
                    .with_types(vec!["software".into(), r]),
                );
                SType::Top
            }
        }
    }

    /// Coerces `t` to a hardware type, committing unknown-kind metas.
    pub fn expect_hw(&mut self, t: SemType, span: Span) -> HType {
        match t {
            SemType::Hw(h) => h,
            SemType::Meta(id) => match self.sigma.get(id).cloned() {
                Some(t) => self.expect_hw(t, span),
                None => {
                    let h = self.gen.fresh_hw();
                    let _ = self.sigma.insert(id, hw(h.clone()));
                    h
                }
            },
            SemType::Top => HType::Top,
            SemType::Bottom => HType::Bottom,
            other => {
                let r = render(&self.zonk(&other));
                self.diags.push(
                    Diagnostic::error(
                        ErrorKind::Kind,
                        Some(span),
                        format!("kind mismatch: expected a hardware type, found {} ({})", r, kind_name(&other)),
                    )
                    .with_types(vec!["hardware".into(), r]),
                );
                HType::Top
            }
        }
    }

    // ------------------------------------------------------------------
    // Polymorphism

    fn env_free_metas(&self) -> HashSet<MetaId> {
        let mut out = HashSet::new();
        for (_, b) in &self.env.vals {
            if let ValBind::Var(t) = b {
                if matches!(t, SemType::Sw(SType::Poly(_)) | SemType::Mod(MType::Poly(_))) {
                    // Closed schemes may still mention outer metas.
                    for o in free_metas(&self.zonk(t)) {
                        out.insert(o.id);
                    }
                } else {
                    for o in free_metas(&self.zonk(t)) {
                        out.insert(o.id);
                    }
                }
            }
        }
        out
    }

    fn quantify(&mut self, z: SemType, vars: Vec<MetaId>) -> SemType {
        if vars.is_empty() {
            return z;
        }
        let set: HashSet<MetaId> = vars.iter().copied().collect();
        let pending = std::mem::take(&mut self.deferred);
        let mut mine = Vec::new();
        for c in pending {
            let zc = map_constraint(&c, &mut Zonk(&self.sigma), &mut Vec::new());
            if free_metas_constraint(&zc).iter().any(|o| set.contains(&o.id)) {
                mine.push(zc);
            } else {
                self.deferred.push(c);
            }
        }
        match z {
            SemType::Sw(s) => sw(SType::Poly(Rc::new(Scheme { vars, constraints: mine, body: s }))),
            SemType::Mod(m) => SemType::Mod(MType::Poly(Rc::new(Scheme { vars, constraints: mine, body: m }))),
            other => other,
        }
    }

    /// Quantifies the metas of `t` that are not free in Γ (software and module types only).
    pub fn generalize(&mut self, t: &SemType) -> SemType {
        let z = self.zonk(t);
        if !matches!(z, SemType::Sw(_) | SemType::Mod(_)) || matches!(z, SemType::Sw(SType::Poly(_)) | SemType::Mod(MType::Poly(_))) {
            return z;
        }
        let env_free = self.env_free_metas();
        let vars: Vec<MetaId> = free_metas(&z)
            .into_iter()
            .filter(|o| o.kind != MetaKind::Unknown && !env_free.contains(&o.id))
            .map(|o| o.id)
            .collect();
        self.quantify(z, vars)
    }

    /// Quantifies every free meta (built-in signatures).
    pub fn close(&mut self, t: &SemType) -> SemType {
        let z = self.zonk(t);
        let vars = free_metas(&z).into_iter().filter(|o| o.kind != MetaKind::Unknown).map(|o| o.id).collect();
        self.quantify(z, vars)
    }

    /// Replaces the bound variables of a scheme by fresh metas.
    pub fn instantiate(&mut self, t: &SemType) -> SemType {
        fn fresh_map(gen: &mut MetaGen, vars: &[MetaId]) -> HashMap<MetaId, MetaId> {
            vars.iter().map(|v| (*v, gen.fresh(gen.kind(*v)))).collect()
        }
        let (map, constraints, out) = match t {
            SemType::Sw(SType::Poly(sc)) => {
                let map = fresh_map(&mut self.gen, &sc.vars);
                let body = map_s(&sc.body, &mut Rename(&map), &mut Vec::new());
                (map, &sc.constraints, sw(body))
            }
            SemType::Hw(HType::Poly(sc)) => {
                let map = fresh_map(&mut self.gen, &sc.vars);
                let body = map_h(&sc.body, &mut Rename(&map), &mut Vec::new());
                (map, &sc.constraints, hw(body))
            }
            SemType::Mod(MType::Poly(sc)) => {
                let map = fresh_map(&mut self.gen, &sc.vars);
                let body = map_m(&sc.body, &mut Rename(&map), &mut Vec::new());
                (map, &sc.constraints, SemType::Mod(body))
            }
            other => return other.clone(),
        };
        for c in constraints {
            self.deferred.push(map_constraint(c, &mut Rename(&map), &mut Vec::new()));
        }
        out
    }

    // ------------------------------------------------------------------
    // Deferred constraints

    pub fn defer(&mut self, c: Constraint) {
        self.deferred.push(c);
    }

    fn check_constraint(&mut self, c: &Constraint) -> Check {
        match c {
            Constraint::HasField { record, label, field, span } => {
                let r = self.zonk(record);
                let ft = match &r {
                    SemType::Sw(SType::Record(fs)) => fs.iter().find(|(l, _)| l == label).map(|(_, t)| sw(t.clone())),
                    SemType::Hw(HType::Record(fs)) => fs.iter().find(|(l, _)| l == label).map(|(_, t)| hw(t.clone())),
                    SemType::Meta(_) | SemType::Sw(SType::Meta(_)) | SemType::Hw(HType::Meta(_)) => return Check::Pending,
                    t if t.is_error() => return Check::Solved,
                    _ => None,
                };
                match ft {
                    Some(ft) => {
                        self.unify_at(field, &ft, *span);
                        Check::Solved
                    }
                    None => Check::Failed(
                        Diagnostic::error(ErrorKind::Type, Some(*span), format!("type {} has no field `{}`", render(&r), label))
                            .with_types(vec![render(&r)]),
                    ),
                }
            }
            Constraint::Numeric(t, span) => match self.zonk(t) {
                SemType::Sw(SType::Int | SType::Real) => Check::Solved,
                SemType::Meta(_) | SemType::Sw(SType::Meta(_)) => Check::Pending,
                z if z.is_error() || matches!(z, SemType::Sw(SType::Top | SType::Bottom)) => Check::Solved,
                z => Check::Failed(
                    Diagnostic::error(
                        ErrorKind::Type,
                        Some(*span),
                        format!("negation needs int or real, found {}", render(&z)),
                    )
                    .with_types(vec!["int".into(), render(&z)]),
                ),
            },
            Constraint::Equality(t, span) => {
                let z = self.zonk(t);
                match equality_check(&z) {
                    Ok(true) => Check::Solved,
                    Ok(false) => Check::Pending,
                    Err(()) => Check::Failed(
                        Diagnostic::error(ErrorKind::Type, Some(*span), format!("equality is not defined on type {}", render(&z)))
                            .with_types(vec![render(&z)]),
                    ),
                }
            }
            Constraint::Ordered(t, span) => match self.zonk(t) {
                SemType::Sw(SType::Int | SType::Real | SType::String | SType::Top | SType::Bottom) => Check::Solved,
                SemType::Meta(_) | SemType::Sw(SType::Meta(_)) => Check::Pending,
                z if z.is_error() => Check::Solved,
                z => Check::Failed(
                    Diagnostic::error(
                        ErrorKind::Type,
                        Some(*span),
                        format!("ordering comparison is not defined on type {}", render(&z)),
                    )
                    .with_types(vec![render(&z)]),
                ),
            },
        }
    }

    pub fn solve_deferred(&mut self) {
        loop {
            let pending = std::mem::take(&mut self.deferred);
            let before = pending.len();
            let mut keep = Vec::new();
            for c in pending {
                match self.check_constraint(&c) {
                    Check::Solved => {}
                    Check::Pending => keep.push(c),
                    Check::Failed(d) => self.diags.push(d),
                }
            }
            let progressed = keep.len() < before || !self.deferred.is_empty();
            keep.append(&mut self.deferred);
            self.deferred = keep;
            if !progressed {
                return;
            }
        }
    }

    /// Resolves what is left at the end: numeric and ordering default to int.
    pub fn default_deferred(&mut self) {
        self.solve_deferred();
        for c in std::mem::take(&mut self.deferred) {
            match c {
                Constraint::Numeric(t, span) | Constraint::Ordered(t, span) => {
                    self.unify_at(&int(), &t, span);
                }
                Constraint::Equality(..) => {}
                Constraint::HasField { label, span, record, .. } => {
                    let r = self.render(&record);
                    self.error(
                        ErrorKind::Type,
                        span,
                        format!("cannot determine the record type for field `{}` (found {})", label, r),
                    );
                }
            }
        }
    }

    // ------------------------------------------------------------------
    // Annotations

    fn ann_size(&mut self, e: &Expr) -> Size {
        let var = |inf: &mut Infer, name: &str| -> MetaId {
            if let Some(id) = inf.ann.sizes.get(name) {
                return *id;
            }
            let id = inf.gen.fresh(MetaKind::Size);
            inf.ann.sizes.insert(name.to_string(), id);
            id
        };
        match &e.kind {
            ExprKind::Int(n) if *n >= 0 => Size::Known(*n as u32),
            ExprKind::Int(_) => {
                self.error(ErrorKind::Type, e.span, "array sizes and delays must be non-negative");
                Size::Known(0)
            }
            ExprKind::Var { name, .. } => Size::Var(var(self, name), 0),
            ExprKind::Binary(BinOp::Add, a, b) => match (&a.kind, &b.kind) {
                (ExprKind::Var { name, .. }, ExprKind::Int(k)) | (ExprKind::Int(k), ExprKind::Var { name, .. }) if *k >= 0 => {
                    Size::Var(var(self, name), *k as u32)
                }
                _ => self.gen.fresh_size(),
            },
            _ => self.gen.fresh_size(),
        }
    }

    /// Translates a type annotation in the current annotation scope.
    pub fn translate(&mut self, t: &AstTy) -> SemType {
        let span = t.span;
        match &t.kind {
            TyKind::Var(v) => {
                if let Some(t) = self.ann.tyvars.get(v) {
                    return t.clone();
                }
                let m = self.gen.fresh_any();
                self.ann.tyvars.insert(v.clone(), m.clone());
                m
            }
            TyKind::Name(n, args) => {
                let targs: Vec<SemType> = args.iter().map(|a| self.translate(a)).collect();
                if let Some(def) = self.env.lookup_type(n).cloned() {
                    return self.apply_typedef(n, &def, targs, span);
                }
                let mut targs = targs;
                match (n.as_str(), targs.len()) {
                    ("int", 0) => int(),
                    ("real", 0) => sw(SType::Real),
                    ("string", 0) => sw(SType::String),
                    ("unit", 0) => SemType::unit(),
                    ("bit", 0) => hw(HType::Bit),
                    ("list", 1) => {
                        let a = self.expect_sw(targs.pop().unwrap(), span);
                        sw(SType::list(a))
                    }
                    ("ref", 1) => {
                        let a = self.expect_sw(targs.pop().unwrap(), span);
                        sw(SType::Ref(Box::new(a)))
                    }
                    ("sw", 1) => {
                        let a = self.expect_hw(targs.pop().unwrap(), span);
                        sw(SType::Sw(Box::new(a)))
                    }
                    ("int" | "real" | "string" | "unit" | "bit" | "list" | "ref" | "sw", k) => {
                        self.error(ErrorKind::Type, span, format!("type `{}` applied to {} arguments", n, k));
                        SemType::Top
                    }
                    _ => {
                        self.error(ErrorKind::UnknownType, span, format!("unknown type `{}`", n));
                        SemType::Top
                    }
                }
            }
            TyKind::Record { fields, hw: is_hw } => {
                let mut out_s = Vec::new();
                let mut out_h = Vec::new();
                for (l, ft) in fields {
                    let t = self.translate(ft);
                    if *is_hw {
                        out_h.push((l.clone(), self.expect_hw(t, ft.span)));
                    } else {
                        out_s.push((l.clone(), self.expect_sw(t, ft.span)));
                    }
                }
                if *is_hw {
                    hw(HType::Record(out_h))
                } else {
                    sw(SType::Record(out_s))
                }
            }
            TyKind::Tuple { items, hw: is_hw } => {
                if *is_hw {
                    let hs = items.iter().map(|i| {
                        let t = self.translate(i);
                        self.expect_hw(t, i.span)
                    });
                    let hs: Vec<HType> = hs.collect();
                    hw(HType::tuple(hs))
                } else {
                    let ss: Vec<SType> = items
                        .iter()
                        .map(|i| {
                            let t = self.translate(i);
                            self.expect_sw(t, i.span)
                        })
                        .collect();
                    sw(SType::tuple(ss))
                }
            }
            TyKind::Arrow(a, b) => {
                let ta = self.translate(a);
                let sa = self.expect_sw(ta, a.span);
                let tb = self.translate(b);
                let sb = self.expect_sw(tb, b.span);
                sw(SType::arrow(sa, sb))
            }
            TyKind::ModArrow(a, b) => {
                let ta = self.translate(a);
                let ha = self.expect_hw(ta, a.span);
                let tb = self.translate(b);
                let hb = self.expect_hw(tb, b.span);
                SemType::Mod(MType::Module(ha, hb))
            }
            TyKind::Array(e, size) => {
                let te = self.translate(e);
                let he = self.expect_hw(te, e.span);
                let n = self.ann_size(size);
                hw(HType::Array(Box::new(he), n))
            }
            TyKind::Temporal(e, time) => {
                let te = self.translate(e);
                let he = self.expect_hw(te, e.span);
                let n = self.ann_size(time);
                hw(HType::temporal(he, n))
            }
        }
    }

    /// Translates a standalone signature in a fresh scope and quantifies all of its metas.
    pub fn translate_closed(&mut self, t: &AstTy) -> SemType {
        let saved = std::mem::take(&mut self.ann);
        let r = self.translate(t);
        self.ann = saved;
        self.close(&r)
    }

    fn apply_typedef(&mut self, name: &str, def: &TypeDef, args: Vec<SemType>, span: Span) -> SemType {
        let arity = match def {
            TypeDef::Alias { params, .. } => params.len(),
            TypeDef::Data(d) => d.params.len(),
            TypeDef::Pending { arity, .. } => *arity,
        };
        if args.len() != arity {
            self.error(
                ErrorKind::Type,
                span,
                format!("type `{}` expects {} argument(s), found {}", name, arity, args.len()),
            );
            return SemType::Top;
        }
        match def {
            TypeDef::Pending { meta, hw: true, .. } => hw(HType::Meta(*meta)),
            TypeDef::Pending { meta, .. } => sw(SType::Meta(*meta)),
            TypeDef::Alias { params, body } => {
                let mut s = HashMap::new();
                for (p, a) in params.iter().zip(args) {
                    let st = self.expect_sw(a, span);
                    s.insert(*p, st);
                }
                map_sem(body, &mut Replace { s: &s, h: &HashMap::new() }, &mut Vec::new())
            }
            TypeDef::Data(d) => {
                if d.hw {
                    let mut h = HashMap::new();
                    for (p, a) in d.params.iter().zip(args) {
                        let ht = self.expect_hw(a, span);
                        h.insert(*p, ht);
                    }
                    let tmpl = HType::Data(d.hw_template.clone().unwrap());
                    hw(map_h(&tmpl, &mut Replace { s: &HashMap::new(), h: &h }, &mut Vec::new()))
                } else {
                    let mut s = HashMap::new();
                    for (p, a) in d.params.iter().zip(args) {
                        let st = self.expect_sw(a, span);
                        s.insert(*p, st);
                    }
                    let tmpl = d.sw_template.clone().unwrap();
                    sw(map_s(&tmpl, &mut Replace { s: &s, h: &HashMap::new() }, &mut Vec::new()))
                }
            }
        }
    }

    fn declare_datatype(&mut self, hw_kind: bool, params: &[String], name: &str, ctors: &[CtorDecl], span: Span) -> Rc<DataDef> {
        let tag = self.next_tag;
        self.next_tag += 1;
        let mut pids = Vec::new();
        for p in params {
            let (id, t) = if hw_kind {
                let id = self.gen.fresh(MetaKind::Hardware);
                (id, hw(HType::Meta(id)))
            } else {
                let id = self.gen.fresh(MetaKind::Software);
                (id, sw(SType::Meta(id)))
            };
            self.ann.tyvars.insert(p.clone(), t);
            pids.push(id);
        }
        let rec = self.gen.fresh(if hw_kind { MetaKind::Hardware } else { MetaKind::Software });
        let mark = self.env.mark();
        self.env.types.push((name.to_string(), TypeDef::Pending { meta: rec, hw: hw_kind, arity: params.len() }));
        let mut sw_ctors = Vec::new();
        let mut hw_ctors = Vec::new();
        for c in ctors {
            match &c.payload {
                None => {
                    sw_ctors.push((c.name.clone(), None));
                    hw_ctors.push((c.name.clone(), None));
                }
                Some(p) => {
                    let t = self.translate(p);
                    if hw_kind {
                        let h = self.expect_hw(t, p.span);
                        hw_ctors.push((c.name.clone(), Some(zonk_h(&h, &self.sigma))));
                    } else {
                        let s = self.expect_sw(t, p.span);
                        sw_ctors.push((c.name.clone(), Some(zonk_s(&s, &self.sigma))));
                    }
                }
            }
        }
        self.env.restore(mark);
        let def = if hw_kind {
            let dt = DataTy { name: name.to_string(), tag, args: pids.iter().map(|p| HType::Meta(*p)).collect(), ctors: hw_ctors };
            let recursive = dt.ctors.iter().filter_map(|(_, p)| p.as_ref()).any(|p| free_metas(&hw(p.clone())).iter().any(|o| o.id == rec));
            if recursive {
                self.error(ErrorKind::Type, span, format!("recursive hardware datatype `{}` is not supported", name));
            }
            let dt = Rc::new(dt);
            let _ = self.sigma.insert(rec, hw(HType::Data(dt.clone())));
            DataDef { name: name.to_string(), tag, hw: true, params: pids, sw_template: None, hw_template: Some(dt) }
        } else {
            let dt = DataTy { name: name.to_string(), tag, args: pids.iter().map(|p| SType::Meta(*p)).collect(), ctors: sw_ctors };
            let recursive = dt.ctors.iter().filter_map(|(_, p)| p.as_ref()).any(|p| free_metas(&sw(p.clone())).iter().any(|o| o.id == rec));
            let data = SType::Data(Rc::new(dt));
            let tmpl = if recursive { SType::Mu(vec![rec], Box::new(data)) } else { data };
            let _ = self.sigma.insert(rec, sw(tmpl.clone()));
            DataDef { name: name.to_string(), tag, hw: false, params: pids, sw_template: Some(tmpl), hw_template: None }
        };
        let def = Rc::new(def);
        self.env.types.push((name.to_string(), TypeDef::Data(def.clone())));
        for (i, c) in ctors.iter().enumerate() {
            let info = CtorInfo { name: c.name.clone(), index: i, has_payload: c.payload.is_some(), def: def.clone() };
            self.env.vals.push((c.name.clone(), ValBind::Ctor(Rc::new(info))));
        }
        def
    }

    /// Fresh instance of a constructor's datatype and its payload type.
    pub fn instantiate_ctor(&mut self, info: &CtorInfo) -> (SemType, Option<SemType>) {
        let def = &info.def;
        let map: HashMap<MetaId, MetaId> = def.params.iter().map(|p| (*p, self.gen.fresh(self.gen.kind(*p)))).collect();
        if def.hw {
            let tmpl = HType::Data(def.hw_template.clone().unwrap());
            let inst = map_h(&tmpl, &mut Rename(&map), &mut Vec::new());
            let payload = match &inst {
                HType::Data(d) => d.ctors[info.index].1.clone().map(hw),
                _ => None,
            };
            (hw(inst), payload)
        } else {
            let tmpl = def.sw_template.clone().unwrap();
            let inst = map_s(&tmpl, &mut Rename(&map), &mut Vec::new());
            let unrolled = unroll_mu(&inst);
            let payload = data_head(&unrolled).and_then(|d| d.ctors[info.index].1.clone()).map(sw);
            (sw(inst), payload)
        }
    }

    fn ctor_value_type(&mut self, info: &CtorInfo) -> SemType {
        let (d, p) = self.instantiate_ctor(info);
        match p {
            None => d,
            Some(p) => {
                if info.def.hw {
                    let (SemType::Hw(ph), SemType::Hw(dh)) = (p, d) else { return SemType::Top };
                    SemType::Mod(MType::Module(ph, dh))
                } else {
                    let (SemType::Sw(ps), SemType::Sw(ds)) = (p, d) else { return SemType::Top };
                    sw(SType::arrow(ps, ds))
                }
            }
        }
    }

    // ------------------------------------------------------------------
    // Decoration

    fn decorate_pattern(&mut self, p: &mut Pattern, kind: MetaKind) -> SemType {
        let t = match &mut p.kind {
            PatKind::Var { ann: Some(a), .. } => self.translate(&a.clone()),
            PatKind::Record { fields, hw: is_hw } => {
                let is_hw = *is_hw;
                let mut ss = Vec::new();
                let mut hs = Vec::new();
                for (l, fp) in fields.iter_mut() {
                    let k = if is_hw { MetaKind::Hardware } else { kind };
                    let ft = self.decorate_pattern(fp, k);
                    if is_hw {
                        hs.push((l.clone(), self.expect_hw(ft, fp.span)));
                    } else {
                        ss.push((l.clone(), self.expect_sw(ft, fp.span)));
                    }
                }
                if is_hw {
                    hw(HType::Record(hs))
                } else {
                    sw(SType::Record(ss))
                }
            }
            _ => match kind {
                MetaKind::Software => sw(self.gen.fresh_sw()),
                MetaKind::Hardware => hw(self.gen.fresh_hw()),
                _ => self.gen.fresh_any(),
            },
        };
        p.ty = TySlot::Explicit(t.clone());
        t
    }

    /// Fills the binder slots of a declaration with annotations or fresh kinded metas.
    pub fn decorate_dec(&mut self, d: &mut Dec) {
        match &mut d.kind {
            DecKind::Val { ann, ty, .. } => {
                if ty.get().is_none() {
                    let t = match ann {
                        Some(a) => self.translate(&a.clone()),
                        None => self.gen.fresh_any(),
                    };
                    *ty = TySlot::Explicit(t);
                }
            }
            DecKind::Fun { params, ret, ty, .. } => {
                if ty.get().is_none() {
                    let mut pts = Vec::new();
                    for p in params.iter_mut() {
                        let t = self.decorate_pattern(p, MetaKind::Software);
                        pts.push(self.expect_sw(t, p.span));
                    }
                    let r = match ret {
                        Some(a) => {
                            let t = self.translate(&a.clone());
                            self.expect_sw(t, a.span)
                        }
                        None => self.gen.fresh_sw(),
                    };
                    let f = pts.into_iter().rev().fold(r, |acc, p| SType::arrow(p, acc));
                    *ty = TySlot::Explicit(sw(f));
                }
            }
            DecKind::Module { size_param, param, ret, ty, .. } => {
                if ty.get().is_none() {
                    let pt = self.decorate_pattern(param, MetaKind::Hardware);
                    let ph = self.expect_hw(pt, param.span);
                    let r = match ret {
                        Some(a) => {
                            let t = self.translate(&a.clone());
                            self.expect_hw(t, a.span)
                        }
                        None => self.gen.fresh_hw(),
                    };
                    let m = match size_param {
                        Some(_) => MType::Parameterized(SType::Int, ph, r),
                        None => MType::Module(ph, r),
                    };
                    *ty = TySlot::Explicit(SemType::Mod(m));
                }
            }
            DecKind::Type { .. } | DecKind::Datatype { .. } => {}
        }
    }

    // ------------------------------------------------------------------
    // Patterns

    pub fn pattern(&mut self, p: &mut Pattern, expected: &SemType) {
        let span = p.span;
        if let PatKind::Var { name, ann: None } = &p.kind {
            if let Some(ValBind::Ctor(info)) = self.env.lookup_val(name) {
                if !info.has_payload {
                    p.kind = PatKind::Ctor { name: name.clone(), arg: None, info: None };
                }
            }
        }
        match &mut p.kind {
            PatKind::Wild => {}
            PatKind::Int(_) => {
                self.unify_at(expected, &int(), span);
            }
            PatKind::Real(_) => {
                self.unify_at(expected, &sw(SType::Real), span);
            }
            PatKind::Str(_) => {
                self.unify_at(expected, &sw(SType::String), span);
            }
            PatKind::Var { name, ann } => {
                if let Some(a) = ann {
                    let at = self.translate(&a.clone());
                    self.unify_at(&at, expected, span);
                }
                self.env.bind_val(name, expected.clone());
            }
            PatKind::Ctor { name, arg, info } => {
                let ci = match self.env.lookup_val(name) {
                    Some(ValBind::Ctor(ci)) => ci.clone(),
                    _ => {
                        self.error(ErrorKind::Unbound, span, format!("unknown constructor `{}`", name));
                        if let Some(a) = arg {
                            self.pattern(a, &SemType::Top);
                        }
                        p.ty = TySlot::Explicit(expected.clone());
                        return;
                    }
                };
                *info = Some(ci.clone());
                let (d, payload) = self.instantiate_ctor(&ci);
                self.unify_at(expected, &d, span);
                match (payload, arg) {
                    (Some(pt), Some(a)) => self.pattern(a, &pt),
                    (None, None) => {}
                    (Some(_), None) => self.error(ErrorKind::Type, span, format!("constructor `{}` expects an argument", name)),
                    (None, Some(a)) => {
                        self.error(ErrorKind::Type, span, format!("constructor `{}` takes no argument", name));
                        self.pattern(a, &SemType::Top);
                    }
                }
            }
            PatKind::Record { fields, hw: is_hw } => {
                let is_hw = *is_hw;
                let ftys: Vec<(Label, SemType)> = fields
                    .iter()
                    .map(|(l, _)| (l.clone(), if is_hw { hw(self.gen.fresh_hw()) } else { sw(self.gen.fresh_sw()) }))
                    .collect();
                let rec = if is_hw {
                    hw(HType::Record(
                        ftys.iter().map(|(l, t)| (l.clone(), if let SemType::Hw(h) = t { h.clone() } else { HType::Top })).collect(),
                    ))
                } else {
                    sw(SType::Record(
                        ftys.iter().map(|(l, t)| (l.clone(), if let SemType::Sw(s) = t { s.clone() } else { SType::Top })).collect(),
                    ))
                };
                self.unify_at(expected, &rec, span);
                for ((_, fp), (_, ft)) in fields.iter_mut().zip(ftys) {
                    self.pattern(fp, &ft);
                }
            }
            PatKind::Cons(h, t) => {
                let e = self.gen.fresh_sw();
                let lt = sw(SType::list(e.clone()));
                self.unify_at(expected, &lt, span);
                self.pattern(h, &sw(e));
                self.pattern(t, &lt);
            }
            PatKind::List(ps) => {
                let e = self.gen.fresh_sw();
                self.unify_at(expected, &sw(SType::list(e.clone())), span);
                for q in ps {
                    self.pattern(q, &sw(e.clone()));
                }
            }
            PatKind::Tuple { .. } => self.error(ErrorKind::Internal, span, "tuple pattern survived desugaring"),
        }
        p.ty = TySlot::Explicit(expected.clone());
    }

    // ------------------------------------------------------------------
    // Expressions

    pub fn expr(&mut self, e: &mut Expr) -> SemType {
        let t = self.expr_inner(e);
        e.ty = TySlot::Explicit(t.clone());
        t
    }

    fn sw_of(&mut self, e: &mut Expr) -> SType {
        let t = self.expr(e);
        self.expect_sw(t, e.span)
    }

    fn hw_of(&mut self, e: &mut Expr) -> HType {
        let t = self.expr(e);
        self.expect_hw(t, e.span)
    }

    fn expect_int(&mut self, e: &mut Expr) {
        let t = self.expr(e);
        self.unify_at(&int(), &t, e.span);
    }

    fn project(&mut self, t: SemType, label: &str, span: Span) -> SemType {
        let z = self.zonk(&t);
        let missing = |inf: &mut Infer, z: &SemType| {
            let r = render(z);
            inf.diags.push(
                Diagnostic::error(ErrorKind::Type, Some(span), format!("type {} has no field `{}`", r, label)).with_types(vec![r]),
            );
            SemType::Top
        };
        match &z {
            SemType::Sw(SType::Record(fs)) => match fs.iter().find(|(l, _)| l == label) {
                Some((_, t)) => sw(t.clone()),
                None => missing(self, &z),
            },
            SemType::Hw(HType::Record(fs)) => match fs.iter().find(|(l, _)| l == label) {
                Some((_, t)) => hw(t.clone()),
                None => missing(self, &z),
            },
            SemType::Hw(HType::Temporal(inner, n)) if matches!(**inner, HType::Record(_)) => {
                let HType::Record(fs) = &**inner else { unreachable!() };
                match fs.iter().find(|(l, _)| l == label) {
                    Some((_, t)) => hw(HType::temporal(t.clone(), *n)),
                    None => missing(self, &z),
                }
            }
            SemType::Meta(_) | SemType::Sw(SType::Meta(_)) | SemType::Hw(HType::Meta(_)) => {
                let f = match &z {
                    SemType::Sw(_) => sw(self.gen.fresh_sw()),
                    SemType::Hw(_) => hw(self.gen.fresh_hw()),
                    _ => self.gen.fresh_any(),
                };
                self.defer(Constraint::HasField { record: t, label: label.to_string(), field: f.clone(), span });
                f
            }
            z if z.is_error() || matches!(z, SemType::Sw(SType::Top | SType::Bottom) | SemType::Hw(HType::Top | HType::Bottom)) => {
                SemType::Top
            }
            _ => missing(self, &z),
        }
    }

    fn expr_inner(&mut self, e: &mut Expr) -> SemType {
        let span = e.span;
        match &mut e.kind {
            ExprKind::Int(_) => int(),
            ExprKind::Real(_) => sw(SType::Real),
            ExprKind::Str(_) => sw(SType::String),
            ExprKind::Bit(_) => hw(HType::Bit),
            ExprKind::Var { name, ctor } => match self.env.lookup_val(name).cloned() {
                None => {
                    self.error(ErrorKind::Unbound, span, format!("unbound identifier `{}`", name));
                    SemType::Top
                }
                Some(ValBind::Var(t)) => self.instantiate(&t),
                Some(ValBind::Ctor(info)) => {
                    *ctor = Some(info.clone());
                    self.ctor_value_type(&info)
                }
            },
            ExprKind::Record(fs) => {
                let mut out = Vec::new();
                for (l, fe) in fs.iter_mut() {
                    out.push((l.clone(), self.sw_of(fe)));
                }
                sw(SType::Record(out))
            }
            ExprKind::HwRecord(fs) => {
                let mut out = Vec::new();
                for (l, fe) in fs.iter_mut() {
                    out.push((l.clone(), self.hw_of(fe)));
                }
                hw(HType::Record(out))
            }
            ExprKind::List(xs) => {
                let el = self.gen.fresh_sw();
                for x in xs.iter_mut() {
                    let t = self.expr(x);
                    self.unify_at(&sw(el.clone()), &t, x.span);
                }
                sw(SType::list(el))
            }
            ExprKind::Proj(l, a) => {
                let t = self.expr(a);
                let l = l.clone();
                self.project(t, &l, span)
            }
            ExprKind::ArrayLit(xs) => {
                let el = self.gen.fresh_hw();
                for x in xs.iter_mut() {
                    let t = self.expr(x);
                    if !matches!(self.zonk(&t), SemType::Hw(_) | SemType::Meta(_)) && !t.is_error() {
                        self.expect_hw(t, x.span);
                        continue;
                    }
                    self.unify_at(&hw(el.clone()), &t, x.span);
                }
                hw(HType::array(el, xs.len() as u32))
            }
            ExprKind::ArrayGen { size, var, body } => {
                self.expect_int(size);
                let n = match size.kind {
                    ExprKind::Int(k) if k >= 0 => Size::Known(k as u32),
                    _ => self.gen.fresh_size(),
                };
                let mark = self.env.mark();
                self.env.bind_val(var, int());
                let h = self.hw_of(body);
                self.env.restore(mark);
                hw(HType::Array(Box::new(h), n))
            }
            ExprKind::Index(a, i) => {
                let at = self.expr(a);
                self.expect_int(i);
                let lit = if let ExprKind::Int(k) = i.kind { Some(k) } else { None };
                let z = self.zonk(&at);
                if let SemType::Hw(HType::Temporal(inner, t)) = &z {
                    if let HType::Array(el, n) = &**inner {
                        self.check_index(lit, *n, i.span);
                        return hw(HType::temporal((**el).clone(), *t));
                    }
                }
                let el = self.gen.fresh_hw();
                let n = self.gen.fresh_size();
                if self.unify_at(&hw(HType::Array(Box::new(el.clone()), n)), &at, a.span) {
                    let n = self.sigma.resolve_size(n);
                    self.check_index(lit, n, i.span);
                }
                hw(el)
            }
            ExprKind::BitArray { kind, width, value } => {
                self.expect_int(width);
                self.expect_int(value);
                if *kind == BitArrayKind::Real {
                    self.error(ErrorKind::Unsupported, span, "real bit arrays ('r:) are not supported");
                    return SemType::Top;
                }
                let n = match width.kind {
                    ExprKind::Int(k) if k >= 0 => Size::Known(k as u32),
                    _ => self.gen.fresh_size(),
                };
                hw(HType::Array(Box::new(HType::Bit), n))
            }
            ExprKind::Unary(op, a) => match op {
                UnOp::Neg => {
                    let t = self.sw_of(a);
                    self.defer(Constraint::Numeric(sw(t.clone()), span));
                    sw(t)
                }
                UnOp::BitNot => hw(self.hw_of(a)),
                UnOp::AndReduce | UnOp::OrReduce | UnOp::XorReduce => {
                    // Reduction over any element type: bits give one gate, aggregates reduce per position.
                    let t = self.expr(a);
                    let n = self.gen.fresh_size();
                    let elem = self.gen.fresh_hw();
                    self.unify_at(&hw(HType::Array(Box::new(elem.clone()), n)), &t, a.span);
                    hw(elem)
                }
                UnOp::Deref => {
                    let t = self.expr(a);
                    let r = self.gen.fresh_sw();
                    self.unify_at(&sw(SType::Ref(Box::new(r.clone()))), &t, a.span);
                    sw(r)
                }
            },
            ExprKind::Binary(op, a, b) => self.binary(*op, a, b, span),
            ExprKind::If(c, t, els) => {
                self.expect_int(c);
                let tt = self.expr(t);
                match els {
                    Some(x) => {
                        let te = self.expr(x);
                        self.unify_at(&tt, &te, x.span);
                        if tt.is_error() {
                            te
                        } else {
                            tt
                        }
                    }
                    None => {
                        self.unify_at(&SemType::unit(), &tt, t.span);
                        SemType::unit()
                    }
                }
            }
            ExprKind::Let(decs, body) => {
                let mark = self.env.mark();
                for d in decs.iter_mut() {
                    self.dec(d);
                }
                let t = self.expr(body);
                self.env.restore(mark);
                t
            }
            ExprKind::Seq(items) => {
                let n = items.len();
                let mut last = SemType::unit();
                for (i, x) in items.iter_mut().enumerate() {
                    let t = self.expr(x);
                    if i + 1 < n {
                        self.expect_sw(t, x.span);
                    } else {
                        last = t;
                    }
                }
                last
            }
            ExprKind::App(f, a) => {
                let tf = self.expr(f);
                match self.zonk(&tf) {
                    SemType::Mod(MType::Module(p, r)) => {
                        let ta = self.expr(a);
                        self.unify_at(&hw(p), &ta, a.span);
                        hw(r)
                    }
                    SemType::Mod(MType::Parameterized(..)) => {
                        self.expr(a);
                        self.error(
                            ErrorKind::Type,
                            f.span,
                            "a parameterized module must be instantiated with <: size :> before it is applied",
                        );
                        SemType::Top
                    }
                    z if z.is_error() => {
                        self.expr(a);
                        SemType::Top
                    }
                    _ => {
                        let ta = self.expr(a);
                        let sa = self.expect_sw(ta, a.span);
                        let r = self.gen.fresh_sw();
                        self.unify_at(&sw(SType::arrow(sa, r.clone())), &tf, f.span);
                        sw(r)
                    }
                }
            }
            ExprKind::Case(scrut, arms) => {
                let ts = self.expr(scrut);
                let r = self.gen.fresh_any();
                for (p, body) in arms.iter_mut() {
                    let mark = self.env.mark();
                    self.pattern(p, &ts);
                    let tb = self.expr(body);
                    self.unify_at(&r, &tb, body.span);
                    self.env.restore(mark);
                }
                r
            }
            ExprKind::Lambda { name, param, body } => {
                let pt = self.decorate_pattern(param, MetaKind::Software);
                let pa = self.expect_sw(pt, param.span);
                let rb = self.gen.fresh_sw();
                let fty = SType::arrow(pa.clone(), rb.clone());
                let mark = self.env.mark();
                if let Some(n) = name {
                    self.env.bind_val(n, sw(fty.clone()));
                }
                self.pattern(param, &sw(pa));
                let sb = self.sw_of(body);
                self.unify_at(&sw(rb), &sw(sb), body.span);
                self.env.restore(mark);
                sw(fty)
            }
            ExprKind::Param(m, n) => {
                let tm = self.expr(m);
                let tn = self.expr(n);
                match self.zonk(&tm) {
                    SemType::Mod(MType::Parameterized(s, a, b)) => {
                        self.unify_at(&sw(s), &tn, n.span);
                        SemType::Mod(MType::Module(a, b))
                    }
                    z if z.is_error() => SemType::Top,
                    z => {
                        let r = render(&z);
                        self.diags.push(
                            Diagnostic::error(
                                ErrorKind::Type,
                                Some(m.span),
                                format!("expected a parameterized module, found {}", r),
                            )
                            .with_types(vec!["<:int:> module".into(), r]),
                        );
                        SemType::Top
                    }
                }
            }
            ExprKind::Ref(a) => sw(SType::Ref(Box::new(self.sw_of(a)))),
            ExprKind::Sw(a) => sw(SType::Sw(Box::new(self.hw_of(a)))),
            ExprKind::Unsw(a) => {
                let t = self.expr(a);
                let h = self.gen.fresh_hw();
                self.unify_at(&sw(SType::Sw(Box::new(h.clone()))), &t, a.span);
                hw(h)
            }
            ExprKind::Loc(l) => match self.store_types.get(l) {
                Some(t) => sw(SType::Ref(Box::new(t.clone()))),
                None => {
                    self.error(ErrorKind::Internal, span, format!("untyped store location {}", l));
                    SemType::Top
                }
            },
            ExprKind::WrapLoc(w) => match self.wrap_types.get(w) {
                Some(t) => sw(SType::Sw(Box::new(t.clone()))),
                None => {
                    self.error(ErrorKind::Internal, span, format!("untyped wrap location {}", w));
                    SemType::Top
                }
            },
            ExprKind::Tuple { .. }
            | ExprKind::Unit
            | ExprKind::Collapse(..)
            | ExprKind::AndAlso(..)
            | ExprKind::OrElse(..)
            | ExprKind::Not(_) => {
                self.error(ErrorKind::Internal, span, "derived form survived desugaring");
                SemType::Top
            }
        }
    }

    fn check_index(&mut self, lit: Option<i32>, n: Size, span: Span) {
        if let (Some(k), Size::Known(len)) = (lit, n) {
            if k < 0 || k as i64 >= len as i64 {
                self.error(
                    ErrorKind::OutOfRange,
                    span,
                    format!("index {} is out of range for an array of length {}", k, len),
                );
            }
        }
    }

    fn binary(&mut self, op: BinOp, a: &mut Expr, b: &mut Expr, span: Span) -> SemType {
        use BinOp::*;
        match op {
            Add | Sub | Mul | Div | Mod => {
                self.expect_int(a);
                self.expect_int(b);
                int()
            }
            RAdd | RSub | RMul | RDiv => {
                let r = sw(SType::Real);
                let ta = self.expr(a);
                self.unify_at(&r, &ta, a.span);
                let tb = self.expr(b);
                self.unify_at(&r, &tb, b.span);
                r
            }
            Eq | Ne | Lt | Gt | Le | Ge => {
                let sa = self.sw_of(a);
                let sb = self.sw_of(b);
                self.unify_at(&sw(sa.clone()), &sw(sb), b.span);
                let c = if matches!(op, Eq | Ne) {
                    Constraint::Equality(sw(sa), span)
                } else {
                    Constraint::Ordered(sw(sa), span)
                };
                self.defer(c);
                int()
            }
            Shl | Shr | Sra => {
                let ta = self.expr(a);
                let n = self.gen.fresh_size();
                let arr = hw(HType::Array(Box::new(HType::Bit), n));
                self.unify_at(&arr, &ta, a.span);
                let tb = self.expr(b);
                let m = self.gen.fresh_size();
                self.unify_at(&hw(HType::Array(Box::new(HType::Bit), m)), &tb, b.span);
                arr
            }
            And | Or | Xor => {
                let ha = self.hw_of(a);
                let hb = self.hw_of(b);
                self.unify_at(&hw(ha.clone()), &hw(hb), b.span);
                hw(ha)
            }
            Cons => {
                let sa = self.sw_of(a);
                let tb = self.expr(b);
                let lt = sw(SType::list(sa));
                self.unify_at(&lt, &tb, b.span);
                lt
            }
            Assign => {
                let ta = self.expr(a);
                let sb = self.sw_of(b);
                self.unify_at(&sw(SType::Ref(Box::new(sb))), &ta, a.span);
                SemType::unit()
            }
        }
    }

    // ------------------------------------------------------------------
    // Declarations

    pub fn dec(&mut self, d: &mut Dec) {
        let saved = std::mem::take(&mut self.ann);
        self.dec_inner(d);
        self.ann = saved;
    }

    fn dec_inner(&mut self, d: &mut Dec) {
        let span = d.span;
        let before = self.error_count();
        match &mut d.kind {
            DecKind::Type { params, name, body } => {
                let mut pids = Vec::new();
                for p in params.iter() {
                    let id = self.gen.fresh(MetaKind::Software);
                    self.ann.tyvars.insert(p.clone(), sw(SType::Meta(id)));
                    pids.push(id);
                }
                let t = self.translate(&body.clone());
                let t = self.zonk(&t);
                self.env.types.push((name.clone(), TypeDef::Alias { params: pids, body: t }));
                return;
            }
            DecKind::Datatype { hw: is_hw, params, name, ctors, def } => {
                let dd = self.declare_datatype(*is_hw, &params.clone(), &name.clone(), &ctors.clone(), span);
                *def = Some(dd);
                return;
            }
            _ => {}
        }
        self.decorate_dec(d);
        match &mut d.kind {
            DecKind::Val { name, ty, expr, .. } => {
                let slot = ty.get().cloned().unwrap_or(SemType::Top);
                let mark = self.env.mark();
                if matches!(expr.kind, ExprKind::ArrayGen { .. }) {
                    self.env.bind_val(name, slot.clone());
                }
                let t = self.expr(expr);
                self.env.restore(mark);
                self.unify_at(&slot, &t, expr.span);
                self.solve_deferred();
                let fin = if self.error_count() > before {
                    SemType::Top
                } else if is_nonexpansive(expr) {
                    self.generalize(&slot)
                } else {
                    self.zonk(&slot)
                };
                *ty = TySlot::Explicit(fin.clone());
                self.env.bind_val(name, fin);
            }
            DecKind::Fun { name, params, ty, body, .. } => {
                let fty = ty.get().cloned().unwrap_or(SemType::Top);
                let mark = self.env.mark();
                self.env.bind_val(name, fty.clone());
                let mut cur = match &fty {
                    SemType::Sw(s) => s.clone(),
                    _ => SType::Top,
                };
                for p in params.iter_mut() {
                    let (pa, rest) = match cur {
                        SType::Arrow(a, r) => (*a, *r),
                        _ => (SType::Top, SType::Top),
                    };
                    self.pattern(p, &sw(pa));
                    cur = rest;
                }
                let sb = self.sw_of(body);
                self.unify_at(&sw(cur), &sw(sb), body.span);
                self.env.restore(mark);
                self.solve_deferred();
                let fin = if self.error_count() > before { SemType::Top } else { self.generalize(&fty) };
                *ty = TySlot::Explicit(fin.clone());
                self.env.bind_val(name, fin);
            }
            DecKind::Module { name, size_param, param, ty, body, .. } => {
                let mty = ty.get().cloned().unwrap_or(SemType::Top);
                let (pin, pout) = match &mty {
                    SemType::Mod(MType::Module(a, b)) | SemType::Mod(MType::Parameterized(_, a, b)) => (a.clone(), b.clone()),
                    _ => (HType::Top, HType::Top),
                };
                let mark = self.env.mark();
                self.env.bind_val(name, mty.clone());
                if let Some(n) = size_param {
                    self.env.bind_val(n, int());
                }
                self.pattern(param, &hw(pin));
                let hb = self.hw_of(body);
                self.unify_at(&hw(pout), &hw(hb), body.span);
                self.env.restore(mark);
                self.solve_deferred();
                let fin = if self.error_count() > before { SemType::Top } else { self.generalize(&mty) };
                *ty = TySlot::Explicit(fin.clone());
                self.env.bind_val(name, fin);
            }
            DecKind::Type { .. } | DecKind::Datatype { .. } => unreachable!(),
        }
    }

    // ------------------------------------------------------------------
    // Whole programs

    /// Infers a closed expression, settles deferred constraints and resolves every slot.
    pub fn infer_and_check(&mut self, e: &mut Expr) -> SemType {
        let t = self.expr(e);
        self.default_deferred();
        let t = self.zonk(&t);
        self.finalize(e);
        exhaust::check(e, &mut self.diags);
        t
    }

    /// The program must denote a concrete, non-parameterized module.
    pub fn check_program_type(&mut self, t: &SemType, span: Span) {
        let z = self.zonk(t);
        let inst = self.instantiate(&z);
        let inst = self.zonk(&inst);
        match &inst {
            SemType::Mod(MType::Module(a, b)) => {
                let poly = free_metas(&SemType::Hw(a.clone()))
                    .into_iter()
                    .chain(free_metas(&SemType::Hw(b.clone())))
                    .any(|o| o.kind != MetaKind::Size);
                if poly {
                    self.error(
                        ErrorKind::NonModuleProgram,
                        span,
                        format!("the program's module type {} is polymorphic; annotate its ports", render(&z)),
                    );
                }
            }
            SemType::Mod(MType::Parameterized(..)) => self.error(
                ErrorKind::NonModuleProgram,
                span,
                format!("the program returns a parameterized module ({}); instantiate it with <: size :>", render(&z)),
            ),
            z if z.is_error() => {}
            other => self.error(
                ErrorKind::NonModuleProgram,
                span,
                format!("a program must evaluate to a module, found {}", render(other)),
            ),
        }
    }

    /// Replaces every slot by its fully resolved type.
    pub fn finalize(&self, e: &mut Expr) {
        struct Fin<'a>(&'a SubstEnv);
        impl Fin<'_> {
            fn slot(&self, s: &mut TySlot) {
                if let TySlot::Explicit(t) = s {
                    *t = zonk(t, self.0);
                }
            }
            fn pat(&self, p: &mut Pattern) {
                self.slot(&mut p.ty);
                match &mut p.kind {
                    PatKind::Ctor { arg: Some(a), .. } => self.pat(a),
                    PatKind::Record { fields, .. } => fields.iter_mut().for_each(|(_, q)| self.pat(q)),
                    PatKind::Cons(a, b) => {
                        self.pat(a);
                        self.pat(b);
                    }
                    PatKind::List(ps) | PatKind::Tuple { items: ps, .. } => ps.iter_mut().for_each(|q| self.pat(q)),
                    _ => {}
                }
            }
            fn dec(&self, d: &mut Dec) {
                match &mut d.kind {
                    DecKind::Val { ty, expr, .. } => {
                        self.slot(ty);
                        self.expr(expr);
                    }
                    DecKind::Fun { params, ty, body, .. } => {
                        self.slot(ty);
                        params.iter_mut().for_each(|p| self.pat(p));
                        self.expr(body);
                    }
                    DecKind::Module { param, ty, body, .. } => {
                        self.slot(ty);
                        self.pat(param);
                        self.expr(body);
                    }
                    _ => {}
                }
            }
            fn expr(&self, e: &mut Expr) {
                self.slot(&mut e.ty);
                for_each_child(e, &mut |c| self.expr(c), &mut |d| self.dec(d), &mut |p| self.pat(p));
            }
        }
        Fin(&self.sigma).expr(e);
    }
}

fn kind_name(t: &SemType) -> &'static str {
    match kind_of(t) {
        Kind::Software => "software",
        Kind::Hardware => "hardware",
        Kind::Module => "module",
        Kind::Unknown => "unknown kind",
    }
}

/// Ok(true): equality is decidable; Ok(false): not yet known; Err: not decidable.
fn equality_check(t: &SemType) -> Result<bool, ()> {
    fn go(t: &SType) -> Result<bool, ()> {
        match t {
            SType::Int | SType::Real | SType::String | SType::Top | SType::Bottom => Ok(true),
            SType::Meta(_) => Ok(false),
            SType::List(a) => go(a),
            SType::Record(fs) => fs.iter().try_fold(true, |acc, (_, t)| Ok(acc & go(t)?)),
            SType::Data(d) => d.args.iter().try_fold(true, |acc, t| Ok(acc & go(t)?)),
            SType::Mu(_, body) => match &**body {
                SType::Data(d) => d.args.iter().try_fold(true, |acc, t| Ok(acc & go(t)?)),
                _ => Ok(true),
            },
            SType::Arrow(..) | SType::Ref(_) | SType::Sw(_) | SType::Poly(_) => Err(()),
        }
    }
    match t {
        SemType::Sw(s) => go(s),
        SemType::Meta(_) => Ok(false),
        SemType::Top | SemType::Bottom => Ok(true),
        _ => Err(()),
    }
}

/// Syntactic values: safe to generalize.
pub fn is_nonexpansive(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Int(_)
        | ExprKind::Real(_)
        | ExprKind::Str(_)
        | ExprKind::Bit(_)
        | ExprKind::Var { .. }
        | ExprKind::Lambda { .. } => true,
        ExprKind::Record(fs) | ExprKind::HwRecord(fs) => fs.iter().all(|(_, e)| is_nonexpansive(e)),
        ExprKind::List(xs) | ExprKind::ArrayLit(xs) => xs.iter().all(is_nonexpansive),
        ExprKind::Sw(a) => is_nonexpansive(a),
        ExprKind::App(f, a) => matches!(&f.kind, ExprKind::Var { ctor: Some(_), .. }) && is_nonexpansive(a),
        _ => false,
    }
}

/// Visits the direct children of an expression.
pub fn for_each_child(
    e: &mut Expr,
    fe: &mut dyn FnMut(&mut Expr),
    fd: &mut dyn FnMut(&mut Dec),
    fp: &mut dyn FnMut(&mut Pattern),
) {
    match &mut e.kind {
        ExprKind::Record(fs) | ExprKind::HwRecord(fs) => fs.iter_mut().for_each(|(_, x)| fe(x)),
        ExprKind::Tuple { items, .. } | ExprKind::List(items) | ExprKind::ArrayLit(items) | ExprKind::Seq(items) => {
            items.iter_mut().for_each(|x| fe(x))
        }
        ExprKind::Proj(_, a)
        | ExprKind::Unary(_, a)
        | ExprKind::Not(a)
        | ExprKind::Ref(a)
        | ExprKind::Sw(a)
        | ExprKind::Unsw(a) => fe(a),
        ExprKind::ArrayGen { size, body, .. } => {
            fe(size);
            fe(body);
        }
        ExprKind::Index(a, b)
        | ExprKind::Binary(_, a, b)
        | ExprKind::Collapse(_, a, b)
        | ExprKind::AndAlso(a, b)
        | ExprKind::OrElse(a, b)
        | ExprKind::App(a, b)
        | ExprKind::Param(a, b) => {
            fe(a);
            fe(b);
        }
        ExprKind::BitArray { width, value, .. } => {
            fe(width);
            fe(value);
        }
        ExprKind::If(c, t, x) => {
            fe(c);
            fe(t);
            if let Some(x) = x {
                fe(x);
            }
        }
        ExprKind::Let(decs, body) => {
            decs.iter_mut().for_each(|d| fd(d));
            fe(body);
        }
        ExprKind::Case(s, arms) => {
            fe(s);
            for (p, b) in arms.iter_mut() {
                fp(p);
                fe(b);
            }
        }
        ExprKind::Lambda { param, body, .. } => {
            fp(param);
            fe(body);
        }
        ExprKind::Int(_)
        | ExprKind::Real(_)
        | ExprKind::Str(_)
        | ExprKind::Bit(_)
        | ExprKind::Var { .. }
        | ExprKind::Unit
        | ExprKind::Loc(_)
        | ExprKind::WrapLoc(_) => {}
    }
}

/// Parses, desugars and infers a program without the module-type check.
pub fn infer_source(source: &str) -> Result<(Expr, SemType, Infer), Diagnostic> {
    let mut e = crate::parser::parse_program(source, "<input>")?;
    let mut inf = Infer::new();
    let t = inf.infer_and_check(&mut e);
    Ok((e, t, inf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ty_of(src: &str) -> (String, Vec<Diagnostic>) {
        let (_, t, inf) = infer_source(src).unwrap();
        (render(&t), inf.diags)
    }

    fn val_type(src: &str, name: &str) -> String {
        let (e, _, inf) = infer_source(src).unwrap();
        assert!(inf.diags.iter().all(|d| !d.is_error()), "{:?}", inf.diags);
        let ExprKind::Let(decs, _) = &e.kind else { panic!() };
        for d in decs {
            match &d.kind {
                DecKind::Fun { name: n, ty, .. } | DecKind::Val { name: n, ty, .. } | DecKind::Module { name: n, ty, .. }
                    if n == name =>
                {
                    return render(ty.get().unwrap());
                }
                _ => {}
            }
        }
        panic!("no binding {}", name)
    }

    #[test]
    fn concat_and_map() {
        assert_eq!(val_type("let fun concat x y = x::y in 0 end", "concat"), "'a -> 'a list -> 'a list");
        let map = "let fun map f x = case x of [] => [] |: a::rest => (f a)::(map f rest) in 0 end";
        assert_eq!(val_type(map, "map"), "('a -> 'b) -> 'a list -> 'b list");
    }

    #[test]
    fn explicit_decoration() {
        let src = "let fun foo (x, y, s: string) = s in 0 end";
        assert_eq!(val_type(src, "foo"), "('a * 'b * string) -> string");
    }

    #[test]
    fn basic_errors() {
        let (_, d) = ty_of("42 * \"a\"");
        assert_eq!(d.iter().filter(|d| d.kind == ErrorKind::Type).count(), 1);
        assert!(d[0].types.contains(&"int".to_string()) && d[0].types.contains(&"string".to_string()));
        let (_, d) = ty_of("if 1 then 2 else \"x\"");
        assert!(d.iter().any(|d| d.kind == ErrorKind::Type));
        let (_, d) = ty_of("1 + 'b:1");
        assert!(d.iter().any(|d| d.kind == ErrorKind::Kind));
        let (_, d) = ty_of("nope");
        assert!(d.iter().any(|d| d.kind == ErrorKind::Unbound));
    }

    #[test]
    fn error_recovery_reports_each_mismatch() {
        let (_, d) = ty_of("let val a = 1 + \"x\" val b = 2.0 +. 3 val c = a + b in c end");
        assert!(d.iter().filter(|d| d.is_error()).count() >= 2, "{:?}", d);
    }

    #[test]
    fn datatypes_and_options() {
        let src = "let sdatatype 'a option = SOME of 'a |: NONE fun get d x = case x of SOME v => v |: NONE => d in get 0 (SOME 3) end";
        let (t, d) = ty_of(src);
        assert!(d.iter().all(|d| !d.is_error()), "{:?}", d);
        assert_eq!(t, "int");
    }

    #[test]
    fn recursive_datatype() {
        let src = "let sdatatype t = Leaf |: Node of t list fun size x = case x of Leaf => 1 |: Node kids => List.length kids in size (Node [Leaf, Leaf]) end";
        let (t, d) = ty_of(src);
        assert!(d.iter().all(|d| !d.is_error()), "{:?}", d);
        assert_eq!(t, "int");
    }

    #[test]
    fn modules() {
        let src = "let module m #(a, b) = a & b in m end";
        let (t, d) = ty_of(src);
        assert!(d.iter().all(|d| !d.is_error()), "{:?}", d);
        assert_eq!(t, "'a #* 'a ~> 'a");
        let (t, _) = ty_of("let module m (x: bit[8]) = x[:7:] in m end");
        assert_eq!(t, "bit[8] ~> bit");
    }

    #[test]
    fn record_projection_deferred() {
        let src = "let fun second x = (sw #2(unsw x)) in second (sw #('b:0, #['b:1, 'b:0])) end";
        let (t, d) = ty_of(src);
        assert!(d.iter().all(|d| !d.is_error()), "{:?}", d);
        assert_eq!(t, "bit[2] sw");
    }

    #[test]
    fn literal_index_out_of_range() {
        let (_, d) = ty_of("#['b:0][:1:]");
        assert!(d.iter().any(|d| d.kind == ErrorKind::OutOfRange));
    }

    #[test]
    fn equality_restrictions() {
        let (_, d) = ty_of("let fun f x = x in f = f end");
        assert!(d.iter().any(|d| d.kind == ErrorKind::Type));
        let (t, d) = ty_of("[1, 2] = [3]");
        assert!(d.iter().all(|d| !d.is_error()));
        assert_eq!(t, "int");
    }

    #[test]
    fn substitute_chases_to_fixpoint() {
        let mut sigma = SubstEnv::new();
        sigma.insert(1, SemType::Sw(SType::Meta(2))).unwrap();
        sigma.insert(2, SemType::int()).unwrap();
        let mut env = TypeEnv::default();
        env.bind_val("x", SemType::Sw(SType::Meta(1)));
        let out = substitute(&sigma, &env, DEFAULT_SUBST_LIMIT).unwrap();
        assert!(matches!(out.lookup_val("x"), Some(ValBind::Var(SemType::Sw(SType::Int)))));
        let poly = SemType::Sw(SType::Poly(Rc::new(Scheme {
            vars: vec![1],
            constraints: vec![],
            body: SType::arrow(SType::Meta(1), SType::Meta(1)),
        })));
        let mut env = TypeEnv::default();
        env.bind_val("f", poly.clone());
        let out = substitute(&sigma, &env, DEFAULT_SUBST_LIMIT).unwrap();
        assert!(matches!(out.lookup_val("f"), Some(ValBind::Var(t)) if *t == poly));
    }

    #[test]
    fn instantiations_are_fresh() {
        let mut inf = Infer::bare();
        let a = inf.gen.fresh(MetaKind::Software);
        let poly = SemType::Sw(SType::Poly(Rc::new(Scheme {
            vars: vec![a],
            constraints: vec![],
            body: SType::arrow(SType::Meta(a), SType::Meta(a)),
        })));
        let x = inf.instantiate(&poly);
        let y = inf.instantiate(&poly);
        let fx: Vec<_> = free_metas(&x).into_iter().map(|o| o.id).collect();
        let fy: Vec<_> = free_metas(&y).into_iter().map(|o| o.id).collect();
        assert_eq!(fx.len(), 1);
        assert!(fx.iter().all(|m| !fy.contains(m) && *m != a));
    }
}
