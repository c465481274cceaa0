//! Three-kinded semantic types: software, hardware and module types, plus
//! kinded metavariables, error-recovery types and the substitution Σ.

use crate::diag::Span;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::rc::Rc;

pub type MetaId = u32;
pub type Label = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetaKind {
    Software,
    Hardware,
    Unknown,
    /// Stands for an array length or a delay count.
    Size,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Software,
    Hardware,
    Module,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetaVar {
    pub id: MetaId,
    pub kind: MetaKind,
    pub origin: Option<Span>,
}

/// Hands out metavariable ids that are unique within one compilation.
#[derive(Clone, Debug, Default)]
pub struct MetaGen {
    kinds: Vec<MetaKind>,
    origins: Vec<Option<Span>>,
}

impl MetaGen {
    pub fn new() -> MetaGen {
        MetaGen::default()
    }

    pub fn fresh_meta(&mut self, kind: MetaKind, origin: Option<Span>) -> MetaVar {
        let id = self.kinds.len() as MetaId;
        self.kinds.push(kind);
        self.origins.push(origin);
        MetaVar { id, kind, origin }
    }

    pub fn fresh(&mut self, kind: MetaKind) -> MetaId {
        self.fresh_meta(kind, None).id
    }

    pub fn kind(&self, id: MetaId) -> MetaKind {
        self.kinds.get(id as usize).copied().unwrap_or(MetaKind::Unknown)
    }

    pub fn count(&self) -> usize {
        self.kinds.len()
    }

    pub fn fresh_sw(&mut self) -> SType {
        SType::Meta(self.fresh(MetaKind::Software))
    }

    pub fn fresh_hw(&mut self) -> HType {
        HType::Meta(self.fresh(MetaKind::Hardware))
    }

    pub fn fresh_any(&mut self) -> SemType {
        SemType::Meta(self.fresh(MetaKind::Unknown))
    }

    pub fn fresh_size(&mut self) -> Size {
        Size::Var(self.fresh(MetaKind::Size), 0)
    }
}

/// Array length or delay count: a constant, or a size metavariable plus an offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Size {
    Known(u32),
    Var(MetaId, u32),
}

impl Size {
    pub fn known(self) -> Option<u32> {
        match self {
            Size::Known(n) => Some(n),
            Size::Var(..) => None,
        }
    }

    pub fn plus(self, k: u32) -> Size {
        match self {
            Size::Known(n) => Size::Known(n + k),
            Size::Var(v, o) => Size::Var(v, o + k),
        }
    }
}

/// Nominal datatype instance: identity tag, type arguments and constructor payloads.
#[derive(Clone, Debug, PartialEq)]
pub struct DataTy<T> {
    pub name: String,
    pub tag: u32,
    pub args: Vec<T>,
    pub ctors: Vec<(String, Option<T>)>,
}

/// Quantified type with the deferred constraints that mention its variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Scheme<T> {
    pub vars: Vec<MetaId>,
    pub constraints: Vec<Constraint>,
    pub body: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SType {
    Int,
    Real,
    String,
    Arrow(Box<SType>, Box<SType>),
    List(Box<SType>),
    Sw(Box<HType>),
    Record(Vec<(Label, SType)>),
    Ref(Box<SType>),
    Data(Rc<DataTy<SType>>),
    /// Recursive binder; the bound variables stand for the type itself.
    Mu(Vec<MetaId>, Box<SType>),
    Poly(Rc<Scheme<SType>>),
    Meta(MetaId),
    Top,
    Bottom,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HType {
    Bit,
    Array(Box<HType>, Size),
    Temporal(Box<HType>, Size),
    Record(Vec<(Label, HType)>),
    Data(Rc<DataTy<HType>>),
    Poly(Rc<Scheme<HType>>),
    Meta(MetaId),
    Top,
    Bottom,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MType {
    Module(HType, HType),
    Parameterized(SType, HType, HType),
    Poly(Rc<Scheme<MType>>),
    Bottom,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SemType {
    Sw(SType),
    Hw(HType),
    Mod(MType),
    /// Metavariable whose kind is not yet known.
    Meta(MetaId),
    Top,
    Bottom,
}

/// Obligations that can only be discharged once a metavariable is resolved.
#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    HasField { record: SemType, label: Label, field: SemType, span: Span },
    /// `~` works on int or real; defaults to int.
    Numeric(SemType, Span),
    /// `=` and `<>` need a type with decidable equality.
    Equality(SemType, Span),
    /// `<`, `>`, `<=`, `>=` need int, real or string.
    Ordered(SemType, Span),
}

impl HType {
    /// Temporal smart constructor: `t @ 0` is `t`, and nested delays add up.
    pub fn temporal(inner: HType, time: Size) -> HType {
        match (inner, time) {
            (inner, Size::Known(0)) => inner,
            (HType::Temporal(t, Size::Known(a)), time) => HType::Temporal(t, time.plus(a)),
            (HType::Temporal(t, a), Size::Known(b)) => HType::Temporal(t, a.plus(b)),
            (inner, time) => HType::Temporal(Box::new(inner), time),
        }
    }

    pub fn array(elem: HType, n: u32) -> HType {
        HType::Array(Box::new(elem), Size::Known(n))
    }

    pub fn bits(n: u32) -> HType {
        HType::array(HType::Bit, n)
    }

    pub fn tuple(items: Vec<HType>) -> HType {
        HType::Record(items.into_iter().enumerate().map(|(i, t)| ((i + 1).to_string(), t)).collect())
    }

    /// Total number of bits once records and arrays are flattened.
    pub fn width(&self) -> Option<u32> {
        match self {
            HType::Bit => Some(1),
            HType::Array(e, Size::Known(n)) => e.width().map(|w| w * n),
            HType::Temporal(t, _) => t.width(),
            HType::Record(fs) => fs.iter().map(|(_, t)| t.width()).sum(),
            _ => None,
        }
    }

    /// True when no metavariables or unknown sizes remain.
    pub fn is_concrete(&self) -> bool {
        match self {
            HType::Bit => true,
            HType::Array(e, s) | HType::Temporal(e, s) => s.known().is_some() && e.is_concrete(),
            HType::Record(fs) => fs.iter().all(|(_, t)| t.is_concrete()),
            HType::Data(d) => d.args.iter().all(|t| t.is_concrete()),
            _ => false,
        }
    }
}

impl SType {
    pub fn arrow(a: SType, b: SType) -> SType {
        SType::Arrow(Box::new(a), Box::new(b))
    }

    pub fn list(a: SType) -> SType {
        SType::List(Box::new(a))
    }

    pub fn unit() -> SType {
        SType::Record(Vec::new())
    }

    pub fn tuple(items: Vec<SType>) -> SType {
        SType::Record(items.into_iter().enumerate().map(|(i, t)| ((i + 1).to_string(), t)).collect())
    }
}

impl SemType {
    pub fn int() -> SemType {
        SemType::Sw(SType::Int)
    }

    pub fn unit() -> SemType {
        SemType::Sw(SType::unit())
    }

    pub fn is_error(&self) -> bool {
        matches!(
            self,
            SemType::Top | SemType::Bottom | SemType::Sw(SType::Top | SType::Bottom) | SemType::Hw(HType::Top | HType::Bottom)
        )
    }
}

pub fn kind_of(t: &SemType) -> Kind {
    match t {
        SemType::Sw(_) => Kind::Software,
        SemType::Hw(_) => Kind::Hardware,
        SemType::Mod(_) => Kind::Module,
        SemType::Meta(_) | SemType::Top | SemType::Bottom => Kind::Unknown,
    }
}

// ---------------------------------------------------------------------------
// Substitution environment

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DuplicateBinding(pub MetaId);

/// Global map from metavariables to types (and size metavariables to sizes).
#[derive(Clone, Debug, Default)]
pub struct SubstEnv {
    types: HashMap<MetaId, SemType>,
    sizes: HashMap<MetaId, Size>,
}

impl SubstEnv {
    pub fn new() -> SubstEnv {
        SubstEnv::default()
    }

    pub fn get(&self, id: MetaId) -> Option<&SemType> {
        self.types.get(&id)
    }

    pub fn get_size(&self, id: MetaId) -> Option<Size> {
        self.sizes.get(&id).copied()
    }

    pub fn insert(&mut self, id: MetaId, t: SemType) -> Result<(), DuplicateBinding> {
        if self.types.contains_key(&id) || self.sizes.contains_key(&id) {
            return Err(DuplicateBinding(id));
        }
        self.types.insert(id, t);
        Ok(())
    }

    pub fn insert_size(&mut self, id: MetaId, s: Size) -> Result<(), DuplicateBinding> {
        if self.types.contains_key(&id) || self.sizes.contains_key(&id) {
            return Err(DuplicateBinding(id));
        }
        self.sizes.insert(id, s);
        Ok(())
    }

    pub fn extend(&mut self, other: SubstEnv) -> Result<(), DuplicateBinding> {
        for (k, v) in other.types {
            self.insert(k, v)?;
        }
        for (k, v) in other.sizes {
            self.insert_size(k, v)?;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty() && self.sizes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.types.len() + self.sizes.len()
    }

    pub fn domain(&self) -> impl Iterator<Item = MetaId> + '_ {
        self.types.keys().copied().chain(self.sizes.keys().copied())
    }

    /// Chases a size through Σ.
    pub fn resolve_size(&self, s: Size) -> Size {
        let mut cur = s;
        while let Size::Var(v, off) = cur {
            match self.sizes.get(&v) {
                Some(next) => cur = next.plus(off),
                None => break,
            }
        }
        cur
    }
}

// ---------------------------------------------------------------------------
// Generic traversal

/// Callbacks for rebuilding a type; returning `None` keeps the metavariable.
pub trait MetaMap {
    fn smeta(&mut self, _id: MetaId) -> Option<SType> {
        None
    }
    fn hmeta(&mut self, _id: MetaId) -> Option<HType> {
        None
    }
    fn meta(&mut self, _id: MetaId) -> Option<SemType> {
        None
    }
    fn size(&mut self, s: Size) -> Size {
        s
    }
}

fn is_bound(bound: &[MetaId], id: MetaId) -> bool {
    bound.contains(&id)
}

pub fn map_sem(t: &SemType, m: &mut dyn MetaMap, bound: &mut Vec<MetaId>) -> SemType {
    match t {
        SemType::Sw(s) => SemType::Sw(map_s(s, m, bound)),
        SemType::Hw(h) => SemType::Hw(map_h(h, m, bound)),
        SemType::Mod(x) => SemType::Mod(map_m(x, m, bound)),
        SemType::Meta(id) if !is_bound(bound, *id) => m.meta(*id).unwrap_or(SemType::Meta(*id)),
        other => other.clone(),
    }
}

fn map_size(s: Size, m: &mut dyn MetaMap, bound: &[MetaId]) -> Size {
    match s {
        Size::Var(v, _) if is_bound(bound, v) => s,
        _ => m.size(s),
    }
}

fn map_scheme<T>(
    sc: &Scheme<T>,
    m: &mut dyn MetaMap,
    bound: &mut Vec<MetaId>,
    f: fn(&T, &mut dyn MetaMap, &mut Vec<MetaId>) -> T,
) -> Scheme<T> {
    let n = bound.len();
    bound.extend(sc.vars.iter().copied());
    let body = f(&sc.body, m, bound);
    let constraints = sc.constraints.iter().map(|c| map_constraint(c, m, bound)).collect();
    bound.truncate(n);
    Scheme { vars: sc.vars.clone(), constraints, body }
}

pub fn map_constraint(c: &Constraint, m: &mut dyn MetaMap, bound: &mut Vec<MetaId>) -> Constraint {
    match c {
        Constraint::HasField { record, label, field, span } => Constraint::HasField {
            record: map_sem(record, m, bound),
            label: label.clone(),
            field: map_sem(field, m, bound),
            span: *span,
        },
        Constraint::Numeric(t, s) => Constraint::Numeric(map_sem(t, m, bound), *s),
        Constraint::Equality(t, s) => Constraint::Equality(map_sem(t, m, bound), *s),
        Constraint::Ordered(t, s) => Constraint::Ordered(map_sem(t, m, bound), *s),
    }
}

pub fn map_s(t: &SType, m: &mut dyn MetaMap, bound: &mut Vec<MetaId>) -> SType {
    match t {
        SType::Arrow(a, b) => SType::arrow(map_s(a, m, bound), map_s(b, m, bound)),
        SType::List(a) => SType::list(map_s(a, m, bound)),
        SType::Ref(a) => SType::Ref(Box::new(map_s(a, m, bound))),
        SType::Sw(h) => SType::Sw(Box::new(map_h(h, m, bound))),
        SType::Record(fs) => SType::Record(fs.iter().map(|(l, t)| (l.clone(), map_s(t, m, bound))).collect()),
        SType::Data(d) => SType::Data(Rc::new(DataTy {
            name: d.name.clone(),
            tag: d.tag,
            args: d.args.iter().map(|a| map_s(a, m, bound)).collect(),
            ctors: d.ctors.iter().map(|(c, p)| (c.clone(), p.as_ref().map(|p| map_s(p, m, bound)))).collect(),
        })),
        SType::Mu(vs, body) => {
            let n = bound.len();
            bound.extend(vs.iter().copied());
            let b = map_s(body, m, bound);
            bound.truncate(n);
            SType::Mu(vs.clone(), Box::new(b))
        }
        SType::Poly(sc) => SType::Poly(Rc::new(map_scheme(sc, m, bound, map_s))),
        SType::Meta(id) if !is_bound(bound, *id) => m.smeta(*id).unwrap_or(SType::Meta(*id)),
        other => other.clone(),
    }
}

pub fn map_h(t: &HType, m: &mut dyn MetaMap, bound: &mut Vec<MetaId>) -> HType {
    match t {
        HType::Array(e, s) => HType::Array(Box::new(map_h(e, m, bound)), map_size(*s, m, bound)),
        HType::Temporal(e, s) => HType::temporal(map_h(e, m, bound), map_size(*s, m, bound)),
        HType::Record(fs) => HType::Record(fs.iter().map(|(l, t)| (l.clone(), map_h(t, m, bound))).collect()),
        HType::Data(d) => HType::Data(Rc::new(DataTy {
            name: d.name.clone(),
            tag: d.tag,
            args: d.args.iter().map(|a| map_h(a, m, bound)).collect(),
            ctors: d.ctors.iter().map(|(c, p)| (c.clone(), p.as_ref().map(|p| map_h(p, m, bound)))).collect(),
        })),
        HType::Poly(sc) => HType::Poly(Rc::new(map_scheme(sc, m, bound, map_h))),
        HType::Meta(id) if !is_bound(bound, *id) => m.hmeta(*id).unwrap_or(HType::Meta(*id)),
        other => other.clone(),
    }
}

pub fn map_m(t: &MType, m: &mut dyn MetaMap, bound: &mut Vec<MetaId>) -> MType {
    match t {
        MType::Module(a, b) => MType::Module(map_h(a, m, bound), map_h(b, m, bound)),
        MType::Parameterized(s, a, b) => MType::Parameterized(map_s(s, m, bound), map_h(a, m, bound), map_h(b, m, bound)),
        MType::Poly(sc) => MType::Poly(Rc::new(map_scheme(sc, m, bound, map_m))),
        MType::Bottom => MType::Bottom,
    }
}

/// A metavariable occurrence found while walking a type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetaOcc {
    pub id: MetaId,
    pub kind: MetaKind,
}

struct Collect<'a> {
    out: &'a mut Vec<MetaOcc>,
}

impl MetaMap for Collect<'_> {
    fn smeta(&mut self, id: MetaId) -> Option<SType> {
        self.out.push(MetaOcc { id, kind: MetaKind::Software });
        None
    }
    fn hmeta(&mut self, id: MetaId) -> Option<HType> {
        self.out.push(MetaOcc { id, kind: MetaKind::Hardware });
        None
    }
    fn meta(&mut self, id: MetaId) -> Option<SemType> {
        self.out.push(MetaOcc { id, kind: MetaKind::Unknown });
        None
    }
    fn size(&mut self, s: Size) -> Size {
        if let Size::Var(v, _) = s {
            self.out.push(MetaOcc { id: v, kind: MetaKind::Size });
        }
        s
    }
}

/// Free metavariables of `t` in order of first occurrence (no Σ lookup).
pub fn free_metas(t: &SemType) -> Vec<MetaOcc> {
    let mut out = Vec::new();
    map_sem(t, &mut Collect { out: &mut out }, &mut Vec::new());
    let mut seen = BTreeSet::new();
    out.retain(|o| seen.insert(o.id));
    out
}

pub fn free_metas_constraint(c: &Constraint) -> Vec<MetaOcc> {
    let mut out = Vec::new();
    map_constraint(c, &mut Collect { out: &mut out }, &mut Vec::new());
    out
}

/// Renames metavariables according to `map` (used for instantiation).
pub struct Rename<'a>(pub &'a HashMap<MetaId, MetaId>);

impl MetaMap for Rename<'_> {
    fn smeta(&mut self, id: MetaId) -> Option<SType> {
        self.0.get(&id).map(|n| SType::Meta(*n))
    }
    fn hmeta(&mut self, id: MetaId) -> Option<HType> {
        self.0.get(&id).map(|n| HType::Meta(*n))
    }
    fn meta(&mut self, id: MetaId) -> Option<SemType> {
        self.0.get(&id).map(|n| SemType::Meta(*n))
    }
    fn size(&mut self, s: Size) -> Size {
        match s {
            Size::Var(v, o) => match self.0.get(&v) {
                Some(n) => Size::Var(*n, o),
                None => s,
            },
            k => k,
        }
    }
}

/// Replaces metavariables by fixed types (used for type-alias and datatype parameters).
pub struct Replace<'a> {
    pub s: &'a HashMap<MetaId, SType>,
    pub h: &'a HashMap<MetaId, HType>,
}

impl MetaMap for Replace<'_> {
    fn smeta(&mut self, id: MetaId) -> Option<SType> {
        self.s.get(&id).cloned()
    }
    fn hmeta(&mut self, id: MetaId) -> Option<HType> {
        self.h.get(&id).cloned()
    }
}

/// Deep resolution through Σ, leaving bound variables untouched.
pub struct Zonk<'a>(pub &'a SubstEnv);

impl MetaMap for Zonk<'_> {
    fn smeta(&mut self, id: MetaId) -> Option<SType> {
        match self.0.get(id)? {
            SemType::Sw(s) => Some(map_s(s, self, &mut Vec::new())),
            SemType::Top | SemType::Hw(HType::Top) => Some(SType::Top),
            _ => Some(SType::Bottom),
        }
    }
    fn hmeta(&mut self, id: MetaId) -> Option<HType> {
        match self.0.get(id)? {
            SemType::Hw(h) => Some(map_h(h, self, &mut Vec::new())),
            SemType::Top | SemType::Sw(SType::Top) => Some(HType::Top),
            _ => Some(HType::Bottom),
        }
    }
    fn meta(&mut self, id: MetaId) -> Option<SemType> {
        let t = self.0.get(id)?.clone();
        Some(map_sem(&t, self, &mut Vec::new()))
    }
    fn size(&mut self, s: Size) -> Size {
        self.0.resolve_size(s)
    }
}

pub fn zonk(t: &SemType, sigma: &SubstEnv) -> SemType {
    map_sem(t, &mut Zonk(sigma), &mut Vec::new())
}

pub fn zonk_s(t: &SType, sigma: &SubstEnv) -> SType {
    map_s(t, &mut Zonk(sigma), &mut Vec::new())
}

pub fn zonk_h(t: &HType, sigma: &SubstEnv) -> HType {
    map_h(t, &mut Zonk(sigma), &mut Vec::new())
}

/// One substitution pass: every free metavariable in Σ is replaced once.
pub struct SubstOnce<'a> {
    pub sigma: &'a SubstEnv,
    pub changed: bool,
}

impl MetaMap for SubstOnce<'_> {
    fn smeta(&mut self, id: MetaId) -> Option<SType> {
        let t = self.sigma.get(id)?;
        self.changed = true;
        Some(match t {
            SemType::Sw(s) => s.clone(),
            SemType::Top => SType::Top,
            _ => SType::Bottom,
        })
    }
    fn hmeta(&mut self, id: MetaId) -> Option<HType> {
        let t = self.sigma.get(id)?;
        self.changed = true;
        Some(match t {
            SemType::Hw(h) => h.clone(),
            SemType::Top => HType::Top,
            _ => HType::Bottom,
        })
    }
    fn meta(&mut self, id: MetaId) -> Option<SemType> {
        let t = self.sigma.get(id)?;
        self.changed = true;
        Some(t.clone())
    }
    fn size(&mut self, s: Size) -> Size {
        match s {
            Size::Var(v, o) => match self.sigma.get_size(v) {
                Some(n) => {
                    self.changed = true;
                    n.plus(o)
                }
                None => s,
            },
            k => k,
        }
    }
}

/// One-step unrolling of a recursive binder: bound variables become the binder itself.
pub fn unroll_mu(t: &SType) -> SType {
    match t {
        SType::Mu(vs, body) => {
            let mut s = HashMap::new();
            for v in vs {
                s.insert(*v, t.clone());
            }
            let h = HashMap::new();
            map_s(body, &mut Replace { s: &s, h: &h }, &mut Vec::new())
        }
        other => other.clone(),
    }
}

// ---------------------------------------------------------------------------
// Rendering

/// Names metavariables `'a`, `'b`, … and sizes `n`, `m`, … in order of appearance.
#[derive(Default)]
pub struct TypePrinter {
    names: HashMap<MetaId, String>,
    next_ty: usize,
    next_size: usize,
}

fn letter_name(i: usize) -> String {
    let letter = (b'a' + (i % 26) as u8) as char;
    if i < 26 {
        letter.to_string()
    } else {
        format!("{}{}", letter, i / 26)
    }
}

const NESTED_DOMAIN: u8 = 5;

const SIZE_NAMES: &[&str] = &["n", "m", "k", "p", "q", "r"];

impl TypePrinter {
    pub fn new() -> TypePrinter {
        TypePrinter::default()
    }

    fn ty_name(&mut self, id: MetaId) -> String {
        if let Some(n) = self.names.get(&id) {
            return n.clone();
        }
        let n = format!("'{}", letter_name(self.next_ty));
        self.next_ty += 1;
        self.names.insert(id, n.clone());
        n
    }

    fn size_name(&mut self, id: MetaId) -> String {
        if let Some(n) = self.names.get(&id) {
            return n.clone();
        }
        let i = self.next_size;
        self.next_size += 1;
        let n = if i < SIZE_NAMES.len() { SIZE_NAMES[i].to_string() } else { format!("n{}", i) };
        self.names.insert(id, n.clone());
        n
    }

    pub fn size(&mut self, s: Size) -> String {
        match s {
            Size::Known(n) => n.to_string(),
            Size::Var(v, 0) => self.size_name(v),
            Size::Var(v, o) => format!("{} + {}", self.size_name(v), o),
        }
    }

    pub fn sem(&mut self, t: &SemType) -> String {
        match t {
            SemType::Sw(s) => self.s(s, 0),
            SemType::Hw(h) => self.h(h, 0),
            SemType::Mod(m) => self.m(m),
            SemType::Meta(id) => self.ty_name(*id),
            SemType::Top => "top".into(),
            SemType::Bottom => "bottom".into(),
        }
    }

    fn record_fields<T>(&mut self, fs: &[(Label, T)], f: fn(&mut Self, &T, u8) -> String) -> String {
        let parts: Vec<String> = fs.iter().map(|(l, t)| format!("{}: {}", l, f(self, t, 0))).collect();
        parts.join(", ")
    }

    /// Precedence: 0 arrow context, 1 tuple component, 2 postfix operand.
    pub fn s(&mut self, t: &SType, prec: u8) -> String {
        let (text, own) = match t {
            SType::Int => ("int".to_string(), 3),
            SType::Real => ("real".to_string(), 3),
            SType::String => ("string".to_string(), 3),
            SType::Top => ("top".to_string(), 3),
            SType::Bottom => ("bottom".to_string(), 3),
            SType::Meta(id) => (self.ty_name(*id), 3),
            SType::Arrow(a, b) => {
                // A tuple domain is bracketed only when the arrow itself is not.
                let dom = if prec == 0 { 1 } else { NESTED_DOMAIN };
                (format!("{} -> {}", self.s(a, dom), self.s(b, 0)), 0)
            }
            SType::List(a) => (format!("{} list", self.s(a, 2)), 2),
            SType::Ref(a) => (format!("{} ref", self.s(a, 2)), 2),
            SType::Sw(h) => (format!("{} sw", self.h(h, 2)), 2),
            SType::Record(fs) if fs.is_empty() => ("unit".to_string(), 3),
            SType::Record(fs) if is_tuple_labels(fs) => {
                let parts: Vec<String> = fs.iter().map(|(_, t)| self.s(t, 2)).collect();
                (parts.join(" * "), 1)
            }
            SType::Record(fs) => (format!("{{{}}}", self.record_fields(fs, Self::s)), 3),
            SType::Data(d) => (self.data_name(&d.name, &d.args, Self::s), 2),
            SType::Mu(_, body) => return self.s(body, prec),
            SType::Poly(sc) => return self.s(&sc.body, prec),
        };
        let wrap = if prec == NESTED_DOMAIN { own == 0 } else { own < prec || (own == 1 && prec == 1) };
        if wrap {
            format!("({})", text)
        } else {
            text
        }
    }

    pub fn h(&mut self, t: &HType, prec: u8) -> String {
        let (text, own) = match t {
            HType::Bit => ("bit".to_string(), 3),
            HType::Top => ("top".to_string(), 3),
            HType::Bottom => ("bottom".to_string(), 3),
            HType::Meta(id) => (self.ty_name(*id), 3),
            HType::Array(e, s) => {
                let sz = self.size(*s);
                (format!("{}[{}]", self.h(e, 2), sz), 2)
            }
            HType::Temporal(e, s) => {
                let sz = self.size(*s);
                let sz = if sz.contains(' ') { format!("({})", sz) } else { sz };
                (format!("{} @ {}", self.h(e, 2), sz), 1)
            }
            HType::Record(fs) if fs.is_empty() => ("#{}".to_string(), 3),
            HType::Record(fs) if is_tuple_labels(fs) => {
                let parts: Vec<String> = fs.iter().map(|(_, t)| self.h(t, 2)).collect();
                (parts.join(" #* "), 1)
            }
            HType::Record(fs) => (format!("#{{{}}}", self.record_fields(fs, Self::h)), 3),
            HType::Data(d) => (self.data_name(&d.name, &d.args, Self::h), 2),
            HType::Poly(sc) => return self.h(&sc.body, prec),
        };
        if own < prec || (own == 1 && prec == 1) {
            format!("({})", text)
        } else {
            text
        }
    }

    pub fn m(&mut self, t: &MType) -> String {
        match t {
            MType::Module(a, b) => format!("{} ~> {}", self.h(a, 0), self.h(b, 0)),
            MType::Parameterized(s, a, b) => {
                format!("<:{}:> {} ~> {}", self.s(s, 0), self.h(a, 0), self.h(b, 0))
            }
            MType::Poly(sc) => self.m(&sc.body),
            MType::Bottom => "bottom".into(),
        }
    }

    fn data_name<T>(&mut self, name: &str, args: &[T], f: fn(&mut Self, &T, u8) -> String) -> String {
        match args.len() {
            0 => name.to_string(),
            1 => format!("{} {}", f(self, &args[0], 2), name),
            _ => {
                let mut s = String::from("(");
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    let _ = write!(s, "{}", f(self, a, 0));
                }
                s.push_str(") ");
                s.push_str(name);
                s
            }
        }
    }
}

pub fn is_tuple_labels<T>(fs: &[(Label, T)]) -> bool {
    fs.len() >= 2 && fs.iter().enumerate().all(|(i, (l, _))| *l == (i + 1).to_string())
}

pub fn render(t: &SemType) -> String {
    TypePrinter::new().sem(t)
}

pub fn render_s(t: &SType) -> String {
    TypePrinter::new().s(t, 0)
}

pub fn render_h(t: &HType) -> String {
    TypePrinter::new().h(t, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_ids_are_distinct() {
        let mut g = MetaGen::new();
        let a = g.fresh_meta(MetaKind::Software, None);
        let b = g.fresh_meta(MetaKind::Software, None);
        assert_ne!(a.id, b.id);
        let ids: BTreeSet<MetaId> = (0..1_000_000).map(|_| g.fresh(MetaKind::Unknown)).collect();
        assert_eq!(ids.len(), 1_000_000);
    }

    #[test]
    fn kinds() {
        assert_eq!(kind_of(&SemType::int()), Kind::Software);
        assert_eq!(kind_of(&SemType::Hw(HType::bits(8))), Kind::Hardware);
        assert_eq!(kind_of(&SemType::Mod(MType::Module(HType::Bit, HType::Bit))), Kind::Module);
        assert_eq!(kind_of(&SemType::Meta(3)), Kind::Unknown);
    }

    #[test]
    fn size_sensitive_equality() {
        assert_ne!(HType::bits(8), HType::bits(16));
    }

    #[test]
    fn rendering() {
        let a = SType::Meta(7);
        let t = SType::arrow(a.clone(), SType::arrow(SType::list(a.clone()), SType::list(a)));
        assert_eq!(render_s(&t), "'a -> 'a list -> 'a list");
        let f = SType::arrow(SType::Meta(1), SType::Meta(2));
        let map = SType::arrow(f, SType::arrow(SType::list(SType::Meta(1)), SType::list(SType::Meta(2))));
        assert_eq!(render_s(&map), "('a -> 'b) -> 'a list -> 'b list");
        assert_eq!(render_h(&HType::bits(8)), "bit[8]");
        assert_eq!(render_s(&SType::tuple(vec![SType::list(SType::Meta(0)), SType::Int])), "'a list * int");
        assert_eq!(render_h(&HType::temporal(HType::Meta(0), Size::Var(1, 1))), "'a @ (n + 1)");
        assert_eq!(render_s(&SType::unit()), "unit");
    }

    #[test]
    fn sigma_rejects_duplicates() {
        let mut s = SubstEnv::new();
        s.insert(1, SemType::int()).unwrap();
        assert_eq!(s.insert(1, SemType::int()), Err(DuplicateBinding(1)));
    }
}
