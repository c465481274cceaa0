//! Syntax tree shared by the parser, inference, both evaluators and the
//! metatheory engine. Surface-only forms are removed by [`crate::parser::desugar`].

use crate::diag::Span;
use crate::types::{DataTy, HType, Label, MetaId, SType, SemType};
use std::rc::Rc;

/// Type slot carried by nodes and binders: empty until decoration/inference fills it.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum TySlot {
    #[default]
    Placeholder,
    Explicit(SemType),
}

impl TySlot {
    pub fn get(&self) -> Option<&SemType> {
        match self {
            TySlot::Placeholder => None,
            TySlot::Explicit(t) => Some(t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    /// `~`, integer or real negation depending on the operand.
    Neg,
    /// `!`
    BitNot,
    AndReduce,
    OrReduce,
    XorReduce,
    /// `$`
    Deref,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    RAdd,
    RSub,
    RMul,
    RDiv,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    Shl,
    Shr,
    Sra,
    And,
    Or,
    Xor,
    Cons,
    Assign,
}

/// `&&`, `||`, `^^` before desugaring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CollapseOp {
    And,
    Or,
    Xor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BitArrayKind {
    Signed,
    Unsigned,
    Real,
}

impl UnOp {
    pub fn name(self) -> &'static str {
        match self {
            UnOp::Neg => "~",
            UnOp::BitNot => "!",
            UnOp::AndReduce => "&->",
            UnOp::OrReduce => "|->",
            UnOp::XorReduce => "^->",
            UnOp::Deref => "$",
        }
    }
}

impl BinOp {
    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::RAdd => "+.",
            BinOp::RSub => "-.",
            BinOp::RMul => "*.",
            BinOp::RDiv => "/.",
            BinOp::Eq => "=",
            BinOp::Ne => "<>",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Sra => ">>>",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Xor => "^",
            BinOp::Cons => "::",
            BinOp::Assign => ":=",
        }
    }
}

/// Datatype declaration after inference: parameters and constructor payload templates.
#[derive(Debug, PartialEq)]
pub struct DataDef {
    pub name: String,
    pub tag: u32,
    pub hw: bool,
    pub params: Vec<MetaId>,
    /// Software datatypes: the (possibly μ-wrapped) type with parameters as metas.
    pub sw_template: Option<SType>,
    pub hw_template: Option<Rc<DataTy<HType>>>,
}

/// Resolved constructor, attached to variables and patterns by inference.
#[derive(Debug, PartialEq)]
pub struct CtorInfo {
    pub name: String,
    pub index: usize,
    pub has_payload: bool,
    pub def: Rc<DataDef>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
    pub ty: TySlot,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Int(i32),
    Real(f64),
    Str(String),
    Bit(u8),
    Var { name: String, ctor: Option<Rc<CtorInfo>> },
    Record(Vec<(Label, Expr)>),
    HwRecord(Vec<(Label, Expr)>),
    /// Surface tuple `(e1, …, en)` or `#(e1, …, en)`.
    Tuple { items: Vec<Expr>, hw: bool },
    /// Surface `()`.
    Unit,
    List(Vec<Expr>),
    Proj(Label, Box<Expr>),
    ArrayLit(Vec<Expr>),
    ArrayGen { size: Box<Expr>, var: String, body: Box<Expr> },
    Index(Box<Expr>, Box<Expr>),
    BitArray { kind: BitArrayKind, width: Box<Expr>, value: Box<Expr> },
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Surface `e1 && e2` style collapse operators.
    Collapse(CollapseOp, Box<Expr>, Box<Expr>),
    /// `else` branch is `None` only before desugaring.
    If(Box<Expr>, Box<Expr>, Option<Box<Expr>>),
    AndAlso(Box<Expr>, Box<Expr>),
    OrElse(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Let(Vec<Dec>, Box<Expr>),
    Seq(Vec<Expr>),
    App(Box<Expr>, Box<Expr>),
    Case(Box<Expr>, Vec<(Pattern, Expr)>),
    /// Function value; `name` makes it recursive (bound to itself in `body`).
    Lambda { name: Option<String>, param: Pattern, body: Box<Expr> },
    /// `m <: e :>` size instantiation of a parameterized module.
    Param(Box<Expr>, Box<Expr>),
    Ref(Box<Expr>),
    Sw(Box<Expr>),
    Unsw(Box<Expr>),
    /// Store location; only produced by the small-step engine.
    Loc(u32),
    /// Wrap-store location; only produced by the small-step engine.
    WrapLoc(u32),
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Expr {
        Expr { kind, span, ty: TySlot::Placeholder }
    }

    pub fn var(name: &str, span: Span) -> Expr {
        Expr::new(ExprKind::Var { name: name.to_string(), ctor: None }, span)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub kind: PatKind,
    pub span: Span,
    pub ty: TySlot,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PatKind {
    Wild,
    Int(i32),
    Real(f64),
    Str(String),
    Var { name: String, ann: Option<AstTy> },
    Ctor { name: String, arg: Option<Box<Pattern>>, info: Option<Rc<CtorInfo>> },
    Record { fields: Vec<(Label, Pattern)>, hw: bool },
    /// Surface tuple pattern.
    Tuple { items: Vec<Pattern>, hw: bool },
    Cons(Box<Pattern>, Box<Pattern>),
    List(Vec<Pattern>),
}

impl Pattern {
    pub fn new(kind: PatKind, span: Span) -> Pattern {
        Pattern { kind, span, ty: TySlot::Placeholder }
    }

    /// Variables bound by the pattern, left to right.
    pub fn binders(&self) -> Vec<&str> {
        let mut out = Vec::new();
        fn go<'a>(p: &'a Pattern, out: &mut Vec<&'a str>) {
            match &p.kind {
                PatKind::Var { name, .. } => out.push(name),
                PatKind::Ctor { arg: Some(a), .. } => go(a, out),
                PatKind::Record { fields, .. } => fields.iter().for_each(|(_, p)| go(p, out)),
                PatKind::Tuple { items, .. } | PatKind::List(items) => items.iter().for_each(|p| go(p, out)),
                PatKind::Cons(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                _ => {}
            }
        }
        go(self, &mut out);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AstTy {
    pub kind: TyKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TyKind {
    Var(String),
    /// Named type applied to arguments (`int`, `'a list`, `(int, bit) pair`).
    Name(String, Vec<AstTy>),
    Record { fields: Vec<(Label, AstTy)>, hw: bool },
    Tuple { items: Vec<AstTy>, hw: bool },
    Arrow(Box<AstTy>, Box<AstTy>),
    ModArrow(Box<AstTy>, Box<AstTy>),
    Array(Box<AstTy>, Box<Expr>),
    Temporal(Box<AstTy>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CtorDecl {
    pub name: String,
    pub payload: Option<AstTy>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dec {
    pub kind: DecKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DecKind {
    Val { name: String, ann: Option<AstTy>, ty: TySlot, expr: Expr },
    Fun { name: String, params: Vec<Pattern>, ret: Option<AstTy>, ty: TySlot, body: Expr },
    Type { params: Vec<String>, name: String, body: AstTy },
    Datatype { hw: bool, params: Vec<String>, name: String, ctors: Vec<CtorDecl>, def: Option<Rc<DataDef>> },
    Module {
        name: String,
        size_param: Option<String>,
        param: Pattern,
        ret: Option<AstTy>,
        ty: TySlot,
        body: Expr,
    },
}

/// Borrowed child of an expression, for read-only traversals.
pub enum Node<'a> {
    Expr(&'a Expr),
    Dec(&'a Dec),
    Pat(&'a Pattern),
}

impl Expr {
    /// Direct children in source order.
    pub fn children(&self) -> Vec<Node<'_>> {
        let mut out = Vec::new();
        match &self.kind {
            ExprKind::Record(fs) | ExprKind::HwRecord(fs) => out.extend(fs.iter().map(|(_, x)| Node::Expr(x))),
            ExprKind::Tuple { items, .. } | ExprKind::List(items) | ExprKind::ArrayLit(items) | ExprKind::Seq(items) => {
                out.extend(items.iter().map(Node::Expr))
            }
            ExprKind::Proj(_, a)
            | ExprKind::Unary(_, a)
            | ExprKind::Not(a)
            | ExprKind::Ref(a)
            | ExprKind::Sw(a)
            | ExprKind::Unsw(a) => out.push(Node::Expr(a)),
            ExprKind::ArrayGen { size, body, .. } => {
                out.push(Node::Expr(size));
                out.push(Node::Expr(body));
            }
            ExprKind::Index(a, b)
            | ExprKind::Binary(_, a, b)
            | ExprKind::Collapse(_, a, b)
            | ExprKind::AndAlso(a, b)
            | ExprKind::OrElse(a, b)
            | ExprKind::App(a, b)
            | ExprKind::Param(a, b) => {
                out.push(Node::Expr(a));
                out.push(Node::Expr(b));
            }
            ExprKind::BitArray { width, value, .. } => {
                out.push(Node::Expr(width));
                out.push(Node::Expr(value));
            }
            ExprKind::If(c, t, e) => {
                out.push(Node::Expr(c));
                out.push(Node::Expr(t));
                if let Some(e) = e {
                    out.push(Node::Expr(e));
                }
            }
            ExprKind::Let(decs, body) => {
                out.extend(decs.iter().map(Node::Dec));
                out.push(Node::Expr(body));
            }
            ExprKind::Case(s, arms) => {
                out.push(Node::Expr(s));
                for (p, b) in arms {
                    out.push(Node::Pat(p));
                    out.push(Node::Expr(b));
                }
            }
            ExprKind::Lambda { param, body, .. } => {
                out.push(Node::Pat(param));
                out.push(Node::Expr(body));
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
        out
    }
}

impl Dec {
    /// Expressions directly inside the declaration.
    pub fn exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            DecKind::Val { expr, .. } => vec![expr],
            DecKind::Fun { body, .. } | DecKind::Module { body, .. } => vec![body],
            _ => vec![],
        }
    }
}
