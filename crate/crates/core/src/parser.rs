//! Recursive-descent parser with precedence climbing for binary operators,
//! followed by the derived-term desugaring pass.

use crate::ast::*;
use crate::diag::{Diagnostic, ErrorKind, Span};
use crate::lexer::{Keyword, Sym, Tok, Token};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Assoc {
    Left,
    Right,
    Non,
}

/// Binary operator table: binding power (higher binds tighter) and associativity.
pub fn binary_info(sym: Sym) -> Option<(u8, Assoc)> {
    use Sym::*;
    Some(match sym {
        SignedArr | UnsignedArr | RealArr => (12, Assoc::Non),
        SlashDot | StarDot | Slash | Star | Amp | Percent => (11, Assoc::Left),
        MinusDot | PlusDot | Minus | Plus | Caret | Bar => (10, Assoc::Left),
        AndAnd => (9, Assoc::Left),
        BarBar | CaretCaret => (8, Assoc::Left),
        ColonColon => (7, Assoc::Right),
        Gt | Lt | Ge | Le => (6, Assoc::Left),
        Eq | Ne => (5, Assoc::Left),
        Shl | Shr | Sra => (4, Assoc::Left),
        Assign => (1, Assoc::Right),
        _ => return None,
    })
}

fn keyword_binary_info(kw: Keyword) -> Option<(u8, Assoc)> {
    match kw {
        Keyword::Andalso => Some((3, Assoc::Left)),
        Keyword::Orelse => Some((2, Assoc::Left)),
        _ => None,
    }
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

fn describe(t: &Token) -> String {
    match &t.tok {
        Tok::Eof => "end of input".to_string(),
        _ => format!("`{}`", t.text),
    }
}

impl<'t> Parser<'t> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn tok(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        if self.pos == 0 {
            self.toks[0].span
        } else {
            self.toks[self.pos - 1].span
        }
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: Sym) -> bool {
        *self.peek() == Tok::Sym(s)
    }

    fn is_kw(&self, k: Keyword) -> bool {
        *self.peek() == Tok::Kw(k)
    }

    fn eat_sym(&mut self, s: Sym) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: Keyword) -> bool {
        if self.is_kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error(&self, expected: &str) -> Diagnostic {
        Diagnostic::error(
            ErrorKind::Parse,
            Some(self.span()),
            format!("unexpected {}, expected {}", describe(self.tok()), expected),
        )
    }

    fn expect_sym(&mut self, s: Sym) -> PResult<Span> {
        if self.is_sym(s) {
            Ok(self.bump().span)
        } else {
            Err(self.error(&format!("`{}`", s.as_str())))
        }
    }

    fn expect_kw(&mut self, k: Keyword) -> PResult<Span> {
        if self.is_kw(k) {
            Ok(self.bump().span)
        } else {
            Err(self.error(&format!("`{}`", k.as_str())))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let sp = self.bump().span;
                Ok((name, sp))
            }
            _ => Err(self.error("an identifier")),
        }
    }

    fn since(&self, start: Span) -> Span {
        start.to(self.prev_span())
    }

    // ------------------------------------------------------------------
    // Expressions

    fn exp(&mut self) -> PResult<Expr> {
        let start = self.span();
        match self.peek() {
            Tok::Kw(Keyword::If) => {
                self.bump();
                let c = self.binexp(0)?;
                self.expect_kw(Keyword::Then)?;
                let t = self.exp()?;
                let e = if self.eat_kw(Keyword::Else) { Some(Box::new(self.exp()?)) } else { None };
                Ok(Expr::new(ExprKind::If(Box::new(c), Box::new(t), e), self.since(start)))
            }
            Tok::Kw(Keyword::Case) => {
                self.bump();
                let scrut = self.binexp(0)?;
                self.expect_kw(Keyword::Of)?;
                let mut arms = Vec::new();
                loop {
                    let p = self.pattern()?;
                    self.expect_sym(Sym::FatArrow)?;
                    let body = self.exp()?;
                    arms.push((p, body));
                    if !self.eat_sym(Sym::CaseBar) {
                        break;
                    }
                }
                Ok(Expr::new(ExprKind::Case(Box::new(scrut), arms), self.since(start)))
            }
            _ => self.binexp(0),
        }
    }

    fn peek_binop(&self) -> Option<(u8, Assoc)> {
        match self.peek() {
            Tok::Sym(s) => binary_info(*s),
            Tok::Kw(k) => keyword_binary_info(*k),
            _ => None,
        }
    }

    fn binexp(&mut self, min_bp: u8) -> PResult<Expr> {
        let mut lhs = self.appexp()?;
        while let Some((bp, assoc)) = self.peek_binop() {
            if bp < min_bp {
                break;
            }
            let op = self.bump();
            let next_min = if assoc == Assoc::Right { bp } else { bp + 1 };
            let rhs = self.binexp(next_min)?;
            let span = lhs.span.to(rhs.span);
            lhs = make_binary(&op, lhs, rhs, span);
            if assoc == Assoc::Non && self.peek_binop().map(|(b, _)| b) == Some(bp) {
                return Err(Diagnostic::error(
                    ErrorKind::Parse,
                    Some(self.span()),
                    format!("operator {} is non-associative; add parentheses", describe(self.tok())),
                ));
            }
        }
        Ok(lhs)
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Int(_) | Tok::Real(_) | Tok::Str(_) | Tok::Bit(_) | Tok::Ident(_) | Tok::Proj(_)
        ) || matches!(self.peek(), Tok::Kw(Keyword::Let | Keyword::Nil))
            || matches!(
                self.peek(),
                Tok::Sym(
                    Sym::LParen
                        | Sym::LBracket
                        | Sym::LBrace
                        | Sym::HashParen
                        | Sym::HashBracket
                        | Sym::HashBrace
                        | Sym::Tilde
                        | Sym::Bang
                        | Sym::AndReduce
                        | Sym::OrReduce
                        | Sym::XorReduce
                        | Sym::Dollar
                )
            )
    }

    fn appexp(&mut self) -> PResult<Expr> {
        let start = self.span();
        let wrap = match self.peek() {
            Tok::Kw(Keyword::Sw) => Some(Keyword::Sw),
            Tok::Kw(Keyword::Unsw) => Some(Keyword::Unsw),
            Tok::Kw(Keyword::Ref) => Some(Keyword::Ref),
            Tok::Kw(Keyword::Not) => Some(Keyword::Not),
            _ => None,
        };
        if let Some(kw) = wrap {
            self.bump();
            let inner = Box::new(self.appexp()?);
            let kind = match kw {
                Keyword::Sw => ExprKind::Sw(inner),
                Keyword::Unsw => ExprKind::Unsw(inner),
                Keyword::Ref => ExprKind::Ref(inner),
                _ => ExprKind::Not(inner),
            };
            return Ok(Expr::new(kind, self.since(start)));
        }
        let mut f = self.postfix()?;
        while self.starts_atom() {
            let arg = self.postfix()?;
            let span = f.span.to(arg.span);
            f = Expr::new(ExprKind::App(Box::new(f), Box::new(arg)), span);
        }
        Ok(f)
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.prefix()?;
        loop {
            if self.eat_sym(Sym::IdxOpen) {
                let idx = self.exp()?;
                self.expect_sym(Sym::IdxClose)?;
                let span = e.span.to(self.prev_span());
                e = Expr::new(ExprKind::Index(Box::new(e), Box::new(idx)), span);
            } else if self.eat_sym(Sym::ParamOpen) {
                let arg = self.exp()?;
                self.expect_sym(Sym::ParamClose)?;
                let span = e.span.to(self.prev_span());
                e = Expr::new(ExprKind::Param(Box::new(e), Box::new(arg)), span);
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn prefix(&mut self) -> PResult<Expr> {
        let start = self.span();
        let op = match self.peek() {
            Tok::Sym(Sym::Tilde) => Some(UnOp::Neg),
            Tok::Sym(Sym::Bang) => Some(UnOp::BitNot),
            Tok::Sym(Sym::AndReduce) => Some(UnOp::AndReduce),
            Tok::Sym(Sym::OrReduce) => Some(UnOp::OrReduce),
            Tok::Sym(Sym::XorReduce) => Some(UnOp::XorReduce),
            Tok::Sym(Sym::Dollar) => Some(UnOp::Deref),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let inner = self.prefix()?;
            return Ok(Expr::new(ExprKind::Unary(op, Box::new(inner)), self.since(start)));
        }
        if let Tok::Proj(label) = self.peek().clone() {
            self.bump();
            let inner = self.prefix()?;
            return Ok(Expr::new(ExprKind::Proj(label, Box::new(inner)), self.since(start)));
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Expr> {
        let start = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                ExprKind::Int(v)
            }
            Tok::Real(v) => {
                self.bump();
                ExprKind::Real(v)
            }
            Tok::Str(s) => {
                self.bump();
                ExprKind::Str(s)
            }
            Tok::Bit(b) => {
                self.bump();
                ExprKind::Bit(b)
            }
            Tok::Ident(name) => {
                self.bump();
                ExprKind::Var { name, ctor: None }
            }
            Tok::Kw(Keyword::Nil) => {
                self.bump();
                ExprKind::List(Vec::new())
            }
            Tok::Kw(Keyword::Let) => {
                self.bump();
                let decs = self.decs()?;
                self.expect_kw(Keyword::In)?;
                let body = self.seq_body()?;
                self.expect_kw(Keyword::End)?;
                ExprKind::Let(decs, Box::new(body))
            }
            Tok::Sym(Sym::LParen) => {
                self.bump();
                if self.eat_sym(Sym::RParen) {
                    ExprKind::Unit
                } else {
                    let first = self.exp()?;
                    if self.is_sym(Sym::Comma) {
                        let mut items = vec![first];
                        while self.eat_sym(Sym::Comma) {
                            items.push(self.exp()?);
                        }
                        self.expect_sym(Sym::RParen)?;
                        ExprKind::Tuple { items, hw: false }
                    } else if self.is_sym(Sym::Semi) {
                        let mut items = vec![first];
                        while self.eat_sym(Sym::Semi) {
                            items.push(self.exp()?);
                        }
                        self.expect_sym(Sym::RParen)?;
                        ExprKind::Seq(items)
                    } else {
                        self.expect_sym(Sym::RParen)?;
                        return Ok(first);
                    }
                }
            }
            Tok::Sym(Sym::LBracket) => {
                self.bump();
                let items = self.comma_list(Sym::RBracket, |p| p.exp())?;
                ExprKind::List(items)
            }
            Tok::Sym(Sym::LBrace) => {
                self.bump();
                ExprKind::Record(self.record_fields(Sym::RBrace)?)
            }
            Tok::Sym(Sym::HashBrace) => {
                self.bump();
                ExprKind::HwRecord(self.record_fields(Sym::RBrace)?)
            }
            Tok::Sym(Sym::HashParen) => {
                self.bump();
                let mut items = self.comma_list(Sym::RParen, |p| p.exp())?;
                if items.len() == 1 {
                    return Ok(items.pop().unwrap());
                }
                ExprKind::Tuple { items, hw: true }
            }
            Tok::Sym(Sym::HashBracket) => {
                self.bump();
                if self.eat_sym(Sym::RBracket) {
                    ExprKind::ArrayLit(Vec::new())
                } else {
                    let first = self.exp()?;
                    if self.eat_sym(Sym::Semi) {
                        self.expect_kw(Keyword::Gen)?;
                        let (var, _) = self.ident()?;
                        self.expect_sym(Sym::FatArrow)?;
                        let body = self.exp()?;
                        self.expect_sym(Sym::RBracket)?;
                        ExprKind::ArrayGen { size: Box::new(first), var, body: Box::new(body) }
                    } else {
                        let mut items = vec![first];
                        while self.eat_sym(Sym::Comma) {
                            items.push(self.exp()?);
                        }
                        self.expect_sym(Sym::RBracket)?;
                        ExprKind::ArrayLit(items)
                    }
                }
            }
            _ => return Err(self.error("an expression")),
        };
        Ok(Expr::new(kind, self.since(start)))
    }

    fn seq_body(&mut self) -> PResult<Expr> {
        let start = self.span();
        let first = self.exp()?;
        if !self.is_sym(Sym::Semi) {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_sym(Sym::Semi) {
            items.push(self.exp()?);
        }
        Ok(Expr::new(ExprKind::Seq(items), self.since(start)))
    }

    fn comma_list<T>(&mut self, close: Sym, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        let mut out = Vec::new();
        if self.eat_sym(close) {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat_sym(close) {
                return Ok(out);
            }
            self.expect_sym(Sym::Comma)?;
        }
    }

    fn label(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(l) => {
                self.bump();
                Ok(l)
            }
            Tok::Int(n) if n > 0 => {
                self.bump();
                Ok(n.to_string())
            }
            _ => Err(self.error("a field label")),
        }
    }

    fn record_fields(&mut self, close: Sym) -> PResult<Vec<(String, Expr)>> {
        let fields = self.comma_list(close, |p| {
            let l = p.label()?;
            p.expect_sym(Sym::Eq)?;
            Ok((l, p.exp()?))
        })?;
        check_distinct(fields.iter().map(|(l, _)| l.as_str()), self.prev_span())?;
        Ok(fields)
    }

    // ------------------------------------------------------------------
    // Declarations

    fn decs(&mut self) -> PResult<Vec<Dec>> {
        let mut out = Vec::new();
        loop {
            while self.eat_sym(Sym::Semi) {}
            match self.peek() {
                Tok::Kw(Keyword::Val | Keyword::Fun | Keyword::Type | Keyword::Sdatatype | Keyword::Hdatatype | Keyword::Module) => {
                    out.push(self.dec()?)
                }
                _ => return Ok(out),
            }
        }
    }

    fn opt_ann(&mut self) -> PResult<Option<AstTy>> {
        if self.eat_sym(Sym::Colon) {
            Ok(Some(self.ty()?))
        } else {
            Ok(None)
        }
    }

    fn tyvar_params(&mut self) -> PResult<Vec<String>> {
        match self.peek().clone() {
            Tok::TyVar(v) => {
                self.bump();
                Ok(vec![v])
            }
            Tok::Sym(Sym::LParen) if matches!(self.peek_at(1), Tok::TyVar(_)) => {
                self.bump();
                self.comma_list(Sym::RParen, |p| match p.peek().clone() {
                    Tok::TyVar(v) => {
                        p.bump();
                        Ok(v)
                    }
                    _ => Err(p.error("a type variable")),
                })
            }
            _ => Ok(Vec::new()),
        }
    }

    fn dec(&mut self) -> PResult<Dec> {
        let start = self.span();
        let kw = match self.bump().tok {
            Tok::Kw(k) => k,
            _ => unreachable!(),
        };
        let kind = match kw {
            Keyword::Val => {
                let (name, _) = self.ident()?;
                let ann = self.opt_ann()?;
                self.expect_sym(Sym::Eq)?;
                let expr = self.exp()?;
                DecKind::Val { name, ann, ty: TySlot::Placeholder, expr }
            }
            Keyword::Fun => {
                let (name, _) = self.ident()?;
                let mut params = Vec::new();
                while !self.is_sym(Sym::Eq) && !self.is_sym(Sym::Colon) {
                    params.push(self.atomic_pattern()?);
                }
                if params.is_empty() {
                    return Err(self.error("a function parameter"));
                }
                let ret = self.opt_ann()?;
                self.expect_sym(Sym::Eq)?;
                let body = self.exp()?;
                DecKind::Fun { name, params, ret, ty: TySlot::Placeholder, body }
            }
            Keyword::Type => {
                let params = self.tyvar_params()?;
                let (name, _) = self.ident()?;
                self.expect_sym(Sym::Eq)?;
                let body = self.ty()?;
                DecKind::Type { params, name, body }
            }
            Keyword::Sdatatype | Keyword::Hdatatype => {
                let params = self.tyvar_params()?;
                let (name, _) = self.ident()?;
                self.expect_sym(Sym::Eq)?;
                let mut ctors = Vec::new();
                loop {
                    let (cname, sp) = self.ident()?;
                    let payload = if self.eat_kw(Keyword::Of) { Some(self.ty()?) } else { None };
                    ctors.push(CtorDecl { name: cname, payload, span: self.since(sp) });
                    if !(self.eat_sym(Sym::CaseBar) || self.eat_sym(Sym::Bar)) {
                        break;
                    }
                }
                check_distinct(ctors.iter().map(|c| c.name.as_str()), self.prev_span())?;
                DecKind::Datatype { hw: kw == Keyword::Hdatatype, params, name, ctors, def: None }
            }
            Keyword::Module => {
                let (name, _) = self.ident()?;
                let size_param = if self.eat_sym(Sym::ParamOpen) {
                    let (n, _) = self.ident()?;
                    self.expect_sym(Sym::ParamClose)?;
                    Some(n)
                } else {
                    None
                };
                let param = self.module_param()?;
                let ret = self.opt_ann()?;
                self.expect_sym(Sym::Eq)?;
                let body = self.exp()?;
                DecKind::Module { name, size_param, param, ret, ty: TySlot::Placeholder, body }
            }
            _ => unreachable!(),
        };
        Ok(Dec { kind, span: self.since(start) })
    }

    fn module_field(&mut self) -> PResult<Pattern> {
        let (name, sp) = self.ident()?;
        let ann = self.opt_ann()?;
        Ok(Pattern::new(PatKind::Var { name, ann }, self.since(sp)))
    }

    fn module_param(&mut self) -> PResult<Pattern> {
        let start = self.span();
        match self.peek() {
            Tok::Ident(_) => self.module_field(),
            Tok::Sym(Sym::LParen) | Tok::Sym(Sym::HashParen) => {
                self.bump();
                let mut items = self.comma_list(Sym::RParen, |p| p.module_field())?;
                if items.len() == 1 {
                    let mut p = items.pop().unwrap();
                    p.span = self.since(start);
                    return Ok(p);
                }
                check_distinct(items.iter().flat_map(|p| p.binders()), self.prev_span())?;
                Ok(Pattern::new(PatKind::Tuple { items, hw: true }, self.since(start)))
            }
            Tok::Sym(Sym::HashBrace) => {
                self.bump();
                let items = self.comma_list(Sym::RBrace, |p| p.module_field())?;
                check_distinct(items.iter().flat_map(|p| p.binders()), self.prev_span())?;
                let fields = items.into_iter().map(|p| (p.binders()[0].to_string(), p)).collect();
                Ok(Pattern::new(PatKind::Record { fields, hw: true }, self.since(start)))
            }
            _ => Err(self.error("a module parameter")),
        }
    }

    // ------------------------------------------------------------------
    // Patterns

    fn pattern(&mut self) -> PResult<Pattern> {
        let start = self.span();
        let head = self.app_pattern()?;
        if self.eat_sym(Sym::ColonColon) {
            let tail = self.pattern()?;
            return Ok(Pattern::new(PatKind::Cons(Box::new(head), Box::new(tail)), self.since(start)));
        }
        Ok(head)
    }

    fn starts_atomic_pattern(&self) -> bool {
        matches!(self.peek(), Tok::Int(_) | Tok::Real(_) | Tok::Str(_) | Tok::Ident(_) | Tok::Kw(Keyword::Nil))
            || matches!(self.peek(), Tok::Sym(Sym::LParen | Sym::LBracket | Sym::LBrace))
    }

    fn app_pattern(&mut self) -> PResult<Pattern> {
        let start = self.span();
        if let Tok::Ident(name) = self.peek().clone() {
            if name != "_" {
                self.bump();
                if self.starts_atomic_pattern() {
                    let arg = self.atomic_pattern()?;
                    return Ok(Pattern::new(
                        PatKind::Ctor { name, arg: Some(Box::new(arg)), info: None },
                        self.since(start),
                    ));
                }
                return Ok(Pattern::new(PatKind::Var { name, ann: None }, self.since(start)));
            }
        }
        self.atomic_pattern()
    }

    /// Pattern inside parentheses or brackets, optionally annotated.
    fn annotated_pattern(&mut self) -> PResult<Pattern> {
        let start = self.span();
        let mut p = self.pattern()?;
        if self.eat_sym(Sym::Colon) {
            let ty = self.ty()?;
            match &mut p.kind {
                PatKind::Var { ann, .. } => *ann = Some(ty),
                _ => return Err(Diagnostic::error(ErrorKind::Parse, Some(ty.span), "only variables can carry a type annotation in patterns")),
            }
            p.span = self.since(start);
        }
        Ok(p)
    }

    fn atomic_pattern(&mut self) -> PResult<Pattern> {
        let start = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                PatKind::Int(v)
            }
            Tok::Real(v) => {
                self.bump();
                PatKind::Real(v)
            }
            Tok::Str(s) => {
                self.bump();
                PatKind::Str(s)
            }
            Tok::Ident(name) => {
                self.bump();
                if name == "_" {
                    PatKind::Wild
                } else {
                    PatKind::Var { name, ann: None }
                }
            }
            Tok::Kw(Keyword::Nil) => {
                self.bump();
                PatKind::List(Vec::new())
            }
            Tok::Sym(Sym::LBracket) => {
                self.bump();
                PatKind::List(self.comma_list(Sym::RBracket, |p| p.pattern())?)
            }
            Tok::Sym(Sym::LParen) => {
                self.bump();
                if self.eat_sym(Sym::RParen) {
                    PatKind::Record { fields: Vec::new(), hw: false }
                } else {
                    let mut items = self.comma_list(Sym::RParen, |p| p.annotated_pattern())?;
                    if items.len() == 1 {
                        let mut p = items.pop().unwrap();
                        p.span = self.since(start);
                        return Ok(p);
                    }
                    check_distinct(items.iter().flat_map(|p| p.binders()), self.prev_span())?;
                    PatKind::Tuple { items, hw: false }
                }
            }
            Tok::Sym(Sym::LBrace) => {
                self.bump();
                let fields = self.comma_list(Sym::RBrace, |p| {
                    let fstart = p.span();
                    let l = p.label()?;
                    if p.eat_sym(Sym::Eq) {
                        Ok((l, p.pattern()?))
                    } else {
                        let ann = p.opt_ann()?;
                        Ok((l.clone(), Pattern::new(PatKind::Var { name: l, ann }, p.since(fstart))))
                    }
                })?;
                check_distinct(fields.iter().map(|(l, _)| l.as_str()), self.prev_span())?;
                PatKind::Record { fields, hw: false }
            }
            _ => return Err(self.error("a pattern")),
        };
        Ok(Pattern::new(kind, self.since(start)))
    }

    // ------------------------------------------------------------------
    // Types

    fn ty(&mut self) -> PResult<AstTy> {
        let start = self.span();
        let lhs = self.tuple_ty()?;
        if self.eat_sym(Sym::Arrow) {
            let rhs = self.ty()?;
            return Ok(AstTy { kind: TyKind::Arrow(Box::new(lhs), Box::new(rhs)), span: self.since(start) });
        }
        if self.eat_sym(Sym::ModArrow) {
            let rhs = self.ty()?;
            return Ok(AstTy { kind: TyKind::ModArrow(Box::new(lhs), Box::new(rhs)), span: self.since(start) });
        }
        Ok(lhs)
    }

    fn tuple_ty(&mut self) -> PResult<AstTy> {
        let start = self.span();
        let first = self.postfix_ty()?;
        let hw = if self.is_sym(Sym::Star) {
            false
        } else if self.is_sym(Sym::HashStar) {
            true
        } else {
            return Ok(first);
        };
        let sep = if hw { Sym::HashStar } else { Sym::Star };
        let mut items = vec![first];
        while self.eat_sym(sep) {
            items.push(self.postfix_ty()?);
        }
        if self.is_sym(Sym::Star) || self.is_sym(Sym::HashStar) {
            return Err(self.error("a consistent tuple separator"));
        }
        Ok(AstTy { kind: TyKind::Tuple { items, hw }, span: self.since(start) })
    }

    fn postfix_ty(&mut self) -> PResult<AstTy> {
        let start = self.span();
        let mut t = self.atom_ty()?;
        loop {
            match self.peek().clone() {
                Tok::Ident(name) => {
                    self.bump();
                    t = AstTy { kind: TyKind::Name(name, vec![t]), span: self.since(start) };
                }
                Tok::Kw(Keyword::Ref) | Tok::Kw(Keyword::Sw) => {
                    let name = self.bump().text;
                    t = AstTy { kind: TyKind::Name(name, vec![t]), span: self.since(start) };
                }
                Tok::Sym(Sym::LBracket) => {
                    self.bump();
                    let size = self.exp()?;
                    self.expect_sym(Sym::RBracket)?;
                    t = AstTy { kind: TyKind::Array(Box::new(t), Box::new(size)), span: self.since(start) };
                }
                Tok::Sym(Sym::At) => {
                    self.bump();
                    let time = self.prefix()?;
                    t = AstTy { kind: TyKind::Temporal(Box::new(t), Box::new(time)), span: self.since(start) };
                }
                _ => return Ok(t),
            }
        }
    }

    fn atom_ty(&mut self) -> PResult<AstTy> {
        let start = self.span();
        let kind = match self.peek().clone() {
            Tok::TyVar(v) => {
                self.bump();
                TyKind::Var(v)
            }
            Tok::Ident(name) => {
                self.bump();
                TyKind::Name(name, Vec::new())
            }
            Tok::Sym(Sym::LParen) => {
                self.bump();
                let mut items = self.comma_list(Sym::RParen, |p| p.ty())?;
                if items.len() == 1 {
                    let mut t = items.pop().unwrap();
                    t.span = self.since(start);
                    return Ok(t);
                }
                let (name, _) = self.ident()?;
                TyKind::Name(name, items)
            }
            Tok::Sym(Sym::LBrace) | Tok::Sym(Sym::HashBrace) => {
                let hw = self.bump().tok == Tok::Sym(Sym::HashBrace);
                let fields = self.comma_list(Sym::RBrace, |p| {
                    let l = p.label()?;
                    p.expect_sym(Sym::Colon)?;
                    Ok((l, p.ty()?))
                })?;
                check_distinct(fields.iter().map(|(l, _)| l.as_str()), self.prev_span())?;
                TyKind::Record { fields, hw }
            }
            Tok::Sym(Sym::HashParen) => {
                self.bump();
                let items = self.comma_list(Sym::RParen, |p| p.ty())?;
                TyKind::Tuple { items, hw: true }
            }
            _ => return Err(self.error("a type")),
        };
        Ok(AstTy { kind, span: self.since(start) })
    }
}

fn check_distinct<'a>(labels: impl Iterator<Item = &'a str>, span: Span) -> PResult<()> {
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(Diagnostic::error(ErrorKind::Parse, Some(span), format!("duplicate label or binder `{}`", l)));
        }
    }
    Ok(())
}

fn make_binary(op: &Token, lhs: Expr, rhs: Expr, span: Span) -> Expr {
    let (l, r) = (Box::new(lhs), Box::new(rhs));
    let kind = match &op.tok {
        Tok::Kw(Keyword::Andalso) => ExprKind::AndAlso(l, r),
        Tok::Kw(Keyword::Orelse) => ExprKind::OrElse(l, r),
        Tok::Sym(s) => {
            let bin = match s {
                Sym::Plus => BinOp::Add,
                Sym::Minus => BinOp::Sub,
                Sym::Star => BinOp::Mul,
                Sym::Slash => BinOp::Div,
                Sym::Percent => BinOp::Mod,
                Sym::PlusDot => BinOp::RAdd,
                Sym::MinusDot => BinOp::RSub,
                Sym::StarDot => BinOp::RMul,
                Sym::SlashDot => BinOp::RDiv,
                Sym::Eq => BinOp::Eq,
                Sym::Ne => BinOp::Ne,
                Sym::Lt => BinOp::Lt,
                Sym::Gt => BinOp::Gt,
                Sym::Le => BinOp::Le,
                Sym::Ge => BinOp::Ge,
                Sym::Shl => BinOp::Shl,
                Sym::Shr => BinOp::Shr,
                Sym::Sra => BinOp::Sra,
                Sym::Amp => BinOp::And,
                Sym::Bar => BinOp::Or,
                Sym::Caret => BinOp::Xor,
                Sym::ColonColon => BinOp::Cons,
                Sym::Assign => BinOp::Assign,
                Sym::AndAnd => return Expr::new(ExprKind::Collapse(CollapseOp::And, l, r), span),
                Sym::BarBar => return Expr::new(ExprKind::Collapse(CollapseOp::Or, l, r), span),
                Sym::CaretCaret => return Expr::new(ExprKind::Collapse(CollapseOp::Xor, l, r), span),
                Sym::SignedArr | Sym::UnsignedArr | Sym::RealArr => {
                    let kind = match s {
                        Sym::SignedArr => BitArrayKind::Signed,
                        Sym::UnsignedArr => BitArrayKind::Unsigned,
                        _ => BitArrayKind::Real,
                    };
                    return Expr::new(ExprKind::BitArray { kind, width: l, value: r }, span);
                }
                _ => unreachable!("not a binary operator"),
            };
            ExprKind::Binary(bin, l, r)
        }
        _ => unreachable!("not a binary operator"),
    };
    Expr::new(kind, span)
}

/// Parses a whole program: a single expression followed by end of input.
pub fn parse(tokens: &[Token]) -> Result<Expr, Diagnostic> {
    let mut p = Parser { toks: tokens, pos: 0 };
    let e = p.exp()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error("end of input"));
    }
    Ok(e)
}

/// Parses a standalone type expression (used for built-in signatures).
pub fn parse_type(tokens: &[Token]) -> Result<AstTy, Diagnostic> {
    let mut p = Parser { toks: tokens, pos: 0 };
    let t = p.ty()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error("end of input"));
    }
    Ok(t)
}

// ----------------------------------------------------------------------
// Desugaring

fn numeric_fields<T>(items: Vec<T>) -> Vec<(String, T)> {
    items.into_iter().enumerate().map(|(i, x)| ((i + 1).to_string(), x)).collect()
}

fn bx(kind: ExprKind, span: Span) -> Box<Expr> {
    Box::new(Expr::new(kind, span))
}

/// Rewrites derived forms into core forms; the identity on core trees.
pub fn desugar(e: Expr) -> Expr {
    let span = e.span;
    let ty = e.ty;
    let kind = match e.kind {
        ExprKind::Tuple { items, hw } => {
            let fields = numeric_fields(items.into_iter().map(desugar).collect());
            if hw {
                ExprKind::HwRecord(fields)
            } else {
                ExprKind::Record(fields)
            }
        }
        ExprKind::Unit => ExprKind::Record(Vec::new()),
        ExprKind::If(c, t, els) => {
            let els = match els {
                Some(e) => Box::new(desugar(*e)),
                None => bx(ExprKind::Record(Vec::new()), span),
            };
            ExprKind::If(Box::new(desugar(*c)), Box::new(desugar(*t)), Some(els))
        }
        ExprKind::AndAlso(a, b) => {
            ExprKind::If(Box::new(desugar(*a)), Box::new(desugar(*b)), Some(bx(ExprKind::Int(0), span)))
        }
        ExprKind::OrElse(a, b) => {
            ExprKind::If(Box::new(desugar(*a)), bx(ExprKind::Int(1), span), Some(Box::new(desugar(*b))))
        }
        ExprKind::Not(a) => ExprKind::If(Box::new(desugar(*a)), bx(ExprKind::Int(0), span), Some(bx(ExprKind::Int(1), span))),
        ExprKind::Collapse(op, a, b) => {
            let (asp, bsp) = (a.span, b.span);
            let ra = Expr::new(ExprKind::Unary(UnOp::OrReduce, a), asp);
            let rb = Expr::new(ExprKind::Unary(UnOp::OrReduce, b), bsp);
            let bin = match op {
                CollapseOp::And => BinOp::And,
                CollapseOp::Or => BinOp::Or,
                CollapseOp::Xor => BinOp::Xor,
            };
            return desugar(Expr { kind: ExprKind::Binary(bin, Box::new(ra), Box::new(rb)), span, ty });
        }
        ExprKind::Record(fs) => ExprKind::Record(fs.into_iter().map(|(l, e)| (l, desugar(e))).collect()),
        ExprKind::HwRecord(fs) => ExprKind::HwRecord(fs.into_iter().map(|(l, e)| (l, desugar(e))).collect()),
        ExprKind::List(xs) => ExprKind::List(xs.into_iter().map(desugar).collect()),
        ExprKind::ArrayLit(xs) => ExprKind::ArrayLit(xs.into_iter().map(desugar).collect()),
        ExprKind::Seq(xs) => ExprKind::Seq(xs.into_iter().map(desugar).collect()),
        ExprKind::Proj(l, a) => ExprKind::Proj(l, Box::new(desugar(*a))),
        ExprKind::ArrayGen { size, var, body } => {
            ExprKind::ArrayGen { size: Box::new(desugar(*size)), var, body: Box::new(desugar(*body)) }
        }
        ExprKind::Index(a, b) => ExprKind::Index(Box::new(desugar(*a)), Box::new(desugar(*b))),
        ExprKind::BitArray { kind, width, value } => {
            ExprKind::BitArray { kind, width: Box::new(desugar(*width)), value: Box::new(desugar(*value)) }
        }
        ExprKind::Unary(op, a) => ExprKind::Unary(op, Box::new(desugar(*a))),
        ExprKind::Binary(op, a, b) => ExprKind::Binary(op, Box::new(desugar(*a)), Box::new(desugar(*b))),
        ExprKind::Let(decs, body) => ExprKind::Let(decs.into_iter().map(desugar_dec).collect(), Box::new(desugar(*body))),
        ExprKind::App(f, a) => ExprKind::App(Box::new(desugar(*f)), Box::new(desugar(*a))),
        ExprKind::Case(s, arms) => ExprKind::Case(
            Box::new(desugar(*s)),
            arms.into_iter().map(|(p, e)| (desugar_pattern(p), desugar(e))).collect(),
        ),
        ExprKind::Lambda { name, param, body } => {
            ExprKind::Lambda { name, param: desugar_pattern(param), body: Box::new(desugar(*body)) }
        }
        ExprKind::Param(a, b) => ExprKind::Param(Box::new(desugar(*a)), Box::new(desugar(*b))),
        ExprKind::Ref(a) => ExprKind::Ref(Box::new(desugar(*a))),
        ExprKind::Sw(a) => ExprKind::Sw(Box::new(desugar(*a))),
        ExprKind::Unsw(a) => ExprKind::Unsw(Box::new(desugar(*a))),
        k @ (ExprKind::Int(_)
        | ExprKind::Real(_)
        | ExprKind::Str(_)
        | ExprKind::Bit(_)
        | ExprKind::Var { .. }
        | ExprKind::Loc(_)
        | ExprKind::WrapLoc(_)) => k,
    };
    Expr { kind, span, ty }
}

pub fn desugar_pattern(p: Pattern) -> Pattern {
    let span = p.span;
    let ty = p.ty;
    let kind = match p.kind {
        PatKind::Tuple { items, hw } => {
            PatKind::Record { fields: numeric_fields(items.into_iter().map(desugar_pattern).collect()), hw }
        }
        PatKind::Record { fields, hw } => {
            PatKind::Record { fields: fields.into_iter().map(|(l, p)| (l, desugar_pattern(p))).collect(), hw }
        }
        PatKind::Ctor { name, arg, info } => {
            PatKind::Ctor { name, arg: arg.map(|a| Box::new(desugar_pattern(*a))), info }
        }
        PatKind::Cons(a, b) => PatKind::Cons(Box::new(desugar_pattern(*a)), Box::new(desugar_pattern(*b))),
        PatKind::List(xs) => PatKind::List(xs.into_iter().map(desugar_pattern).collect()),
        PatKind::Var { name, ann } => PatKind::Var { name, ann: ann.map(desugar_ty) },
        k => k,
    };
    Pattern { kind, span, ty }
}

fn desugar_ty(t: AstTy) -> AstTy {
    let kind = match t.kind {
        TyKind::Name(n, args) => TyKind::Name(n, args.into_iter().map(desugar_ty).collect()),
        TyKind::Record { fields, hw } => {
            TyKind::Record { fields: fields.into_iter().map(|(l, t)| (l, desugar_ty(t))).collect(), hw }
        }
        TyKind::Tuple { items, hw } => TyKind::Tuple { items: items.into_iter().map(desugar_ty).collect(), hw },
        TyKind::Arrow(a, b) => TyKind::Arrow(Box::new(desugar_ty(*a)), Box::new(desugar_ty(*b))),
        TyKind::ModArrow(a, b) => TyKind::ModArrow(Box::new(desugar_ty(*a)), Box::new(desugar_ty(*b))),
        TyKind::Array(e, s) => TyKind::Array(Box::new(desugar_ty(*e)), Box::new(desugar(*s))),
        TyKind::Temporal(e, s) => TyKind::Temporal(Box::new(desugar_ty(*e)), Box::new(desugar(*s))),
        k => k,
    };
    AstTy { kind, span: t.span }
}

pub fn desugar_dec(d: Dec) -> Dec {
    let kind = match d.kind {
        DecKind::Val { name, ann, ty, expr } => DecKind::Val { name, ann: ann.map(desugar_ty), ty, expr: desugar(expr) },
        DecKind::Fun { name, params, ret, ty, body } => DecKind::Fun {
            name,
            params: params.into_iter().map(desugar_pattern).collect(),
            ret: ret.map(desugar_ty),
            ty,
            body: desugar(body),
        },
        DecKind::Type { params, name, body } => DecKind::Type { params, name, body: desugar_ty(body) },
        DecKind::Datatype { hw, params, name, ctors, def } => DecKind::Datatype {
            hw,
            params,
            name,
            ctors: ctors
                .into_iter()
                .map(|c| CtorDecl { payload: c.payload.map(desugar_ty), ..c })
                .collect(),
            def,
        },
        DecKind::Module { name, size_param, param, ret, ty, body } => DecKind::Module {
            name,
            size_param,
            param: desugar_pattern(param),
            ret: ret.map(desugar_ty),
            ty,
            body: desugar(body),
        },
    };
    Dec { kind, span: d.span }
}

// ----------------------------------------------------------------------
// S-expression rendering (`--emit ast`)

fn quote(s: &str) -> String {
    format!("{:?}", s)
}

pub fn ty_to_string(t: &AstTy) -> String {
    match &t.kind {
        TyKind::Var(v) => format!("'{}", v),
        TyKind::Name(n, args) if args.is_empty() => n.clone(),
        TyKind::Name(n, args) if args.len() == 1 => format!("{} {}", ty_atom(&args[0]), n),
        TyKind::Name(n, args) => {
            format!("({}) {}", args.iter().map(ty_to_string).collect::<Vec<_>>().join(", "), n)
        }
        TyKind::Record { fields, hw } => format!(
            "{}{{{}}}",
            if *hw { "#" } else { "" },
            fields.iter().map(|(l, t)| format!("{}: {}", l, ty_to_string(t))).collect::<Vec<_>>().join(", ")
        ),
        TyKind::Tuple { items, hw } => {
            items.iter().map(ty_atom).collect::<Vec<_>>().join(if *hw { " #* " } else { " * " })
        }
        TyKind::Arrow(a, b) => format!("{} -> {}", ty_atom(a), ty_to_string(b)),
        TyKind::ModArrow(a, b) => format!("{} ~> {}", ty_atom(a), ty_to_string(b)),
        TyKind::Array(e, s) => format!("{}[{}]", ty_atom(e), to_sexpr(s)),
        TyKind::Temporal(e, s) => format!("{} @ {}", ty_atom(e), to_sexpr(s)),
    }
}

fn ty_atom(t: &AstTy) -> String {
    match &t.kind {
        TyKind::Arrow(..) | TyKind::ModArrow(..) | TyKind::Tuple { .. } | TyKind::Temporal(..) => {
            format!("({})", ty_to_string(t))
        }
        _ => ty_to_string(t),
    }
}

pub fn pattern_to_sexpr(p: &Pattern) -> String {
    match &p.kind {
        PatKind::Wild => "_".into(),
        PatKind::Int(v) => format!("(pint {})", v),
        PatKind::Real(v) => format!("(preal {:?})", v),
        PatKind::Str(s) => format!("(pstring {})", quote(s)),
        PatKind::Var { name, ann: None } => name.clone(),
        PatKind::Var { name, ann: Some(t) } => format!("(: {} {})", name, quote(&ty_to_string(t))),
        PatKind::Ctor { name, arg: None, .. } => format!("(pctor {})", name),
        PatKind::Ctor { name, arg: Some(a), .. } => format!("(pctor {} {})", name, pattern_to_sexpr(a)),
        PatKind::Record { fields, hw } => {
            let mut s = String::from(if *hw { "(phwrecord" } else { "(precord" });
            for (l, p) in fields {
                s.push_str(&format!(" ({} {})", l, pattern_to_sexpr(p)));
            }
            s.push(')');
            s
        }
        PatKind::Tuple { items, hw } => format!(
            "({} {})",
            if *hw { "phwtuple" } else { "ptuple" },
            items.iter().map(pattern_to_sexpr).collect::<Vec<_>>().join(" ")
        ),
        PatKind::Cons(a, b) => format!("(pcons {} {})", pattern_to_sexpr(a), pattern_to_sexpr(b)),
        PatKind::List(xs) => {
            let mut s = String::from("(plist");
            for x in xs {
                s.push(' ');
                s.push_str(&pattern_to_sexpr(x));
            }
            s.push(')');
            s
        }
    }
}

fn seq(head: &str, items: &[Expr]) -> String {
    let mut s = format!("({}", head);
    for x in items {
        s.push(' ');
        s.push_str(&to_sexpr(x));
    }
    s.push(')');
    s
}

fn fields_sexpr(head: &str, fs: &[(String, Expr)]) -> String {
    let mut s = format!("({}", head);
    for (l, e) in fs {
        s.push_str(&format!(" ({} {})", l, to_sexpr(e)));
    }
    s.push(')');
    s
}

pub fn dec_to_sexpr(d: &Dec) -> String {
    let ann = |a: &Option<AstTy>| a.as_ref().map(|t| format!(" : {}", quote(&ty_to_string(t)))).unwrap_or_default();
    match &d.kind {
        DecKind::Val { name, ann: a, expr, .. } => format!("(val {}{} {})", name, ann(a), to_sexpr(expr)),
        DecKind::Fun { name, params, ret, body, .. } => format!(
            "(fun {} ({}){} {})",
            name,
            params.iter().map(pattern_to_sexpr).collect::<Vec<_>>().join(" "),
            ann(ret),
            to_sexpr(body)
        ),
        DecKind::Type { params, name, body } => {
            format!("(type ({}) {} {})", params.join(" "), name, quote(&ty_to_string(body)))
        }
        DecKind::Datatype { hw, params, name, ctors, .. } => {
            let mut s = format!("({} ({}) {}", if *hw { "hdatatype" } else { "sdatatype" }, params.join(" "), name);
            for c in ctors {
                match &c.payload {
                    Some(t) => s.push_str(&format!(" ({} {})", c.name, quote(&ty_to_string(t)))),
                    None => s.push_str(&format!(" ({})", c.name)),
                }
            }
            s.push(')');
            s
        }
        DecKind::Module { name, size_param, param, ret, body, .. } => format!(
            "(module {}{} {}{} {})",
            name,
            size_param.as_ref().map(|n| format!(" <{}>", n)).unwrap_or_default(),
            pattern_to_sexpr(param),
            ann(ret),
            to_sexpr(body)
        ),
    }
}

/// Stable s-expression rendering of a (desugared) tree.
pub fn to_sexpr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(v) => format!("(int {})", v),
        ExprKind::Real(v) => format!("(real {:?})", v),
        ExprKind::Str(s) => format!("(string {})", quote(s)),
        ExprKind::Bit(b) => format!("(bit {})", b),
        ExprKind::Var { name, .. } => format!("(var {})", name),
        ExprKind::Record(fs) => fields_sexpr("record", fs),
        ExprKind::HwRecord(fs) => fields_sexpr("hwrecord", fs),
        ExprKind::Tuple { items, hw } => seq(if *hw { "hwtuple" } else { "tuple" }, items),
        ExprKind::Unit => "(unit)".into(),
        ExprKind::List(xs) => seq("list", xs),
        ExprKind::Proj(l, a) => format!("(proj {} {})", l, to_sexpr(a)),
        ExprKind::ArrayLit(xs) => seq("array", xs),
        ExprKind::ArrayGen { size, var, body } => format!("(gen {} {} {})", to_sexpr(size), var, to_sexpr(body)),
        ExprKind::Index(a, i) => format!("(index {} {})", to_sexpr(a), to_sexpr(i)),
        ExprKind::BitArray { kind, width, value } => {
            let k = match kind {
                BitArrayKind::Signed => "s",
                BitArrayKind::Unsigned => "u",
                BitArrayKind::Real => "r",
            };
            format!("(bitarray {} {} {})", k, to_sexpr(width), to_sexpr(value))
        }
        ExprKind::Unary(op, a) => format!("(unop {} {})", op.name(), to_sexpr(a)),
        ExprKind::Binary(op, a, b) => format!("(binop {} {} {})", op.name(), to_sexpr(a), to_sexpr(b)),
        ExprKind::Collapse(op, a, b) => {
            let n = match op {
                CollapseOp::And => "&&",
                CollapseOp::Or => "||",
                CollapseOp::Xor => "^^",
            };
            format!("(collapse {} {} {})", n, to_sexpr(a), to_sexpr(b))
        }
        ExprKind::If(c, t, Some(x)) => format!("(if {} {} {})", to_sexpr(c), to_sexpr(t), to_sexpr(x)),
        ExprKind::If(c, t, None) => format!("(if {} {})", to_sexpr(c), to_sexpr(t)),
        ExprKind::AndAlso(a, b) => format!("(andalso {} {})", to_sexpr(a), to_sexpr(b)),
        ExprKind::OrElse(a, b) => format!("(orelse {} {})", to_sexpr(a), to_sexpr(b)),
        ExprKind::Not(a) => format!("(not {})", to_sexpr(a)),
        ExprKind::Let(decs, body) => format!(
            "(let ({}) {})",
            decs.iter().map(dec_to_sexpr).collect::<Vec<_>>().join(" "),
            to_sexpr(body)
        ),
        ExprKind::Seq(xs) => seq("seq", xs),
        ExprKind::App(f, a) => format!("(app {} {})", to_sexpr(f), to_sexpr(a)),
        ExprKind::Case(s, arms) => {
            let mut out = format!("(case {}", to_sexpr(s));
            for (p, e) in arms {
                out.push_str(&format!(" ({} {})", pattern_to_sexpr(p), to_sexpr(e)));
            }
            out.push(')');
            out
        }
        ExprKind::Lambda { name, param, body } => match name {
            Some(n) => format!("(lambda {} {} {})", n, pattern_to_sexpr(param), to_sexpr(body)),
            None => format!("(lambda {} {})", pattern_to_sexpr(param), to_sexpr(body)),
        },
        ExprKind::Param(m, n) => format!("(param {} {})", to_sexpr(m), to_sexpr(n)),
        ExprKind::Ref(a) => format!("(ref {})", to_sexpr(a)),
        ExprKind::Sw(a) => format!("(sw {})", to_sexpr(a)),
        ExprKind::Unsw(a) => format!("(unsw {})", to_sexpr(a)),
        ExprKind::Loc(l) => format!("(loc {})", l),
        ExprKind::WrapLoc(w) => format!("(wloc {})", w),
    }
}

/// Lex, parse and desugar in one go.
pub fn parse_program(source: &str, origin: &str) -> Result<Expr, Diagnostic> {
    let toks = crate::lexer::tokenize(source, origin)?;
    Ok(desugar(parse(&toks)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::tokenize;

    fn sx(src: &str) -> String {
        to_sexpr(&parse_program(src, "t").unwrap())
    }

    fn raw(src: &str) -> String {
        to_sexpr(&parse(&tokenize(src, "t").unwrap()).unwrap())
    }

    #[test]
    fn precedence() {
        assert_eq!(sx("1 + 2 * 3"), "(binop + (int 1) (binop * (int 2) (int 3)))");
        assert_eq!(sx("a::b::c"), "(binop :: (var a) (binop :: (var b) (var c)))");
        assert_eq!(sx("i % 2 = 0"), "(binop = (binop % (var i) (int 2)) (int 0))");
        assert_eq!(sx("f x y + 1"), "(binop + (app (app (var f) (var x)) (var y)) (int 1))");
        assert_eq!(sx("r := 1 + 2"), "(binop := (var r) (binop + (int 1) (int 2)))");
    }

    #[test]
    fn parse_errors() {
        let e = parse(&tokenize("if if if", "t").unwrap()).unwrap_err();
        assert_eq!(e.span.unwrap().col, 4);
        assert!(parse(&tokenize("8 'u: 3 'u: 2", "t").unwrap()).unwrap_err().message.contains("non-associative"));
        assert!(parse(&tokenize("(1, 2,)", "t").unwrap()).is_err());
        assert!(parse(&tokenize("{a = 1, a = 2}", "t").unwrap()).is_err());
    }

    #[test]
    fn derived_forms() {
        assert_eq!(sx("(x, y)"), "(record (1 (var x)) (2 (var y)))");
        assert_eq!(sx("()"), "(record)");
        assert_eq!(sx("if a then b"), "(if (var a) (var b) (record))");
        assert_eq!(sx("not e"), "(if (var e) (int 0) (int 1))");
        assert_eq!(sx("a andalso b"), "(if (var a) (var b) (int 0))");
        assert_eq!(sx("a orelse b"), "(if (var a) (int 1) (var b))");
        assert_eq!(sx("&-> #[a, b, c]"), "(unop &-> (array (var a) (var b) (var c)))");
        assert_eq!(sx("a && b"), "(binop & (unop |-> (var a)) (unop |-> (var b)))");
        assert_eq!(sx("nil"), sx("[]"));
        assert_eq!(raw("(e1; e2)"), "(seq (var e1) (var e2))");
    }

    #[test]
    fn declarations() {
        let s = sx("let module rca <:n:> #(a, b) = a fun f (x, y, s: string) = x val v : bit[8] = w in rca <:2:> end");
        assert!(s.contains("(module rca <n> (phwrecord (1 a) (2 b)) (var a))"), "{}", s);
        assert!(s.contains("(fun f ((precord (1 x) (2 y) (3 (: s \"string\")))) (var x))"), "{}", s);
        assert!(s.contains("(val v : \"bit[(int 8)]\" (var w))"), "{}", s);
        assert!(s.ends_with("(param (var rca) (int 2)))"), "{}", s);
        let d = sx("let sdatatype 'a option = SOME of 'a |: NONE in NONE end");
        assert!(d.contains("(sdatatype (a) option (SOME \"'a\") (NONE))"), "{}", d);
    }

    #[test]
    fn desugar_is_idempotent() {
        let src = "let fun f (a, b) = if a andalso not b then (1, ()) else (2, ()) in #[3; gen i => 'b:0] && #['b:1] end";
        let once = parse_program(src, "t").unwrap();
        let twice = desugar(once.clone());
        assert_eq!(once, twice);
    }
}
