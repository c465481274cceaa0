//! Tokenizer: longest match first, then earliest pattern, with nested comments.

use crate::diag::{Diagnostic, ErrorKind, Span};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Keyword {
    Let,
    In,
    End,
    Val,
    Fun,
    Type,
    Sdatatype,
    Hdatatype,
    Module,
    Of,
    If,
    Then,
    Else,
    Case,
    Gen,
    Ref,
    Sw,
    Unsw,
    Nil,
    Andalso,
    Orelse,
    Not,
}

const KEYWORDS: &[(&str, Keyword)] = &[
    ("let", Keyword::Let),
    ("in", Keyword::In),
    ("end", Keyword::End),
    ("val", Keyword::Val),
    ("fun", Keyword::Fun),
    ("type", Keyword::Type),
    ("sdatatype", Keyword::Sdatatype),
    ("hdatatype", Keyword::Hdatatype),
    ("module", Keyword::Module),
    ("of", Keyword::Of),
    ("if", Keyword::If),
    ("then", Keyword::Then),
    ("else", Keyword::Else),
    ("case", Keyword::Case),
    ("gen", Keyword::Gen),
    ("ref", Keyword::Ref),
    ("sw", Keyword::Sw),
    ("unsw", Keyword::Unsw),
    ("nil", Keyword::Nil),
    ("andalso", Keyword::Andalso),
    ("orelse", Keyword::Orelse),
    ("not", Keyword::Not),
];

impl Keyword {
    pub fn lookup(s: &str) -> Option<Keyword> {
        KEYWORDS.iter().find(|(k, _)| *k == s).map(|(_, kw)| *kw)
    }

    pub fn as_str(self) -> &'static str {
        KEYWORDS.iter().find(|(_, kw)| *kw == self).map(|(k, _)| *k).unwrap()
    }
}

/// Operators and punctuation, keyed by their exact spelling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sym {
    // arithmetic
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    PlusDot,
    MinusDot,
    StarDot,
    SlashDot,
    Tilde,
    // comparison
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    // shifts
    Shl,
    Shr,
    Sra,
    // bitwise and reductions
    Amp,
    Bar,
    Caret,
    Bang,
    AndReduce,
    OrReduce,
    XorReduce,
    AndAnd,
    BarBar,
    CaretCaret,
    // bit-array construction
    SignedArr,
    UnsignedArr,
    RealArr,
    // lists and refs
    ColonColon,
    Assign,
    Dollar,
    // types
    Arrow,
    ModArrow,
    HashStar,
    At,
    // punctuation
    FatArrow,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    HashParen,
    HashBracket,
    HashBrace,
    IdxOpen,
    IdxClose,
    ParamOpen,
    ParamClose,
    Comma,
    Semi,
    Colon,
    CaseBar,
}

/// Spelling table; the scanner picks the longest entry that matches.
const SYMBOLS: &[(&str, Sym)] = &[
    (">>>", Sym::Sra),
    ("&->", Sym::AndReduce),
    ("|->", Sym::OrReduce),
    ("^->", Sym::XorReduce),
    ("'s:", Sym::SignedArr),
    ("'u:", Sym::UnsignedArr),
    ("'r:", Sym::RealArr),
    ("+.", Sym::PlusDot),
    ("-.", Sym::MinusDot),
    ("*.", Sym::StarDot),
    ("/.", Sym::SlashDot),
    ("<>", Sym::Ne),
    ("<=", Sym::Le),
    (">=", Sym::Ge),
    ("<<", Sym::Shl),
    (">>", Sym::Shr),
    ("&&", Sym::AndAnd),
    ("||", Sym::BarBar),
    ("^^", Sym::CaretCaret),
    ("::", Sym::ColonColon),
    (":=", Sym::Assign),
    ("->", Sym::Arrow),
    ("~>", Sym::ModArrow),
    ("#*", Sym::HashStar),
    ("=>", Sym::FatArrow),
    ("#(", Sym::HashParen),
    ("#[", Sym::HashBracket),
    ("#{", Sym::HashBrace),
    ("[:", Sym::IdxOpen),
    (":]", Sym::IdxClose),
    ("<:", Sym::ParamOpen),
    (":>", Sym::ParamClose),
    (">:", Sym::ParamClose),
    ("|:", Sym::CaseBar),
    ("+", Sym::Plus),
    ("-", Sym::Minus),
    ("*", Sym::Star),
    ("/", Sym::Slash),
    ("%", Sym::Percent),
    ("~", Sym::Tilde),
    ("=", Sym::Eq),
    ("<", Sym::Lt),
    (">", Sym::Gt),
    ("&", Sym::Amp),
    ("|", Sym::Bar),
    ("^", Sym::Caret),
    ("!", Sym::Bang),
    ("$", Sym::Dollar),
    ("@", Sym::At),
    ("(", Sym::LParen),
    (")", Sym::RParen),
    ("[", Sym::LBracket),
    ("]", Sym::RBracket),
    ("{", Sym::LBrace),
    ("}", Sym::RBrace),
    (",", Sym::Comma),
    (";", Sym::Semi),
    (":", Sym::Colon),
];

impl Sym {
    pub fn as_str(self) -> &'static str {
        SYMBOLS.iter().find(|(_, s)| *s == self).map(|(k, _)| *k).unwrap()
    }

    fn is_punctuation(self) -> bool {
        matches!(
            self,
            Sym::FatArrow
                | Sym::LParen
                | Sym::RParen
                | Sym::LBracket
                | Sym::RBracket
                | Sym::LBrace
                | Sym::RBrace
                | Sym::HashParen
                | Sym::HashBracket
                | Sym::HashBrace
                | Sym::IdxOpen
                | Sym::IdxClose
                | Sym::ParamOpen
                | Sym::ParamClose
                | Sym::Comma
                | Sym::Semi
                | Sym::Colon
                | Sym::CaseBar
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Kw(Keyword),
    /// Plain or structure-qualified identifier (`x`, `List.map`).
    Ident(String),
    /// Type variable without its leading quote or backtick.
    TyVar(String),
    Int(i32),
    Real(f64),
    Str(String),
    Bit(u8),
    /// `#label` record projection.
    Proj(String),
    Sym(Sym),
    Eof,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenClass {
    Keyword,
    Identifier,
    IntLit,
    RealLit,
    StringLit,
    BitLit,
    Operator,
    Punctuation,
    Eof,
}

impl fmt::Display for TokenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenClass::Keyword => "KEYWORD",
            TokenClass::Identifier => "IDENT",
            TokenClass::IntLit => "INT",
            TokenClass::RealLit => "REAL",
            TokenClass::StringLit => "STRING",
            TokenClass::BitLit => "BIT",
            TokenClass::Operator => "OP",
            TokenClass::Punctuation => "PUNCT",
            TokenClass::Eof => "EOF",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub text: String,
    pub span: Span,
}

impl Token {
    pub fn class(&self) -> TokenClass {
        match &self.tok {
            Tok::Kw(_) => TokenClass::Keyword,
            Tok::Ident(_) | Tok::TyVar(_) => TokenClass::Identifier,
            Tok::Int(_) => TokenClass::IntLit,
            Tok::Real(_) => TokenClass::RealLit,
            Tok::Str(_) => TokenClass::StringLit,
            Tok::Bit(_) => TokenClass::BitLit,
            Tok::Proj(_) => TokenClass::Operator,
            Tok::Sym(s) if s.is_punctuation() => TokenClass::Punctuation,
            Tok::Sym(_) => TokenClass::Operator,
            Tok::Eof => TokenClass::Eof,
        }
    }

    /// One line of `--emit tokens` output.
    pub fn dump(&self) -> String {
        format!("{} {:?} @{}:{}", self.class(), self.text, self.span.line, self.span.col)
    }
}

/// Scanner state that must be balanced at end of input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LexState {
    pub comment_depth: u32,
    pub in_string: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IntLitError {
    InvalidDigit(char),
    Empty,
    OutOfRange,
}

impl fmt::Display for IntLitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntLitError::InvalidDigit(c) => write!(f, "digit '{}' is invalid for this base", c),
            IntLitError::Empty => f.write_str("integer literal has no digits"),
            IntLitError::OutOfRange => f.write_str("integer literal does not fit in 32 bits"),
        }
    }
}

/// Decodes an integer lexeme (`#'b:`, `#'o:`, `#'x:`/`#'h:` or signed decimal) to its value.
pub fn decode_integer(lexeme: &str) -> Result<i32, IntLitError> {
    let (negative, body) = match lexeme.strip_prefix('~') {
        Some(rest) => (true, rest),
        None => (false, lexeme),
    };
    let (radix, digits) = if let Some(d) = body.strip_prefix("#'b:") {
        (2, d)
    } else if let Some(d) = body.strip_prefix("#'o:") {
        (8, d)
    } else if let Some(d) = body.strip_prefix("#'x:").or_else(|| body.strip_prefix("#'h:")) {
        (16, d)
    } else {
        (10, body)
    };
    if digits.is_empty() {
        return Err(IntLitError::Empty);
    }
    let mut acc: i64 = 0;
    for c in digits.chars() {
        let d = c.to_digit(radix).ok_or(IntLitError::InvalidDigit(c))? as i64;
        acc = acc * radix as i64 + d;
        if acc > i32::MAX as i64 + 1 {
            return Err(IntLitError::OutOfRange);
        }
    }
    let v = if negative { -acc } else { acc };
    i32::try_from(v).map_err(|_| IntLitError::OutOfRange)
}

struct Scanner<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
    state: LexState,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

impl<'a> Scanner<'a> {
    fn peek(&self, off: usize) -> Option<u8> {
        self.bytes.get(self.pos + off).copied()
    }

    fn here(&self) -> Span {
        Span::new(self.pos, self.pos, self.line, self.col)
    }

    fn advance(&mut self, n: usize) {
        for _ in 0..n {
            let Some(c) = self.src[self.pos..].chars().next() else { return };
            self.pos += c.len_utf8();
            if c == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
    }

    fn err(&self, start: Span, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::error(ErrorKind::Lex, Some(Span { end: self.pos.max(start.start + 1), ..start }), msg)
    }

    fn ident_len(&self, from: usize) -> usize {
        let mut n = 0;
        if self.bytes.get(from).map_or(false, |&c| is_ident_start(c)) {
            n = 1;
            while self.bytes.get(from + n).map_or(false, |&c| is_ident_char(c)) {
                n += 1;
            }
        }
        n
    }

    fn skip_comment(&mut self) -> Result<(), Diagnostic> {
        let start = self.here();
        self.advance(2);
        self.state.comment_depth = 1;
        while self.state.comment_depth > 0 {
            match (self.peek(0), self.peek(1)) {
                (None, _) => return Err(self.err(start, "unterminated comment")),
                (Some(b'('), Some(b'*')) => {
                    self.state.comment_depth += 1;
                    self.advance(2);
                }
                (Some(b'*'), Some(b')')) => {
                    self.state.comment_depth -= 1;
                    self.advance(2);
                }
                _ => self.advance(1),
            }
        }
        Ok(())
    }

    fn string(&mut self) -> Result<Tok, Diagnostic> {
        let start = self.here();
        self.state.in_string = true;
        self.advance(1);
        let mut out = String::new();
        loop {
            let Some(c) = self.src[self.pos..].chars().next() else {
                return Err(self.err(start, "unterminated string"));
            };
            match c {
                '"' => {
                    self.advance(1);
                    break;
                }
                '\n' => return Err(self.err(start, "unterminated string")),
                '\\' => {
                    let esc_at = self.here();
                    self.advance(1);
                    let Some(e) = self.src[self.pos..].chars().next() else {
                        return Err(self.err(start, "unterminated string"));
                    };
                    let ch = match e {
                        '\\' => '\\',
                        '\'' => '\'',
                        '"' => '"',
                        'a' => '\u{7}',
                        'b' => '\u{8}',
                        'e' => '\u{1b}',
                        'f' => '\u{c}',
                        'n' => '\n',
                        'r' => '\r',
                        't' => '\t',
                        '0' => '\0',
                        c if c.is_ascii_hexdigit() => {
                            let hex = self.src.get(self.pos..self.pos + 2).unwrap_or("");
                            if hex.len() != 2 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
                                return Err(self.err(esc_at, "hex escape needs exactly two hex digits"));
                            }
                            self.advance(1);
                            char::from(u8::from_str_radix(hex, 16).unwrap())
                        }
                        other => return Err(self.err(esc_at, format!("unknown escape '\\{}'", other))),
                    };
                    self.advance(1);
                    out.push(ch);
                }
                c => {
                    out.push(c);
                    self.advance(1);
                }
            }
        }
        self.state.in_string = false;
        Ok(Tok::Str(out))
    }

    /// Decimal integer or real, with optional `~` sign already at `pos`.
    fn number(&mut self) -> Result<Tok, Diagnostic> {
        let start = self.here();
        let mut n = 0;
        if self.peek(0) == Some(b'~') {
            n += 1;
        }
        let digits_at = |s: &Self, i: usize| {
            let mut k = 0;
            while s.bytes.get(s.pos + i + k).map_or(false, |c| c.is_ascii_digit()) {
                k += 1;
            }
            k
        };
        let int_digits = digits_at(self, n);
        n += int_digits;
        let mut is_real = false;
        if self.peek(n) == Some(b'.') && self.peek(n + 1).map_or(false, |c| c.is_ascii_digit()) {
            is_real = true;
            n += 1;
            n += digits_at(self, n);
        }
        if matches!(self.peek(n), Some(b'e') | Some(b'E')) {
            let mut k = n + 1;
            if self.peek(k) == Some(b'~') {
                k += 1;
            }
            let exp = digits_at(self, k);
            if exp > 0 {
                is_real = true;
                n = k + exp;
            }
        }
        let text = &self.src[self.pos..self.pos + n];
        self.advance(n);
        if is_real {
            let v: f64 = text.replace('~', "-").parse().map_err(|_| self.err(start, "malformed real literal"))?;
            Ok(Tok::Real(v))
        } else {
            decode_integer(text).map(Tok::Int).map_err(|e| self.err(start, e.to_string()))
        }
    }

    fn based_integer(&mut self) -> Result<Tok, Diagnostic> {
        let start = self.here();
        let mut n = 4;
        while self.peek(n).map_or(false, |c| c.is_ascii_alphanumeric()) {
            n += 1;
        }
        let text = &self.src[self.pos..self.pos + n];
        self.advance(n);
        decode_integer(text).map(Tok::Int).map_err(|e| self.err(start, e.to_string()))
    }

    fn next_token(&mut self) -> Result<Option<Token>, Diagnostic> {
        loop {
            match (self.peek(0), self.peek(1)) {
                (Some(c), _) if c.is_ascii_whitespace() => self.advance(1),
                (Some(b'('), Some(b'*')) => self.skip_comment()?,
                _ => break,
            }
        }
        let start = self.here();
        let Some(c) = self.peek(0) else { return Ok(None) };
        let tok = match c {
            b'"' => self.string()?,
            b'#' if self.peek(1) == Some(b'\'')
                && matches!(self.peek(2), Some(b'b' | b'o' | b'x' | b'h'))
                && self.peek(3) == Some(b':') =>
            {
                self.based_integer()?
            }
            b'\'' if self.peek(1) == Some(b'b')
                && self.peek(2) == Some(b':')
                && matches!(self.peek(3), Some(b'0' | b'1')) =>
            {
                let bit = self.peek(3).unwrap() - b'0';
                self.advance(4);
                Tok::Bit(bit)
            }
            b'\'' if matches!(self.peek(1), Some(b's' | b'u' | b'r')) && self.peek(2) == Some(b':') => {
                let sym = match self.peek(1) {
                    Some(b's') => Sym::SignedArr,
                    Some(b'u') => Sym::UnsignedArr,
                    _ => Sym::RealArr,
                };
                self.advance(3);
                Tok::Sym(sym)
            }
            b'\'' | b'`' => {
                let n = self.ident_len(self.pos + 1);
                if n == 0 {
                    self.advance(1);
                    return Err(self.err(start, "expected a type variable name"));
                }
                let name = self.src[self.pos + 1..self.pos + 1 + n].to_string();
                self.advance(n + 1);
                Tok::TyVar(name)
            }
            c if c.is_ascii_digit() => self.number()?,
            b'~' if self.peek(1).map_or(false, |d| d.is_ascii_digit()) => self.number()?,
            b'.' if self.peek(1).map_or(false, |d| d.is_ascii_digit()) => self.number()?,
            b'~' if self.peek(1) == Some(b'.') && self.peek(2).map_or(false, |d| d.is_ascii_digit()) => {
                self.number()?
            }
            c if is_ident_start(c) => {
                let mut n = self.ident_len(self.pos);
                let word = &self.src[self.pos..self.pos + n];
                if let Some(kw) = Keyword::lookup(word) {
                    self.advance(n);
                    Tok::Kw(kw)
                } else {
                    if self.peek(n) == Some(b'.') {
                        let m = self.ident_len(self.pos + n + 1);
                        if m > 0 {
                            n += 1 + m;
                        }
                    }
                    let name = self.src[self.pos..self.pos + n].to_string();
                    self.advance(n);
                    Tok::Ident(name)
                }
            }
            b'#' if !matches!(self.peek(1), Some(b'(' | b'[' | b'{' | b'*')) => {
                let mut n = 0;
                while self.peek(1 + n).map_or(false, |c| c.is_ascii_digit()) {
                    n += 1;
                }
                if n == 0 {
                    n = self.ident_len(self.pos + 1);
                }
                if n == 0 {
                    self.advance(1);
                    return Err(self.err(start, "expected a field label after '#'"));
                }
                let label = self.src[self.pos + 1..self.pos + 1 + n].to_string();
                self.advance(n + 1);
                Tok::Proj(label)
            }
            _ => {
                let rest = &self.src[self.pos..];
                let best = SYMBOLS
                    .iter()
                    .filter(|(s, _)| rest.starts_with(s))
                    .max_by_key(|(s, _)| s.len());
                match best {
                    Some((s, sym)) => {
                        self.advance(s.chars().count());
                        Tok::Sym(*sym)
                    }
                    None => {
                        let ch = rest.chars().next().unwrap();
                        self.advance(1);
                        return Err(self.err(start, format!("illegal character '{}'", ch)));
                    }
                }
            }
        };
        let span = Span::new(start.start, self.pos, start.line, start.col);
        Ok(Some(Token { tok, text: self.src[start.start..self.pos].to_string(), span }))
    }
}

/// Splits `source` into tokens, ending with an `Eof` token.
pub fn tokenize(source: &str, _origin: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut sc = Scanner { src: source, bytes: source.as_bytes(), pos: 0, line: 1, col: 1, state: LexState::default() };
    let mut out = Vec::new();
    while let Some(t) = sc.next_token()? {
        out.push(t);
    }
    debug_assert_eq!(sc.state, LexState::default());
    out.push(Token { tok: Tok::Eof, text: String::new(), span: sc.here() });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s, "t").unwrap().into_iter().map(|t| t.tok).filter(|t| *t != Tok::Eof).collect()
    }

    #[test]
    fn integer_bases() {
        assert_eq!(decode_integer("#'h:beef"), Ok(48879));
        assert_eq!(decode_integer("#'x:beef"), Ok(48879));
        assert_eq!(decode_integer("#'b:1010"), Ok(10));
        assert_eq!(decode_integer("#'o:17"), Ok(15));
        assert_eq!(decode_integer("0"), Ok(0));
        assert_eq!(decode_integer("~2147483648"), Ok(i32::MIN));
        assert_eq!(decode_integer("2147483648"), Err(IntLitError::OutOfRange));
        assert_eq!(decode_integer("#'b:102"), Err(IntLitError::InvalidDigit('2')));
    }

    #[test]
    fn longest_match_and_keywords() {
        assert_eq!(toks(">="), vec![Tok::Sym(Sym::Ge)]);
        assert_eq!(toks(">>>"), vec![Tok::Sym(Sym::Sra)]);
        assert_eq!(toks("> ="), vec![Tok::Sym(Sym::Gt), Tok::Sym(Sym::Eq)]);
        assert_eq!(toks("if"), vec![Tok::Kw(Keyword::If)]);
        assert_eq!(toks("iffy"), vec![Tok::Ident("iffy".into())]);
        assert_eq!(toks("List.map"), vec![Tok::Ident("List.map".into())]);
    }

    #[test]
    fn literals() {
        assert_eq!(toks("~7 1.5 .5 ~.5 1e3 1E~1 'b:1"), vec![
            Tok::Int(-7),
            Tok::Real(1.5),
            Tok::Real(0.5),
            Tok::Real(-0.5),
            Tok::Real(1000.0),
            Tok::Real(0.1),
            Tok::Bit(1)
        ]);
        assert_eq!(toks("\"a\\n\\41\""), vec![Tok::Str("a\nA".into())]);
        assert_eq!(toks("'a `b"), vec![Tok::TyVar("a".into()), Tok::TyVar("b".into())]);
        assert_eq!(toks("#1 #cout #( #["), vec![
            Tok::Proj("1".into()),
            Tok::Proj("cout".into()),
            Tok::Sym(Sym::HashParen),
            Tok::Sym(Sym::HashBracket)
        ]);
    }

    #[test]
    fn comments_nest() {
        assert_eq!(toks("1 (* a (* b *) c *) 2"), vec![Tok::Int(1), Tok::Int(2)]);
        let e = tokenize("(* (* x *)", "t").unwrap_err();
        assert!(e.message.contains("unterminated comment"));
        assert!(tokenize("\"abc", "t").unwrap_err().message.contains("unterminated string"));
        assert!(tokenize("a ? b", "t").unwrap_err().message.contains("illegal character"));
    }
}
