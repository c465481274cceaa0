//! Source spans and compiler diagnostics shared by every phase.

use std::fmt;

/// Byte range in the source plus the 1-based line/column of its start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(start: usize, end: usize, line: u32, col: u32) -> Span {
        Span { start, end, line, col }
    }

    /// Smallest span covering both `self` and `other`.
    pub fn to(self, other: Span) -> Span {
        let (first, _) = if self.start <= other.start { (self, other) } else { (other, self) };
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
            line: first.line,
            col: first.col,
        }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Lex,
    Parse,
    Type,
    Kind,
    Occurs,
    Unbound,
    UnknownType,
    NonExhaustiveMatch,
    NonModuleProgram,
    DivByZero,
    Overflow,
    OutOfRange,
    MatchFailure,
    NonConcreteModule,
    Unsupported,
    Library,
    HardwareType,
    Io,
    Internal,
}

impl ErrorKind {
    pub fn code(self) -> &'static str {
        match self {
            ErrorKind::Lex => "E001",
            ErrorKind::Parse => "E002",
            ErrorKind::Type => "E100",
            ErrorKind::Kind => "E101",
            ErrorKind::Occurs => "E102",
            ErrorKind::Unbound => "E103",
            ErrorKind::UnknownType => "E104",
            ErrorKind::NonModuleProgram => "E105",
            ErrorKind::NonExhaustiveMatch => "W001",
            ErrorKind::DivByZero => "E200",
            ErrorKind::Overflow => "E201",
            ErrorKind::OutOfRange => "E202",
            ErrorKind::MatchFailure => "E203",
            ErrorKind::NonConcreteModule => "E204",
            ErrorKind::Unsupported => "E205",
            ErrorKind::Library => "E206",
            ErrorKind::HardwareType => "E300",
            ErrorKind::Io => "E400",
            ErrorKind::Internal => "E999",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Lex => "LexError",
            ErrorKind::Parse => "ParseError",
            ErrorKind::Type => "TypeError",
            ErrorKind::Kind => "KindError",
            ErrorKind::Occurs => "OccursError",
            ErrorKind::Unbound => "UnboundIdentifier",
            ErrorKind::UnknownType => "UnknownType",
            ErrorKind::NonExhaustiveMatch => "NonExhaustiveMatch",
            ErrorKind::NonModuleProgram => "NonModuleProgram",
            ErrorKind::DivByZero => "DivisionByZero",
            ErrorKind::Overflow => "Overflow",
            ErrorKind::OutOfRange => "OutOfRange",
            ErrorKind::MatchFailure => "MatchFailure",
            ErrorKind::NonConcreteModule => "NonConcreteModule",
            ErrorKind::Unsupported => "UnsupportedFeature",
            ErrorKind::Library => "LibraryError",
            ErrorKind::HardwareType => "HardwareTypeError",
            ErrorKind::Io => "IoError",
            ErrorKind::Internal => "InternalError",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: ErrorKind,
    pub span: Option<Span>,
    pub message: String,
    /// Rendered types involved in the problem (both sides of a mismatch).
    pub types: Vec<String>,
}

impl Diagnostic {
    pub fn error(kind: ErrorKind, span: Option<Span>, message: impl Into<String>) -> Diagnostic {
        Diagnostic { severity: Severity::Error, kind, span, message: message.into(), types: Vec::new() }
    }

    pub fn warning(kind: ErrorKind, span: Option<Span>, message: impl Into<String>) -> Diagnostic {
        Diagnostic { severity: Severity::Warning, kind, span, message: message.into(), types: Vec::new() }
    }

    pub fn with_types(mut self, types: Vec<String>) -> Diagnostic {
        self.types = types;
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `error[E100]: message @file:line:col`
    pub fn render(&self, file: &str) -> String {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.span {
            Some(s) => format!("{}[{}]: {} @{}:{}:{}", sev, self.kind.code(), self.message, file, s.line, s.col),
            None => format!("{}[{}]: {} @{}", sev, self.kind.code(), self.message, file),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.name(), self.message)
    }
}

/// A non-empty batch of diagnostics that stopped a phase.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn one(d: Diagnostic) -> Diagnostics {
        Diagnostics(vec![d])
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.0.iter().filter(|d| d.is_error())
    }

    pub fn has_kind(&self, kind: ErrorKind) -> bool {
        self.0.iter().any(|d| d.kind == kind)
    }
}

impl From<Diagnostic> for Diagnostics {
    fn from(d: Diagnostic) -> Self {
        Diagnostics(vec![d])
    }
}
