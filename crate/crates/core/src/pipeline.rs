//! End-to-end driver: parse, infer, stage, check and lower, then emit.

use crate::ast::Expr;
use crate::diag::{Diagnostic, ErrorKind};
use crate::eval::Evaluator;
use crate::hw::{self, Netlist};
use crate::infer::Infer;
use crate::types::SemType;
use std::path::PathBuf;

#[derive(Clone, Debug)]
pub struct Options {
    pub module_name: String,
    /// Iteration bound for environment substitution.
    pub subst_limit: usize,
    /// Treat warnings as errors.
    pub werror: bool,
    /// Directory for `Core.read`.
    pub base_dir: Option<PathBuf>,
    /// Write `Core.print` output to stdout while staging.
    pub echo_prints: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { module_name: "top".into(), subst_limit: 64, werror: false, base_dir: None, echo_prints: false }
    }
}

/// Typed program after the front end.
pub struct Checked {
    pub ast: Expr,
    pub ty: SemType,
    pub warnings: Vec<Diagnostic>,
}

pub struct Compiled {
    pub checked: Checked,
    /// Netlist straight out of staging.
    pub netlist: Netlist,
    /// Record-free netlist ready for emission.
    pub lowered: Netlist,
    pub printed: Vec<String>,
}

/// Parses and type-checks; errors come first in the returned list.
pub fn check(src: &str, origin: &str, opts: &Options) -> Result<Checked, Vec<Diagnostic>> {
    let mut ast = crate::parser::parse_program(src, origin).map_err(|d| vec![d])?;
    let mut inf = Infer::new();
    inf.subst_limit = opts.subst_limit;
    let ty = inf.infer_and_check(&mut ast);
    if inf.error_count() == 0 {
        inf.check_program_type(&ty, ast.span);
    }
    let (errors, warnings): (Vec<_>, Vec<_>) = inf.diags.into_iter().partition(|d| d.is_error());
    if !errors.is_empty() {
        return Err(errors.into_iter().chain(warnings).collect());
    }
    if opts.werror && !warnings.is_empty() {
        return Err(warnings);
    }
    Ok(Checked { ast, ty, warnings })
}

/// Stages a checked program into a netlist.
pub fn stage(checked: &Checked, opts: &Options) -> Result<(Netlist, Vec<String>), Diagnostic> {
    let mut ev = Evaluator::new();
    ev.base_dir = opts.base_dir.clone();
    ev.echo = opts.echo_prints;
    let env = Evaluator::initial_env();
    let v = ev.eval(&checked.ast, &env)?;
    let n = ev.expand_top_module(&v, checked.ast.span)?;
    Ok((n, ev.printed))
}

pub fn compile(src: &str, origin: &str, opts: &Options) -> Result<Compiled, Vec<Diagnostic>> {
    let checked = check(src, origin, opts)?;
    let (netlist, printed) = stage(&checked, opts).map_err(|d| vec![d])?;
    hw::check_program_module(&netlist).map_err(|d| vec![d])?;
    let lowered = hw::lower_records(&netlist).map_err(|d| vec![d])?;
    Ok(Compiled { checked, netlist, lowered, printed })
}

/// Source to Verilog text.
pub fn compile_to_verilog(src: &str, origin: &str, opts: &Options) -> Result<String, Vec<Diagnostic>> {
    let c = compile(src, origin, opts)?;
    crate::codegen::emit(&c.lowered, &opts.module_name).map_err(|d| vec![d])
}

/// Module name derived from a source path: its file stem.
pub fn module_name_for(path: &std::path::Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("top");
    let mut name: String = stem.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if name.is_empty() || name.starts_with(|c: char| c.is_ascii_digit()) {
        name.insert(0, 'm');
    }
    name
}

/// First error of a failed compilation, for callers that only need one.
pub fn first_error(ds: &[Diagnostic]) -> Option<&Diagnostic> {
    ds.iter().find(|d| d.is_error()).or(ds.first())
}

pub fn internal(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(ErrorKind::Internal, None, msg)
}
