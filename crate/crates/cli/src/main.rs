use clap::{Parser, Subcommand, ValueEnum};
use gemini_core::diag::{Diagnostic, ErrorKind};
use gemini_core::hw::{ir_text, Netlist};
use gemini_core::lexer::tokenize;
use gemini_core::netsim::{self, format_bits, parse_bits, read_emitted_verilog};
use gemini_core::pipeline::{self, Options};
use gemini_core::{infer, metatheory, parser};
use std::collections::HashMap;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const STACK_SIZE: usize = 512 * 1024 * 1024;

#[derive(Parser)]
#[command(name = "gemini", version, about = "Compiler from Gemini source to synthesizable Verilog")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a source file to Verilog, or print an intermediate stage.
    Build(BuildArgs),
    /// Simulate a compiled design (a .gem source or an emitted .v file).
    Sim(SimArgs),
    /// Run the randomized type-safety check over generated terms.
    Metatheory(MetaArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Tokens,
    Ast,
    TypedAst,
    Ir,
    IrLowered,
    Verilog,
}

#[derive(clap::Args)]
struct BuildArgs {
    input: PathBuf,
    /// Stage to print; everything but verilog goes to stdout unless -o is given.
    #[arg(long, value_enum, default_value = "verilog")]
    emit: Emit,
    /// Output path; verilog defaults to the input path with a .v extension.
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
    /// Verilog module name; defaults to the input file stem.
    #[arg(long)]
    module_name: Option<String>,
    /// Iteration bound for type environment substitution.
    #[arg(long, default_value_t = 64)]
    subst_limit: usize,
    /// Treat warnings as errors.
    #[arg(long)]
    werror: bool,
}

#[derive(clap::Args)]
struct SimArgs {
    input: PathBuf,
    /// Input values held for every cycle, e.g. a=0b10,b=0b01.
    #[arg(long, default_value = "")]
    inputs: String,
    #[arg(long, default_value_t = 1)]
    cycles: usize,
    #[arg(long)]
    module_name: Option<String>,
}

#[derive(clap::Args)]
struct MetaArgs {
    #[arg(long, default_value_t = 1000)]
    seeds: u64,
    #[arg(long, default_value_t = 6)]
    depth: u32,
    #[arg(long, default_value_t = metatheory::DEFAULT_FUEL)]
    fuel: usize,
}

/// Failure carrying the diagnostics to print and the file they refer to.
struct Failure {
    file: String,
    diags: Vec<Diagnostic>,
}

impl Failure {
    fn new(file: &Path, diags: Vec<Diagnostic>) -> Failure {
        Failure { file: file.display().to_string(), diags }
    }

    fn exit_code(&self) -> u8 {
        if self.diags.iter().any(|d| d.kind == ErrorKind::Internal) {
            2
        } else {
            1
        }
    }
}

fn color_enabled() -> bool {
    std::env::var("GEMINI_COLOR").map_or(true, |v| v != "0") && std::io::stderr().is_terminal()
}

fn report(file: &str, d: &Diagnostic, color: bool) {
    let line = d.render(file);
    if !color {
        eprintln!("{}", line);
        return;
    }
    let code = if d.is_error() { "31" } else { "33" };
    match line.find(':') {
        Some(i) => eprintln!("\x1b[1;{}m{}\x1b[0m{}", code, &line[..i], &line[i..]),
        None => eprintln!("{}", line),
    }
}

fn read_source(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| {
        Failure::new(path, vec![Diagnostic::error(ErrorKind::Io, None, format!("cannot read {}: {}", path.display(), e))])
    })
}

fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| {
        Failure::new(path, vec![Diagnostic::error(ErrorKind::Io, None, format!("cannot write {}: {}", path.display(), e))])
    })
}

fn options(input: &Path, module_name: Option<String>, subst_limit: usize, werror: bool, echo_prints: bool) -> Options {
    Options {
        module_name: module_name.unwrap_or_else(|| pipeline::module_name_for(input)),
        subst_limit,
        werror,
        base_dir: input.parent().map(Path::to_path_buf),
        echo_prints,
    }
}

fn print_warnings(file: &str, ws: &[Diagnostic], color: bool) {
    for w in ws {
        report(file, w, color);
    }
}

fn build(a: BuildArgs, color: bool) -> Result<(), Failure> {
    let src = read_source(&a.input)?;
    let origin = a.input.display().to_string();
    let opts = options(&a.input, a.module_name, a.subst_limit, a.werror, true);
    let fail = |ds| Failure::new(&a.input, ds);
    let text = match a.emit {
        Emit::Tokens => {
            let toks = tokenize(&src, &origin).map_err(|d| fail(vec![d]))?;
            toks.iter().map(|t| t.dump() + "\n").collect::<String>()
        }
        Emit::Ast => parser::to_sexpr(&parser::parse_program(&src, &origin).map_err(|d| fail(vec![d]))?) + "\n",
        Emit::TypedAst => {
            let c = pipeline::check(&src, &origin, &opts).map_err(fail)?;
            print_warnings(&origin, &c.warnings, color);
            infer::print::typed_ast(&c.ast)
        }
        Emit::Ir | Emit::IrLowered | Emit::Verilog => {
            let c = pipeline::compile(&src, &origin, &opts).map_err(fail)?;
            print_warnings(&origin, &c.checked.warnings, color);
            match a.emit {
                Emit::Ir => ir_text(&c.netlist),
                Emit::IrLowered => ir_text(&c.lowered),
                _ => {
                    let v = gemini_core::codegen::emit(&c.lowered, &opts.module_name).map_err(|d| fail(vec![d]))?;
                    let out = a.output.clone().unwrap_or_else(|| a.input.with_extension("v"));
                    return write_output(&out, &v);
                }
            }
        }
    };
    match &a.output {
        Some(p) => write_output(p, &text),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn sim_netlist(a: &SimArgs, color: bool) -> Result<Netlist, Failure> {
    let src = read_source(&a.input)?;
    if a.input.extension().is_some_and(|e| e == "v") {
        return read_emitted_verilog(&src).map(|(_, n)| n).map_err(|d| Failure::new(&a.input, vec![d]));
    }
    let origin = a.input.display().to_string();
    // `Core.print` output is not echoed so stdout holds only `out=` lines.
    let opts = options(&a.input, a.module_name.clone(), 64, false, false);
    let c = pipeline::compile(&src, &origin, &opts).map_err(|ds| Failure::new(&a.input, ds))?;
    print_warnings(&origin, &c.checked.warnings, color);
    Ok(c.lowered)
}

fn sim(a: SimArgs, color: bool) -> Result<(), Failure> {
    let n = sim_netlist(&a, color)?;
    let bad = |msg: String| Failure::new(&a.input, vec![Diagnostic::error(ErrorKind::Type, None, msg)]);
    let widths: HashMap<&str, usize> =
        n.inputs.iter().map(|p| (p.name.as_str(), gemini_core::hw::width(&p.ty) as usize)).collect();
    let mut values = HashMap::new();
    for item in a.inputs.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, val) = item.split_once('=').ok_or_else(|| bad(format!("expected name=value, found `{}`", item)))?;
        let w = *widths.get(name).ok_or_else(|| bad(format!("the design has no input named `{}`", name)))?;
        let bits = parse_bits(val, w).map_err(|m| bad(format!("input `{}`: {}", name, m)))?;
        values.insert(name.to_string(), bits);
    }
    let outs = netsim::simulate_named(&n, &values, a.cycles).map_err(|d| Failure::new(&a.input, vec![d]))?;
    for o in outs {
        println!("out={}", format_bits(&o));
    }
    Ok(())
}

fn meta(a: MetaArgs) -> Result<(), Failure> {
    let s = metatheory::check_corpus(0..a.seeds, a.depth, a.fuel);
    let rows: [(&str, usize); 9] = [
        ("terms", s.terms),
        ("values", s.values),
        ("fuel exhausted", s.fuel_exhausted),
        ("stuck", s.stuck.len()),
        ("preservation violations", s.preservation.len()),
        ("inference rejections", s.infer_rejections.len()),
        ("big-step mismatches", s.big_step_mismatches.len()),
        ("nondeterministic", s.nondeterministic.len()),
        ("total steps", s.steps),
    ];
    println!("{:<26}{:>10}", "check", "count");
    for (k, v) in rows {
        println!("{:<26}{:>10}", k, v);
    }
    let failures = s.stuck.iter().chain(&s.preservation).chain(&s.infer_rejections).chain(&s.big_step_mismatches);
    for (seed, msg) in failures.chain(&s.nondeterministic).take(10) {
        println!("seed {}: {}", seed, msg);
    }
    println!("result: {}", if s.ok() { "ok" } else { "FAILED" });
    if s.ok() {
        Ok(())
    } else {
        Err(Failure { file: "<metatheory>".into(), diags: Vec::new() })
    }
}

fn run(cli: Cli) -> u8 {
    let color = color_enabled();
    let r = match cli.command {
        Command::Build(a) => build(a, color),
        Command::Sim(a) => sim(a, color),
        Command::Metatheory(a) => meta(a),
    };
    match r {
        Ok(()) => 0,
        Err(f) => {
            for d in &f.diags {
                report(&f.file, d, color);
            }
            f.exit_code()
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let worker = std::thread::Builder::new().stack_size(STACK_SIZE).spawn(move || run(cli));
    match worker.map(|h| h.join()) {
        Ok(Ok(code)) => ExitCode::from(code),
        _ => {
            eprintln!("error: internal compiler error");
            ExitCode::from(2)
        }
    }
}
