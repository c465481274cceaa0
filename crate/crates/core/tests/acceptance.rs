//! One PASS/FAIL line per acceptance criterion, written straight to stdout so
//! the lines show up even when the harness captures test output.

use gemini_core::diag::ErrorKind;
use gemini_core::eval::Evaluator;
use gemini_core::hw::lower_records;
use gemini_core::infer::infer_source;
use gemini_core::metatheory::{check_corpus, DEFAULT_FUEL};
use gemini_core::netsim::{exhaustive_equiv, read_emitted_verilog, Program, Sim};
use gemini_core::pipeline::{compile, compile_to_verilog, first_error, Options};
use gemini_core::types::render;
use rayon::prelude::*;
use std::io::Write;
use std::time::{Duration, Instant};

mod common;
use common::random_record_design;

type Check = Result<(), String>;

fn program(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/programs/{}.gem", env!("CARGO_MANIFEST_DIR"), name)).unwrap()
}

fn opts(name: &str) -> Options {
    Options { module_name: name.into(), ..Options::default() }
}

fn within(start: Instant, limit: Duration) -> Check {
    let took = start.elapsed();
    if took <= limit {
        Ok(())
    } else {
        Err(format!("took {:.2?}, limit {:.0?}", took, limit))
    }
}

fn expect_eq<T: PartialEq + std::fmt::Debug>(what: &str, got: T, want: T) -> Check {
    if got == want {
        Ok(())
    } else {
        Err(format!("{}: got {:?}, want {:?}", what, got, want))
    }
}

fn rca_end_to_end() -> Check {
    let start = Instant::now();
    let v = compile_to_verilog(&program("adder"), "adder.gem", &opts("adder")).map_err(|d| format!("{:?}", d))?;
    let header = v.lines().next().unwrap_or_default();
    expect_eq("header", header, "module adder(input [1:0] a, input [1:0] b, output reg [1:0] out);")?;
    let (_, n) = read_emitted_verilog(&v).map_err(|d| d.to_string())?;
    let prog = Program::compile(&n).map_err(|d| d.to_string())?;
    let mut sim = Sim::new(&prog);
    for a in 0..4u64 {
        for b in 0..4u64 {
            expect_eq(&format!("{}+{}", a, b), sim.step_packed(&[a, b]), (a + b) % 4)?;
        }
    }
    within(start, Duration::from_secs(1))
}

fn explicit_logic() -> Check {
    let start = Instant::now();
    let v = compile_to_verilog(&program("explicit_logic"), "explicit_logic.gem", &opts("mycircuit"))
        .map_err(|d| format!("{:?}", d))?;
    let (_, n) = read_emitted_verilog(&v).map_err(|d| d.to_string())?;
    let prog = Program::compile(&n).map_err(|d| d.to_string())?;
    let mut sim = Sim::new(&prog);
    for bits in 0..8u64 {
        let (a, b, c) = (bits & 1, bits >> 1 & 1, bits >> 2 & 1);
        expect_eq(&format!("a={} b={} c={}", a, b, c), sim.step_packed(&[a, b, c]), 1 - (c ^ (a & b)))?;
    }
    within(start, Duration::from_secs(1))
}

/// Renames type variables to 'a, 'b, ... in order of first appearance.
fn alpha_normal(s: &str) -> String {
    let mut names: Vec<String> = Vec::new();
    let mut out = String::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\'' {
            out.push(c);
            continue;
        }
        let mut v = String::new();
        while let Some(&d) = chars.peek() {
            if d.is_alphanumeric() || d == '_' {
                v.push(d);
                chars.next();
            } else {
                break;
            }
        }
        let i = names.iter().position(|n| *n == v).unwrap_or_else(|| {
            names.push(v.clone());
            names.len() - 1
        });
        out.push('\'');
        out.push((b'a' + i as u8) as char);
    }
    out
}

fn inferred(src: &str) -> Result<String, String> {
    let (_, t, inf) = infer_source(src).map_err(|d| d.to_string())?;
    if let Some(d) = inf.diags.iter().find(|d| d.is_error()) {
        return Err(d.to_string());
    }
    Ok(alpha_normal(&render(&t)))
}

fn inference_signatures() -> Check {
    expect_eq("concat", inferred("let fun concat x y = x::y in concat end")?, "'a -> 'a list -> 'a list".into())?;
    let map = "let fun map f x = case x of [] => [] |: a::rest => (f a)::(map f rest) in map end";
    expect_eq("map", inferred(map)?, "('a -> 'b) -> 'a list -> 'b list".into())
}

fn my_mod(size: &str) -> String {
    format!(
        "let\n    val size = {}\n    module my_mod (a: bit[8]) = a[:7:]\n    val arg = #[size; gen i => 'b:0]\n    val h = my_mod arg\nin\n    my_mod\nend\n",
        size
    )
}

fn dependent_sizes() -> Check {
    compile(&my_mod("8"), "my_mod.gem", &opts("my_mod")).map_err(|d| format!("size 8 rejected: {:?}", d))?;
    compile(&my_mod("2 * 4"), "my_mod.gem", &opts("my_mod")).map_err(|d| format!("size 2 * 4 rejected: {:?}", d))?;
    let Err(ds) = compile(&my_mod("16"), "my_mod.gem", &opts("my_mod")) else {
        return Err("size 16 accepted".into());
    };
    let d = first_error(&ds).unwrap();
    expect_eq("kind", d.kind, ErrorKind::Type)?;
    if d.message.contains("bit[8]") && d.message.contains("bit[16]") {
        Ok(())
    } else {
        Err(format!("message does not name both sizes: {}", d.message))
    }
}

/// Programs mixing kinds; each must be rejected with a kind or type error.
const CROSS_KIND: &[&str] = &[
    "1 + 'b:1",
    "'b:1 + 1",
    "'b:1 * 'b:0",
    "1.0 +. 'b:1",
    "~'b:1",
    "if 'b:1 then 1 else 2",
    "!3",
    "3 & 4",
    "'b:1 & 2",
    "'b:1 ^ \"s\"",
    "!\"s\"",
    "#['b:0, 1]",
    "#[1, 2]",
    "[1, 'b:0]",
    "'b:1 = 1",
    "#('b:0, 1)",
    "#1 (#('b:0, 'b:1)) + 1",
    "#['b:0][:'b:0:]",
    "#['b:0][:\"x\":]",
    "#['b:0; gen i => 'b:0]",
    "#[3; gen i => i]",
    "unsw 3",
    "sw 3",
    "sw (sw 'b:1)",
    "unsw (unsw (sw 'b:1))",
    "'b:1 'u: 3",
    "3 'u: 'b:1",
    "List.length 'b:1",
    "String.size 'b:0",
    "Int.toString 'b:0",
    "Real.fromInt 'b:1",
    "HW.dff 1",
    "BitArray.twosComp 3",
    "let fun f x = x + 1 in f 'b:1 end",
    "let val x = 'b:1 in x :: [1] end",
    "let val x : int = 'b:1 in x end",
    "let val x : bit = 1 in x end",
    "let fun f (x: bit sw) = x in f 'b:1 end",
    "case 'b:1 of 0 => 1 |: _ => 2",
    "let module m (a: bit) = !a in m m end",
    "let module m (a: bit) = !a in m 3 end",
    "let module m (a: bit) = !a in m (sw 'b:1) end",
    "let module m (a: bit) = !a in m 'b:1 + 1 end",
    "let module m (a: bit) = !a in [m] end",
    "let module m (a: bit) = !a in if m then 1 else 2 end",
    "let module m (a: bit) = !a in m + 1 end",
    "let module m (a: bit) = a + 1 in m end",
    "let module m (a: bit) = a & 1 in m end",
    "let module m (a: bit) = \"x\" in m end",
    "let module m (a: bit) = !a in m #(m) end",
];

fn kind_safety() -> Check {
    expect_eq("corpus size", CROSS_KIND.len(), 50)?;
    let mut bad = Vec::new();
    for src in CROSS_KIND {
        match compile(src, "cross.gem", &opts("cross")) {
            Ok(_) => bad.push(format!("accepted: {}", src)),
            Err(ds) => {
                let d = first_error(&ds).unwrap();
                if !matches!(d.kind, ErrorKind::Kind | ErrorKind::Type) {
                    bad.push(format!("{} -> {}", src, d));
                }
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad.join("; "))
    }
}

fn metatheory() -> Check {
    let start = Instant::now();
    let s = check_corpus(0..1000, 6, DEFAULT_FUEL);
    expect_eq("terms", s.terms, 1000)?;
    if !s.ok() {
        return Err(format!(
            "stuck {:?}, preservation {:?}, rejected {:?}, mismatches {:?}, nondeterministic {:?}",
            s.stuck, s.preservation, s.infer_rejections, s.big_step_mismatches, s.nondeterministic
        ));
    }
    within(start, Duration::from_secs(60))
}

fn lowering_property() -> Check {
    let start = Instant::now();
    let failures: Vec<String> = (0..200u64)
        .into_par_iter()
        .filter_map(|seed| {
            let n = random_record_design(seed);
            let inputs: u32 = n.inputs.iter().map(|p| gemini_core::hw::width(&p.ty)).sum();
            if inputs > 12 || n.compact().record_count() == 0 {
                return Some(format!("seed {}: malformed design ({} input bits)", seed, inputs));
            }
            let low = match lower_records(&n) {
                Ok(l) => l,
                Err(d) => return Some(format!("seed {}: {}", seed, d)),
            };
            if low.compact().record_count() != 0 {
                return Some(format!("seed {}: records survive lowering", seed));
            }
            match exhaustive_equiv(&n, &low) {
                Ok(true) => None,
                Ok(false) => Some(format!("seed {}: not equivalent", seed)),
                Err(d) => Some(format!("seed {}: {}", seed, d)),
            }
        })
        .collect();
    if !failures.is_empty() {
        return Err(failures.join("; "));
    }
    within(start, Duration::from_secs(60))
}

fn evaluate(src: &str) -> Result<String, String> {
    let (e, _, inf) = infer_source(src).map_err(|d| d.to_string())?;
    if let Some(d) = inf.diags.iter().find(|d| d.is_error()) {
        return Err(d.to_string());
    }
    let mut ev = Evaluator::new();
    ev.eval(&e, &Evaluator::initial_env()).map(|v| v.to_string()).map_err(|d| d.to_string())
}

fn arithmetic() -> Check {
    expect_eq("7/2", evaluate("7/2")?, "3".into())?;
    expect_eq("~7/2", evaluate("~7/2")?, "~4".into())?;
    expect_eq("7 % 2", evaluate("7 % 2")?, "1".into())
}

fn compile_time_bounds() -> Check {
    match compile("#['b:0][:1:]", "bounds.gem", &opts("bounds")) {
        Ok(_) => Err("accepted".into()),
        Err(ds) => expect_eq("kind", first_error(&ds).unwrap().kind, ErrorKind::OutOfRange),
    }
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("rca_end_to_end", rca_end_to_end),
        ("explicit_logic", explicit_logic),
        ("inference_signatures", inference_signatures),
        ("dependent_sizes", dependent_sizes),
        ("kind_safety", kind_safety),
        ("metatheory", metatheory),
        ("lowering_property", lowering_property),
        ("arithmetic_semantics", arithmetic),
        ("compile_time_bounds", compile_time_bounds),
    ];
    let mut out = std::io::stdout().lock();
    // Start on a fresh line; the harness has already printed `test acceptance ... `.
    let _ = writeln!(out);
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let r = check();
        let took = start.elapsed();
        let line = match &r {
            Ok(()) => format!("PASS {} {} ({:.2?})", i + 1, name, took),
            Err(e) => format!("FAIL {} {} ({:.2?}): {}", i + 1, name, took, e),
        };
        let _ = writeln!(out, "{}", line);
        if r.is_err() {
            failed.push(line);
        }
    }
    let _ = out.flush();
    assert!(failed.is_empty(), "{}", failed.join("\n"));
}
